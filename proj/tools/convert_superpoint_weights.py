#!/usr/bin/env python3
# Copyright 2026 The keypatch Authors
# SPDX-License-Identifier: Apache-2.0
"""Convert a public SuperPoint PyTorch state dict into a keypatch weight container.

The container can be passed to `keypatch train --pretrained`. Only the
encoder and the two head branches are exported; the adaptation layers are
initialized by keypatch itself.

    convert_superpoint_weights.py superpoint_v1.pth superpoint.kpw
"""

import argparse
import json
import struct
import sys

import numpy as np

MAGIC = b"KPCKPT01"
VERSION = 1
LAYERS = [
    "conv1a", "conv1b", "conv2a", "conv2b", "conv3a", "conv3b", "conv4a", "conv4b",
    "convPa", "convPb", "convDa", "convDb",
]


def write_container(path, tensors, header_fields):
    header = dict(header_fields)
    header["format"] = "keypatch-checkpoint"
    header["format_version"] = VERSION
    table = []
    offset = 0
    names = sorted(tensors)
    for name in names:
        arr = tensors[name]
        table.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        offset += int(arr.size)
    header["tensors"] = table
    text = json.dumps(header).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<Q", len(text)))
        f.write(text)
        for name in names:
            f.write(tensors[name].astype("<f4").tobytes())


def load_state_dict(path):
    import torch

    state = torch.load(path, map_location="cpu")
    if isinstance(state, dict) and "state_dict" in state:
        state = state["state_dict"]
    out = {}
    for key, value in state.items():
        key = key.removeprefix("module.")
        out[key] = value.detach().cpu().numpy().astype(np.float32)
    return out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("weights", help="SuperPoint .pth state dict")
    parser.add_argument("out", help="output container")
    args = parser.parse_args(argv)

    state = load_state_dict(args.weights)
    tensors = {}
    for layer in LAYERS:
        for part in ("weight", "bias"):
            key = f"{layer}.{part}"
            if key not in state:
                print(f"missing {key} in {args.weights}", file=sys.stderr)
                return 3
            tensors[key] = state[key]
    write_container(args.out, tensors, {"source": "superpoint"})
    return 0


if __name__ == "__main__":
    sys.exit(main())
