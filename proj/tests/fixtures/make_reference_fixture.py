#!/usr/bin/env python3
# Copyright 2026 The keypatch Authors
# SPDX-License-Identifier: Apache-2.0
"""Build the reference-backbone fixture used by test_reference_weights.

Writes, into the given directory:
  weights.pth     state dict of a seeded SuperPoint network (public layout)
  weights.kpw     the same weights converted with convert_superpoint_weights.py
  input.f32       1 x H x W image in [0, 1]
  encoder.f32     conv4b activations
  semi.f32        convPb output
  desc.f32        convDb output (before normalization)
  meta.json       shapes

Exits 0 without writing anything when PyTorch is unavailable.
"""

import json
import os
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, os.path.join(HERE, "..", "..", "tools"))


class SuperPointNet:
    """Encoder and heads as in the public SuperPoint release."""

    def __init__(self, torch):
        nn = torch.nn
        c1, c2, c3, c4, c5, d1 = 64, 64, 128, 128, 256, 256

        class Net(nn.Module):
            def __init__(self):
                super().__init__()
                self.relu = nn.ReLU(inplace=True)
                self.pool = nn.MaxPool2d(kernel_size=2, stride=2)
                self.conv1a = nn.Conv2d(1, c1, 3, 1, 1)
                self.conv1b = nn.Conv2d(c1, c1, 3, 1, 1)
                self.conv2a = nn.Conv2d(c1, c2, 3, 1, 1)
                self.conv2b = nn.Conv2d(c2, c2, 3, 1, 1)
                self.conv3a = nn.Conv2d(c2, c3, 3, 1, 1)
                self.conv3b = nn.Conv2d(c3, c3, 3, 1, 1)
                self.conv4a = nn.Conv2d(c3, c4, 3, 1, 1)
                self.conv4b = nn.Conv2d(c4, c4, 3, 1, 1)
                self.convPa = nn.Conv2d(c4, c5, 3, 1, 1)
                self.convPb = nn.Conv2d(c5, 65, 1, 1, 0)
                self.convDa = nn.Conv2d(c4, c5, 3, 1, 1)
                self.convDb = nn.Conv2d(c5, d1, 1, 1, 0)

            def forward(self, x):
                x = self.relu(self.conv1a(x))
                x = self.relu(self.conv1b(x))
                x = self.pool(x)
                x = self.relu(self.conv2a(x))
                x = self.relu(self.conv2b(x))
                x = self.pool(x)
                x = self.relu(self.conv3a(x))
                x = self.relu(self.conv3b(x))
                x = self.pool(x)
                x = self.relu(self.conv4a(x))
                enc = self.relu(self.conv4b(x))
                semi = self.convPb(self.relu(self.convPa(enc)))
                desc = self.convDb(self.relu(self.convDa(enc)))
                return enc, semi, desc

        self.net = Net()


def main(argv):
    if len(argv) != 2:
        print("usage: make_reference_fixture.py OUT_DIR", file=sys.stderr)
        return 2
    try:
        import torch
    except ImportError:
        print("torch not available; fixture skipped")
        return 0
    import convert_superpoint_weights as convert

    out = argv[1]
    os.makedirs(out, exist_ok=True)
    torch.manual_seed(1234)
    net = SuperPointNet(torch).net.eval()
    torch.save(net.state_dict(), os.path.join(out, "weights.pth"))
    rc = convert.main([os.path.join(out, "weights.pth"), os.path.join(out, "weights.kpw")])
    if rc != 0:
        return rc

    h, w = 48, 64
    image = torch.rand(1, 1, h, w, generator=torch.Generator().manual_seed(99))
    with torch.no_grad():
        enc, semi, desc = net(image)
    for name, t in (("input", image), ("encoder", enc), ("semi", semi), ("desc", desc)):
        t[0].contiguous().numpy().astype("<f4").tofile(os.path.join(out, name + ".f32"))
    meta = {
        "input": [1, h, w],
        "encoder": list(enc.shape[1:]),
        "semi": list(semi.shape[1:]),
        "desc": list(desc.shape[1:]),
    }
    with open(os.path.join(out, "meta.json"), "w") as f:
        json.dump(meta, f)
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
