// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

namespace keypatch {

using Rng = std::mt19937_64;

// Independent streams derived from one master seed. Every per-image
// generator in the toolkit is built from (master_seed, index, stream) so
// parallel workers reproduce a serial run exactly.
std::uint64_t child_seed(std::uint64_t master_seed, std::uint64_t index, std::uint64_t stream = 0);

inline Rng make_rng(std::uint64_t master_seed, std::uint64_t index, std::uint64_t stream = 0) {
  return Rng(child_seed(master_seed, index, stream));
}

// Stream identifiers, kept stable so datasets stay reproducible.
namespace streams {
inline constexpr std::uint64_t kTrainSamples = 1;
inline constexpr std::uint64_t kValidationSamples = 2;
inline constexpr std::uint64_t kAugmentation = 3;
inline constexpr std::uint64_t kDeterioration = 4;
inline constexpr std::uint64_t kSweep = 5;
inline constexpr std::uint64_t kInit = 6;
inline constexpr std::uint64_t kShuffle = 7;
}  // namespace streams

double uniform(Rng& rng, double lo, double hi);
int uniform_int(Rng& rng, int lo, int hi);  // inclusive
bool bernoulli(Rng& rng, double p);
double normal(Rng& rng, double mean, double stddev);  // Box-Muller

}  // namespace keypatch
