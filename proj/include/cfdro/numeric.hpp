#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace cfdro {

using Rng = std::mt19937_64;

/// Pairwise (cascade) summation. Summation order depends only on the length,
/// so results are reproducible regardless of how the terms were produced.
double pairwise_sum(std::span<const double> values);

double mean(std::span<const double> values);

/// Unbiased sample variance (two-pass). Requires at least two values.
double sample_variance(std::span<const double> values);

/// Uniform double in [0, 1) built from the top 53 bits of one engine draw.
/// Used instead of std::uniform_real_distribution for cross-library determinism.
double uniform01(Rng& rng);

/// Uniform integer in [0, bound) by rejection sampling.
std::uint64_t uniform_index(Rng& rng, std::uint64_t bound);

/// Fisher-Yates shuffle driven by uniform_index.
void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng);

/// SplitMix64 finalizer; derives independent seeds for parallel streams.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Runs body(i) for i in [0, count) on up to `jobs` threads. Each index is
/// processed exactly once; callers write results into per-index slots so
/// output order never depends on scheduling.
void parallel_for(std::size_t count, unsigned jobs, const std::function<void(std::size_t)>& body);

}  // namespace cfdro
