#pragma once

#include <cstdint>
#include <span>

#include "doptlab/errors.hpp"

namespace doptlab {

// Identifies one reproducible random stream. Identical (seed, stream_id)
// pairs reproduce identical draws bit for bit on every platform.
struct RngSpec {
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;

  // Deterministically splits off a child stream, e.g. one per (run, episode).
  // Children with distinct indices are decorrelated by the mix function.
  [[nodiscard]] RngSpec derived(std::uint64_t index) const;

  friend bool operator==(const RngSpec&, const RngSpec&) = default;
};

// Counter-mode SplitMix64. The i-th output is finalize(key + i * GAMMA),
// where key is derived from (seed, stream_id) and finalize is the standard
// SplitMix64 avalanche function (Stafford mix13). Counter mode makes draws a
// pure function of (spec, i): no hidden state beyond the counter.
class CounterRng {
 public:
  explicit CounterRng(RngSpec spec);

  std::uint64_t next_u64();

  // Uniform on [0, 1) with 53 random bits.
  double next_double();

  // Strictly positive Exp(1) draw (inverse CDF of 1 - U).
  double next_exponential();

  // Samples an index from an (unnormalized is not allowed) probability row by
  // CDF inversion. Entries that are exactly zero can never be returned.
  int next_index(std::span<const double> probs);

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace doptlab
