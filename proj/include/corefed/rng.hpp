#pragma once

#include <cstdint>
#include <random>

namespace corefed {

using Rng = std::mt19937_64;

// Purposes for derived random streams. Each purpose gets an isolated stream
// so that, e.g., switching the aggregation algorithm never perturbs the data
// partition or the per-round client samples.
enum class Stream : std::uint64_t {
  data = 1,
  partition = 2,
  split = 3,
  init = 4,
  sampling = 5,
  shuffle = 6,
};

/// Derive a generator that is a pure function of (seed, purpose, round, client).
Rng substream(std::uint64_t seed, Stream purpose, std::uint64_t round = 0,
              std::uint64_t client = 0);

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace corefed
