#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mpreuse {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to decorrelate derived seeds.
std::uint64_t mix_seed(std::uint64_t x);

/// Derives independent, reproducible child seeds from one root seed.
///
/// Every source of randomness in an experiment (data generation, parameter
/// initialization, batch sampling, privacy noise) draws from its own named
/// stream so that changing how much one stage consumes never shifts another.
class SeedStreams {
 public:
  explicit SeedStreams(std::uint64_t root) : root_(root) {}

  std::uint64_t root() const { return root_; }
  std::uint64_t seed(std::string_view stream, std::uint64_t index = 0) const;
  Rng rng(std::string_view stream, std::uint64_t index = 0) const { return Rng(seed(stream, index)); }

 private:
  std::uint64_t root_;
};

}  // namespace mpreuse
