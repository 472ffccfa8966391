#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace bevfuse::num {

// Mixes a seed with a stream tag so submodules get independent streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);
std::uint64_t hash_str(const std::string& s);

// Deterministic RNG. Distributions are hand-rolled on top of mt19937_64 so
// draws do not depend on the standard library's unspecified algorithms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  // Standard normal via Box-Muller, no cached spare.
  double normal();

  Rng split(std::uint64_t stream) const;

  std::string serialize() const;
  void deserialize(const std::string& s);

 private:
  std::mt19937_64 gen_;
};

}  // namespace bevfuse::num
