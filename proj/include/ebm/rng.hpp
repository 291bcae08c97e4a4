#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace ebm {

uint64_t splitmix64(uint64_t x);

// Seeded random stream. Conversions from raw 64-bit words to uniforms and
// normals are done here rather than through <random> distributions so that
// sequences do not depend on the standard library implementation.
class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0);

  uint64_t next_u64() { return engine_(); }

  // [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  // Unbiased integer in [0, n).
  uint64_t below(uint64_t n);

  // Independent stream derived from this stream's next output.
  Rng fork(uint64_t stream);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// First `k` entries of a uniformly random permutation of `pool`.
std::vector<std::size_t> sample_without_replacement(std::vector<std::size_t> pool,
                                                    std::size_t k, Rng& rng);
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k,
                                                    Rng& rng);

}  // namespace ebm
