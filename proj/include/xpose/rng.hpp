#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace xpose {

// Deterministic splitmix64 stream. Used instead of <random> engines so that
// every artifact (checkpoints, AE caches, reports) is byte-stable regardless
// of the standard library implementation.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform double in [0, 1)
  double next_unit() { return double(next_u64() >> 11) * 0x1.0p-53; }

  float uniform(float lo, float hi) {
    return float(double(lo) + next_unit() * (double(hi) - double(lo)));
  }

  // inclusive bounds
  int uniform_int(int lo, int hi) {
    return lo + int(next_u64() % uint64_t(int64_t(hi) - lo + 1));
  }

  float normal(float mean, float stddev) {
    double u1 = next_unit();
    double u2 = next_unit();
    if (u1 < 1e-300) u1 = 1e-300;
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    return float(mean + double(stddev) * z);
  }

  // Independent child stream keyed by tag.
  Rng fork(uint64_t tag) const {
    Rng child(state_ ^ (0x9e3779b97f4a7c15ull * (tag + 0x632be59bd9b4e019ull)));
    child.next_u64();
    return child;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = size_t(next_u64() % i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
};

}  // namespace xpose
