#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace ts {

// Deterministic RNG. All value transforms are hand-rolled on top of the raw
// 64-bit stream so sequences are identical across standard libraries.
class Rng {
public:
  explicit Rng(uint64_t seed) : gen_(seed), seed_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // uniform in [0, 1)
  double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal, Box-Muller (cosine branch, two draws per call)
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // normal(0, stddev) with samples beyond 2*stddev resampled
  double truncated_normal(double stddev) {
    for (;;) {
      double v = normal() * stddev;
      if (std::fabs(v) <= 2.0 * stddev) return v;
    }
  }

  // index in [0, n)
  size_t index(size_t n) { return static_cast<size_t>(uniform() * static_cast<double>(n)) % n; }

  template <typename Vec>
  void shuffle(Vec& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent stream derived from the construction seed and a stream id
  // (splitmix64 mix), so per-image substreams agree between serial and
  // parallel pipelines.
  Rng split(uint64_t stream) const {
    uint64_t z = seed_ + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return Rng(z ^ (z >> 31));
  }

  std::string save_state() const {
    std::ostringstream os;
    os << seed_ << " " << gen_;
    return os.str();
  }

  void load_state(const std::string& s) {
    std::istringstream is(s);
    is >> seed_ >> gen_;
  }

private:
  std::mt19937_64 gen_;
  uint64_t seed_;
};

}  // namespace ts
