#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sslosr/error.hpp"

namespace sslosr {

// Deterministic random stream whose full state is the mt19937_64 engine.
// Normal draws use Box-Muller on fresh uniforms each call (no cached spare),
// so save/restore of the engine state reproduces the stream exactly.
class Rng {
 public:
  Rng() : eng_(0) {}
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t bits() { return eng_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    // u1 in (0, 1] so the log is finite.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) {
    return mean + stddev * normal();
  }

  // Uniform integer in [0, n), rejection sampled to avoid modulo bias.
  std::size_t index(std::size_t n) {
    if (n == 0) throw argument_error("Rng::index: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = eng_();
    } while (v >= limit);
    return static_cast<std::size_t>(v % n);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

  // First k elements of a random permutation of [0, n).
  std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                      std::size_t k) {
    if (k > n) {
      throw argument_error("sample_without_replacement: k exceeds pool size");
    }
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    shuffle(pool);
    pool.resize(k);
    return pool;
  }

  std::string serialize() const {
    std::ostringstream os;
    os << eng_;
    return os.str();
  }

  void deserialize(const std::string& s) {
    std::istringstream is(s);
    is >> eng_;
    if (!is) throw integrity_error("Rng::deserialize: malformed state string");
  }

  bool operator==(const Rng& other) const { return eng_ == other.eng_; }

 private:
  std::mt19937_64 eng_;
};

// Stable seed derivation for independent sub-streams (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace sslosr
