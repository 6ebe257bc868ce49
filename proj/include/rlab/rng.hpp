#pragma once

#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>

#include "rlab/common.hpp"

namespace rlab {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// derive one stream seed from several context words (seed, cell, instance, ...)
inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> words) {
  std::uint64_t h = 0x853c49e6748fea9bull;
  for (std::uint64_t w : words) h = splitmix64(h ^ w);
  return h;
}

// deterministic sampler. mt19937_64 is fully specified by the standard and the
// distributions below are hand-rolled, so streams are identical across
// platforms and library versions (std::*_distribution would not be).
class rng {
 public:
  explicit rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t raw() { return gen_(); }

  // uniform in [0, 1), 53-bit resolution
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // standard normal via Box-Muller; pairs cached
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double t = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }

  vec normal_vec(int d) {
    vec v(d);
    for (int i = 0; i < d; ++i) v(i) = normal();
    return v;
  }

  // uniform over the annulus a <= ||z||_2 <= b in dimension d
  vec shell(int d, double a, double b) {
    vec dir = normal_vec(d);
    double n = dir.norm();
    while (n == 0.0) {
      dir = normal_vec(d);
      n = dir.norm();
    }
    double u = uniform01();
    double ad = std::pow(a, d);
    double r = std::pow(ad + u * (std::pow(b, d) - ad), 1.0 / d);
    return dir * (r / n);
  }

  // uniform over the ball ||z||_2 <= r
  vec ball(int d, double r) { return shell(d, 0.0, r); }

  // unbiased index in [0, n)
  std::uint64_t below(std::uint64_t n) {
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = gen_();
    while (v >= limit) v = gen_();
    return v % n;
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace rlab
