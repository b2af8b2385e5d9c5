#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace wrl {

// Seeded random stream. Wraps std::mt19937_64 but draws all variates through
// our own code: the standard distributions are implementation-defined, which
// would break reproducibility of generated corpora across standard libraries.
//
// Streams are derived from a root seed by label, e.g.
//   Rng root(seed);
//   Rng gen = root.derive("synth/prototypes");
// so that adding a consumer never shifts the draws of another.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix(seed)), seed_hash_(splitmix(seed)) {}

  std::uint64_t bits() { return engine_(); }

  // Uniform on {lo, ..., hi} inclusive. Rejection sampling, no modulo bias.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return lo + static_cast<std::int64_t>(bits());  // full range
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t draw;
    do {
      draw = bits();
    } while (draw >= limit);
    return lo + static_cast<std::int64_t>(draw % span);
  }

  // Uniform on [lo, hi) with 53-bit resolution.
  double uniform_real(double lo, double hi) {
    const double unit = static_cast<double>(bits() >> 11) * 0x1.0p-53;
    return lo + unit * (hi - lo);
  }

  // Standard normal via Box-Muller (one cached spare).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform_real(0.0, 1.0);
    } while (u1 <= 0.0);
    u2 = uniform_real(0.0, 1.0);
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Sample k distinct elements from v, uniformly, order randomized.
  template <class T>
  std::vector<T> sample_without_replacement(std::vector<T> v, std::size_t k) {
    shuffle(v);
    if (v.size() > k) v.resize(k);
    return v;
  }

  // Child stream whose sequence is independent of draws made on the parent.
  Rng derive(std::string_view label) const {
    std::uint64_t h = seed_hash_;
    for (const char c : label) h = splitmix(h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
    return Rng(h, Tag{});
  }

  Rng derive(std::string_view label, std::uint64_t index) const {
    Rng child = derive(label);
    child.engine_.seed(splitmix(child.seed_hash_ ^ splitmix(index)));
    child.seed_hash_ = splitmix(child.seed_hash_ ^ splitmix(index));
    return child;
  }

 private:
  struct Tag {};
  Rng(std::uint64_t hashed, Tag) : engine_(hashed), seed_hash_(hashed) {}

  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::mt19937_64 engine_;
  std::uint64_t seed_hash_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace wrl
