#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace unlearn {

// Counter-free splitmix64 stream with named derivation. Every randomized
// decision in the library draws from its own derived stream so that adding
// or removing one consumer never shifts the draws seen by another; this is
// what makes seeded runs reproducible across code paths (e.g. an EM run and
// a collapsed REM run consume identical minibatch streams).
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : state_(mix(seed ^ kInit)) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  float next_float() { return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller; draws two uniforms, no hidden state.
  double normal() {
    double u1 = next_double();
    double u2 = next_double();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // Child stream keyed by integers; independent of this stream's position.
  RngStream derive(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0,
                   std::uint64_t d = 0) const {
    std::uint64_t s = state_;
    s = mix(s ^ mix(a + 0x1000000001b3ull));
    s = mix(s ^ mix(b + 0x100000001b3full));
    s = mix(s ^ mix(c + 0x10000001b3ffull));
    s = mix(s ^ mix(d + 0x1000001b3fffull));
    return RngStream(s, Raw{});
  }

  // Child stream keyed by a label such as "batches" or "augment".
  RngStream derive(std::string_view tag, std::uint64_t a = 0, std::uint64_t b = 0,
                   std::uint64_t c = 0) const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char ch : tag) h = (h ^ static_cast<unsigned char>(ch)) * 0x100000001b3ull;
    return derive(h, a, b, c);
  }

 private:
  struct Raw {};
  RngStream(std::uint64_t raw_state, Raw) : state_(raw_state) {}

  static constexpr std::uint64_t kInit = 0x243f6a8885a308d3ull;

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace unlearn
