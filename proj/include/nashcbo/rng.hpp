#pragma once

#include <cmath>
#include <cstdint>

namespace nashcbo {

namespace detail {

// splitmix64 finalizer; good avalanche, cheap, stable across platforms.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// Key domains keep independent uses of the same seed from colliding.
enum : std::uint64_t {
  kRngDomainStep = 0x5354455055ULL,   // per-step Brownian increments
  kRngDomainInit = 0x494e4954ULL,     // initial ensemble draws
  kRngDomainSynth = 0x53594e54ULL,    // game synthesis draws
  kRngDomainCenter = 0x43454e54ULL,   // init-center offset draws
};

// Counter-based stream: the state is a hash of (seed, domain, k, m, i) and
// successive draws walk a splitmix64 sequence from it.  Draws for one key
// never depend on what other keys consumed, so any parallel schedule of the
// (step, player, particle) work items sees identical numbers.
class CounterStream {
 public:
  CounterStream(std::uint64_t seed, std::uint64_t domain, std::uint64_t k,
                std::uint64_t m, std::uint64_t i) {
    std::uint64_t s = detail::mix64(seed ^ 0x243f6a8885a308d3ULL);
    s = detail::mix64(s ^ domain);
    s = detail::mix64(s ^ k);
    s = detail::mix64(s ^ m);
    state_ = detail::mix64(s ^ i);
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform on (0,1]; never 0, so log() below is safe.
  double next_uniform_pos() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Uniform on [0,1).
  double next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normals via Box-Muller, two per uniform pair.  When n is odd
  // the spare is discarded; consumption order is part of the contract.
  void fill_normals(double* out, int n) {
    int j = 0;
    while (j < n) {
      const double u1 = next_uniform_pos();
      const double u2 = next_uniform();
      const double rad = std::sqrt(-2.0 * std::log(u1));
      const double ang = 6.283185307179586476925286766559 * u2;
      out[j++] = rad * std::cos(ang);
      if (j < n) out[j++] = rad * std::sin(ang);
    }
  }

 private:
  std::uint64_t state_ = 0;
};

// Convenience for a single u64 derived from a key chain (sub-seed derivation).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag_a,
                                 std::uint64_t tag_b = 0) {
  std::uint64_t s = detail::mix64(seed ^ 0x9e3779b97f4a7c15ULL);
  s = detail::mix64(s ^ tag_a);
  return detail::mix64(s ^ tag_b);
}

}  // namespace nashcbo
