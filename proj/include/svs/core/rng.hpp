#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace svs {

// Deterministic, platform-independent RNG. All randomness in the project
// flows through keyed streams derived from one master seed, so runs are
// reproducible bit-for-bit and checkpoint resume only has to remember the
// seed and the step counter. std::mt19937 distributions are
// implementation-defined, hence the hand-rolled splitmix64 core.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t hash_key(std::uint64_t h, std::uint64_t x) {
  h ^= x + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  std::uint64_t s = h;
  return splitmix64(s);
}

inline std::uint64_t hash_key(std::uint64_t h, std::string_view tag) {
  for (char c : tag) h = hash_key(h, static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) { splitmix64(state_); }

  // Keyed substream: Rng(seed).fork("weights", layer_index) etc.
  Rng fork(std::string_view tag, std::uint64_t a = 0, std::uint64_t b = 0) const {
    std::uint64_t h = state_;
    h = hash_key(h, tag);
    h = hash_key(h, a);
    h = hash_key(h, b);
    return Rng(h);
  }

  std::uint64_t next_u64() { return splitmix64(state_); }

  // Uniform in [0, 1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n ? next_u64() % n : 0; }

  int uniform_int(int lo, int hi) {  // inclusive range
    return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  // Box-Muller; the spare value is discarded to keep the stream stateless.
  double normal() {
    double u1 = uniform01(), u2 = uniform01();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& xs) {
    for (size_t i = xs.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(xs[i - 1], xs[j]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace svs
