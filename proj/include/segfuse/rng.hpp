#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace segfuse {

// splitmix64 stream. All randomness in the project flows through this so
// runs replay bit-identically regardless of platform or standard library.
struct Rng {
  uint64_t state = 0;
  bool has_spare = false;
  double spare = 0.0;

  explicit Rng(uint64_t seed) : state(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n); n == 0 yields 0
  uint64_t below(uint64_t n) {
    if (n == 0) return 0;
    return uint64_t((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  int range(int lo, int hi) {  // inclusive bounds
    return lo + int(below(uint64_t(hi - lo + 1)));
  }

  // Box-Muller; consumes two uniforms per pair, caches the second draw.
  double normal() {
    if (has_spare) {
      has_spare = false;
      return spare;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare = r * std::sin(a);
    has_spare = true;
    return r * std::cos(a);
  }

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (size_t i = items.size(); i > 1; --i) {
      size_t j = size_t(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }
};

inline uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (char ch : bytes) {
    h ^= uint8_t(ch);
    h *= 0x100000001b3ull;
  }
  return h;
}

// Derives an independent sub-seed from a root seed, a purpose tag and an
// index (FNV-1a over the inputs, then one splitmix scramble).
inline uint64_t derive_seed(uint64_t root, std::string_view tag, uint64_t index = 0) {
  uint64_t h = 0xcbf29ce484222325ull;
  auto mix_byte = [&h](uint8_t b) {
    h ^= b;
    h *= 0x100000001b3ull;
  };
  for (int i = 0; i < 8; ++i) mix_byte(uint8_t(root >> (8 * i)));
  for (char ch : tag) mix_byte(uint8_t(ch));
  for (int i = 0; i < 8; ++i) mix_byte(uint8_t(index >> (8 * i)));
  Rng scramble(h);
  return scramble.next_u64();
}

}  // namespace segfuse
