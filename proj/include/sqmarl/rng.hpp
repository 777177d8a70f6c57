#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace sqmarl {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Stream derivation: every consumer of randomness gets its own stream keyed by
// (master seed, component tag, up to two indices). Adding a new component tag
// never perturbs the streams of existing components.
inline uint64_t derive_seed(uint64_t master, std::string_view tag, uint64_t a = 0,
                            uint64_t b = 0) {
  uint64_t h = splitmix64(master ^ fnv1a64(tag));
  h = splitmix64(h ^ (a * 0x9e3779b97f4a7c15ULL));
  h = splitmix64(h ^ (b * 0xd1b54a32d192ed03ULL));
  return h;
}

// mt19937_64 wrapper with pinned distribution code, so that identical seeds
// give bit-identical draws independently of the standard library's
// distribution implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer on {lo, ..., hi} inclusive.
  int uniform_int(int lo, int hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(static_cast<uint64_t>(uniform() * static_cast<double>(span)));
  }

  // Index into a discrete distribution given by non-negative weights summing to ~1.
  int categorical(const double* probs, int n) {
    double u = uniform();
    double acc = 0.0;
    for (int i = 0; i < n - 1; ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    return n - 1;
  }

  // Standard normal via Box-Muller; caches the second value.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

inline Rng derive_rng(uint64_t master, std::string_view tag, uint64_t a = 0, uint64_t b = 0) {
  return Rng(derive_seed(master, tag, a, b));
}

}  // namespace sqmarl
