#pragma once
// Platform-stable hashing and seeded randomness. std::hash and the standard
// distributions are implementation-defined, so anything that feeds cache keys
// or seeded sampling goes through here instead.

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include <openssl/evp.h>

#include "sumask/errors.hpp"

namespace sumask {

inline std::string to_hex(const unsigned char* bytes, std::size_t n) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(2 * n, '0');
  for (std::size_t i = 0; i < n; ++i) {
    out[2 * i] = kDigits[bytes[i] >> 4];
    out[2 * i + 1] = kDigits[bytes[i] & 0x0f];
  }
  return out;
}

inline std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1)
    throw Error("EVP_Digest(sha256) failed");
  return to_hex(digest.data(), length);
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a over the bytes, finalized with splitmix64 for avalanche.
inline std::uint64_t stable_hash64(std::string_view data, std::uint64_t seed = 0) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ splitmix64(seed);
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(h);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) { return splitmix64(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2))); }

// Uniform double in [0, 1) from the top 53 bits.
inline double unit_interval(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

// mt19937_64 with portable bounded draws.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform integer in [0, bound), bound > 0. Rejection sampling keeps it
  // unbiased and identical on every standard library.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % bound;
  }

  double uniform() { return unit_interval(engine_()); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace sumask
