#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>

namespace dialoglab {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// One seeded RNG per run, split deterministically per consumer name
// (dropout, init, sampling, shuffle, ...). Streams are created lazily and
// are independent of creation order.
class RngPool {
 public:
  explicit RngPool(uint64_t seed) : seed_(seed) {}

  uint64_t seed() const { return seed_; }

  std::mt19937_64& stream(std::string_view name) {
    auto it = streams_.find(std::string(name));
    if (it == streams_.end()) {
      uint64_t s = splitmix64(seed_ ^ fnv1a(name));
      it = streams_.emplace(std::string(name), std::mt19937_64(s)).first;
    }
    return it->second;
  }

  double uniform(std::string_view name, double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(stream(name));
  }

  double normal(std::string_view name, double mean = 0.0, double stddev = 1.0) {
    std::normal_distribution<double> d(mean, stddev);
    return d(stream(name));
  }

  using Streams = std::map<std::string, std::mt19937_64, std::less<>>;

  // Engines are plain copyable state; snapshot/restore lets a caller replay
  // the exact same draws (finite-difference checks need this).
  Streams snapshot() const { return streams_; }
  void restore(Streams streams) { streams_ = std::move(streams); }

 private:
  uint64_t seed_;
  Streams streams_;
};

}  // namespace dialoglab
