#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace pmap {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-based seed split: the stream for (master, a, b, ...) depends only on
// the path, never on how many draws other streams consumed.
constexpr std::uint64_t derive_seed(std::uint64_t master,
                                    std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t s = splitmix64(master);
  for (std::uint64_t p : path) s = splitmix64(s ^ splitmix64(p + 0x632be59bd9b4e019ULL));
  return s;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [2^-53, 1 - 2^-53].
  double uniform_open() {
    constexpr double kUnit = 1.0 / 9007199254740992.0;  // 2^-53
    double u = static_cast<double>(engine_() >> 11) * kUnit;
    if (u < kUnit) u = kUnit;
    if (u > 1.0 - kUnit) u = 1.0 - kUnit;
    return u;
  }

  double normal() { return normal_(engine_); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_); }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

}  // namespace pmap
