#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace semu {

// Deterministic random stream. All draws are implemented by hand on top of
// mt19937_64 so results are identical across standard libraries; std
// distributions are implementation-defined and must not be used anywhere
// that feeds a checkpoint or a report.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; the spare value is cached so draws come in deterministic order.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1], keeps log() finite
    double u2 = uniform();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 6.283185307179586476925286766559 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  // Uniform index in [0, n). Modulo bias is ~n/2^64, far below anything
  // observable at the sample counts this project uses.
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

  // Independent derived stream; used to keep e.g. shuffle order decoupled
  // from weight init so ablations stay comparable.
  Rng split(std::uint64_t stream) const { return Rng(mix(seed_, stream)); }

  template <typename T>
  void shuffle(std::vector<T>& items) {  // Fisher-Yates
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    // splitmix64 finalizer over the combined state
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace semu
