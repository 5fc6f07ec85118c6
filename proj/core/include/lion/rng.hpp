#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

namespace lion {

/// Counter-based splittable generator. Output i of a stream is a pure
/// function of (key, i), so every subcomponent can derive an independent
/// child stream from one 64-bit seed and stay reproducible across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept;

  /// Independent child stream keyed by a label.
  Rng split(std::string_view label) const noexcept;
  /// Independent child stream keyed by an index (e.g. epoch, restart).
  Rng split(std::uint64_t index) const noexcept;

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller.
  double normal() noexcept;
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n) noexcept;

  template <typename T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

  std::uint64_t key() const noexcept { return key_; }

 private:
  Rng(std::uint64_t key, int) noexcept : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace lion
