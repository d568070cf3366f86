#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>

namespace crt {

/// SplitMix64 finalizer. Used both to derive stream keys from paths and as
/// the output function of RngStream.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Deterministic random stream addressed by (master_seed, path).
///
/// The path identifies who consumes the stream, e.g. {replicate, community,
/// individual, purpose}. Two streams with the same master seed and path
/// produce identical sequences; streams are cheap to construct so every
/// community/individual can own one, which keeps parallel and serial runs
/// bit-identical. Satisfies UniformRandomBitGenerator.
class RngStream {
 public:
  using result_type = std::uint64_t;
  static constexpr std::size_t kMaxDepth = 8;

  explicit RngStream(std::uint64_t master_seed,
                     std::initializer_list<std::uint64_t> path = {});

  /// Stream whose path is this stream's path followed by `key`.
  [[nodiscard]] RngStream child(std::uint64_t key) const;

  result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }
  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) noexcept {
    return lo + (hi - lo) * uniform();
  }
  /// Integer uniform on [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) noexcept;
  bool bernoulli(double p) noexcept { return uniform() < p; }
  /// Standard normal draw (Box-Muller, no cached second variate).
  double normal() noexcept;

  [[nodiscard]] std::uint64_t master_seed() const noexcept { return master_; }
  [[nodiscard]] std::span<const std::uint64_t> path() const noexcept {
    return {path_.data(), depth_};
  }

 private:
  RngStream() = default;
  void rekey() noexcept;

  std::uint64_t master_ = 0;
  std::array<std::uint64_t, kMaxDepth> path_{};
  std::size_t depth_ = 0;
  std::uint64_t state_ = 0;
};

}  // namespace crt
