#include "crt/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace crt {

RngStream::RngStream(std::uint64_t master_seed,
                     std::initializer_list<std::uint64_t> path)
    : master_(master_seed) {
  if (path.size() > kMaxDepth) {
    throw std::invalid_argument("RngStream: path deeper than kMaxDepth");
  }
  for (auto key : path) path_[depth_++] = key;
  rekey();
}

RngStream RngStream::child(std::uint64_t key) const {
  if (depth_ == kMaxDepth) {
    throw std::invalid_argument("RngStream: path deeper than kMaxDepth");
  }
  RngStream out;
  out.master_ = master_;
  out.path_ = path_;
  out.depth_ = depth_;
  out.path_[out.depth_++] = key;
  out.rekey();
  return out;
}

void RngStream::rekey() noexcept {
  std::uint64_t h = mix64(master_ + 0x9e3779b97f4a7c15ULL);
  for (std::size_t i = 0; i < depth_; ++i) {
    // depth enters the hash so {1} and {1, 0} differ
    h = mix64(h ^ mix64(path_[i] + 0x9e3779b97f4a7c15ULL * (i + 2)));
  }
  state_ = h;
}

std::int64_t RngStream::uniform_int(std::int64_t lo, std::int64_t hi) noexcept {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<std::int64_t>((*this)());
  // Lemire's nearly-divisionless reduction with rejection
  const std::uint64_t limit = (0 - span) % span;
  for (;;) {
    const auto x = (*this)();
    const auto m = static_cast<unsigned __int128>(x) * span;
    if (static_cast<std::uint64_t>(m) >= limit) {
      return lo + static_cast<std::int64_t>(m >> 64);
    }
  }
}

double RngStream::normal() noexcept {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace crt
