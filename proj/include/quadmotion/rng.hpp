#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string_view>

#include <Eigen/Core>

namespace quadmotion {

/// splitmix64; used only to expand seeds into generator state.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// xoshiro256++ stream with a Box-Muller normal source.
///
/// Every consumer (environment, optimizer shuffle, generator sampling, ...)
/// owns its own stream derived from (master_seed, name, index), so results
/// are reproducible and independent of thread count or call interleaving.
class RngStream {
 public:
  RngStream() : RngStream(0, 0) {}
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0) { reseed(seed, stream); }

  static RngStream derive(std::uint64_t master_seed, std::string_view name, std::uint64_t index = 0) {
    return RngStream(master_seed, fnv1a64(name) + 0x9e3779b97f4a7c15ULL * index);
  }

  void reseed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t sm = seed ^ (0xd1342543de82ef95ULL * (stream + 1));
    for (auto& w : state_) w = splitmix64(sm);
    cached_valid_ = false;
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) {
    if (!(lo <= hi)) throw std::invalid_argument("RngStream::uniform: lo > hi");
    return lo + (hi - lo) * uniform01();
  }

  /// Integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("RngStream::uniform_index: n == 0");
    // modulo bias is < 2^-40 for any n that fits in memory; acceptable here
    return next_u64() % n;
  }

  /// Standard normal via Box-Muller (second value cached).
  double normal() {
    if (cached_valid_) {
      cached_valid_ = false;
      return cached_;
    }
    double u1 = uniform01();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    cached_ = r * std::sin(a);
    cached_valid_ = true;
    return r * std::cos(a);
  }

  Eigen::VectorXd normal_vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  template <typename Swap>
  void shuffle_indices(std::vector<int>& idx, Swap&&) = delete;

  /// Fisher-Yates shuffle with this stream.
  void shuffle(std::vector<int>& idx) {
    for (std::size_t i = idx.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(idx[i - 1], idx[j]);
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t state_[4];
  double cached_ = 0.0;
  bool cached_valid_ = false;
};

}  // namespace quadmotion
