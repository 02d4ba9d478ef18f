#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "agis/tensor.hpp"

namespace agis {

/// Deterministic RNG stream. Every sampling operation in the library takes
/// an explicit Rng (or a seed from which one is built), so results are pure
/// functions of (inputs, seed). Repeated draws from one stream advance its
/// state; this is the seed-sequence contract for per-step sampling.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t raw() { return engine_(); }

  /// Uniform integer in [0, n).
  int uniform_int(int n) {
    return static_cast<int>(std::uniform_int_distribution<std::uint64_t>(0, static_cast<std::uint64_t>(n) - 1)(engine_));
  }

  Scalar uniform(Scalar lo = 0.0, Scalar hi = 1.0) {
    return std::uniform_real_distribution<Scalar>(lo, hi)(engine_);
  }

  Scalar normal(Scalar mean = 0.0, Scalar stddev = 1.0) {
    return std::normal_distribution<Scalar>(mean, stddev)(engine_);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(static_cast<int>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// k distinct indices drawn from [0, n), in draw order.
  std::vector<int> sample_without_replacement(int n, int k) {
    std::vector<int> idx(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    shuffle(idx);
    idx.resize(static_cast<size_t>(k));
    return idx;
  }

  /// Derive an independent child stream; used to give subsystems their own
  /// reproducible seeds without coupling their draw counts.
  Rng fork() { return Rng(engine_() ^ 0x9e3779b97f4a7c15ull); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

inline void fill_normal(Tensor& t, Rng& rng, Scalar stddev) {
  for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, stddev);
}

inline void fill_uniform(Tensor& t, Rng& rng, Scalar lo, Scalar hi) {
  for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
}

}  // namespace agis
