#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace ftva {

/// SplitMix64 finalizer; used to derive independent per-stream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for stream `index` of a run seeded with `master`.
inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

/// Thin wrapper over mt19937_64 with platform-independent sampling helpers.
/// std::uniform_real_distribution et al. are avoided because their output is
/// implementation-defined, which would break cross-toolchain determinism.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next() { return eng_(); }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). Lemire-style rejection keeps it unbiased.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = -n % n;
    for (;;) {
      const std::uint64_t x = eng_();
      const unsigned __int128 m = static_cast<unsigned __int128>(x) * n;
      if (static_cast<std::uint64_t>(m) >= limit) return static_cast<std::uint64_t>(m >> 64);
    }
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Binomial(n, p); degenerate p skips the draw.
  int binomial(int n, double p) {
    if (n <= 0 || p <= 0.0) return 0;
    if (p >= 1.0) return n;
    if (n <= 16) {
      int k = 0;
      for (int i = 0; i < n; ++i) k += uniform() < p;
      return k;
    }
    return std::binomial_distribution<int>(n, p)(eng_);
  }

  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

  /// Index drawn from a cumulative table whose last positive entry is 1.
  int from_cdf(std::span<const double> cdf) {
    const double u = uniform();
    int i = 0;
    const int last = static_cast<int>(cdf.size()) - 1;
    while (i < last && u >= cdf[i]) ++i;
    return i;
  }

  /// Index drawn proportionally to nonnegative weights (linear scan).
  int from_weights(std::span<const double> w, double total) {
    double u = uniform() * total;
    int last_pos = 0;
    for (int i = 0; i < static_cast<int>(w.size()); ++i) {
      if (w[i] <= 0.0) continue;
      last_pos = i;
      if (u < w[i]) return i;
      u -= w[i];
    }
    return last_pos;
  }

  /// Moves a uniformly random k-subset of v to the front (partial Fisher-Yates).
  template <class T>
  void partial_shuffle(std::vector<T>& v, std::size_t k) {
    for (std::size_t i = 0; i < k && i + 1 < v.size(); ++i) {
      const std::size_t j = i + below(v.size() - i);
      std::swap(v[i], v[j]);
    }
  }

  /// Flat Dirichlet(1,...,1) sample of dimension n.
  std::vector<double> dirichlet_flat(int n) {
    std::vector<double> x(n);
    double total = 0.0;
    for (auto& v : x) total += (v = exponential(1.0));
    for (auto& v : x) v /= total;
    return x;
  }

 private:
  std::mt19937_64 eng_;
};

/// Builds cumulative tables for each (s,a) row of a row-major [s][a][s'] tensor.
/// The last positive entry of every row is pinned to 1 so rounding never
/// lets a draw fall through to a zero-probability state.
inline std::vector<double> cumulative_rows(const std::vector<double>& probs, int n) {
  std::vector<double> cdf(probs.size());
  const std::size_t rows = probs.size() / n;
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    int last_pos = n - 1;
    for (int t = 0; t < n; ++t) {
      acc += probs[r * n + t];
      cdf[r * n + t] = acc;
      if (probs[r * n + t] > 0.0) last_pos = t;
    }
    for (int t = last_pos; t < n; ++t) cdf[r * n + t] = 1.0;
  }
  return cdf;
}

}  // namespace ftva
