#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ldpo/error.hpp"
#include "ldpo/rng.hpp"

namespace ldpo {

inline constexpr double kSimplexSumTol = 1e-9;
inline constexpr double kNegativeLeak = 1e-12;

/// A point on the probability simplex. Only constructible through validate()
/// and the factories below, so holding one means the weights are a distribution.
class SimplexVector {
 public:
  static SimplexVector validate(std::span<const double> weights) {
    if (weights.empty()) throw Error(Errc::EmptyVector, "simplex vector needs at least one weight");
    std::vector<double> w(weights.begin(), weights.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (!std::isfinite(w[i])) {
        throw Error(Errc::NotNormalized, "weight " + std::to_string(i) + " is not finite");
      }
      if (w[i] < -kNegativeLeak) {
        throw Error(Errc::NegativeWeight, "weight " + std::to_string(i) + " = " + std::to_string(w[i]));
      }
      if (w[i] < 0.0) w[i] = 0.0;
      sum += w[i];
    }
    if (std::abs(sum - 1.0) > kSimplexSumTol) {
      throw Error(Errc::NotNormalized, "weights sum to " + std::to_string(sum));
    }
    if (sum != 1.0) {
      for (double& v : w) v /= sum;
    }
    return SimplexVector(std::move(w));
  }

  static SimplexVector one_hot(std::size_t m, std::size_t k) {
    if (m == 0) throw Error(Errc::EmptyVector, "one_hot with m = 0");
    if (k >= m) {
      throw Error(Errc::IndexOutOfRange,
                  "one_hot index " + std::to_string(k) + " outside [0, " + std::to_string(m) + ")");
    }
    std::vector<double> w(m, 0.0);
    w[k] = 1.0;
    return SimplexVector(std::move(w));
  }

  static SimplexVector uniform(std::size_t m) {
    if (m == 0) throw Error(Errc::EmptyVector, "uniform with m = 0");
    return SimplexVector(std::vector<double>(m, 1.0 / static_cast<double>(m)));
  }

  std::size_t size() const noexcept { return weights_.size(); }
  double operator[](std::size_t i) const { return weights_[i]; }
  std::span<const double> weights() const noexcept { return weights_; }
  auto begin() const noexcept { return weights_.begin(); }
  auto end() const noexcept { return weights_.end(); }

  friend bool operator==(const SimplexVector&, const SimplexVector&) = default;

 private:
  explicit SimplexVector(std::vector<double> w) : weights_(std::move(w)) {}
  std::vector<double> weights_;
};

struct DirichletParams {
  std::vector<double> alpha;

  static DirichletParams symmetric(std::size_t m, double a) { return {std::vector<double>(m, a)}; }
};

inline SimplexVector sample_dirichlet(const DirichletParams& params, Rng& rng) {
  if (params.alpha.empty()) throw Error(Errc::EmptyVector, "Dirichlet needs at least one concentration");
  for (std::size_t i = 0; i < params.alpha.size(); ++i) {
    const double a = params.alpha[i];
    if (!(a > 0.0) || !std::isfinite(a)) {
      throw Error(Errc::InvalidConcentration, "alpha[" + std::to_string(i) + "] = " + std::to_string(a));
    }
  }
  if (params.alpha.size() == 1) return SimplexVector::one_hot(1, 0);

  std::vector<double> g(params.alpha.size());
  double total = 0.0;
  for (;;) {
    total = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] = rng.gamma(params.alpha[i]);
      total += g[i];
    }
    // All-zero draws are possible for tiny alpha; redraw.
    if (total > 0.0) break;
  }
  for (double& v : g) v /= total;
  return SimplexVector::validate(g);
}

/// Uniform on the simplex, i.e. Dirichlet(1, ..., 1).
inline SimplexVector sample_uniform(std::size_t m, Rng& rng) {
  if (m == 0) throw Error(Errc::EmptyVector, "sample_uniform with m = 0");
  return sample_dirichlet(DirichletParams::symmetric(m, 1.0), rng);
}

namespace detail {
inline void compositions(std::size_t slot, unsigned remaining, std::vector<unsigned>& current,
                         std::vector<std::vector<unsigned>>& out) {
  if (slot + 1 == current.size()) {
    current[slot] = remaining;
    out.push_back(current);
    return;
  }
  for (unsigned c = remaining + 1; c-- > 0;) {
    current[slot] = c;
    compositions(slot + 1, remaining - c, current, out);
  }
}
}  // namespace detail

/// Integer compositions of r into m nonnegative parts, in descending
/// lexicographic order: (r,0,..,0) first, (0,..,0,r) last.
inline std::vector<std::vector<unsigned>> compositions(std::size_t m, unsigned r) {
  if (m == 0) throw Error(Errc::EmptyVector, "compositions with m = 0");
  std::vector<std::vector<unsigned>> out;
  std::vector<unsigned> current(m, 0);
  detail::compositions(0, r, current, out);
  return out;
}

/// Every point (c_1/r, ..., c_m/r) with integer c_i >= 0 summing to r.
inline std::vector<SimplexVector> grid(std::size_t m, unsigned resolution) {
  if (resolution == 0) throw Error(Errc::InvalidArgument, "grid resolution must be >= 1");
  std::vector<SimplexVector> out;
  for (const auto& comp : compositions(m, resolution)) {
    std::vector<double> w(m);
    for (std::size_t i = 0; i < m; ++i) w[i] = static_cast<double>(comp[i]) / resolution;
    out.push_back(SimplexVector::validate(w));
  }
  return out;
}

}  // namespace ldpo
