#pragma once

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "ldpo/csv.hpp"
#include "ldpo/error.hpp"
#include "ldpo/numeric.hpp"
#include "ldpo/rng.hpp"
#include "ldpo/simplex.hpp"

namespace ldpo {

/// All monomials of total degree <= p in d variables, graded, and within a
/// degree in descending lexicographic order of exponents:
/// 1, l1, ..., ld, l1^2, l1 l2, ..., l1 ld, l2^2, ...
class PolyFeatureMap {
 public:
  PolyFeatureMap(std::size_t d, unsigned p) : d_(d), p_(p) {
    if (d == 0) throw Error(Errc::InvalidArgument, "feature map needs d >= 1");
    if (p == 0) throw Error(Errc::InvalidArgument, "feature map needs degree >= 1");
    monomials_.push_back(std::vector<unsigned>(d, 0));
    for (unsigned deg = 1; deg <= p; ++deg) {
      for (auto& e : compositions(d, deg)) monomials_.push_back(std::move(e));
    }
  }

  std::size_t dims() const noexcept { return d_; }
  unsigned degree() const noexcept { return p_; }
  std::size_t size() const noexcept { return monomials_.size(); }
  const std::vector<std::vector<unsigned>>& monomials() const noexcept { return monomials_; }

  std::vector<double> operator()(std::span<const double> lambda) const {
    if (lambda.size() != d_) {
      throw Error(Errc::DimensionMismatch,
                  "lambda has " + std::to_string(lambda.size()) + " entries, feature map expects " + std::to_string(d_));
    }
    std::vector<double> phi;
    phi.reserve(monomials_.size());
    for (const auto& e : monomials_) {
      double v = 1.0;
      for (std::size_t i = 0; i < d_; ++i) {
        for (unsigned k = 0; k < e[i]; ++k) v *= lambda[i];
      }
      phi.push_back(v);
    }
    return phi;
  }

  friend bool operator==(const PolyFeatureMap&, const PolyFeatureMap&) = default;

 private:
  std::size_t d_;
  unsigned p_;
  std::vector<std::vector<unsigned>> monomials_;
};

inline std::vector<double> poly_features(const PolyFeatureMap& map, const SimplexVector& lambda) {
  return map(lambda.weights());
}

struct Observation {
  SimplexVector lambda;
  double y;
};

/// f(lambda) = w . phi_p(lambda)
struct PerfModel {
  PolyFeatureMap feature_map;
  std::vector<double> w;

  double operator()(std::span<const double> lambda) const {
    const auto phi = feature_map(lambda);
    double f = 0.0;
    for (std::size_t i = 0; i < phi.size(); ++i) f += w[i] * phi[i];
    return f;
  }
};

inline double predict(const PerfModel& model, const SimplexVector& lambda) { return model(lambda.weights()); }

/// Ridge least squares in the lifted space:
/// minimize sum_i (w . phi(lambda_i) - y_i)^2 + eps * |w|^2.
/// With fewer observations than features the dual system
/// (Phi Phi^T + eps I) a = y, w = Phi^T a is solved, which is the same
/// minimizer; as eps -> 0 it tends to the minimum-norm interpolant.
/// eps = 0 falls back to a rank-revealing minimum-norm solve.
inline PerfModel fit(const std::vector<Observation>& obs, const PolyFeatureMap& map, double eps = 1e-8) {
  if (obs.empty()) throw Error(Errc::EmptyVector, "fit needs at least one observation");
  if (!(eps >= 0.0) || !std::isfinite(eps)) throw Error(Errc::InvalidArgument, "ridge eps must be >= 0");
  const auto n = static_cast<Eigen::Index>(obs.size());
  const auto f = static_cast<Eigen::Index>(map.size());
  Eigen::MatrixXd phi(n, f);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& o = obs[static_cast<std::size_t>(i)];
    if (o.lambda.size() != map.dims()) {
      throw Error(Errc::DimensionMismatch, "observation " + std::to_string(i) + " has dimension " +
                                               std::to_string(o.lambda.size()) + ", expected " +
                                               std::to_string(map.dims()));
    }
    if (!std::isfinite(o.y)) throw Error(Errc::NonFiniteScore, "observation " + std::to_string(i) + " score");
    const auto row = map(o.lambda.weights());
    for (Eigen::Index j = 0; j < f; ++j) phi(i, j) = row[static_cast<std::size_t>(j)];
    y(i) = o.y;
  }

  Eigen::VectorXd w;
  if (eps == 0.0) {
    w = phi.completeOrthogonalDecomposition().solve(y);
  } else if (n <= f) {
    Eigen::MatrixXd gram = phi * phi.transpose();
    gram.diagonal().array() += eps;
    w = phi.transpose() * gram.ldlt().solve(y);
  } else {
    Eigen::MatrixXd gram = phi.transpose() * phi;
    gram.diagonal().array() += eps;
    w = gram.ldlt().solve(phi.transpose() * y);
  }
  if (!w.allFinite()) throw Error(Errc::InvalidArgument, "performance-model fit produced non-finite weights");
  return PerfModel{map, std::vector<double>(w.data(), w.data() + w.size())};
}

/// Model dump: header lines `d`, `p`, `n`, then one line per monomial with its
/// exponents followed by the weight at 17 significant digits.
inline void write_model(std::ostream& out, const PerfModel& m) {
  out << "# ldpo performance model: f(lambda) = sum_j w_j * prod_i lambda_i^e_ij\n";
  out << "d " << m.feature_map.dims() << "\n";
  out << "p " << m.feature_map.degree() << "\n";
  out << "n " << m.feature_map.size() << "\n";
  for (std::size_t j = 0; j < m.w.size(); ++j) {
    for (unsigned e : m.feature_map.monomials()[j]) out << e << ' ';
    out << csv::exact(m.w[j]) << "\n";
  }
}

inline PerfModel read_model(std::istream& in) {
  std::string line;
  auto next = [&]() -> std::string {
    while (std::getline(in, line)) {
      const auto t = csv::trim(line);
      if (!t.empty() && t[0] != '#') return t;
    }
    throw Error(Errc::ParseError, "model file ended early");
  };
  auto header = [&](const char* key) -> unsigned long {
    std::istringstream ss(next());
    std::string k;
    unsigned long v = 0;
    if (!(ss >> k >> v) || k != key) throw Error(Errc::ParseError, std::string("model file: expected '") + key + "'");
    return v;
  };
  const auto d = header("d");
  const auto p = header("p");
  const auto n = header("n");
  PolyFeatureMap map(d, static_cast<unsigned>(p));
  if (map.size() != n) throw Error(Errc::ParseError, "model file: n does not match C(d+p, p)");
  std::vector<double> w;
  for (std::size_t j = 0; j < n; ++j) {
    std::istringstream ss(next());
    std::vector<unsigned> e(d);
    for (auto& x : e) {
      if (!(ss >> x)) throw Error(Errc::ParseError, "model file: bad exponent on term " + std::to_string(j));
    }
    if (e != map.monomials()[j]) throw Error(Errc::ParseError, "model file: monomial order mismatch at term " + std::to_string(j));
    std::string tok;
    if (!(ss >> tok)) throw Error(Errc::ParseError, "model file: missing weight on term " + std::to_string(j));
    w.push_back(csv::parse_double(tok, "model term " + std::to_string(j)));
  }
  return PerfModel{std::move(map), std::move(w)};
}

inline void save_model(const std::string& path, const PerfModel& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write '" + path + "'");
  write_model(out, m);
}

inline PerfModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open model '" + path + "'");
  return read_model(in);
}

/// Scores above this are read as percentages and divided by 100.
inline constexpr double kPercentThreshold = 1.5;

/// Observations CSV: header lambda_1,...,lambda_d,score.
inline std::vector<Observation> read_observations(std::istream& in, const std::string& source = "<stream>") {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!csv::trim(line).empty()) {
      header = csv::split(line);
      break;
    }
  }
  if (header.size() < 2) throw Error(Errc::ParseError, source + ": missing header");
  const std::size_t d = header.size() - 1;
  for (std::size_t i = 0; i < d; ++i) {
    if (header[i] != "lambda_" + std::to_string(i + 1)) {
      throw Error(Errc::ParseError, source + ": header column " + std::to_string(i + 1) + " should be lambda_" +
                                        std::to_string(i + 1));
    }
  }
  if (header.back() != "score") throw Error(Errc::ParseError, source + ": last header column should be 'score'");

  std::vector<Observation> obs;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto fields = csv::split(line);
    if (fields.size() != d + 1) throw Error(Errc::ParseError, where + ": expected " + std::to_string(d + 1) + " fields");
    std::vector<double> lam(d);
    for (std::size_t i = 0; i < d; ++i) lam[i] = csv::parse_double(fields[i], where);
    double y = csv::parse_double(fields[d], where);
    if (!std::isfinite(y)) throw Error(Errc::ParseError, where + ": score is not finite");
    if (y > kPercentThreshold) y /= 100.0;
    try {
      obs.push_back({SimplexVector::validate(lam), y});
    } catch (const Error& e) {
      throw Error(Errc::ParseError, where + ": " + e.what());
    }
  }
  if (obs.empty()) throw Error(Errc::ParseError, source + ": no observations");
  return obs;
}

inline std::vector<Observation> load_observations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open observations '" + path + "'");
  return read_observations(in, path);
}

struct GridCandidates {
  unsigned resolution = 4;
};
struct DirichletCandidates {
  DirichletParams params;
  std::size_t k = 10;
};
using CandidateMethod = std::variant<GridCandidates, DirichletCandidates>;

inline std::vector<SimplexVector> build_candidates(const CandidateMethod& method, std::size_t d, Rng& rng) {
  return std::visit(
      [&](const auto& m) -> std::vector<SimplexVector> {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, GridCandidates>) {
          return grid(d, m.resolution);
        } else {
          if (m.k == 0) throw Error(Errc::InvalidArgument, "need k >= 1 Dirichlet candidates");
          if (m.params.alpha.size() != d) {
            throw Error(Errc::DimensionMismatch, "alpha has " + std::to_string(m.params.alpha.size()) +
                                                     " entries for dimension " + std::to_string(d));
          }
          std::vector<SimplexVector> out;
          out.reserve(m.k);
          for (std::size_t j = 0; j < m.k; ++j) out.push_back(sample_dirichlet(m.params, rng));
          return out;
        }
      },
      method);
}

/// p(lambda_j) = softmax_j(tau * f(lambda_j)).
struct SchedulerDist {
  std::vector<SimplexVector> candidates;
  std::vector<double> scores;
  std::vector<double> probs;
  double tau = 100.0;
};

inline SchedulerDist distribution_from_scores(std::vector<SimplexVector> candidates, std::vector<double> scores,
                                              double tau) {
  if (candidates.empty()) throw Error(Errc::EmptyCandidates, "scheduler needs at least one candidate");
  if (candidates.size() != scores.size()) throw Error(Errc::DimensionMismatch, "one score per candidate required");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw Error(Errc::InvalidArgument, "tau must be positive");
  std::vector<double> logits(scores.size());
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (!std::isfinite(scores[j])) throw Error(Errc::NonFiniteScore, "candidate score " + std::to_string(j));
    logits[j] = tau * scores[j];
  }
  auto probs = softmax(logits);
  return SchedulerDist{std::move(candidates), std::move(scores), std::move(probs), tau};
}

inline SchedulerDist make_distribution(const PerfModel& model, std::vector<SimplexVector> candidates, double tau) {
  std::vector<double> scores;
  scores.reserve(candidates.size());
  for (const auto& c : candidates) scores.push_back(predict(model, c));
  return distribution_from_scores(std::move(candidates), std::move(scores), tau);
}

/// Inverse-CDF draw of one candidate.
inline const SimplexVector& sample(const SchedulerDist& dist, Rng& rng) {
  if (dist.candidates.empty()) throw Error(Errc::EmptyCandidates, "cannot sample an empty scheduler distribution");
  const double u = rng.uniform01();
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t j = 0; j < dist.probs.size(); ++j) {
    if (dist.probs[j] > 0.0) last_positive = j;
    cum += dist.probs[j];
    if (u < cum && dist.probs[j] > 0.0) return dist.candidates[j];
  }
  return dist.candidates[last_positive];
}

}  // namespace ldpo
