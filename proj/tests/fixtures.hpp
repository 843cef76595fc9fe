#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ldpo/ldpo.hpp"

namespace ldpo::fx {

inline std::vector<std::string> dim_names(std::size_t m) {
  std::vector<std::string> d;
  for (std::size_t k = 0; k < m; ++k) d.push_back("d" + std::to_string(k));
  return d;
}

/// Random group with ratings in [1, 5] on m dimensions and, optionally,
/// reference log-probs in [-30, -5].
inline PromptGroup random_group(Rng& rng, const std::string& id, std::size_t n, std::size_t m, bool with_ref = true) {
  PromptGroup g{id, "prompt " + id, {}};
  for (std::size_t i = 0; i < n; ++i) {
    Candidate c;
    c.id = "c" + std::to_string(i);
    c.text = "candidate text " + std::to_string(rng.next_u64() % 1000) + " for " + id;
    for (const auto& d : dim_names(m)) c.scores[d] = 1.0 + 4.0 * rng.uniform01();
    if (with_ref) c.ref_logprob = -5.0 - 25.0 * rng.uniform01();
    g.candidates.push_back(std::move(c));
  }
  return g;
}

inline std::vector<PromptGroup> random_dataset(Rng& rng, std::size_t prompts, std::size_t m, std::size_t min_n = 2,
                                               std::size_t max_n = 6, bool with_ref = true) {
  std::vector<PromptGroup> data;
  for (std::size_t p = 0; p < prompts; ++p) {
    const std::size_t n = min_n + rng.index(max_n - min_n + 1);
    data.push_back(random_group(rng, "p" + std::to_string(p), n, m, with_ref));
  }
  return data;
}

inline void randomize(std::vector<double>& theta, Rng& rng, double scale = 2.0) {
  for (double& v : theta) v = scale * (2.0 * rng.uniform01() - 1.0);
}

/// Norm-wise relative error max_j |a_j - b_j| / max_j |b_j| over the union of
/// keys, the usual gradient-check measure; an all-zero reference falls back
/// to the absolute difference.
inline double max_rel_error(const SparseGrad& a, const SparseGrad& b) {
  SparseGrad diff = a;
  for (const auto& [k, v] : b) diff[k] -= v;
  const double scale = max_abs(b);
  return scale > 0.0 ? max_abs(diff) / scale : max_abs(diff);
}

/// Ten prompts with 2..5 candidates and ratings on four dimensions named d0..d3,
/// no reference log-probs. Shared by the trainer tests and the acceptance run.
inline std::vector<PromptGroup> ten_prompt_fixture(std::uint64_t seed = 1) {
  Rng rng(seed);
  std::vector<PromptGroup> data;
  for (std::size_t p = 0; p < 10; ++p) data.push_back(random_group(rng, "p" + std::to_string(p), 2 + p % 4, 4, false));
  return data;
}

/// Trainer settings that drive the tabular fixture to its fixed-lambda optimum:
/// full batch, Adam at lr 0.3, beta 0.1, 500 single-step epochs.
inline TrainConfig convergence_config() {
  TrainConfig cfg;
  cfg.dimensions = dim_names(4);
  cfg.beta = 0.1;
  cfg.learning_rate = 0.3;
  cfg.batch_size = 10;
  cfg.epochs = 500;
  cfg.lambda_mode = FixedLambda{SimplexVector::validate(std::vector<double>{0.4, 0.3, 0.2, 0.1})};
  return cfg;
}

inline double max_abs_diff(const SparseGrad& a, const SparseGrad& b) {
  SparseGrad d = a;
  for (const auto& [k, v] : b) d[k] -= v;
  return max_abs(d);
}

/// Straight-line recomputation of P_theta from raw probabilities, without
/// log-space tricks: (pi/pi_ref)^beta / sum_j (pi_j/pi_ref_j)^beta.
inline std::vector<double> naive_listwise(const std::vector<double>& logp, const std::vector<double>& logref, double beta) {
  std::vector<double> w(logp.size());
  double z = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::pow(std::exp(logp[i]) / std::exp(logref[i]), beta);
    z += w[i];
  }
  for (double& v : w) v /= z;
  return w;
}

}  // namespace ldpo::fx
