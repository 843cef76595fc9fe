#pragma once

#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "ldpo/dataset.hpp"
#include "ldpo/error.hpp"
#include "ldpo/numeric.hpp"
#include "ldpo/policy.hpp"
#include "ldpo/simplex.hpp"

namespace ldpo {

/// Loss in nats: `value` is the mean of `per_group`.
struct LossValue {
  double value = 0.0;
  std::vector<double> per_group;

  static LossValue single(double v) { return {v, {v}}; }
};

using GradientVector = SparseGrad;

/// Bradley-Terry preference probability sigma(r_w - r_l).
inline double bt_prob(double r_w, double r_l) { return sigmoid(r_w - r_l); }

/// Standard two-candidate DPO loss: -log sigma(beta * (delta_w - delta_l)).
template <Policy P>
LossValue pairwise_dpo_loss(const P& policy, const ReferencePolicy& ref, const PromptGroup& g, std::size_t winner,
                            double beta) {
  if (g.size() != 2) throw Error(Errc::UnsupportedN, "pairwise DPO needs N = 2, got " + std::to_string(g.size()));
  if (winner > 1) throw Error(Errc::IndexOutOfRange, "winner index must be 0 or 1");
  const auto z = scaled_log_ratios(policy, ref, g, beta);
  return LossValue::single(-log_sigmoid(z[winner] - z[1 - winner]));
}

inline void check_target(std::span<const double> target, std::size_t n) {
  if (target.size() != n) {
    throw Error(Errc::DimensionMismatch,
                "target has " + std::to_string(target.size()) + " entries for " + std::to_string(n) + " candidates");
  }
  if (!is_distribution(target)) throw Error(Errc::InvalidTarget, "target is not a probability vector");
}

/// Cross-entropy -sum_i target_i log P_theta(y_i | x) from log-ratios already scaled by beta.
inline double cross_entropy_from_logits(std::span<const double> target, std::span<const double> z) {
  const auto logp = log_softmax(z);
  double loss = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] != 0.0) loss -= target[i] * logp[i];
  }
  return loss;
}

template <Policy P>
LossValue listwise_loss(const P& policy, const ReferencePolicy& ref, const PromptGroup& g,
                        std::span<const double> target, double beta) {
  check_target(target, g.size());
  return LossValue::single(cross_entropy_from_logits(target, scaled_log_ratios(policy, ref, g, beta)));
}

/// Mix-then-loss: the listwise loss against p^lambda.
template <Policy P>
LossValue lambda_dpo_loss(const P& policy, const ReferencePolicy& ref, const PromptGroup& g,
                          const PreferenceTargets& targets, const SimplexVector& lambda, double beta) {
  if (targets.num_candidates() != g.size()) {
    throw Error(Errc::DimensionMismatch, "targets cover " + std::to_string(targets.num_candidates()) +
                                             " candidates, group has " + std::to_string(g.size()));
  }
  const auto mixed = mixed_target(targets, lambda);
  return listwise_loss(policy, ref, g, mixed, beta);
}

/// Loss-then-mix: sum_k lambda_k * listwise_loss(per_dim[k]). Equal to
/// lambda_dpo_loss by linearity of the cross-entropy in its target.
template <Policy P>
LossValue lambda_dpo_loss_by_dimension(const P& policy, const ReferencePolicy& ref, const PromptGroup& g,
                                       const PreferenceTargets& targets, const SimplexVector& lambda,
                                       double beta) {
  if (lambda.size() != targets.num_dims()) {
    throw Error(Errc::DimensionMismatch, "lambda has " + std::to_string(lambda.size()) + " weights for " +
                                             std::to_string(targets.num_dims()) + " dimensions");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < targets.num_dims(); ++k) {
    total += lambda[k] * listwise_loss(policy, ref, g, targets.per_dim[k], beta).value;
  }
  return LossValue::single(total);
}

/// Gradient of the listwise loss against an explicit target:
/// -beta * sum_i (target_i - P_theta,i) * grad log pi_theta(y_i | x).
template <Policy P>
GradientVector listwise_grad(const P& policy, const ReferencePolicy& ref, const PromptGroup& g,
                             std::span<const double> target, double beta) {
  check_target(target, g.size());
  const auto p_theta = softmax(scaled_log_ratios(policy, ref, g, beta));
  GradientVector grad;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double coef = -beta * (target[i] - p_theta[i]);
    axpy(grad, coef, policy.grad_logprob(g, i));
  }
  return grad;
}

template <Policy P>
GradientVector lambda_dpo_grad(const P& policy, const ReferencePolicy& ref, const PromptGroup& g,
                               const PreferenceTargets& targets, const SimplexVector& lambda, double beta) {
  if (targets.num_candidates() != g.size()) {
    throw Error(Errc::DimensionMismatch, "targets cover " + std::to_string(targets.num_candidates()) +
                                             " candidates, group has " + std::to_string(g.size()));
  }
  const auto mixed = mixed_target(targets, lambda);
  return listwise_grad(policy, ref, g, mixed, beta);
}

/// One prompt with the listwise target it is trained against.
struct TargetedGroup {
  const PromptGroup* group;
  std::vector<double> target;
};

/// Mean listwise loss over a batch, groups visited in order.
template <Policy P>
LossValue batch_loss(const P& policy, const ReferencePolicy& ref, std::span<const TargetedGroup> batch, double beta) {
  if (batch.empty()) throw Error(Errc::EmptyVector, "empty batch");
  LossValue out;
  for (const auto& item : batch) out.per_group.push_back(listwise_loss(policy, ref, *item.group, item.target, beta).value);
  out.value = std::accumulate(out.per_group.begin(), out.per_group.end(), 0.0) / out.per_group.size();
  return out;
}

/// Gradient of batch_loss; per-group gradients are summed in batch order and
/// scaled by 1/|batch|.
template <Policy P>
GradientVector batch_grad(const P& policy, const ReferencePolicy& ref, std::span<const TargetedGroup> batch,
                          double beta) {
  if (batch.empty()) throw Error(Errc::EmptyVector, "empty batch");
  GradientVector total;
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& item : batch) axpy(total, scale, listwise_grad(policy, ref, *item.group, item.target, beta));
  return total;
}

/// Central differences (L(theta + h e_j) - L(theta - h e_j)) / 2h for every
/// parameter. `loss_fn` is called with a perturbed copy of `policy`.
template <class P, class LossFn>
  requires requires(P& p) {
    { p.parameters() } -> std::same_as<std::vector<double>&>;
  }
GradientVector finite_diff_grad(LossFn&& loss_fn, const P& policy, double h = 1e-5) {
  if (!(h > 0.0)) throw Error(Errc::InvalidArgument, "finite-difference step must be positive");
  P probe = policy;
  auto& theta = probe.parameters();
  GradientVector grad;
  for (std::size_t j = 0; j < theta.size(); ++j) {
    const double saved = theta[j];
    theta[j] = saved + h;
    const double up = loss_fn(static_cast<const P&>(probe));
    theta[j] = saved - h;
    const double down = loss_fn(static_cast<const P&>(probe));
    theta[j] = saved;
    grad[j] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace ldpo
