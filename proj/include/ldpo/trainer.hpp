#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ldpo/dataset.hpp"
#include "ldpo/error.hpp"
#include "ldpo/losses.hpp"
#include "ldpo/numeric.hpp"
#include "ldpo/policy.hpp"
#include "ldpo/rng.hpp"
#include "ldpo/scheduler.hpp"
#include "ldpo/simplex.hpp"

namespace ldpo {

struct FixedLambda {
  SimplexVector lambda;
};
struct UniformLambda {};
struct ScheduledLambda {
  SchedulerDist dist;
};
using LambdaMode = std::variant<FixedLambda, UniformLambda, ScheduledLambda>;

enum class Granularity { PerPrompt, PerBatch };
enum class OptimizerKind { Sgd, Adam };
enum class LrSchedule { Constant, Cosine };

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  double beta = 0.1;
  double learning_rate = 5e-3;
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  LambdaMode lambda_mode = UniformLambda{};
  Granularity granularity = Granularity::PerPrompt;
  OptimizerKind optimizer = OptimizerKind::Adam;
  AdamParams adam;
  LrSchedule lr_schedule = LrSchedule::Constant;
  double warmup_fraction = 0.1;
  bool shuffle = true;
  std::uint64_t seed = 0;
  // Used when train() builds targets from ratings.
  std::vector<std::string> dimensions = default_dimensions();
  double pref_temperature = 1.0;
  TargetMode target_mode = TargetMode::Softmax;

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) throw Error(Errc::InvalidArgument, std::string(name) + " must be positive");
    };
    positive(beta, "beta");
    positive(pref_temperature, "pref_temperature");
    // A zero learning rate is accepted: it freezes the policy, which is handy for baselines.
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw Error(Errc::InvalidArgument, "learning_rate must be >= 0");
    }
    if (epochs == 0) throw Error(Errc::InvalidArgument, "epochs must be >= 1");
    if (batch_size == 0) throw Error(Errc::InvalidArgument, "batch_size must be >= 1");
    if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
      throw Error(Errc::InvalidArgument, "warmup_fraction must lie in [0, 1)");
    }
    positive(adam.eps, "adam eps");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
      throw Error(Errc::InvalidArgument, "adam betas must lie in [0, 1)");
    }
  }
};

/// Expected lambda under the configured mode. The lambda-DPO loss is affine
/// in lambda, so the expected objective equals the objective at this point.
inline SimplexVector expected_lambda(const LambdaMode& mode, std::size_t m) {
  return std::visit(
      [m](const auto& x) -> SimplexVector {
        using X = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<X, FixedLambda>) {
          return x.lambda;
        } else if constexpr (std::is_same_v<X, UniformLambda>) {
          return SimplexVector::uniform(m);
        } else {
          std::vector<double> mean(m, 0.0);
          for (std::size_t j = 0; j < x.dist.candidates.size(); ++j) {
            for (std::size_t k = 0; k < m; ++k) mean[k] += x.dist.probs[j] * x.dist.candidates[j][k];
          }
          return SimplexVector::validate(mean);
        }
      },
      mode);
}

struct EvalMetrics {
  double mean_loss = 0.0;
  double top1_agreement = 0.0;
  double mean_tv = 0.0;
  double mean_kendall_tau = 0.0;
};

/// Kendall tau-b between two score vectors. When either side has no untied
/// pair the coefficient is undefined; we report 1 if both sides are fully
/// tied and 0 otherwise.
inline double kendall_tau(std::span<const double> a, std::span<const double> b) {
  long concordant = 0, discordant = 0, ties_a = 0, ties_b = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const double da = a[i] - a[j];
      const double db = b[i] - b[j];
      if (da == 0.0 && db == 0.0) continue;
      if (da == 0.0) {
        ++ties_a;
      } else if (db == 0.0) {
        ++ties_b;
      } else if ((da > 0.0) == (db > 0.0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const double n0 = static_cast<double>(concordant + discordant);
  const double denom = std::sqrt((n0 + ties_b) * (n0 + ties_a));
  if (denom == 0.0) return (ties_a == 0 && ties_b == 0 && n0 == 0.0) ? 1.0 : 0.0;
  return (static_cast<double>(concordant) - static_cast<double>(discordant)) / denom;
}

template <Policy P>
EvalMetrics evaluate(const std::vector<PromptGroup>& data, const P& policy, const ReferencePolicy& ref,
                     const std::vector<PreferenceTargets>& targets, const SimplexVector& lambda, double beta) {
  if (data.empty()) throw Error(Errc::EmptyVector, "nothing to evaluate");
  if (targets.size() != data.size()) throw Error(Errc::DimensionMismatch, "one target set per prompt required");
  EvalMetrics m;
  for (std::size_t g = 0; g < data.size(); ++g) {
    const auto target = mixed_target(targets[g], lambda);
    const auto p_theta = listwise_distribution(policy, ref, data[g], beta);
    m.mean_loss += listwise_loss(policy, ref, data[g], target, beta).value;
    m.top1_agreement += argmax(p_theta) == argmax(target) ? 1.0 : 0.0;
    m.mean_tv += total_variation(p_theta, target);
    m.mean_kendall_tau += kendall_tau(p_theta, target);
  }
  const double n = static_cast<double>(data.size());
  m.mean_loss /= n;
  m.top1_agreement /= n;
  m.mean_tv /= n;
  m.mean_kendall_tau /= n;
  return m;
}

struct StepRecord {
  std::size_t step;
  std::size_t epoch;
  double loss;
  std::vector<double> lambda;  // mean lambda over the batch
};

struct LambdaDraw {
  std::size_t step;
  std::string prompt_id;
  std::vector<double> lambda;
};

struct TrainReport {
  std::vector<double> loss_trace;  // one mean loss per epoch
  std::vector<StepRecord> steps;
  std::vector<LambdaDraw> lambda_draws;
  SimplexVector eval_lambda = SimplexVector::uniform(1);
  EvalMetrics final_metrics;
  double final_grad_max_norm = 0.0;
  double wall_clock_seconds = 0.0;
};

/// Raised when a loss or parameter turns non-finite. The policy has already
/// been rolled back to the last state with a finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, TrainReport partial)
      : Error(Errc::DivergenceDetected, what), report_(std::move(partial)) {}
  const TrainReport& report() const noexcept { return report_; }

 private:
  TrainReport report_;
};

/// Dense SGD / Adam over the flat parameter vector.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, AdamParams adam, std::size_t n) : kind_(kind), adam_(adam), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::vector<double>& theta, const GradientVector& grad, double lr) {
    if (kind_ == OptimizerKind::Sgd) {
      for (const auto& [j, g] : grad) theta[j] -= lr * g;
      return;
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(adam_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(adam_.beta2, static_cast<double>(t_));
    auto it = grad.begin();
    for (std::size_t j = 0; j < theta.size(); ++j) {
      double g = 0.0;
      if (it != grad.end() && it->first == j) {
        g = it->second;
        ++it;
      }
      m_[j] = adam_.beta1 * m_[j] + (1.0 - adam_.beta1) * g;
      v_[j] = adam_.beta2 * v_[j] + (1.0 - adam_.beta2) * g * g;
      const double m_hat = m_[j] / bc1;
      const double v_hat = v_[j] / bc2;
      theta[j] -= lr * m_hat / (std::sqrt(v_hat) + adam_.eps);
    }
  }

 private:
  OptimizerKind kind_;
  AdamParams adam_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

inline double scheduled_lr(const TrainConfig& cfg, std::size_t step, std::size_t total_steps) {
  if (cfg.lr_schedule == LrSchedule::Constant) return cfg.learning_rate;
  const double warmup = std::floor(cfg.warmup_fraction * static_cast<double>(total_steps));
  const double s = static_cast<double>(step);
  if (s < warmup) return cfg.learning_rate * (s + 1.0) / warmup;
  const double span = std::max(1.0, static_cast<double>(total_steps) - warmup);
  const double progress = std::min(1.0, (s - warmup) / span);
  return cfg.learning_rate * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

namespace detail {

inline SimplexVector draw_lambda(const LambdaMode& mode, std::size_t m, Rng& rng) {
  return std::visit(
      [&](const auto& x) -> SimplexVector {
        using X = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<X, FixedLambda>) {
          return x.lambda;
        } else if constexpr (std::is_same_v<X, UniformLambda>) {
          return sample_uniform(m, rng);
        } else {
          return sample(x.dist, rng);
        }
      },
      mode);
}

inline bool all_finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace detail

inline std::vector<PreferenceTargets> build_targets(const std::vector<PromptGroup>& data, const TrainConfig& cfg) {
  std::vector<PreferenceTargets> targets;
  targets.reserve(data.size());
  for (const auto& g : data) targets.push_back(ratings_to_targets(g, cfg.dimensions, cfg.pref_temperature, cfg.target_mode));
  return targets;
}

/// Gradient of the expected objective over the whole dataset at `lambda`.
template <Policy P>
GradientVector full_gradient(const std::vector<PromptGroup>& data, const P& policy, const ReferencePolicy& ref,
                             const std::vector<PreferenceTargets>& targets, const SimplexVector& lambda, double beta) {
  std::vector<TargetedGroup> all;
  all.reserve(data.size());
  for (std::size_t g = 0; g < data.size(); ++g) all.push_back({&data[g], mixed_target(targets[g], lambda)});
  return batch_grad(policy, ref, std::span<const TargetedGroup>(all), beta);
}

/// Runs the training loop against precomputed per-prompt targets.
///
/// Each epoch visits the prompts in a seeded shuffled order, in batches of
/// `batch_size`. Per batch: draw lambda (per prompt or per batch), build
/// p^lambda, average the per-group lambda-DPO gradients in batch order, and
/// apply one optimizer update. Lambda draws come from a stream keyed by
/// (seed, prompt_id, epoch), or (seed, step) for per-batch draws, so results
/// do not depend on how gradient evaluation is scheduled.
template <Policy P>
TrainReport train(const std::vector<PromptGroup>& data, const std::vector<PreferenceTargets>& targets, P& policy,
                  const ReferencePolicy& ref, const TrainConfig& cfg) {
  const auto started = std::chrono::steady_clock::now();
  cfg.validate();
  if (data.empty()) throw Error(Errc::EmptyVector, "training data is empty");
  if (targets.size() != data.size()) throw Error(Errc::DimensionMismatch, "one target set per prompt required");
  const std::size_t m = targets.front().num_dims();
  for (std::size_t g = 0; g < data.size(); ++g) {
    if (targets[g].num_dims() != m) throw Error(Errc::DimensionMismatch, "targets disagree on dimension count");
    if (targets[g].num_candidates() != data[g].size()) {
      throw Error(Errc::DimensionMismatch, "targets for '" + data[g].prompt_id + "' have the wrong length");
    }
  }
  if (const auto* fixed = std::get_if<FixedLambda>(&cfg.lambda_mode); fixed && fixed->lambda.size() != m) {
    throw Error(Errc::DimensionMismatch, "fixed lambda has " + std::to_string(fixed->lambda.size()) +
                                             " weights for " + std::to_string(m) + " dimensions");
  }
  if (const auto* sched = std::get_if<ScheduledLambda>(&cfg.lambda_mode)) {
    for (const auto& c : sched->dist.candidates) {
      if (c.size() != m) throw Error(Errc::DimensionMismatch, "scheduler candidates do not match dimension count");
    }
  }

  TrainReport report;
  const std::size_t batches_per_epoch = (data.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = batches_per_epoch * cfg.epochs;
  Optimizer opt(cfg.optimizer, cfg.adam, policy.parameters().size());
  std::vector<std::size_t> order(data.size());
  std::vector<double> last_good = policy.parameters();
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (cfg.shuffle) {
      Rng shuffle_rng = Rng::derive(cfg.seed, "shuffle", epoch);
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.index(i)]);
    }
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches_per_epoch; ++b, ++step) {
      const std::size_t lo = b * cfg.batch_size;
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);

      std::vector<TargetedGroup> batch;
      std::vector<double> lambda_mean(m, 0.0);
      Rng batch_rng = Rng::derive(cfg.seed, "batch-lambda", step);
      std::optional<SimplexVector> batch_lambda;
      if (cfg.granularity == Granularity::PerBatch) batch_lambda = detail::draw_lambda(cfg.lambda_mode, m, batch_rng);
      for (std::size_t pos = lo; pos < hi; ++pos) {
        const std::size_t g = order[pos];
        SimplexVector lambda = batch_lambda ? *batch_lambda : [&] {
          Rng prompt_rng = Rng::derive(cfg.seed, data[g].prompt_id, epoch);
          return detail::draw_lambda(cfg.lambda_mode, m, prompt_rng);
        }();
        for (std::size_t k = 0; k < m; ++k) lambda_mean[k] += lambda[k] / static_cast<double>(hi - lo);
        report.lambda_draws.push_back({step, data[g].prompt_id, {lambda.begin(), lambda.end()}});
        batch.push_back({&data[g], mixed_target(targets[g], lambda)});
      }

      const std::span<const TargetedGroup> view(batch);
      double loss = std::numeric_limits<double>::quiet_NaN();
      GradientVector grad;
      try {
        loss = batch_loss(policy, ref, view, cfg.beta).value;
        if (std::isfinite(loss)) grad = batch_grad(policy, ref, view, cfg.beta);
      } catch (const Error& e) {
        if (e.code() != Errc::NonFiniteLogRatio) throw;
      }
      if (!std::isfinite(loss)) {
        policy.parameters() = last_good;
        throw DivergenceError("loss became non-finite at step " + std::to_string(step), std::move(report));
      }
      last_good = policy.parameters();
      report.steps.push_back({step, epoch, loss, lambda_mean});
      epoch_loss += loss;

      opt.step(policy.parameters(), grad, scheduled_lr(cfg, step, total_steps));
      if (!detail::all_finite(policy.parameters())) {
        policy.parameters() = last_good;
        throw DivergenceError("parameters became non-finite at step " + std::to_string(step), std::move(report));
      }
    }
    report.loss_trace.push_back(epoch_loss / static_cast<double>(batches_per_epoch));
  }

  report.eval_lambda = expected_lambda(cfg.lambda_mode, m);
  report.final_metrics = evaluate(data, policy, ref, targets, report.eval_lambda, cfg.beta);
  report.final_grad_max_norm = max_abs(full_gradient(data, policy, ref, targets, report.eval_lambda, cfg.beta));
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

/// Builds targets from the ratings with cfg.dimensions / cfg.pref_temperature, then trains.
template <Policy P>
TrainReport train(const std::vector<PromptGroup>& data, P& policy, const ReferencePolicy& ref, const TrainConfig& cfg) {
  cfg.validate();
  return train(data, build_targets(data, cfg), policy, ref, cfg);
}

}  // namespace ldpo
