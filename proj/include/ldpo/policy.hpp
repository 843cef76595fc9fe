#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ldpo/dataset.hpp"
#include "ldpo/error.hpp"
#include "ldpo/numeric.hpp"
#include "ldpo/rng.hpp"

namespace ldpo {

/// Sparse vector over policy parameters, keyed by flat parameter index.
/// Ordered so that accumulation and serialization are deterministic.
using SparseGrad = std::map<std::size_t, double>;

inline void axpy(SparseGrad& into, double scale, const SparseGrad& x) {
  for (const auto& [k, v] : x) into[k] += scale * v;
}

inline double max_abs(const SparseGrad& g) {
  double m = 0.0;
  for (const auto& [k, v] : g) m = std::max(m, std::abs(v));
  return m;
}

/// A policy maps a candidate group to within-group log-probabilities and
/// exposes its parameters as one flat vector.
template <class P>
concept Policy = requires(const P& cp, P& p, const PromptGroup& g, std::size_t i) {
  { cp.logprobs(g) } -> std::same_as<std::vector<double>>;
  { cp.grad_logprob(g, i) } -> std::same_as<SparseGrad>;
  { p.parameters() } -> std::same_as<std::vector<double>&>;
  { cp.parameters() } -> std::same_as<const std::vector<double>&>;
};

/// One free logit per (prompt, candidate); can represent any within-group distribution.
class TabularPolicy {
 public:
  using Key = std::pair<std::string, std::string>;

  TabularPolicy() = default;

  explicit TabularPolicy(const std::vector<PromptGroup>& data, double init = 0.0) {
    for (const auto& g : data) {
      for (const auto& c : g.candidates) add(g.prompt_id, c.id, init);
    }
  }

  /// Registers a parameter; existing keys keep their slot and get the new value.
  void add(const std::string& prompt_id, const std::string& candidate_id, double logit) {
    if (!std::isfinite(logit)) throw Error(Errc::InvalidArgument, "tabular logit must be finite");
    auto [it, inserted] = index_.try_emplace(Key{prompt_id, candidate_id}, logits_.size());
    if (inserted) {
      logits_.push_back(logit);
      keys_.push_back(it->first);
    } else {
      logits_[it->second] = logit;
    }
  }

  std::size_t slot(const std::string& prompt_id, const std::string& candidate_id) const {
    auto it = index_.find(Key{prompt_id, candidate_id});
    if (it == index_.end()) {
      throw Error(Errc::MissingParameter, "no logit for (" + prompt_id + ", " + candidate_id + ")");
    }
    return it->second;
  }

  std::vector<std::size_t> slots(const PromptGroup& g) const {
    std::vector<std::size_t> out;
    out.reserve(g.size());
    for (const auto& c : g.candidates) out.push_back(slot(g.prompt_id, c.id));
    return out;
  }

  std::vector<double> logprobs(const PromptGroup& g) const {
    std::vector<double> z;
    z.reserve(g.size());
    for (std::size_t s : slots(g)) z.push_back(logits_[s]);
    return log_softmax(z);
  }

  /// d log pi(y_i) / d logit_j = [i == j] - pi(y_j) over the group's slots.
  SparseGrad grad_logprob(const PromptGroup& g, std::size_t i) const {
    check_index(g, i);
    const auto idx = slots(g);
    std::vector<double> z;
    for (std::size_t s : idx) z.push_back(logits_[s]);
    const auto pi = softmax(z);
    SparseGrad grad;
    for (std::size_t j = 0; j < idx.size(); ++j) grad[idx[j]] = (i == j ? 1.0 : 0.0) - pi[j];
    return grad;
  }

  std::vector<double>& parameters() { return logits_; }
  const std::vector<double>& parameters() const { return logits_; }
  const std::vector<Key>& keys() const { return keys_; }

 private:
  static void check_index(const PromptGroup& g, std::size_t i) {
    if (i >= g.size()) throw Error(Errc::IndexOutOfRange, "candidate index " + std::to_string(i));
  }

  std::vector<double> logits_;
  std::vector<Key> keys_;
  std::map<Key, std::size_t> index_;
};

/// Hashed bag of character trigrams, l2-normalized. Text is bracketed with
/// boundary markers so short strings still yield trigrams; an empty text
/// falls back to the candidate id.
struct TrigramHashFeatures {
  std::size_t buckets = 256;
  std::uint64_t seed = 0x5eed;

  std::vector<double> operator()(const std::string& /*prompt*/, const Candidate& c) const {
    const std::string& body = c.text.empty() ? c.id : c.text;
    const std::string s = "\x02" + body + "\x03";
    std::vector<double> f(buckets, 0.0);
    const std::uint64_t basis = mix64(seed);
    for (std::size_t i = 0; i + 3 <= s.size(); ++i) {
      f[fnv1a64(std::string_view(s).substr(i, 3), basis) % buckets] += 1.0;
    }
    double norm = 0.0;
    for (double v : f) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0.0) {
      for (double& v : f) v /= norm;
    }
    return f;
  }
};

/// log pi(y_i | x) = w . phi(x, y_i) - logsumexp_j w . phi(x, y_j).
class LogLinearPolicy {
 public:
  using FeatureFn = std::function<std::vector<double>(const std::string&, const Candidate&)>;

  explicit LogLinearPolicy(std::size_t num_features = 256, std::uint64_t hash_seed = 0x5eed)
      : weights_(num_features, 0.0),
        hash_seed_(hash_seed),
        feature_fn_(TrigramHashFeatures{num_features, hash_seed}) {
    if (num_features == 0) throw Error(Errc::InvalidArgument, "log-linear policy needs F >= 1");
  }

  /// Custom feature map; it must be pure and return exactly num_features values.
  LogLinearPolicy(std::size_t num_features, FeatureFn fn)
      : weights_(num_features, 0.0), feature_fn_(std::move(fn)), custom_features_(true) {
    if (num_features == 0) throw Error(Errc::InvalidArgument, "log-linear policy needs F >= 1");
  }

  std::vector<std::vector<double>> features(const PromptGroup& g) const {
    std::vector<std::vector<double>> phi;
    phi.reserve(g.size());
    for (const auto& c : g.candidates) {
      auto f = feature_fn_(g.prompt, c);
      if (f.size() != weights_.size()) {
        throw Error(Errc::DimensionMismatch, "feature map returned " + std::to_string(f.size()) +
                                                 " values, expected " + std::to_string(weights_.size()));
      }
      phi.push_back(std::move(f));
    }
    return phi;
  }

  std::vector<double> logprobs(const PromptGroup& g) const { return log_softmax(scores(features(g))); }

  /// phi(y_i) minus the policy-weighted feature mean.
  SparseGrad grad_logprob(const PromptGroup& g, std::size_t i) const {
    if (i >= g.size()) throw Error(Errc::IndexOutOfRange, "candidate index " + std::to_string(i));
    const auto phi = features(g);
    const auto pi = softmax(scores(phi));
    SparseGrad grad;
    for (std::size_t f = 0; f < weights_.size(); ++f) {
      double mean = 0.0;
      for (std::size_t j = 0; j < phi.size(); ++j) mean += pi[j] * phi[j][f];
      const double v = phi[i][f] - mean;
      if (v != 0.0) grad[f] = v;
    }
    return grad;
  }

  std::vector<double>& parameters() { return weights_; }
  const std::vector<double>& parameters() const { return weights_; }
  std::size_t num_features() const noexcept { return weights_.size(); }
  std::uint64_t hash_seed() const noexcept { return hash_seed_; }
  bool custom_features() const noexcept { return custom_features_; }

 private:
  std::vector<double> scores(const std::vector<std::vector<double>>& phi) const {
    std::vector<double> s(phi.size(), 0.0);
    for (std::size_t j = 0; j < phi.size(); ++j) {
      for (std::size_t f = 0; f < weights_.size(); ++f) s[j] += weights_[f] * phi[j][f];
    }
    return s;
  }

  std::vector<double> weights_;
  std::uint64_t hash_seed_ = 0;
  FeatureFn feature_fn_;
  bool custom_features_ = false;
};

static_assert(Policy<TabularPolicy>);
static_assert(Policy<LogLinearPolicy>);

/// Frozen pi_ref. Uniform mode gives every candidate log(1/N); from-data mode
/// reads the ref_logprob recorded on each candidate.
class ReferencePolicy {
 public:
  enum class Mode { Uniform, FromData };

  static ReferencePolicy uniform() { return ReferencePolicy(Mode::Uniform); }

  static ReferencePolicy from_data(const std::vector<PromptGroup>& data) {
    ReferencePolicy ref(Mode::FromData);
    for (const auto& g : data) {
      for (const auto& c : g.candidates) {
        if (!c.ref_logprob) {
          throw Error(Errc::MissingParameter,
                      "candidate '" + c.id + "' of prompt '" + g.prompt_id + "' has no ref_logprob");
        }
        ref.stored_[{g.prompt_id, c.id}] = *c.ref_logprob;
      }
    }
    return ref;
  }

  /// From-data when every candidate carries ref_logprob, uniform otherwise.
  static ReferencePolicy infer(const std::vector<PromptGroup>& data) {
    for (const auto& g : data) {
      for (const auto& c : g.candidates) {
        if (!c.ref_logprob) return uniform();
      }
    }
    return from_data(data);
  }

  Mode mode() const noexcept { return mode_; }

  std::vector<double> logprobs(const PromptGroup& g) const {
    std::vector<double> out;
    out.reserve(g.size());
    if (mode_ == Mode::Uniform) {
      out.assign(g.size(), -std::log(static_cast<double>(g.size())));
      return out;
    }
    for (const auto& c : g.candidates) {
      auto it = stored_.find({g.prompt_id, c.id});
      if (it == stored_.end()) {
        throw Error(Errc::MissingParameter, "no reference log-prob for (" + g.prompt_id + ", " + c.id + ")");
      }
      out.push_back(it->second);
    }
    return out;
  }

 private:
  explicit ReferencePolicy(Mode m) : mode_(m) {}
  Mode mode_;
  std::map<std::pair<std::string, std::string>, double> stored_;
};

template <Policy P>
double logprob(const P& policy, const PromptGroup& g, std::size_t i) {
  if (i >= g.size()) throw Error(Errc::IndexOutOfRange, "candidate index " + std::to_string(i));
  return policy.logprobs(g)[i];
}

template <Policy P>
SparseGrad grad_logprob(const P& policy, const PromptGroup& g, std::size_t i) {
  return policy.grad_logprob(g, i);
}

/// beta * (log pi_theta - log pi_ref) per candidate.
template <Policy P>
std::vector<double> scaled_log_ratios(const P& policy, const ReferencePolicy& ref, const PromptGroup& g,
                                      double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw Error(Errc::InvalidArgument, "beta must be positive");
  const auto lp = policy.logprobs(g);
  const auto lr = ref.logprobs(g);
  std::vector<double> z(g.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    z[i] = beta * (lp[i] - lr[i]);
    if (!std::isfinite(z[i])) {
      throw Error(Errc::NonFiniteLogRatio, "candidate '" + g.candidates[i].id + "' of prompt '" + g.prompt_id + "'");
    }
  }
  return z;
}

/// P_theta(y_i | x): softmax over beta-scaled policy/reference log-ratios.
template <Policy P>
std::vector<double> listwise_distribution(const P& policy, const ReferencePolicy& ref, const PromptGroup& g,
                                          double beta) {
  return softmax(scaled_log_ratios(policy, ref, g, beta));
}

}  // namespace ldpo
