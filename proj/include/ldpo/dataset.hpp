#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ldpo/error.hpp"
#include "ldpo/numeric.hpp"
#include "ldpo/simplex.hpp"

namespace ldpo {

inline const std::vector<std::string>& default_dimensions() {
  static const std::vector<std::string> dims = {"helpfulness", "honesty", "instruction-following",
                                                "fluency"};
  return dims;
}

struct Candidate {
  std::string id;
  std::string text;
  std::map<std::string, double> scores;
  std::optional<double> ref_logprob;
};

struct PromptGroup {
  std::string prompt_id;
  std::string prompt;
  std::vector<Candidate> candidates;

  std::size_t size() const noexcept { return candidates.size(); }
};

/// Per-dimension listwise targets for one prompt, plus the lambda mixture once
/// mix_targets() has run.
struct PreferenceTargets {
  std::vector<std::string> dimensions;
  std::vector<std::vector<double>> per_dim;
  std::optional<std::vector<double>> mixed;

  std::size_t num_dims() const noexcept { return per_dim.size(); }
  std::size_t num_candidates() const noexcept { return per_dim.empty() ? 0 : per_dim.front().size(); }
};

enum class TargetMode { Softmax, Normalized };

/// Checks the group-level invariants shared by the loader and hand-built fixtures.
inline void check_group(const PromptGroup& group, const std::vector<std::string>& dims) {
  if (group.candidates.size() < 2) {
    throw Error(Errc::TooFewCandidates, "prompt '" + group.prompt_id + "' has " +
                                            std::to_string(group.candidates.size()) + " candidate(s)");
  }
  std::set<std::string> seen;
  for (const auto& c : group.candidates) {
    if (!seen.insert(c.id).second) {
      throw Error(Errc::DuplicateCandidateId, "prompt '" + group.prompt_id + "' repeats candidate '" + c.id + "'");
    }
    for (const auto& d : dims) {
      if (!c.scores.contains(d)) {
        throw Error(Errc::MissingDimension, "candidate '" + c.id + "' of prompt '" + group.prompt_id +
                                                "' lacks dimension '" + d + "'");
      }
    }
    if (c.ref_logprob && !std::isfinite(*c.ref_logprob)) {
      throw Error(Errc::NonFiniteScore, "candidate '" + c.id + "' has a non-finite ref_logprob");
    }
  }
}

/// Parses one dataset record. Unknown fields are ignored, and so are score
/// keys that are not among the declared dimensions.
inline PromptGroup parse_group(const nlohmann::json& j, const std::vector<std::string>& dims) {
  PromptGroup g;
  g.prompt_id = j.at("prompt_id").get<std::string>();
  g.prompt = j.value("prompt", std::string{});
  for (const auto& jc : j.at("candidates")) {
    Candidate c;
    c.id = jc.at("id").get<std::string>();
    c.text = jc.value("text", std::string{});
    const auto& scores = jc.at("scores");
    for (const auto& d : dims) {
      auto it = scores.find(d);
      if (it == scores.end()) continue;  // reported by check_group
      if (!it->is_number()) throw Error(Errc::ParseError, "score '" + d + "' of '" + c.id + "' is not a number");
      c.scores[d] = it->get<double>();
    }
    if (auto it = jc.find("ref_logprob"); it != jc.end() && !it->is_null()) {
      if (!it->is_number()) throw Error(Errc::ParseError, "ref_logprob of '" + c.id + "' is not a number");
      c.ref_logprob = it->get<double>();
    }
    g.candidates.push_back(std::move(c));
  }
  check_group(g, dims);
  return g;
}

inline std::vector<PromptGroup> load_jsonl(std::istream& in, const std::vector<std::string>& dims,
                                           const std::string& source = "<stream>") {
  std::vector<PromptGroup> groups;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::ParseError, source + ":" + std::to_string(line_no) + ": " + e.what());
    }
    try {
      groups.push_back(parse_group(j, dims));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::ParseError, source + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return groups;
}

inline std::vector<PromptGroup> load_jsonl(const std::string& path, const std::vector<std::string>& dims) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open dataset '" + path + "'");
  return load_jsonl(in, dims, path);
}

inline nlohmann::json to_json(const PromptGroup& g) {
  nlohmann::json j;
  j["prompt_id"] = g.prompt_id;
  j["prompt"] = g.prompt;
  j["candidates"] = nlohmann::json::array();
  for (const auto& c : g.candidates) {
    nlohmann::json jc;
    jc["id"] = c.id;
    jc["text"] = c.text;
    jc["scores"] = c.scores;
    if (c.ref_logprob) jc["ref_logprob"] = *c.ref_logprob;
    j["candidates"].push_back(std::move(jc));
  }
  return j;
}

/// Turns per-dimension ratings into listwise distributions. Softmax mode uses
/// p_i = exp(s_i/T) / sum_j exp(s_j/T); normalized mode uses p_i = s_i / sum_j s_j.
inline PreferenceTargets ratings_to_targets(const PromptGroup& group, const std::vector<std::string>& dims,
                                            double temperature = 1.0, TargetMode mode = TargetMode::Softmax) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw Error(Errc::InvalidArgument, "preference temperature must be positive");
  }
  if (dims.empty()) throw Error(Errc::EmptyVector, "no preference dimensions");
  PreferenceTargets t;
  t.dimensions = dims;
  for (const auto& d : dims) {
    std::vector<double> s;
    s.reserve(group.size());
    for (const auto& c : group.candidates) {
      auto it = c.scores.find(d);
      if (it == c.scores.end()) {
        throw Error(Errc::MissingDimension, "candidate '" + c.id + "' lacks dimension '" + d + "'");
      }
      if (!std::isfinite(it->second)) {
        throw Error(Errc::NonFiniteScore, "candidate '" + c.id + "' has non-finite '" + d + "' score");
      }
      s.push_back(it->second);
    }
    if (mode == TargetMode::Softmax) {
      for (double& v : s) v /= temperature;
      t.per_dim.push_back(softmax(s));
    } else {
      double total = 0.0;
      for (double v : s) {
        if (v < 0.0) throw Error(Errc::InvalidTarget, "normalized targets need nonnegative scores");
        total += v;
      }
      if (!(total > 0.0)) throw Error(Errc::InvalidTarget, "normalized targets need a positive score total");
      for (double& v : s) v /= total;
      t.per_dim.push_back(std::move(s));
    }
  }
  return t;
}

/// Convex combination sum_k lambda_k * per_dim[k], stored in `mixed`.
inline PreferenceTargets mix_targets(PreferenceTargets targets, const SimplexVector& lambda) {
  if (lambda.size() != targets.num_dims()) {
    throw Error(Errc::DimensionMismatch, "lambda has " + std::to_string(lambda.size()) + " weights for " +
                                             std::to_string(targets.num_dims()) + " dimensions");
  }
  std::vector<double> mixed(targets.num_candidates(), 0.0);
  for (std::size_t k = 0; k < targets.num_dims(); ++k) {
    for (std::size_t i = 0; i < mixed.size(); ++i) mixed[i] += lambda[k] * targets.per_dim[k][i];
  }
  targets.mixed = std::move(mixed);
  return targets;
}

inline std::vector<double> mixed_target(const PreferenceTargets& targets, const SimplexVector& lambda) {
  return *mix_targets(targets, lambda).mixed;
}

/// Hard pairwise supervision as a degenerate listwise target: all mass on the winner.
inline std::vector<double> pairwise_target(std::size_t winner_index, std::size_t n) {
  if (n != 2) throw Error(Errc::UnsupportedN, "pairwise target needs N = 2, got " + std::to_string(n));
  if (winner_index > 1) throw Error(Errc::IndexOutOfRange, "winner index must be 0 or 1");
  std::vector<double> p(2, 0.0);
  p[winner_index] = 1.0;
  return p;
}

}  // namespace ldpo
