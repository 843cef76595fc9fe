#pragma once

#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ldpo/error.hpp"
#include "ldpo/policy.hpp"

namespace ldpo {

using AnyPolicy = std::variant<TabularPolicy, LogLinearPolicy>;

/// Policy checkpoint. Doubles are written by nlohmann::json in shortest
/// round-trip form, so write/read reproduces every parameter bit for bit.
struct Checkpoint {
  AnyPolicy policy;
  std::vector<std::string> dimensions;
};

inline nlohmann::json checkpoint_to_json(const Checkpoint& ck) {
  nlohmann::json j;
  j["format"] = "ldpo-policy";
  j["version"] = 1;
  j["dimensions"] = ck.dimensions;
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, TabularPolicy>) {
          j["kind"] = "tabular";
          j["num_params"] = p.parameters().size();
          auto& entries = j["entries"] = nlohmann::json::array();
          for (std::size_t s = 0; s < p.keys().size(); ++s) {
            entries.push_back({{"prompt_id", p.keys()[s].first},
                               {"candidate_id", p.keys()[s].second},
                               {"logit", p.parameters()[s]}});
          }
        } else {
          if (p.custom_features()) {
            throw Error(Errc::InvalidArgument, "log-linear policies with custom feature maps cannot be checkpointed");
          }
          j["kind"] = "loglinear";
          j["num_params"] = p.parameters().size();
          j["feature_fn"] = "char-trigram-hash";
          j["num_features"] = p.num_features();
          j["hash_seed"] = p.hash_seed();
          j["weights"] = p.parameters();
        }
      },
      ck.policy);
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "ldpo-policy") throw Error(Errc::ParseError, "not an ldpo policy checkpoint");
    Checkpoint ck{TabularPolicy{}, j.at("dimensions").get<std::vector<std::string>>()};
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "tabular") {
      TabularPolicy p;
      for (const auto& e : j.at("entries")) {
        p.add(e.at("prompt_id").get<std::string>(), e.at("candidate_id").get<std::string>(), e.at("logit").get<double>());
      }
      ck.policy = std::move(p);
    } else if (kind == "loglinear") {
      if (j.at("feature_fn") != "char-trigram-hash") throw Error(Errc::ParseError, "unknown feature_fn");
      LogLinearPolicy p(j.at("num_features").get<std::size_t>(), j.at("hash_seed").get<std::uint64_t>());
      const auto w = j.at("weights").get<std::vector<double>>();
      if (w.size() != p.num_features()) throw Error(Errc::ParseError, "weights length does not match num_features");
      p.parameters() = w;
      ck.policy = std::move(p);
    } else {
      throw Error(Errc::ParseError, "unknown policy kind '" + kind + "'");
    }
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, std::string("checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write '" + path + "'");
  out << checkpoint_to_json(ck).dump(2) << "\n";
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, path + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace ldpo
