// ldpo: command-line front end for lambda-weighted listwise DPO.
//
//   ldpo train          --data D.jsonl [--lambda uniform|fixed:w,..|onehot:k|scheduler] ...
//   ldpo eval           --checkpoint P.json --data D.jsonl [--per-dim | --sweep R] ...
//   ldpo fit-scheduler  --observations O.csv [--degree 2] ...
//   ldpo sample-lambda  --model M.txt | --scores-file S.csv [--k 10 --tau 100] ...
//   ldpo report         --run DIR
//
// Exit codes: 0 ok, 1 configuration error, 2 data / I/O error, 3 divergence.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ldpo/ldpo.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

enum Exit { kOk = 0, kConfigError = 1, kDataError = 2, kDivergence = 3 };

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  for (auto& f : ldpo::csv::split(s)) {
    if (!f.empty()) out.push_back(f);
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& s, const std::string& what) {
  std::vector<double> out;
  for (const auto& f : split_list(s)) {
    try {
      out.push_back(ldpo::csv::parse_double(f, what));
    } catch (const ldpo::Error& e) {
      throw ConfigError(e.what());
    }
  }
  return out;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "unreadable";
  std::ostringstream ss;
  ss << in.rdbuf();
  return "fnv1a64:" + hex64(ldpo::fnv1a64(ss.str()));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ldpo::Error(ldpo::Errc::IoError, "cannot write '" + path.string() + "'");
  out << text;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ldpo::Error(ldpo::Errc::IoError, "cannot create '" + dir.string() + "': " + ec.message());
}

/// Seed precedence: --seed, then LDPO_SEED, then 0.
std::uint64_t resolve_seed(const CLI::Option* opt, std::uint64_t flag_value) {
  if (opt->count() > 0) return flag_value;
  if (const char* env = std::getenv("LDPO_SEED"); env && *env) {
    char* end = nullptr;
    const auto v = std::strtoull(env, &end, 10);
    if (*end != '\0') throw ConfigError(std::string("LDPO_SEED is not an integer: ") + env);
    return v;
  }
  return 0;
}

/// Every option of a subcommand with its effective value, as strings keyed by
/// long flag name. Feeding this back through --config reproduces the run.
json resolved_options(const CLI::App* sub, std::optional<std::uint64_t> seed) {
  json cfg = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config") continue;
    std::string value;
    if (opt->count() > 0) {
      value = opt->results().back();
    } else {
      value = opt->get_default_str();
    }
    if (value.empty()) continue;
    cfg[name] = value;
  }
  if (seed) cfg["seed"] = std::to_string(*seed);
  return cfg;
}

void write_manifest(const fs::path& out_dir, const std::string& command, const CLI::App* sub,
                    std::optional<std::uint64_t> seed,
                    const std::vector<std::string>& inputs, const std::vector<std::string>& outputs) {
  json m;
  m["tool"] = "ldpo";
  m["tool_version"] = kToolVersion;
  m["command"] = command;
  if (seed) m["seed"] = *seed;
  m["config"] = resolved_options(sub, seed);
  m["inputs"] = json::object();
  for (const auto& in : inputs) m["inputs"][in] = file_digest(in);
  m["outputs"] = outputs;
  write_text(out_dir / "manifest.json", m.dump(2) + "\n");
}

/// Expands `--config FILE` into explicit flags placed ahead of the user's own
/// flags; with take-last semantics the user's flags win. A run manifest is a
/// valid config file (its "config" object is used).
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  if (args.empty()) return args;
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  if (j.contains("config") && j["config"].is_object()) j = j["config"];
  std::vector<std::string> expanded{args.front()};
  for (const auto& [key, value] : j.items()) {
    std::string v = value.is_string() ? value.get<std::string>() : value.dump();
    expanded.push_back("--" + key + "=" + v);
  }
  expanded.insert(expanded.end(), args.begin() + 1, args.end());
  return expanded;
}

// ---------------------------------------------------------------------------

struct CommonModelOptions {
  std::string dims = "helpfulness,honesty,instruction-following,fluency";
  double beta = 0.1;
  double pref_temperature = 1.0;
  std::string target_mode = "softmax";
  std::string reference = "auto";
};

void add_common(CLI::App* sub, CommonModelOptions& o) {
  sub->add_option("--dims", o.dims, "Comma-separated preference dimension names");
  sub->add_option("--beta", o.beta, "Scale on policy/reference log-ratios");
  sub->add_option("--pref-temperature", o.pref_temperature, "Temperature of the ratings-to-distribution softmax");
  sub->add_option("--target-mode", o.target_mode, "softmax | normalized")->check(CLI::IsMember({"softmax", "normalized"}));
  sub->add_option("--reference", o.reference, "auto | uniform | data")->check(CLI::IsMember({"auto", "uniform", "data"}));
}

ldpo::TargetMode target_mode(const CommonModelOptions& o) {
  return o.target_mode == "normalized" ? ldpo::TargetMode::Normalized : ldpo::TargetMode::Softmax;
}

ldpo::ReferencePolicy make_reference(const CommonModelOptions& o, const std::vector<ldpo::PromptGroup>& data) {
  if (o.reference == "uniform") return ldpo::ReferencePolicy::uniform();
  if (o.reference == "data") return ldpo::ReferencePolicy::from_data(data);
  return ldpo::ReferencePolicy::infer(data);
}

/// uniform | fixed:w1,...,wm | onehot:k  (scheduler handled by the caller)
ldpo::LambdaMode parse_lambda(const std::string& spec, std::size_t m) {
  try {
    if (spec == "uniform") return ldpo::UniformLambda{};
    if (spec.rfind("fixed:", 0) == 0) {
      auto w = parse_doubles(spec.substr(6), "--lambda");
      if (w.size() != m) {
        throw ConfigError("--lambda has " + std::to_string(w.size()) + " weights for " + std::to_string(m) + " dimensions");
      }
      return ldpo::FixedLambda{ldpo::SimplexVector::validate(w)};
    }
    if (spec.rfind("onehot:", 0) == 0) {
      return ldpo::FixedLambda{ldpo::SimplexVector::one_hot(m, std::stoul(spec.substr(7)))};
    }
  } catch (const ldpo::Error& e) {
    throw ConfigError(std::string("--lambda: ") + e.what());
  } catch (const std::logic_error&) {
    throw ConfigError("--lambda: bad one-hot index in '" + spec + "'");
  }
  throw ConfigError("unknown --lambda '" + spec + "' (uniform | fixed:w,... | onehot:k | scheduler)");
}

struct CandidateOptions {
  std::string candidates = "dirichlet";
  std::size_t k = 10;
  std::string alpha = "1";
  double tau = 100.0;
};

void add_candidate_options(CLI::App* sub, CandidateOptions& o) {
  sub->add_option("--candidates", o.candidates, "dirichlet | grid:R");
  sub->add_option("--k", o.k, "Number of Dirichlet candidates");
  sub->add_option("--alpha", o.alpha, "Dirichlet concentration, one value or one per dimension");
  sub->add_option("--tau", o.tau, "Inverse temperature of the scheduler softmax");
}

ldpo::CandidateMethod candidate_method(const CandidateOptions& o, std::size_t d) {
  if (o.candidates.rfind("grid:", 0) == 0) {
    try {
      const auto r = std::stoul(o.candidates.substr(5));
      if (r == 0) throw ConfigError("grid resolution must be >= 1");
      return ldpo::GridCandidates{static_cast<unsigned>(r)};
    } catch (const std::logic_error&) {
      throw ConfigError("bad --candidates '" + o.candidates + "'");
    }
  }
  if (o.candidates != "dirichlet") throw ConfigError("unknown --candidates '" + o.candidates + "'");
  auto alpha = parse_doubles(o.alpha, "--alpha");
  if (alpha.size() == 1) alpha.assign(d, alpha.front());
  if (alpha.size() != d) throw ConfigError("--alpha needs 1 or " + std::to_string(d) + " values");
  for (double a : alpha) {
    if (!(a > 0.0)) throw ConfigError("--alpha values must be positive");
  }
  if (o.k == 0) throw ConfigError("--k must be >= 1");
  return ldpo::DirichletCandidates{{alpha}, o.k};
}

void write_distribution_csv(std::ostream& out, const ldpo::SchedulerDist& dist) {
  const std::size_t d = dist.candidates.front().size();
  for (std::size_t i = 0; i < d; ++i) out << "lambda_" << i + 1 << ',';
  out << "f,p\n";
  for (std::size_t j = 0; j < dist.candidates.size(); ++j) {
    for (double v : dist.candidates[j]) out << ldpo::csv::exact(v) << ',';
    out << ldpo::csv::exact(dist.scores[j]) << ',' << ldpo::csv::exact(dist.probs[j]) << "\n";
  }
}

void print_distribution(const ldpo::SchedulerDist& dist) {
  const std::size_t d = dist.candidates.front().size();
  for (std::size_t i = 0; i < d; ++i) std::cout << "lambda_" << i + 1 << "  ";
  std::cout << "f(lambda)  p(lambda)\n";
  for (std::size_t j = 0; j < dist.candidates.size(); ++j) {
    for (double v : dist.candidates[j]) std::cout << ldpo::csv::fixed(v, 3) << "     ";
    std::cout << ldpo::csv::fixed(dist.scores[j], 4) << "     " << ldpo::csv::fixed(dist.probs[j], 3) << "\n";
  }
}

// --------------------------------------------------------------------------- train

struct TrainOptions {
  std::string data;
  std::string out = "ldpo_run";
  std::string lambda = "uniform";
  std::string policy = "tabular";
  std::size_t features = 256;
  std::uint64_t hash_seed = 0x5eed;
  double lr = 5e-3;
  std::size_t epochs = 20;
  std::size_t batch_size = 8;
  std::string optimizer = "adam";
  std::string granularity = "per_prompt";
  std::string lr_schedule = "constant";
  double warmup = 0.1;
  bool no_shuffle = false;
  std::uint64_t seed = 0;
  std::string scheduler_model;
  std::string observations;
  unsigned degree = 2;
  double ridge = 1e-8;
  bool record_timing = false;
  CommonModelOptions common;
  CandidateOptions cand;
};

int cmd_train(const TrainOptions& o, const CLI::App* sub, const CLI::Option* seed_opt) {
  ldpo::TrainConfig cfg;
  std::uint64_t seed = 0;
  std::vector<std::string> dims;
  const bool scheduled = o.lambda == "scheduler";
  try {
    seed = resolve_seed(seed_opt, o.seed);
    dims = split_list(o.common.dims);
    if (dims.empty()) throw ConfigError("--dims is empty");
    cfg.beta = o.common.beta;
    cfg.learning_rate = o.lr;
    cfg.epochs = o.epochs;
    cfg.batch_size = o.batch_size;
    cfg.optimizer = o.optimizer == "sgd" ? ldpo::OptimizerKind::Sgd : ldpo::OptimizerKind::Adam;
    cfg.granularity = o.granularity == "per_batch" ? ldpo::Granularity::PerBatch : ldpo::Granularity::PerPrompt;
    cfg.lr_schedule = o.lr_schedule == "cosine" ? ldpo::LrSchedule::Cosine : ldpo::LrSchedule::Constant;
    cfg.warmup_fraction = o.warmup;
    cfg.shuffle = !o.no_shuffle;
    cfg.seed = seed;
    cfg.dimensions = dims;
    cfg.pref_temperature = o.common.pref_temperature;
    cfg.target_mode = target_mode(o.common);
    if (!scheduled) cfg.lambda_mode = parse_lambda(o.lambda, dims.size());
    if (scheduled && o.scheduler_model.empty() && o.observations.empty()) {
      throw ConfigError("--lambda scheduler needs --scheduler-model or --observations");
    }
    cfg.validate();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const ldpo::Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }

  const fs::path out_dir(o.out);
  std::vector<ldpo::PromptGroup> data;
  std::vector<std::string> inputs{o.data};
  if (!o.scheduler_model.empty()) inputs.push_back(o.scheduler_model);
  if (!o.observations.empty()) inputs.push_back(o.observations);
  try {
    if (!fs::exists(o.data)) throw ldpo::Error(ldpo::Errc::IoError, "dataset not found: " + o.data);
    ensure_dir(out_dir);
    write_manifest(out_dir, "train", sub, seed, inputs,
                   {"manifest.json", "report.json", "loss.csv", "loss.svg", "policy.json"});
    data = ldpo::load_jsonl(o.data, dims);
    if (data.empty()) throw ldpo::Error(ldpo::Errc::EmptyVector, "dataset '" + o.data + "' has no records");

    if (scheduled) {
      ldpo::PerfModel model = o.scheduler_model.empty()
                                  ? ldpo::fit(ldpo::load_observations(o.observations),
                                              ldpo::PolyFeatureMap(dims.size(), o.degree), o.ridge)
                                  : ldpo::load_model(o.scheduler_model);
      if (model.feature_map.dims() != dims.size()) {
        throw ldpo::Error(ldpo::Errc::DimensionMismatch, "scheduler model has d = " +
                                                             std::to_string(model.feature_map.dims()) + ", dataset has " +
                                                             std::to_string(dims.size()) + " dimensions");
      }
      ldpo::Rng cand_rng = ldpo::Rng::derive(seed, "scheduler-candidates");
      auto candidates = ldpo::build_candidates(candidate_method(o.cand, dims.size()), dims.size(), cand_rng);
      cfg.lambda_mode = ldpo::ScheduledLambda{ldpo::make_distribution(model, std::move(candidates), o.cand.tau)};
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const ldpo::Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  }

  ldpo::Checkpoint ck{ldpo::TabularPolicy{}, dims};
  try {
    if (o.policy == "tabular") {
      ck.policy = ldpo::TabularPolicy(data);
    } else {
      ck.policy = ldpo::LogLinearPolicy(o.features, o.hash_seed);
    }
  } catch (const ldpo::Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }

  auto emit = [&](const ldpo::TrainReport& report) {
    write_text(out_dir / "report.json", ldpo::to_json(report, o.record_timing).dump(2) + "\n");
    std::ostringstream loss_csv;
    ldpo::write_loss_csv(loss_csv, report);
    write_text(out_dir / "loss.csv", loss_csv.str());
    write_text(out_dir / "loss.svg", ldpo::loss_curve_svg(report));
    ldpo::save_checkpoint((out_dir / "policy.json").string(), ck);
  };

  try {
    const auto ref = make_reference(o.common, data);
    const auto report = std::visit([&](auto& policy) { return ldpo::train(data, policy, ref, cfg); }, ck.policy);
    emit(report);
    const auto& m = report.final_metrics;
    std::cout << "trained " << report.steps.size() << " steps over " << data.size() << " prompts\n"
              << "final loss " << ldpo::csv::fixed(report.loss_trace.back(), 6) << " nats, mean TV "
              << ldpo::csv::fixed(m.mean_tv, 6) << ", top-1 " << ldpo::csv::fixed(m.top1_agreement, 3)
              << ", kendall " << ldpo::csv::fixed(m.mean_kendall_tau, 3) << "\n"
              << "wall clock " << ldpo::csv::fixed(report.wall_clock_seconds, 3) << " s\n"
              << "artifacts in " << out_dir.string() << "\n";
  } catch (const ldpo::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    try {
      emit(e.report());
    } catch (const ldpo::Error&) {
    }
    return kDivergence;
  } catch (const ldpo::Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return e.code() == ldpo::Errc::InvalidArgument ? kConfigError : kDataError;
  }
  return kOk;
}

// --------------------------------------------------------------------------- eval

struct EvalOptions {
  std::string checkpoint;
  std::string data;
  std::string out = "ldpo_eval";
  std::string lambda = "uniform";
  bool per_dim = false;
  unsigned sweep = 0;
  CommonModelOptions common;
};

int cmd_eval(const EvalOptions& o, const CLI::App* sub, const CLI::Option* dims_opt) {
  const fs::path out_dir(o.out);
  try {
    auto ck = ldpo::load_checkpoint(o.checkpoint);
    std::vector<std::string> dims = ck.dimensions;
    if (dims_opt->count() > 0 && split_list(o.common.dims) != ck.dimensions) {
      throw ldpo::Error(ldpo::Errc::DimensionMismatch, "--dims does not match the checkpoint's dimensions");
    }
    if (!fs::exists(o.data)) throw ldpo::Error(ldpo::Errc::IoError, "dataset not found: " + o.data);
    ensure_dir(out_dir);
    std::vector<std::string> outputs{"manifest.json", "metrics.json"};
    if (o.per_dim || o.sweep > 0) outputs.push_back("sweep.csv");
    write_manifest(out_dir, "eval", sub, std::nullopt, {o.checkpoint, o.data}, outputs);
    const auto data = ldpo::load_jsonl(o.data, dims);
    if (data.empty()) throw ldpo::Error(ldpo::Errc::EmptyVector, "dataset '" + o.data + "' has no records");
    const auto ref = make_reference(o.common, data);
    std::vector<ldpo::PreferenceTargets> targets;
    for (const auto& g : data) targets.push_back(ldpo::ratings_to_targets(g, dims, o.common.pref_temperature, target_mode(o.common)));

    std::vector<ldpo::SimplexVector> lambdas;
    if (o.sweep > 0) {
      lambdas = ldpo::grid(dims.size(), o.sweep);
    } else if (o.per_dim) {
      for (std::size_t k = 0; k < dims.size(); ++k) lambdas.push_back(ldpo::SimplexVector::one_hot(dims.size(), k));
    } else {
      lambdas.push_back(ldpo::expected_lambda(parse_lambda(o.lambda, dims.size()), dims.size()));
    }

    json rows = json::array();
    std::ostringstream sweep_csv;
    for (std::size_t k = 0; k < dims.size(); ++k) sweep_csv << "lambda_" << k + 1 << ',';
    sweep_csv << "mean_loss_nats,top1_agreement,mean_tv_distance,mean_kendall_tau\n";
    for (const auto& lambda : lambdas) {
      const auto metrics = std::visit(
          [&](const auto& policy) { return ldpo::evaluate(data, policy, ref, targets, lambda, o.common.beta); }, ck.policy);
      json row = ldpo::to_json(metrics);
      row["lambda"] = std::vector<double>(lambda.begin(), lambda.end());
      rows.push_back(row);
      for (double v : lambda) sweep_csv << ldpo::csv::exact(v) << ',';
      sweep_csv << ldpo::csv::exact(metrics.mean_loss) << ',' << ldpo::csv::exact(metrics.top1_agreement) << ','
                << ldpo::csv::exact(metrics.mean_tv) << ',' << ldpo::csv::exact(metrics.mean_kendall_tau) << "\n";
    }
    json out{{"dimensions", dims}, {"beta", o.common.beta}, {"rows", rows}};
    write_text(out_dir / "metrics.json", out.dump(2) + "\n");
    if (o.per_dim || o.sweep > 0) write_text(out_dir / "sweep.csv", sweep_csv.str());
    std::cout << "evaluated " << data.size() << " prompts at " << lambdas.size() << " lambda point(s); results in "
              << out_dir.string() << "\n";
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const ldpo::Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  }
  return kOk;
}

// --------------------------------------------------------------------------- fit-scheduler

struct FitOptions {
  std::string observations;
  std::string out = "ldpo_scheduler";
  unsigned degree = 2;
  std::size_t dims = 0;
  double ridge = 1e-8;
  unsigned grid = 4;
};

int cmd_fit(const FitOptions& o, const CLI::App* sub) {
  if (o.degree == 0 || o.grid == 0 || !(o.ridge >= 0.0)) {
    std::cerr << "config error: --degree and --grid must be >= 1 and --ridge >= 0\n";
    return kConfigError;
  }
  const fs::path out_dir(o.out);
  try {
    const auto obs = ldpo::load_observations(o.observations);
    const std::size_t d = obs.front().lambda.size();
    if (o.dims != 0 && o.dims != d) {
      throw ldpo::Error(ldpo::Errc::DimensionMismatch,
                        "--dims " + std::to_string(o.dims) + " but observations have " + std::to_string(d) + " columns");
    }
    ensure_dir(out_dir);
    write_manifest(out_dir, "fit-scheduler", sub, std::nullopt, {o.observations}, {"manifest.json", "model.txt", "predictions.csv"});
    const ldpo::PolyFeatureMap map(d, o.degree);
    const auto model = ldpo::fit(obs, map, o.ridge);
    ldpo::save_model((out_dir / "model.txt").string(), model);

    std::ostringstream pred;
    for (std::size_t i = 0; i < d; ++i) pred << "lambda_" << i + 1 << ',';
    pred << "f\n";
    for (const auto& lambda : ldpo::grid(d, o.grid)) {
      for (double v : lambda) pred << ldpo::csv::exact(v) << ',';
      pred << ldpo::csv::exact(ldpo::predict(model, lambda)) << "\n";
    }
    write_text(out_dir / "predictions.csv", pred.str());

    std::cout << "fitted degree-" << o.degree << " model on " << obs.size() << " observations, d = " << d << ", "
              << map.size() << " coefficients\n";
    for (const auto& ob : obs) {
      std::cout << "  f(";
      for (std::size_t i = 0; i < d; ++i) std::cout << (i ? "," : "") << ldpo::csv::fixed(ob.lambda[i], 3);
      std::cout << ") = " << ldpo::csv::fixed(ldpo::predict(model, ob.lambda), 6) << "  observed "
                << ldpo::csv::fixed(ob.y, 6) << "\n";
    }
  } catch (const ldpo::Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  }
  return kOk;
}

// --------------------------------------------------------------------------- sample-lambda

struct SampleOptions {
  std::string model;
  std::string scores_file;
  std::string out;
  std::size_t dims = 0;
  std::uint64_t seed = 0;
  CandidateOptions cand;
};

/// Scores file: header lambda_1..lambda_d,<score column>; the last column is f.
ldpo::SchedulerDist scores_file_distribution(const std::string& path, double tau) {
  std::ifstream in(path);
  if (!in) throw ldpo::Error(ldpo::Errc::IoError, "cannot open scores file '" + path + "'");
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line) && header.empty()) {
    if (!ldpo::csv::trim(line).empty()) header = ldpo::csv::split(line);
  }
  if (header.size() < 2) throw ldpo::Error(ldpo::Errc::ParseError, path + ": missing header");
  const std::size_t d = header.size() - 1;
  std::vector<ldpo::SimplexVector> cands;
  std::vector<double> scores;
  std::size_t line_no = 1;
  do {
    if (ldpo::csv::trim(line).empty()) continue;
    ++line_no;
    const auto f = ldpo::csv::split(line);
    const std::string where = path + ":" + std::to_string(line_no);
    if (f.size() != d + 1) throw ldpo::Error(ldpo::Errc::ParseError, where + ": wrong field count");
    std::vector<double> lam(d);
    for (std::size_t i = 0; i < d; ++i) lam[i] = ldpo::csv::parse_double(f[i], where);
    // Printed lambdas are rounded; renormalize rather than reject.
    double total = 0.0;
    for (double v : lam) total += v;
    if (!(total > 0.0)) throw ldpo::Error(ldpo::Errc::ParseError, where + ": lambda sums to zero");
    for (double& v : lam) v /= total;
    cands.push_back(ldpo::SimplexVector::validate(lam));
    scores.push_back(ldpo::csv::parse_double(f[d], where));
  } while (std::getline(in, line));
  if (cands.empty()) throw ldpo::Error(ldpo::Errc::ParseError, path + ": no rows");
  return ldpo::distribution_from_scores(std::move(cands), std::move(scores), tau);
}

int cmd_sample(const SampleOptions& o, const CLI::Option* seed_opt) {
  std::uint64_t seed = 0;
  try {
    seed = resolve_seed(seed_opt, o.seed);
    if (!(o.cand.tau > 0.0)) throw ConfigError("--tau must be positive");
    if (o.model.empty() && o.scores_file.empty()) throw ConfigError("need --model or --scores-file");
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }
  try {
    ldpo::SchedulerDist dist;
    if (!o.scores_file.empty()) {
      dist = scores_file_distribution(o.scores_file, o.cand.tau);
    } else {
      const auto model = ldpo::load_model(o.model);
      const std::size_t d = model.feature_map.dims();
      if (o.dims != 0 && o.dims != d) {
        throw ldpo::Error(ldpo::Errc::DimensionMismatch,
                          "--dims " + std::to_string(o.dims) + " but the model has d = " + std::to_string(d));
      }
      ldpo::Rng rng = ldpo::Rng::derive(seed, "scheduler-candidates");
      dist = ldpo::make_distribution(model, ldpo::build_candidates(candidate_method(o.cand, d), d, rng), o.cand.tau);
    }
    print_distribution(dist);
    if (!o.out.empty()) {
      std::ostringstream ss;
      write_distribution_csv(ss, dist);
      write_text(o.out, ss.str());
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const ldpo::Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  }
  return kOk;
}

// --------------------------------------------------------------------------- report

int cmd_report(const std::string& run_dir) {
  try {
    const fs::path dir(run_dir);
    std::ifstream in(dir / "report.json");
    if (!in) throw ldpo::Error(ldpo::Errc::IoError, "no report.json in '" + run_dir + "'");
    json r;
    try {
      r = json::parse(in);
    } catch (const json::exception& e) {
      throw ldpo::Error(ldpo::Errc::ParseError, e.what());
    }
    const auto trace = r.at("loss_trace_nats").get<std::vector<double>>();
    std::ostringstream csv_out;
    csv_out << "epoch,loss_nats\n";
    for (std::size_t e = 0; e < trace.size(); ++e) csv_out << e << ',' << ldpo::csv::exact(trace[e]) << "\n";
    write_text(dir / "epoch_loss.csv", csv_out.str());
    write_text(dir / "epoch_loss.svg",
               ldpo::svg_line_plot({{"epoch mean loss", trace, "#d62728"}}, "lambda-DPO loss per epoch", "epoch",
                                   "loss (nats)"));
    const auto& m = r.at("final_metrics");
    std::cout << "epochs " << trace.size() << ", final loss "
              << (trace.empty() ? std::string("n/a") : ldpo::csv::fixed(trace.back(), 6)) << " nats\n"
              << "mean TV " << ldpo::csv::fixed(m.at("mean_tv_distance").get<double>(), 6) << ", top-1 "
              << ldpo::csv::fixed(m.at("top1_agreement").get<double>(), 3) << ", kendall "
              << ldpo::csv::fixed(m.at("mean_kendall_tau").get<double>(), 3) << "\n";
  } catch (const json::exception& e) {
    std::cerr << "data error: malformed report: " << e.what() << "\n";
    return kDataError;
  } catch (const ldpo::Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lambda-weighted listwise DPO toolkit"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->always_capture_default();

  std::string config_path;

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Train a toy policy with the lambda-DPO objective");
  train_cmd->add_option("--config", config_path, "JSON config file or run manifest (flags override it)");
  train_cmd->add_option("--data", train.data, "Dataset JSONL")->required();
  train_cmd->add_option("--out", train.out, "Output directory");
  train_cmd->add_option("--lambda", train.lambda, "uniform | fixed:w1,..,wm | onehot:k | scheduler");
  train_cmd->add_option("--policy", train.policy, "tabular | loglinear")->check(CLI::IsMember({"tabular", "loglinear"}));
  train_cmd->add_option("--features", train.features, "Hashed trigram buckets for the log-linear policy");
  train_cmd->add_option("--hash-seed", train.hash_seed, "Feature hash seed");
  train_cmd->add_option("--lr", train.lr, "Learning rate");
  train_cmd->add_option("--epochs", train.epochs, "Epochs");
  train_cmd->add_option("--batch-size", train.batch_size, "Prompts per optimizer step");
  train_cmd->add_option("--optimizer", train.optimizer, "adam | sgd")->check(CLI::IsMember({"adam", "sgd"}));
  train_cmd->add_option("--granularity", train.granularity, "per_prompt | per_batch")
      ->check(CLI::IsMember({"per_prompt", "per_batch"}));
  train_cmd->add_option("--lr-schedule", train.lr_schedule, "constant | cosine")
      ->check(CLI::IsMember({"constant", "cosine"}));
  train_cmd->add_option("--warmup", train.warmup, "Warmup fraction for the cosine schedule");
  train_cmd->add_flag("--no-shuffle", train.no_shuffle, "Visit prompts in file order");
  auto* train_seed = train_cmd->add_option("--seed", train.seed, "Random seed (falls back to LDPO_SEED)");
  train_cmd->add_option("--scheduler-model", train.scheduler_model, "Fitted performance model for --lambda scheduler");
  train_cmd->add_option("--observations", train.observations, "Observations CSV to fit the scheduler from");
  train_cmd->add_option("--degree", train.degree, "Polynomial degree when fitting from --observations");
  train_cmd->add_option("--ridge", train.ridge, "Ridge eps when fitting from --observations");
  train_cmd->add_flag("--record-timing", train.record_timing, "Include wall-clock seconds in report.json");
  add_common(train_cmd, train.common);
  add_candidate_options(train_cmd, train.cand);

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint at one or many lambda points");
  eval_cmd->add_option("--config", config_path, "JSON config file or run manifest");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Policy checkpoint")->required();
  eval_cmd->add_option("--data", eval.data, "Dataset JSONL")->required();
  eval_cmd->add_option("--out", eval.out, "Output directory");
  eval_cmd->add_option("--lambda", eval.lambda, "uniform | fixed:w1,..,wm | onehot:k");
  eval_cmd->add_flag("--per-dim", eval.per_dim, "One row per one-hot lambda");
  eval_cmd->add_option("--sweep", eval.sweep, "Sweep every grid point at this resolution");
  add_common(eval_cmd, eval.common);
  auto* eval_dims = eval_cmd->get_option("--dims");

  FitOptions fit;
  auto* fit_cmd = app.add_subcommand("fit-scheduler", "Fit the polynomial performance model");
  fit_cmd->add_option("--config", config_path, "JSON config file or run manifest");
  fit_cmd->add_option("--observations", fit.observations, "CSV: lambda_1..lambda_d,score")->required();
  fit_cmd->add_option("--out", fit.out, "Output directory");
  fit_cmd->add_option("--degree", fit.degree, "Polynomial degree p");
  fit_cmd->add_option("--dims", fit.dims, "Expected simplex dimension d (0 = from the CSV)");
  fit_cmd->add_option("--ridge", fit.ridge, "Ridge regularization eps");
  fit_cmd->add_option("--grid", fit.grid, "Resolution of the prediction grid");

  SampleOptions smp;
  auto* sample_cmd = app.add_subcommand("sample-lambda", "Build the scheduler distribution over candidate lambdas");
  sample_cmd->add_option("--config", config_path, "JSON config file or run manifest");
  sample_cmd->add_option("--model", smp.model, "Fitted model file");
  sample_cmd->add_option("--scores-file", smp.scores_file, "CSV of lambda_1..lambda_d,f to softmax directly");
  sample_cmd->add_option("--out", smp.out, "Write the table as CSV here");
  sample_cmd->add_option("--dims", smp.dims, "Expected simplex dimension (0 = from the model)");
  auto* sample_seed = sample_cmd->add_option("--seed", smp.seed, "Random seed (falls back to LDPO_SEED)");
  add_candidate_options(sample_cmd, smp.cand);

  std::string run_dir;
  auto* report_cmd = app.add_subcommand("report", "Re-render tables and plots from a training run");
  report_cmd->add_option("--run", run_dir, "Training output directory")->required();

  std::vector<std::string> args;
  try {
    args = expand_config(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  if (*train_cmd) return cmd_train(train, train_cmd, train_seed);
  if (*eval_cmd) return cmd_eval(eval, eval_cmd, eval_dims);
  if (*fit_cmd) return cmd_fit(fit, fit_cmd);
  if (*sample_cmd) return cmd_sample(smp, sample_seed);
  if (*report_cmd) return cmd_report(run_dir);
  return kConfigError;
}
