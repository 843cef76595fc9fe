// Minimal end-to-end use of the library: one prompt with conflicting ratings,
// a tabular policy trained toward a chosen mixture of preference dimensions.

#include <cstdio>

#include "ldpo/ldpo.hpp"

int main() {
  using namespace ldpo;

  const std::vector<std::string> dims = {"helpfulness", "honesty"};
  PromptGroup g{"q1", "Explain recursion.", {}};
  g.candidates.push_back({"a", "long detailed answer", {{"helpfulness", 5.0}, {"honesty", 2.0}}, std::nullopt});
  g.candidates.push_back({"b", "short careful answer", {{"helpfulness", 2.0}, {"honesty", 5.0}}, std::nullopt});
  g.candidates.push_back({"c", "off-topic answer", {{"helpfulness", 1.0}, {"honesty", 1.0}}, std::nullopt});
  const std::vector<PromptGroup> data = {g};

  TabularPolicy policy(data);
  const auto ref = ReferencePolicy::uniform();

  TrainConfig cfg;
  cfg.dimensions = dims;
  cfg.learning_rate = 0.3;
  cfg.epochs = 300;
  cfg.lambda_mode = FixedLambda{SimplexVector::validate(std::vector<double>{0.7, 0.3})};

  const auto report = train(data, policy, ref, cfg);
  const auto target = mixed_target(ratings_to_targets(g, dims), SimplexVector::validate(std::vector<double>{0.7, 0.3}));
  const auto p_theta = listwise_distribution(policy, ref, g, cfg.beta);

  std::printf("final loss %.6f nats, TV %.2e\n", report.loss_trace.back(), report.final_metrics.mean_tv);
  for (std::size_t i = 0; i < g.size(); ++i) {
    std::printf("  %s  target %.4f  policy %.4f\n", g.candidates[i].id.c_str(), target[i], p_theta[i]);
  }
  return 0;
}
