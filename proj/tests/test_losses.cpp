#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "ldpo/losses.hpp"

using namespace ldpo;
using ldpo::fx::max_abs_diff;
using ldpo::fx::max_rel_error;

namespace {

struct Instance {
  std::vector<PromptGroup> data;
  TabularPolicy tab;
  LogLinearPolicy loglin{16};
  ReferencePolicy ref = ReferencePolicy::uniform();
  PreferenceTargets targets;
  SimplexVector lambda = SimplexVector::uniform(1);
  double beta = 0.1;
};

Instance random_instance(Rng& rng, std::size_t m, std::size_t n, double beta) {
  Instance in;
  in.data = {fx::random_group(rng, "p", n, m)};
  in.tab = TabularPolicy(in.data);
  fx::randomize(in.tab.parameters(), rng, 3.0);
  in.loglin = LogLinearPolicy(16, rng.next_u64());
  fx::randomize(in.loglin.parameters(), rng, 3.0);
  in.ref = ReferencePolicy::from_data(in.data);
  in.targets = ratings_to_targets(in.data[0], fx::dim_names(m), 0.5 + rng.uniform01());
  in.lambda = sample_uniform(m, rng);
  in.beta = beta;
  return in;
}

PromptGroup pair_group() {
  PromptGroup g{"p", "", {}};
  g.candidates.push_back({"w", "winner", {}, std::nullopt});
  g.candidates.push_back({"l", "loser", {}, std::nullopt});
  return g;
}

/// One-parameter stand-in with loss theta^2, for checking the difference scheme itself.
struct Scalar {
  std::vector<double> theta{3.0};
  std::vector<double>& parameters() { return theta; }
  const std::vector<double>& parameters() const { return theta; }
};

}  // namespace

TEST(BradleyTerry, Values) {
  EXPECT_DOUBLE_EQ(bt_prob(0.3, 0.3), 0.5);
  EXPECT_NEAR(bt_prob(1.0, 0.0), 0.7310585786300049, 1e-15);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const double a = 20 * (rng.uniform01() - 0.5), b = 20 * (rng.uniform01() - 0.5);
    EXPECT_NEAR(bt_prob(a, b) + bt_prob(b, a), 1.0, 1e-15);
  }
  EXPECT_EQ(bt_prob(800.0, -800.0), 1.0);
  EXPECT_EQ(bt_prob(-800.0, 800.0), 0.0);
}

TEST(PairwiseDpo, EqualPoliciesGiveLog2) {
  const std::vector<PromptGroup> data{pair_group()};
  TabularPolicy p(data);
  EXPECT_NEAR(pairwise_dpo_loss(p, ReferencePolicy::uniform(), data[0], 0, 0.1).value, 0.6931471805599453, 1e-15);
}

TEST(PairwiseDpo, ClosedFormWithAdvantage) {
  const std::vector<PromptGroup> data{pair_group()};
  TabularPolicy p;
  p.add("p", "w", 2.5);
  p.add("p", "l", -1.5);
  // Uniform reference: the log-ratio advantage equals the logit gap d = 4.
  const double d = 4.0;
  const double expected = -std::log(1.0 / (1.0 + std::exp(-0.1 * d)));
  EXPECT_NEAR(pairwise_dpo_loss(p, ReferencePolicy::uniform(), data[0], 0, 0.1).value, expected, 1e-14);
}

TEST(PairwiseDpo, RejectsOtherGroupSizes) {
  PromptGroup g = pair_group();
  g.candidates.push_back({"x", "", {}, std::nullopt});
  TabularPolicy p(std::vector<PromptGroup>{g});
  try {
    pairwise_dpo_loss(p, ReferencePolicy::uniform(), g, 0, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnsupportedN);
  }
}

TEST(PairwiseDpo, EqualsListwiseWithHardTarget) {
  Rng rng(100);
  for (int trial = 0; trial < 100; ++trial) {
    auto in = random_instance(rng, 1, 2, 0.05 + 2 * rng.uniform01());
    for (std::size_t w : {0u, 1u}) {
      const double pair = pairwise_dpo_loss(in.tab, in.ref, in.data[0], w, in.beta).value;
      const double list = listwise_loss(in.tab, in.ref, in.data[0], pairwise_target(w, 2), in.beta).value;
      EXPECT_NEAR(pair, list, 1e-12);
    }
  }
}

TEST(Listwise, UniformTargetAtReferenceIsLogN) {
  for (std::size_t n = 2; n <= 7; ++n) {
    PromptGroup g{"p", "", {}};
    for (std::size_t i = 0; i < n; ++i) g.candidates.push_back({"c" + std::to_string(i), "", {}, std::nullopt});
    TabularPolicy p(std::vector<PromptGroup>{g});
    const std::vector<double> uniform(n, 1.0 / n);
    EXPECT_NEAR(listwise_loss(p, ReferencePolicy::uniform(), g, uniform, 0.1).value, std::log(double(n)), 1e-14);
  }
}

TEST(Listwise, OneHotTargetIsNegativeLogProbability) {
  Rng rng(3);
  auto in = random_instance(rng, 1, 4, 0.7);
  const auto P = listwise_distribution(in.tab, in.ref, in.data[0], in.beta);
  for (std::size_t i = 0; i < 4; ++i) {
    std::vector<double> t(4, 0.0);
    t[i] = 1.0;
    EXPECT_NEAR(listwise_loss(in.tab, in.ref, in.data[0], t, in.beta).value, -std::log(P[i]), 1e-12);
  }
}

TEST(Listwise, MatchesStraightLineRecomputation) {
  Rng rng(44);
  for (int trial = 0; trial < 100; ++trial) {
    auto in = random_instance(rng, 2, 2 + rng.index(5), 0.05 + rng.uniform01());
    const auto& g = in.data[0];
    const auto target = in.targets.per_dim[1];
    // Oracle: raw probabilities, explicit power, explicit log.
    const auto P = fx::naive_listwise(in.tab.logprobs(g), in.ref.logprobs(g), in.beta);
    double expected = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) expected -= target[i] * std::log(P[i]);
    EXPECT_NEAR(listwise_loss(in.tab, in.ref, g, target, in.beta).value, expected, 1e-10);
  }
}

TEST(Listwise, TargetValidation) {
  Rng rng(9);
  auto in = random_instance(rng, 1, 3, 0.1);
  const auto& g = in.data[0];
  auto code = [&](std::vector<double> t) {
    try {
      listwise_loss(in.tab, in.ref, g, t, 0.1);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::IoError;
  };
  EXPECT_EQ(code({0.5, 0.5}), Errc::DimensionMismatch);
  EXPECT_EQ(code({0.5, 0.6, 0.1}), Errc::InvalidTarget);
  EXPECT_EQ(code({1.2, -0.1, -0.1}), Errc::InvalidTarget);
}

TEST(Listwise, LossBoundedBelowByTargetEntropy) {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    auto in = random_instance(rng, 3, 2 + rng.index(5), 0.1);
    const auto target = mixed_target(in.targets, in.lambda);
    EXPECT_GE(listwise_loss(in.tab, in.ref, in.data[0], target, in.beta).value, entropy(target) - 1e-9);
  }
}

TEST(LambdaDpo, OneHotLambdaReducesToSingleDimension) {
  Rng rng(15);
  auto in = random_instance(rng, 4, 5, 0.1);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(lambda_dpo_loss(in.tab, in.ref, in.data[0], in.targets, SimplexVector::one_hot(4, k), in.beta).value,
              listwise_loss(in.tab, in.ref, in.data[0], in.targets.per_dim[k], in.beta).value);
  }
}

TEST(LambdaDpo, IdenticalRowsUnderUniformLambda) {
  Rng rng(16);
  auto in = random_instance(rng, 1, 4, 0.1);
  PreferenceTargets same{{"a", "b", "c"}, {in.targets.per_dim[0], in.targets.per_dim[0], in.targets.per_dim[0]}, {}};
  EXPECT_NEAR(lambda_dpo_loss(in.tab, in.ref, in.data[0], same, SimplexVector::uniform(3), 0.1).value,
              listwise_loss(in.tab, in.ref, in.data[0], in.targets.per_dim[0], 0.1).value, 1e-14);
}

TEST(LambdaDpo, MixThenLossEqualsWeightedSumOfLosses) {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    auto in = random_instance(rng, 1 + rng.index(4), 2 + rng.index(5), 0.05 + rng.uniform01());
    const double a = lambda_dpo_loss(in.tab, in.ref, in.data[0], in.targets, in.lambda, in.beta).value;
    const double b = lambda_dpo_loss_by_dimension(in.tab, in.ref, in.data[0], in.targets, in.lambda, in.beta).value;
    EXPECT_NEAR(a, b, 1e-12);
  }
}

TEST(LambdaDpo, AffineInLambdaAlongSegments) {
  Rng rng(18);
  for (int trial = 0; trial < 100; ++trial) {
    auto in = random_instance(rng, 4, 2 + rng.index(5), 0.1);
    const auto l0 = sample_uniform(4, rng), l1 = sample_uniform(4, rng);
    auto at = [&](double t) {
      std::vector<double> w(4);
      for (int k = 0; k < 4; ++k) w[k] = (1 - t) * l0[k] + t * l1[k];
      return lambda_dpo_loss(in.tab, in.ref, in.data[0], in.targets, SimplexVector::validate(w), in.beta).value;
    };
    const double t = rng.uniform01();
    EXPECT_NEAR(at(t), (1 - t) * at(0.0) + t * at(1.0), 1e-10);
  }
}

TEST(LambdaDpo, DimensionMismatch) {
  Rng rng(19);
  auto in = random_instance(rng, 3, 3, 0.1);
  try {
    lambda_dpo_loss(in.tab, in.ref, in.data[0], in.targets, SimplexVector::uniform(4), 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DimensionMismatch);
  }
}

TEST(FiniteDiff, QuadraticAndConstant) {
  Scalar s;
  const auto g = finite_diff_grad([](const Scalar& x) { return x.theta[0] * x.theta[0]; }, s, 1e-5);
  EXPECT_NEAR(g.at(0), 6.0, 1e-8);
  const auto z = finite_diff_grad([](const Scalar&) { return 4.2; }, s, 1e-5);
  EXPECT_EQ(z.at(0), 0.0);
  EXPECT_THROW(finite_diff_grad([](const Scalar&) { return 0.0; }, s, 0.0), Error);
}

TEST(Gradient, MatchesFiniteDifferences) {
  Rng rng(2718);
  const double betas[] = {0.05, 0.1, 1.0};
  for (int trial = 0; trial < 100; ++trial) {
    auto in = random_instance(rng, 1 + trial % 4, 2 + rng.index(5), betas[trial % 3]);
    const auto& g = in.data[0];
    auto loss = [&](const auto& pol) { return lambda_dpo_loss(pol, in.ref, g, in.targets, in.lambda, in.beta).value; };
    const auto tab = lambda_dpo_grad(in.tab, in.ref, g, in.targets, in.lambda, in.beta);
    EXPECT_LE(max_rel_error(tab, finite_diff_grad(loss, in.tab, 1e-5)), 1e-6) << "trial " << trial;
    const auto ll = lambda_dpo_grad(in.loglin, in.ref, g, in.targets, in.lambda, in.beta);
    EXPECT_LE(max_rel_error(ll, finite_diff_grad(loss, in.loglin, 1e-5)), 1e-6) << "trial " << trial;
  }
}

TEST(Gradient, OracleStableAcrossStepSizes) {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    auto in = random_instance(rng, 3, 4, 1.0);
    auto loss = [&](const auto& pol) {
      return lambda_dpo_loss(pol, in.ref, in.data[0], in.targets, in.lambda, in.beta).value;
    };
    EXPECT_LE(max_rel_error(finite_diff_grad(loss, in.tab, 1e-5), finite_diff_grad(loss, in.tab, 1e-6)), 1e-6);
  }
}

TEST(Gradient, ZeroWhenPolicyMatchesTarget) {
  Rng rng(40);
  for (int trial = 0; trial < 50; ++trial) {
    auto in = random_instance(rng, 3, 2 + rng.index(5), 0.05 + rng.uniform01());
    const auto target = mixed_target(in.targets, in.lambda);
    // Under a uniform reference P_theta = softmax(beta * logits).
    for (std::size_t i = 0; i < target.size(); ++i) in.tab.parameters()[i] = std::log(target[i]) / in.beta;
    const auto ref = ReferencePolicy::uniform();
    const auto P = listwise_distribution(in.tab, ref, in.data[0], in.beta);
    for (std::size_t i = 0; i < P.size(); ++i) ASSERT_NEAR(P[i], target[i], 1e-12);
    EXPECT_LE(max_abs(lambda_dpo_grad(in.tab, ref, in.data[0], in.targets, in.lambda, in.beta)), 1e-10);
  }
}

TEST(Gradient, ScalesLinearlyWithBetaAtReference) {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    auto in = random_instance(rng, 2, 2 + rng.index(5), 0.1);
    // pi_theta = pi_ref: logits equal to the reference log-probs.
    const auto lr = in.ref.logprobs(in.data[0]);
    for (std::size_t i = 0; i < lr.size(); ++i) in.tab.parameters()[i] = lr[i];
    const double beta = 0.05 + rng.uniform01();
    const auto g1 = lambda_dpo_grad(in.tab, in.ref, in.data[0], in.targets, in.lambda, beta);
    const auto g2 = lambda_dpo_grad(in.tab, in.ref, in.data[0], in.targets, in.lambda, 2 * beta);
    for (const auto& [k, v] : g1) EXPECT_NEAR(g2.at(k), 2.0 * v, 1e-10);
  }
}

TEST(Gradient, InvariantToReferenceRescaling) {
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    auto in = random_instance(rng, 3, 2 + rng.index(5), 0.1);
    auto scaled = in.data;
    const double log_c = std::log(0.01 + 100.0 * rng.uniform01());
    for (auto& c : scaled[0].candidates) *c.ref_logprob += log_c;
    const auto ref2 = ReferencePolicy::from_data(scaled);
    const auto& g = in.data[0];
    EXPECT_NEAR(lambda_dpo_loss(in.tab, in.ref, g, in.targets, in.lambda, in.beta).value,
                lambda_dpo_loss(in.tab, ref2, g, in.targets, in.lambda, in.beta).value, 1e-12);
    EXPECT_LE(max_abs_diff(lambda_dpo_grad(in.tab, in.ref, g, in.targets, in.lambda, in.beta),
                           lambda_dpo_grad(in.tab, ref2, g, in.targets, in.lambda, in.beta)),
              1e-12);
  }
}

TEST(Batch, MeanOfGroupsAndGradientMatchesFiniteDifferences) {
  Rng rng(50);
  auto data = fx::random_dataset(rng, 5, 2);
  TabularPolicy p(data);
  fx::randomize(p.parameters(), rng);
  const auto ref = ReferencePolicy::from_data(data);
  std::vector<TargetedGroup> batch;
  for (const auto& g : data) {
    batch.push_back({&g, mixed_target(ratings_to_targets(g, fx::dim_names(2)), sample_uniform(2, rng))});
  }
  const std::span<const TargetedGroup> view(batch);
  const auto loss = batch_loss(p, ref, view, 0.5);
  ASSERT_EQ(loss.per_group.size(), 5u);
  double mean = 0.0;
  for (double v : loss.per_group) mean += v / 5.0;
  EXPECT_NEAR(loss.value, mean, 1e-12);
  auto fn = [&](const TabularPolicy& pol) { return batch_loss(pol, ref, view, 0.5).value; };
  EXPECT_LE(max_rel_error(batch_grad(p, ref, view, 0.5), finite_diff_grad(fn, p, 1e-5)), 1e-6);
}
