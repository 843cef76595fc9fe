#include <gtest/gtest.h>

#include <sstream>

#include "fixtures.hpp"
#include "ldpo/scheduler.hpp"
#include "published.hpp"

using namespace ldpo;

namespace {

std::vector<Observation> published_observations() {
  std::vector<Observation> obs;
  for (std::size_t i = 0; i < published::kObservedY.size(); ++i) {
    obs.push_back({SimplexVector::validate(published::kObservedLambda[i]), published::kObservedY[i]});
  }
  return obs;
}

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return Errc::IoError;
}

}  // namespace

TEST(FeatureMap, SizesMatchBinomial) {
  EXPECT_EQ(PolyFeatureMap(4, 2).size(), 15u);
  for (std::size_t d = 1; d <= 8; ++d) {
    for (unsigned p = 1; p <= 4; ++p) EXPECT_EQ(PolyFeatureMap(d, p).size(), binomial(d + p, p)) << d << "," << p;
  }
}

TEST(FeatureMap, GradedOrder) {
  const PolyFeatureMap map(4, 2);
  const std::vector<std::vector<unsigned>> expected{
      {0, 0, 0, 0}, {1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}, {2, 0, 0, 0}, {1, 1, 0, 0}, {1, 0, 1, 0},
      {1, 0, 0, 1}, {0, 2, 0, 0}, {0, 1, 1, 0}, {0, 1, 0, 1}, {0, 0, 2, 0}, {0, 0, 1, 1}, {0, 0, 0, 2}};
  EXPECT_EQ(map.monomials(), expected);
}

TEST(FeatureMap, VertexAndCenterValues) {
  const PolyFeatureMap map(4, 2);
  const auto v = poly_features(map, SimplexVector::one_hot(4, 0));
  const std::vector<double> vertex{1, 1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  EXPECT_EQ(v, vertex);
  const auto c = poly_features(map, SimplexVector::uniform(4));
  EXPECT_EQ(c[0], 1.0);
  for (int j = 1; j <= 4; ++j) EXPECT_EQ(c[j], 0.25);
  for (int j = 5; j < 15; ++j) EXPECT_EQ(c[j], 0.0625);
}

TEST(FeatureMap, RejectsBadArguments) {
  EXPECT_EQ(code_of([] { PolyFeatureMap(0, 2); }), Errc::InvalidArgument);
  EXPECT_EQ(code_of([] { PolyFeatureMap(3, 0); }), Errc::InvalidArgument);
  const std::vector<double> three{0.2, 0.3, 0.5};
  EXPECT_EQ(code_of([&] { PolyFeatureMap(4, 2)(three); }), Errc::DimensionMismatch);
}

TEST(Fit, ReproducesPublishedObservations) {
  const auto model = fit(published_observations(), PolyFeatureMap(4, 2));
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_NEAR(model(published::kObservedLambda[i]), published::kObservedY[i], 1e-3);
  }
}

TEST(Fit, MinimumNormSolutionLooksLikePrintedCoefficients) {
  // Underdetermined: the min-norm interpolant spreads mass over the intercept and linear terms.
  const auto model = fit(published_observations(), PolyFeatureMap(4, 2), 0.0);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(model(published::kObservedLambda[i]), published::kObservedY[i], 1e-9);
  EXPECT_NEAR(model.w[0], 0.36, 0.01);
  for (int j = 1; j <= 4; ++j) EXPECT_NEAR(model.w[j], 0.09, 0.01);
}

TEST(Fit, SingleObservation) {
  const std::vector<Observation> obs{{SimplexVector::validate(std::vector<double>{0.1, 0.2, 0.7}), 0.8}};
  EXPECT_NEAR(fit(obs, PolyFeatureMap(3, 2), 0.0)(obs[0].lambda.weights()), 0.8, 1e-9);
  EXPECT_NEAR(fit(obs, PolyFeatureMap(3, 2))(obs[0].lambda.weights()), 0.8, 1e-7);
}

TEST(Fit, ConstantTargetsGiveConstantModel) {
  Rng rng(5);
  std::vector<Observation> obs;
  for (int i = 0; i < 40; ++i) obs.push_back({sample_uniform(3, rng), 0.5});
  const auto model = fit(obs, PolyFeatureMap(3, 2));
  for (int i = 0; i < 20; ++i) EXPECT_NEAR(predict(model, sample_uniform(3, rng)), 0.5, 1e-6);
}

TEST(Fit, RecoversExactPolynomialWhenOverdetermined) {
  Rng rng(6);
  const PolyFeatureMap map(3, 2);
  std::vector<double> w(map.size());
  fx::randomize(w, rng);
  const PerfModel truth{map, w};
  std::vector<Observation> obs;
  for (int i = 0; i < 60; ++i) {
    auto l = sample_uniform(3, rng);
    obs.push_back({l, predict(truth, l)});
  }
  const auto model = fit(obs, map, 0.0);
  for (int i = 0; i < 20; ++i) {
    const auto l = sample_uniform(3, rng);
    EXPECT_NEAR(predict(model, l), predict(truth, l), 1e-9);
  }
}

TEST(Fit, Errors) {
  EXPECT_EQ(code_of([] { fit({}, PolyFeatureMap(2, 1)); }), Errc::EmptyVector);
  EXPECT_EQ(code_of([] { fit({{SimplexVector::uniform(2), 1.0}}, PolyFeatureMap(2, 1), -1.0); }),
            Errc::InvalidArgument);
  EXPECT_EQ(code_of([] { fit({{SimplexVector::uniform(3), 1.0}}, PolyFeatureMap(2, 1)); }), Errc::DimensionMismatch);
}

TEST(PerfModel, PrintedPolynomialAtObservedPoints) {
  const PerfModel printed{PolyFeatureMap(4, 2), published::kPrintedWeights};
  for (std::size_t i = 0; i < 5; ++i) {
    const double value = printed(published::kObservedLambda[i]);
    EXPECT_NEAR(value, published::kPrintedAtObserved[i], 1e-12);
    EXPECT_NEAR(value, published::kObservedY[i], 2e-3);
  }
}

TEST(PerfModel, ZeroWeightsGiveZero) {
  const PerfModel zero{PolyFeatureMap(4, 2), std::vector<double>(15, 0.0)};
  Rng rng(8);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(predict(zero, sample_uniform(4, rng)), 0.0);
}

TEST(PerfModel, TextRoundTripIsExact) {
  Rng rng(9);
  const PolyFeatureMap map(4, 3);
  std::vector<double> w(map.size());
  fx::randomize(w, rng);
  const PerfModel m{map, w};
  std::stringstream s;
  write_model(s, m);
  const auto back = read_model(s);
  EXPECT_EQ(back.feature_map, m.feature_map);
  EXPECT_EQ(back.w, m.w);
}

TEST(PerfModel, ReadRejectsMalformedFiles) {
  std::stringstream bad_n("d 2\np 1\nn 4\n");
  EXPECT_EQ(code_of([&] { read_model(bad_n); }), Errc::ParseError);
  std::stringstream wrong_order("d 2\np 1\nn 3\n0 0 0.5\n0 1 0.1\n1 0 0.2\n");
  EXPECT_EQ(code_of([&] { read_model(wrong_order); }), Errc::ParseError);
}

TEST(Observations, ParseAndPercentScale) {
  std::stringstream in("lambda_1,lambda_2,score\n1,0,45.63\n0.5,0.5,0.4623\n\n");
  const auto obs = read_observations(in);
  ASSERT_EQ(obs.size(), 2u);
  EXPECT_NEAR(obs[0].y, 0.4563, 1e-15);
  EXPECT_EQ(obs[1].y, 0.4623);
  EXPECT_EQ(obs[1].lambda[0], 0.5);
}

TEST(Observations, Errors) {
  auto code = [](const std::string& text) {
    std::stringstream in(text);
    return code_of([&] { read_observations(in); });
  };
  EXPECT_EQ(code(""), Errc::ParseError);
  EXPECT_EQ(code("lambda_1,lambda_2,score\n"), Errc::ParseError);
  EXPECT_EQ(code("a,b,score\n1,0,0.4\n"), Errc::ParseError);
  EXPECT_EQ(code("lambda_1,lambda_2,score\n0.7,0.7,0.4\n"), Errc::ParseError);
  EXPECT_EQ(code("lambda_1,lambda_2,score\n1,0\n"), Errc::ParseError);
  EXPECT_EQ(code("lambda_1,lambda_2,score\n1,0,abc\n"), Errc::ParseError);
  EXPECT_EQ(code_of([] { load_observations("/nonexistent/obs.csv"); }), Errc::IoError);
}

TEST(Softmax, PublishedTableAtTau100) {
  std::vector<SimplexVector> cands;
  std::vector<double> f;
  for (const auto& row : published::kSampledTable) {
    // Printed rows are rounded to 3 decimals and can sum to 1.001.
    std::vector<double> w(row.lambda.begin(), row.lambda.end());
    double total = 0.0;
    for (double v : w) total += v;
    for (auto& v : w) v /= total;
    cands.push_back(SimplexVector::validate(w));
    f.push_back(row.f);
  }
  const auto dist = distribution_from_scores(cands, f, 100.0);
  for (std::size_t j = 0; j < f.size(); ++j) {
    const double oracle = f[j] == 0.462   ? published::kSoftmaxAt462
                          : f[j] == 0.461 ? published::kSoftmaxAt461
                                          : published::kSoftmaxAt459;
    EXPECT_NEAR(dist.probs[j], oracle, 1e-12);
    EXPECT_NEAR(dist.probs[j], published::kSampledTable[j].p, 0.02);
  }
}

TEST(Softmax, LimitsAndInvariances) {
  Rng rng(10);
  auto cands = build_candidates(DirichletCandidates{DirichletParams::symmetric(4, 1.0), 10}, 4, rng);
  std::vector<double> f(10);
  for (auto& v : f) v = rng.uniform01();
  const auto cold = distribution_from_scores(cands, f, 1e-9);
  for (double p : cold.probs) EXPECT_NEAR(p, 0.1, 1e-6);
  const auto flat = distribution_from_scores(cands, std::vector<double>(10, 0.3), 100.0);
  for (double p : flat.probs) EXPECT_NEAR(p, 0.1, 1e-15);
  auto shifted = f;
  for (auto& v : shifted) v += 7.0;
  const auto a = distribution_from_scores(cands, f, 5.0), b = distribution_from_scores(cands, shifted, 5.0);
  for (std::size_t j = 0; j < 10; ++j) EXPECT_NEAR(a.probs[j], b.probs[j], 1e-12);
  const auto best = argmax(f);
  double prev = 0.0;
  for (double tau : {0.1, 1.0, 10.0, 100.0, 1000.0}) {
    const double p = distribution_from_scores(cands, f, tau).probs[best];
    EXPECT_GE(p, prev);
    prev = p;
  }
  EXPECT_NEAR(prev, 1.0, 1e-6);
}

TEST(Softmax, Errors) {
  EXPECT_EQ(code_of([] { distribution_from_scores({}, {}, 1.0); }), Errc::EmptyCandidates);
  EXPECT_EQ(code_of([] { distribution_from_scores({SimplexVector::uniform(2)}, {0.1, 0.2}, 1.0); }),
            Errc::DimensionMismatch);
  EXPECT_EQ(code_of([] { distribution_from_scores({SimplexVector::uniform(2)}, {0.1}, 0.0); }),
            Errc::InvalidArgument);
}

TEST(Sampling, DegenerateCases) {
  Rng rng(11);
  const auto one = distribution_from_scores({SimplexVector::one_hot(3, 2)}, {0.4}, 100.0);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(sample(one, rng), SimplexVector::one_hot(3, 2));
  SchedulerDist sure = distribution_from_scores({SimplexVector::one_hot(2, 0), SimplexVector::one_hot(2, 1)},
                                                {1.0, 0.0}, 1.0);
  sure.probs = {1.0, 0.0};
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(sample(sure, rng), SimplexVector::one_hot(2, 0));
  SchedulerDist empty;
  EXPECT_EQ(code_of([&] { sample(empty, rng); }), Errc::EmptyCandidates);
}

TEST(Sampling, EmpiricalFrequencies) {
  SchedulerDist d = distribution_from_scores(
      {SimplexVector::one_hot(3, 0), SimplexVector::one_hot(3, 1), SimplexVector::one_hot(3, 2)},
      {std::log(0.5), std::log(0.3), std::log(0.2)}, 1.0);
  for (double p : d.probs) ASSERT_GT(p, 0.0);
  EXPECT_NEAR(d.probs[0], 0.5, 1e-12);
  Rng rng(12);
  std::array<int, 3> counts{};
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[argmax(sample(d, rng).weights())];
  EXPECT_NEAR(counts[0] / double(n), 0.5, 0.01);
  EXPECT_NEAR(counts[1] / double(n), 0.3, 0.01);
  EXPECT_NEAR(counts[2] / double(n), 0.2, 0.01);
}

TEST(Candidates, DirichletAndGrid) {
  Rng a(13), b(13);
  const CandidateMethod dir = DirichletCandidates{DirichletParams::symmetric(4, 1.0), 10};
  const auto ca = build_candidates(dir, 4, a), cb = build_candidates(dir, 4, b);
  ASSERT_EQ(ca.size(), 10u);
  EXPECT_EQ(ca, cb);
  for (const auto& c : ca) EXPECT_TRUE(is_distribution(c.weights()));
  const auto g = build_candidates(GridCandidates{1}, 4, a);
  ASSERT_EQ(g.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(g[k], SimplexVector::one_hot(4, k));
  EXPECT_EQ(build_candidates(GridCandidates{4}, 4, a).size(), 35u);
  EXPECT_EQ(code_of([&] { build_candidates(DirichletCandidates{DirichletParams::symmetric(3, 1.0), 5}, 4, a); }),
            Errc::DimensionMismatch);
  EXPECT_EQ(code_of([&] { build_candidates(DirichletCandidates{DirichletParams::symmetric(4, 1.0), 0}, 4, a); }),
            Errc::InvalidArgument);
}

TEST(Scheduler, FittedModelPrefersCenterOverVertices) {
  const auto model = fit(published_observations(), PolyFeatureMap(4, 2));
  auto cands = grid(4, 4);
  const auto d = make_distribution(model, cands, 100.0);
  EXPECT_TRUE(is_distribution(d.probs));
  const auto best = d.candidates[argmax(d.probs)];
  for (std::size_t k = 0; k < 4; ++k) EXPECT_LT(best[k], 1.0);
}
