#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "mpreuse/calibration.hpp"
#include "mpreuse/data.hpp"
#include "oracles.hpp"

using namespace mpreuse;
using fixture::constant_classifier;
using fixture::constant_density;

namespace {

double loss_at(const EnsembleModel& ens, const ParameterLayout& layout, const Vector& theta, const Vector& x,
               ClassLabel y) {
  EnsembleModel copy = ens;
  assign_parameters(copy, layout, theta);
  return mpce_loss(copy, x, y).value;
}

// Theta-block gradient check on one random ensemble and sample; returns the relative error.
double theta_gradient_error(std::mt19937_64& rng, bool mlp) {
  const int K = 4;
  auto ens = fixture::random_ensemble(rng, K, 1 + rng() % 3, 2, mlp);
  const Vector x = oracle::random_vector(rng, 2, 1.0);
  // Pick a class some party knows, so the loss is not at the floor.
  const auto& labels = ens.party(rng() % ens.num_parties()).classifier->label_space();
  const ClassLabel y = labels[rng() % labels.size()];
  const auto layout = ParameterLayout::of(ens, false);
  const Vector theta = flatten_parameters(ens, layout);
  const Vector fd =
      oracle::finite_difference([&](const Vector& t) { return loss_at(ens, layout, t, x, y); }, theta);
  return oracle::relative_error(mpce_grad(ens, x, y), fd);
}

EnsembleModel toy_like(std::uint64_t seed) {
  const auto ds = generate_toy(seed, 300, 3);
  std::vector<PartyModel> p;
  PartitionSpec spec;
  spec.parties = {{{0, 1}, 1.0, {1.0, 0.5}}, {{1, 2}, 1.0, {0.5, 1.0}}};
  const auto shards = partition(ds, spec);
  for (const auto& s : shards) {
    auto c = std::make_unique<SoftmaxRegression>(s.label_space(), 2, seed);
    train(*c, s, {0.05, 20, 16, seed});
    GmmOptions g;
    g.num_components = 2;
    p.emplace_back(std::move(c), std::make_unique<GaussianMixture>(gmm_fit(s.features(), g).model), s.size());
  }
  return build_ensemble(std::move(p), 3);
}

}  // namespace

TEST(MpceLoss, TwoPartyExample) {
  std::vector<PartyModel> p;
  p.emplace_back(constant_classifier({0, 1}, {0.9, 0.1}, 2), constant_density(2, 0.0), 100);
  p.emplace_back(constant_classifier({0, 1}, {0.2, 0.8}, 2), constant_density(2, -1.0), 100);
  const auto ens = build_ensemble(std::move(p), 2);
  const auto loss = mpce_loss(ens, Vector::Zero(2), 0);
  EXPECT_NEAR(loss.value, 0.71993, 5e-6);
  EXPECT_NEAR(loss.value, -std::log(0.5 * 0.9 + 0.5 * std::exp(-1.0) * 0.2), 1e-15);
}

TEST(MpceLoss, SinglePartyIsCrossEntropy) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 1000; ++t) {
    const Matrix W = oracle::random_matrix(rng, 3, 2, 2.0);
    const Vector b = oracle::random_vector(rng, 3);
    std::vector<PartyModel> p;
    p.emplace_back(std::make_unique<SoftmaxRegression>(std::vector<ClassLabel>{0, 1, 2}, W, b),
                   constant_density(2, -4.0), 10);
    const auto ens = build_ensemble(std::move(p), 3);
    const Vector x = oracle::random_vector(rng, 2, 2.0);
    const ClassLabel y = static_cast<ClassLabel>(rng() % 3);
    // Posteriors below the probability floor clamp the loss.
    const double expected = std::min(oracle::softmax_cross_entropy(W, b, x, y), -std::log(kProbabilityFloor));
    EXPECT_NEAR(mpce_loss(ens, x, y).value, expected, 1e-12 * std::max(1.0, expected));
  }
}

TEST(MpceLoss, UnknownClassHitsTheFloor) {
  std::vector<PartyModel> p;
  p.emplace_back(constant_classifier({0, 1}, {0.5, 0.5}, 1), constant_density(1, 0.0), 1);
  const auto ens = build_ensemble(std::move(p), 3);
  EXPECT_DOUBLE_EQ(mpce_loss(ens, Vector::Zero(1), 2).value, -std::log(kProbabilityFloor));
}

TEST(MpceLoss, Nonnegative) {
  std::mt19937_64 rng(2);
  const auto ens = fixture::random_ensemble(rng, 5, 3, 2, true);
  for (int t = 0; t < 1000; ++t) {
    const auto loss = mpce_loss(ens, oracle::random_vector(rng, 2, 2.0), static_cast<ClassLabel>(rng() % 5));
    EXPECT_GE(loss.value, 0.0);
    EXPECT_LE(loss.inner, 1.0 + 1e-12);
  }
}

TEST(MpceGrad, SoftmaxThetaBlockMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 120; ++t) EXPECT_LT(theta_gradient_error(rng, false), 1e-5) << "trial " << t;
}

TEST(MpceGrad, MlpThetaBlockMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 120; ++t) EXPECT_LT(theta_gradient_error(rng, true), 1e-4) << "trial " << t;
}

TEST(MpceGrad, SinglePartyEqualsCrossEntropyGradient) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    MlpClassifier m({0, 1, 2}, 2, {5}, t);
    std::vector<PartyModel> p;
    p.emplace_back(std::make_unique<MlpClassifier>(m), constant_density(2, 1.0), 3);
    const auto ens = build_ensemble(std::move(p), 3);
    const Vector x = oracle::random_vector(rng, 2);
    const std::size_t y = t % 3;
    EXPECT_LT(oracle::relative_error(mpce_grad(ens, x, static_cast<ClassLabel>(y)), m.cross_entropy_grad(x, y)),
              1e-12);
  }
}

TEST(MpceGrad, ZeroWeightPartyGetsNoGradient) {
  std::vector<PartyModel> p;
  p.emplace_back(std::make_unique<SoftmaxRegression>(std::vector<ClassLabel>{0, 1}, 2, 1), constant_density(2, 10.0),
                 5);
  p.emplace_back(std::make_unique<SoftmaxRegression>(std::vector<ClassLabel>{0, 1}, 2, 2),
                 constant_density(2, kLogDensityFloor), 5);
  const auto ens = build_ensemble(std::move(p), 2);
  const auto layout = ParameterLayout::of(ens, false);
  const Vector g = mpce_grad(ens, Vector::Ones(2), 0);
  EXPECT_GT(g.segment(layout.theta_offset[0], layout.theta_size[0]).norm(), 0.0);
  EXPECT_EQ(g.segment(layout.theta_offset[1], layout.theta_size[1]).norm(), 0.0);
}

TEST(MpceGrad, DensityWeightedRouting) {
  // Identical classifiers; party 0's density dominates at every sample.
  SoftmaxRegression shared({0, 1}, 2, 7);
  std::mt19937_64 rng(6);
  for (int t = 0; t < 200; ++t) {
    const double la = std::normal_distribution<double>(0, 3)(rng);
    const double lb = la - std::uniform_real_distribution<double>(0.01, 5.0)(rng);
    std::vector<PartyModel> p;
    p.emplace_back(std::make_unique<SoftmaxRegression>(shared), constant_density(2, la), 50);
    p.emplace_back(std::make_unique<SoftmaxRegression>(shared), constant_density(2, lb), 50);
    const auto ens = build_ensemble(std::move(p), 2);
    const auto layout = ParameterLayout::of(ens, false);
    const Vector g = mpce_grad(ens, oracle::random_vector(rng, 2), static_cast<ClassLabel>(t % 2));
    EXPECT_GE(g.segment(layout.theta_offset[0], layout.theta_size[0]).norm(),
              g.segment(layout.theta_offset[1], layout.theta_size[1]).norm());
  }
}

TEST(MpceGrad, DensityBlockFollowsTheIndicator) {
  std::mt19937_64 rng(7);
  auto ens = fixture::random_ensemble(rng, 4, 3, 2, false);
  const Vector x = oracle::random_vector(rng, 2);
  const ClassLabel y = ens.party(0).classifier->label_space().front();
  const auto layout = ParameterLayout::of(ens, true);
  const Vector g = mpce_grad(ens, x, y, {true, DensityIndicator::kLabelSpace});
  const Vector g_all = mpce_grad(ens, x, y, {true, DensityIndicator::kAll});
  ASSERT_EQ(g.size(), layout.total);
  EXPECT_EQ(g.head(layout.mu_offset[0]), mpce_grad(ens, x, y));
  for (std::size_t j = 0; j < ens.num_parties(); ++j) {
    const Vector nll = ens.party(j).estimator->nll_grad(x);
    const bool knows = ens.party(j).classifier->local_index(y).has_value();
    const Vector block = g.segment(layout.mu_offset[j], layout.mu_size[j]);
    if (knows) {
      EXPECT_LT((block - nll).norm(), 1e-15);
    } else {
      EXPECT_EQ(block.norm(), 0.0);
    }
    EXPECT_LT((g_all.segment(layout.mu_offset[j], layout.mu_size[j]) - nll).norm(), 1e-15);
  }
}

TEST(ClipAndNoise, Examples) {
  Vector g(4);
  g << 6.0, 8.0, 0.0, 0.0;  // norm 10
  ClipConfig cfg;
  const Vector c = clip_and_noise(g, cfg);
  EXPECT_LT((c - g / 10.0).norm(), 1e-15);
  EXPECT_NEAR(c.norm(), 1.0, 1e-15);
  const Vector small = g / 20.0;  // norm 0.5
  EXPECT_EQ(clip_and_noise(small, cfg), small);
}

TEST(ClipAndNoise, BoundHoldsWithoutNoise) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> scale(0.0, 50.0);
  for (int t = 0; t < 1000; ++t) {
    ClipConfig cfg;
    cfg.clip_norm = 0.1 + scale(rng) / 10.0;
    const Vector g = oracle::random_vector(rng, 1 + t % 40, scale(rng));
    const Vector c = clip_and_noise(g, cfg);
    EXPECT_LE(c.norm(), cfg.clip_norm);
    if (g.norm() > 0) EXPECT_NEAR(c.dot(g) / (c.norm() * g.norm()), 1.0, 1e-12);
  }
}

TEST(ClipAndNoise, NoiseStandardDeviation) {
  ClipConfig cfg;
  cfg.clip_norm = 1.0;
  cfg.noise_sigma = 0.5;
  cfg.seed = 123;
  const Vector out = clip_and_noise(Vector::Zero(10000), cfg);
  const double mean = out.mean();
  const double sd = std::sqrt((out.array() - mean).square().sum() / (out.size() - 1));
  EXPECT_NEAR(sd, 0.5, 0.03 * 0.5);
}

TEST(Calibrate, ZeroStepsLeavesModelUnchanged) {
  const auto ens = toy_like(1);
  const auto ds = generate_toy(1, 300, 3);
  CalibrationConfig cfg;
  const auto result = calibrate(ens, ds, cfg);
  EXPECT_TRUE(result.trace.empty());
  const auto layout = ParameterLayout::of(ens, true);
  EXPECT_EQ(flatten_parameters(result.model, layout), flatten_parameters(ens, layout));
}

TEST(Calibrate, HugeClipNormMatchesNoClipping) {
  const auto ens = toy_like(2);
  const auto ds = generate_toy(2, 300, 3);
  CalibrationConfig cfg;
  cfg.steps = 30;
  cfg.learning_rate = 1e-2;
  cfg.seed = 5;
  const auto plain = calibrate(ens, ds, cfg);
  cfg.clip = ClipConfig{1e300, 0.0, 0, false};
  const auto clipped = calibrate(ens, ds, cfg);
  ASSERT_EQ(plain.trace.size(), clipped.trace.size());
  for (std::size_t i = 0; i < plain.trace.size(); ++i) EXPECT_EQ(plain.trace[i].loss, clipped.trace[i].loss);
}

TEST(Calibrate, DeterministicAndReducesLoss) {
  const auto ens = toy_like(3);
  const auto ds = generate_toy(3, 300, 3);
  CalibrationConfig cfg;
  cfg.steps = 200;
  cfg.learning_rate = 5e-2;
  cfg.seed = 9;
  cfg.eval_every = 50;
  const auto a = calibrate(ens, ds, cfg, &ds);
  const auto b = calibrate(ens, ds, cfg, &ds);
  ASSERT_EQ(a.trace.size(), 200u);
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    EXPECT_EQ(a.trace[i].loss, b.trace[i].loss);
    EXPECT_EQ(std::isnan(a.trace[i].test_accuracy), std::isnan(b.trace[i].test_accuracy));
  }
  EXPECT_FALSE(std::isnan(a.trace[49].test_accuracy));
  EXPECT_TRUE(std::isnan(a.trace[50].test_accuracy));
  double early = 0, late = 0;
  for (int i = 0; i < 20; ++i) {
    early += a.trace[i].loss;
    late += a.trace[a.trace.size() - 1 - i].loss;
  }
  EXPECT_LT(late, early);
}

TEST(Calibrate, DensityUpdatesMoveGmmParameters) {
  const auto ens = toy_like(4);
  const auto ds = generate_toy(4, 300, 3);
  CalibrationConfig cfg;
  cfg.steps = 10;
  cfg.learning_rate = 1e-2;
  cfg.update_density = true;
  const auto result = calibrate(ens, ds, cfg);
  EXPECT_NE(result.model.party(0).estimator->parameters(), ens.party(0).estimator->parameters());
  cfg.update_density = false;
  const auto frozen = calibrate(ens, ds, cfg);
  EXPECT_EQ(frozen.model.party(0).estimator->parameters(), ens.party(0).estimator->parameters());
}

TEST(Calibrate, PerExampleClippingAndPerPartyBatches) {
  const auto ens = toy_like(5);
  const auto ds = generate_toy(5, 300, 3);
  CalibrationConfig cfg;
  cfg.steps = 20;
  cfg.learning_rate = 1e-2;
  cfg.clip = ClipConfig{0.5, 0.1, 3, true};
  EXPECT_EQ(calibrate(ens, ds, cfg).trace.size(), 20u);
  cfg.data = CalibrationData::kPerParty;
  EXPECT_THROW(calibrate(ens, ds, cfg), InvalidArgument);
  PartitionSpec spec;
  spec.parties = {{{0, 1}, 1.0, {1.0, 0.5}}, {{1, 2}, 1.0, {0.5, 1.0}}};
  const auto shards = partition(ds, spec);
  EXPECT_EQ(calibrate(ens, ds, cfg, nullptr, &shards).trace.size(), 20u);
}

TEST(Calibrate, NonFiniteLossAborts) {
  // A density that returns NaN poisons the loss.
  std::vector<PartyModel> p;
  p.emplace_back(constant_classifier({0, 1, 2}, {0.2, 0.3, 0.5}, 2),
                 std::make_unique<fixture::FunctionDensity>(2, [](const Vector&) { return std::nan(""); }), 10);
  const auto ens = build_ensemble(std::move(p), 3);
  std::vector<LabeledSample> pts = {{Vector::Zero(2), 0}};
  CalibrationConfig cfg;
  cfg.steps = 1;
  EXPECT_THROW(calibrate(ens, LocalDataset(pts, 3), cfg), NumericalError);
}
