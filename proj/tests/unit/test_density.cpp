#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mpreuse/data.hpp"
#include "mpreuse/density.hpp"
#include "oracles.hpp"

using namespace mpreuse;

namespace {

std::vector<Vector> random_points(std::mt19937_64& rng, std::size_t n, Eigen::Index d, double scale) {
  std::vector<Vector> pts;
  for (std::size_t i = 0; i < n; ++i) pts.push_back(oracle::random_vector(rng, d, scale));
  return pts;
}

std::vector<Vector> two_blobs(std::uint64_t seed, std::size_t per_blob, const Vector& a, const Vector& b) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, 0.3);
  std::vector<Vector> pts;
  for (std::size_t i = 0; i < per_blob; ++i) {
    for (const Vector* c : {&a, &b}) {
      Vector x = *c;
      for (Eigen::Index k = 0; k < x.size(); ++k) x[k] += N(rng);
      pts.push_back(x);
    }
  }
  return pts;
}

}  // namespace

TEST(LogSumExp, MatchesDirectSumAndHandlesExtremes) {
  const std::vector<double> v = {-1.0, 0.5, 2.0};
  EXPECT_NEAR(log_sum_exp(v), std::log(std::exp(-1.0) + std::exp(0.5) + std::exp(2.0)), 1e-14);
  const std::vector<double> big = {1000.0, 1000.0};
  EXPECT_NEAR(log_sum_exp(big), 1000.0 + std::log(2.0), 1e-12);
  EXPECT_EQ(log_sum_exp(std::vector<double>{}), -std::numeric_limits<double>::infinity());
}

TEST(Kde, SinglePointAtItsMode) {
  const std::vector<Vector> pts = {Vector::Constant(1, 0.3)};
  const auto kde = kde_fit(pts, 1.0);
  EXPECT_EQ(kde.num_points(), 1u);
  EXPECT_NEAR(kde.log_density(Vector::Constant(1, 0.3)), -0.918939, 1e-6);
  EXPECT_NEAR(kde.log_density(Vector::Constant(1, 0.3)), -0.5 * std::log(2.0 * std::numbers::pi), 1e-15);
}

TEST(Kde, ThreePointsMatchDirectSum) {
  std::mt19937_64 rng(3);
  const auto pts = random_points(rng, 3, 2, 1.0);
  const auto kde = kde_fit(pts, 0.7);
  for (int t = 0; t < 50; ++t) {
    const Vector x = oracle::random_vector(rng, 2, 1.5);
    const double direct = std::log(oracle::kde_density(pts, 0.7, x));
    EXPECT_NEAR(kde.log_density(x), direct, 1e-12 * std::abs(direct));
  }
}

TEST(Kde, FarQueryHitsTheFloor) {
  const auto kde = kde_fit(std::vector<Vector>{Vector::Zero(2)}, 0.1);
  const double v = kde.log_density(Vector::Constant(2, 1e3));
  EXPECT_EQ(v, kLogDensityFloor);
  EXPECT_TRUE(std::isfinite(v));
}

TEST(Kde, Errors) {
  EXPECT_THROW(kde_fit(std::vector<Vector>{}, 0.1), InvalidArgument);
  EXPECT_THROW(kde_fit(std::vector<Vector>{Vector::Zero(2)}, 0.0), InvalidArgument);
  const auto kde = kde_fit(std::vector<Vector>{Vector::Zero(2)}, 0.1);
  EXPECT_THROW(kde.log_density(Vector::Zero(3)), InvalidArgument);
}

TEST(Kde, ToyShardKeepsAllPoints) {
  const auto [train, test] = split_train_test(generate_toy(0, 2000, 5), 0.5, 1);
  PartitionSpec spec;
  spec.parties = {{{0, 1}, 1.0, {}}, {{2, 3, 4}, 1.0, {}}};
  const auto shards = partition(train, spec);
  EXPECT_EQ(kde_fit(shards[0].features(), 0.1).num_points(), 400u);
}

TEST(Kde, IntegratesToOneOnToyShard) {
  const auto ds = generate_toy(1, 200, 5);
  const auto kde = kde_fit(ds.features(), 0.1);
  const double lo = -7.0, hi = 7.0, step = 0.04;
  double total = 0.0;
  for (double x = lo; x < hi; x += step) {
    for (double y = lo; y < hi; y += step) {
      Vector q(2);
      q << x + step / 2, y + step / 2;
      total += std::exp(kde.log_density(q));
    }
  }
  EXPECT_NEAR(total * step * step, 1.0, 0.05);
}

TEST(Kde, PropertyLogDomainMatchesProbabilityDomain) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const auto pts = random_points(rng, 1 + trial % 7, 1 + trial % 3, 2.0);
    const double h = 0.2 + 0.1 * (trial % 5);
    const auto kde = kde_fit(pts, h);
    for (int q = 0; q < 25; ++q) {
      const Vector x = oracle::random_vector(rng, pts[0].size(), 3.0);
      const double direct = oracle::kde_density(pts, h, x);
      if (direct <= 1e-300) continue;
      EXPECT_NEAR(kde.log_density(x), std::log(direct), 1e-10 * std::abs(std::log(direct)));
    }
  }
}

TEST(Gmm, SingleComponentAtItsMode) {
  GaussianMixture g({1.0}, {Vector::Zero(2)}, {Vector::Ones(2)});
  EXPECT_NEAR(g.log_density(Vector::Zero(2)), -1.837877, 1e-6);
  EXPECT_NEAR(g.log_density(Vector::Zero(2)), -std::log(2.0 * std::numbers::pi), 1e-15);
}

TEST(Gmm, TwoComponentsMatchDirectSum) {
  std::vector<double> w = {0.5, 0.5};
  std::vector<Vector> mu = {Vector::Zero(2), Vector::Constant(2, 1.5)};
  Vector v1(2), v2(2);
  v1 << 0.5, 2.0;
  v2 << 1.0, 0.3;
  GaussianMixture g(w, mu, {v1, v2});
  std::mt19937_64 rng(9);
  for (int t = 0; t < 50; ++t) {
    const Vector x = oracle::random_vector(rng, 2, 2.0);
    const double direct = std::log(oracle::gmm_density(w, mu, {v1, v2}, x));
    EXPECT_NEAR(g.log_density(x), direct, 1e-12 * std::abs(direct));
  }
}

TEST(Gmm, HugeNormHitsTheFloor) {
  GaussianMixture g({1.0}, {Vector::Zero(2)}, {Vector::Ones(2)});
  EXPECT_EQ(g.log_density(Vector::Constant(2, 1e4)), kLogDensityFloor);
}

TEST(Gmm, InvariantsAfterConstruction) {
  GaussianMixture g({2.0, 6.0}, {Vector::Zero(1), Vector::Ones(1)}, {Vector::Constant(1, 1e-9), Vector::Ones(1)});
  EXPECT_NEAR(g.weights()[0] + g.weights()[1], 1.0, 1e-12);
  EXPECT_GE(g.variances()[0][0], g.variance_floor());
}

TEST(GmmFit, OneComponentIsClosedForm) {
  std::mt19937_64 rng(2);
  const auto pts = random_points(rng, 300, 2, 1.7);
  GmmOptions opt;
  opt.num_components = 1;
  const auto fit = gmm_fit(pts, opt);
  Vector mean = Vector::Zero(2);
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Vector var = Vector::Zero(2);
  for (const auto& p : pts) var += (p - mean).array().square().matrix();
  var /= static_cast<double>(pts.size());
  EXPECT_LT((fit.model.means()[0] - mean).norm(), 1e-10);
  EXPECT_LT((fit.model.variances()[0] - var).norm(), 1e-10);
}

TEST(GmmFit, RecoversWellSeparatedBlobs) {
  Vector a(2), b(2);
  a << -4.0, 0.0;
  b << 4.0, 1.0;
  GmmOptions opt;
  opt.num_components = 2;
  opt.seed = 4;
  const auto fit = gmm_fit(two_blobs(1, 300, a, b), opt);
  const auto& m = fit.model.means();
  const bool order = (m[0] - a).norm() < (m[1] - a).norm();
  EXPECT_LT((m[order ? 0 : 1] - a).norm(), 0.1);
  EXPECT_LT((m[order ? 1 : 0] - b).norm(), 0.1);
}

TEST(GmmFit, LogLikelihoodIsMonotone) {
  const auto ds = generate_toy(0, 600, 5);
  for (std::size_t comps : {1u, 3u, 5u}) {
    GmmOptions opt;
    opt.num_components = comps;
    opt.seed = comps;
    opt.tol = 0.0;
    opt.max_iters = 60;
    const auto fit = gmm_fit(ds.features(), opt);
    ASSERT_GE(fit.log_likelihood_trace.size(), 2u);
    for (std::size_t i = 1; i < fit.log_likelihood_trace.size(); ++i) {
      EXPECT_GE(fit.log_likelihood_trace[i], fit.log_likelihood_trace[i - 1] - 1e-10) << "iteration " << i;
    }
  }
}

TEST(GmmFit, IdenticalPointsUseTheVarianceFloor) {
  const std::vector<Vector> pts(10, Vector::Constant(2, 3.0));
  GmmOptions opt;
  opt.num_components = 2;
  const auto fit = gmm_fit(pts, opt);
  for (const auto& v : fit.model.variances()) EXPECT_GE(v.minCoeff(), opt.variance_floor);
  EXPECT_TRUE(std::isfinite(fit.model.log_density(Vector::Constant(2, 3.0))));
}

TEST(GmmFit, DeterministicAndValidatesInput) {
  const auto ds = generate_toy(6, 200, 5);
  GmmOptions opt;
  opt.num_components = 3;
  opt.seed = 12;
  const auto a = gmm_fit(ds.features(), opt);
  const auto b = gmm_fit(ds.features(), opt);
  EXPECT_EQ(a.model.parameters(), b.model.parameters());
  opt.num_components = 0;
  EXPECT_THROW(gmm_fit(ds.features(), opt), InvalidArgument);
  opt.num_components = 300;
  EXPECT_THROW(gmm_fit(ds.features(), opt), InvalidArgument);
}

TEST(Gmm, ParameterRoundTrip) {
  const auto ds = generate_toy(6, 200, 5);
  GmmOptions opt;
  opt.num_components = 3;
  auto g = gmm_fit(ds.features(), opt).model;
  const Vector before = g.parameters();
  const double ld = g.log_density(ds[0].features);
  g.set_parameters(before);
  EXPECT_LT((g.parameters() - before).norm(), 1e-12);
  EXPECT_NEAR(g.log_density(ds[0].features), ld, 1e-12);
}

TEST(Gmm, NllGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t M = 1 + trial % 3;
    std::vector<double> w;
    std::vector<Vector> mu, var;
    std::uniform_real_distribution<double> U(0.3, 2.0);
    for (std::size_t m = 0; m < M; ++m) {
      w.push_back(U(rng));
      mu.push_back(oracle::random_vector(rng, 2, 1.0));
      var.push_back(oracle::random_uniform_vector(rng, 2, 0.3, 2.0));
    }
    GaussianMixture g(w, mu, var);
    const Vector x = oracle::random_vector(rng, 2, 1.0);
    const auto f = [&](const Vector& p) {
      GaussianMixture h = g;
      h.set_parameters(p);
      return -h.log_density(x);
    };
    const Vector fd = oracle::finite_difference(f, g.parameters());
    EXPECT_LT(oracle::relative_error(g.nll_grad(x), fd), 1e-6) << "trial " << trial;
  }
}
