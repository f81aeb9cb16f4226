#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "mpreuse/ensemble.hpp"
#include "oracles.hpp"

using namespace mpreuse;
using fixture::constant_classifier;
using fixture::constant_density;

namespace {

// The two-party example: p = (0.5, 0.5), L = (0, -1), posteriors (0.9, 0.1) and (0.2, 0.8).
EnsembleModel two_party_example() {
  std::vector<PartyModel> parties;
  parties.emplace_back(constant_classifier({0, 1}, {0.9, 0.1}, 2), constant_density(2, 0.0), 100);
  parties.emplace_back(constant_classifier({0, 1}, {0.2, 0.8}, 2), constant_density(2, -1.0), 100);
  return build_ensemble(std::move(parties), 2);
}

std::vector<Matrix> random_posteriors(std::mt19937_64& rng, std::size_t queries, Eigen::Index N, Eigen::Index K) {
  std::vector<Matrix> out;
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (std::size_t i = 0; i < queries; ++i) {
    Matrix P(N, K);
    for (Eigen::Index j = 0; j < N; ++j) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < K; ++k) {
        // Roughly half the classes are absent for each party.
        P(j, k) = U(rng) < 0.5 ? 0.0 : U(rng);
        s += P(j, k);
      }
      if (s == 0.0) P(j, 0) = s = 1.0;
      P.row(j) /= s;
    }
    out.push_back(P);
  }
  return out;
}

}  // namespace

TEST(BuildEnsemble, Priors) {
  auto sized = [](std::vector<std::size_t> sizes) {
    std::vector<PartyModel> p;
    for (auto n : sizes) p.emplace_back(constant_classifier({0, 1}, {0.5, 0.5}, 1), constant_density(1, 0.0), n);
    return build_ensemble(std::move(p), 2).priors();
  };
  EXPECT_EQ(sized({1000, 1000}), (std::vector<double>{0.5, 0.5}));
  const auto p = sized({600, 200, 200});
  EXPECT_NEAR(p[0], 0.6, 1e-15);
  EXPECT_NEAR(p[1], 0.2, 1e-15);
  EXPECT_NEAR(p[2], 0.2, 1e-15);
  EXPECT_EQ(sized({7}), (std::vector<double>{1.0}));
  EXPECT_THROW(build_ensemble({}, 2), InvalidArgument);
}

TEST(EvaluateObjective, TwoPartyExample) {
  const auto ens = two_party_example();
  const std::vector<Vector> q = {Vector::Zero(2)};
  const auto om = evaluate_objective(ens, q);
  EXPECT_NEAR(om.objective(0, 0), 0.48679, 5e-6);
  EXPECT_NEAR(om.objective(0, 1), 0.19715, 5e-6);
  // Independent evaluation of the same sums.
  EXPECT_NEAR(om.objective(0, 0), 0.5 * 0.9 + 0.5 * std::exp(-1.0) * 0.2, 1e-15);
  EXPECT_NEAR(om.objective(0, 1), 0.5 * 0.1 + 0.5 * std::exp(-1.0) * 0.8, 1e-15);
  EXPECT_EQ(om.rowmax[0], 0.0);
  EXPECT_EQ(om.weights(0, 0), 0.5);
  EXPECT_EQ(decide(om), (std::vector<ClassLabel>{0}));
  EXPECT_EQ(max_model_decide(om), (std::vector<ClassLabel>{0}));
}

TEST(EvaluateObjective, SinglePartyIsTheLocalPosterior) {
  std::mt19937_64 rng(3);
  MlpClassifier m({0, 2, 3}, 2, {6}, 4);
  std::vector<PartyModel> p;
  p.emplace_back(std::make_unique<MlpClassifier>(m), constant_density(2, -3.0), 50);
  const auto ens = build_ensemble(std::move(p), 4);
  std::vector<Vector> qs;
  for (int i = 0; i < 200; ++i) qs.push_back(oracle::random_vector(rng, 2, 3.0));
  const auto om = evaluate_objective(ens, qs);
  for (std::size_t i = 0; i < qs.size(); ++i) {
    EXPECT_EQ(Vector(om.objective.row(static_cast<Eigen::Index>(i)).transpose()), global_posterior(m, qs[i], 4));
    EXPECT_EQ(decide(om)[i], m.label_space()[argmax(m.posterior(qs[i]))]);
  }
  EXPECT_EQ(decide(om), max_model_decide(om));
}

TEST(EvaluateObjective, InvariantsOfIntermediateMatrices) {
  std::mt19937_64 rng(4);
  const auto ens = fixture::random_ensemble(rng, 5, 4, 2, false);
  std::vector<Vector> qs;
  for (int i = 0; i < 300; ++i) qs.push_back(oracle::random_vector(rng, 2, 2.0));
  const auto om = evaluate_objective(ens, qs);
  for (Eigen::Index i = 0; i < om.loglik.rows(); ++i) {
    Eigen::Index best;
    om.loglik.row(i).maxCoeff(&best);
    EXPECT_EQ(om.weights(i, best), ens.priors()[static_cast<std::size_t>(best)]);
    for (Eigen::Index j = 0; j < om.loglik.cols(); ++j) {
      EXPECT_GE(om.weights(i, j), 0.0);
      EXPECT_LE(om.weights(i, j), ens.priors()[static_cast<std::size_t>(j)]);
    }
    for (Eigen::Index k = 0; k < 5; ++k) {
      double j_ik = 0.0;
      for (Eigen::Index j = 0; j < om.loglik.cols(); ++j) j_ik += om.posteriors[i](j, k) * om.weights(i, j);
      EXPECT_NEAR(om.objective(i, k), j_ik, 1e-15);
    }
  }
}

TEST(EvaluateObjective, ShiftInvariance) {
  std::mt19937_64 rng(5);
  const std::vector<double> priors = {0.2, 0.3, 0.5};
  const auto P = random_posteriors(rng, 1000, 3, 4);
  Matrix L(1000, 3);
  for (Eigen::Index i = 0; i < L.size(); ++i) L(i) = std::normal_distribution<double>(0, 5)(rng);
  const auto base = compute_objective(priors, P, L);
  for (double c : {-100.0, 0.0, 37.0, 700.0}) {
    const auto shifted = compute_objective(priors, P, (L.array() + c).matrix());
    EXPECT_LE((shifted.objective - base.objective).cwiseAbs().maxCoeff(), 1e-12) << "c = " << c;
    EXPECT_EQ(decide(shifted), decide(base)) << "c = " << c;
  }
}

TEST(Decide, TiesGoToTheLowestClass) {
  std::vector<PartyModel> p;
  p.emplace_back(constant_classifier({1, 2}, {0.5, 0.5}, 1), constant_density(1, 0.0), 1);
  const auto ens = build_ensemble(std::move(p), 3);
  EXPECT_EQ(decide(ens, std::vector<Vector>{Vector::Zero(1)}), (std::vector<ClassLabel>{1}));
}

TEST(Decide, UnanimousParties) {
  std::vector<PartyModel> p;
  p.emplace_back(constant_classifier({0, 2}, {1e-300, 1.0}, 1), constant_density(1, -2.0), 3);
  p.emplace_back(constant_classifier({1, 2}, {1e-300, 1.0}, 1), constant_density(1, -9.0), 5);
  const auto ens = build_ensemble(std::move(p), 3);
  EXPECT_EQ(decide(ens, std::vector<Vector>{Vector::Zero(1)}), (std::vector<ClassLabel>{2}));
}

TEST(Decide, MissingClassNeverWins) {
  std::mt19937_64 rng(6);
  std::vector<PartyModel> p;
  p.emplace_back(std::make_unique<SoftmaxRegression>(std::vector<ClassLabel>{0, 1}, 2, 1), constant_density(2, 0), 5);
  p.emplace_back(std::make_unique<SoftmaxRegression>(std::vector<ClassLabel>{1, 3}, 2, 2), constant_density(2, -1), 5);
  const auto ens = build_ensemble(std::move(p), 4);
  std::vector<Vector> qs;
  for (int i = 0; i < 500; ++i) qs.push_back(oracle::random_vector(rng, 2, 4.0));
  const auto om = evaluate_objective(ens, qs);
  EXPECT_EQ(om.objective.col(2).cwiseAbs().maxCoeff(), 0.0);
  for (auto label : decide(om)) EXPECT_NE(label, 2);
}

TEST(Decide, PriorScaleInvariance) {
  std::mt19937_64 rng(7);
  const auto ens = fixture::random_ensemble(rng, 4, 3, 2, true);
  std::vector<PartyModel> scaled = ens.parties();
  for (auto& p : scaled) p.shard_size *= 7;
  const auto ens7 = build_ensemble(std::move(scaled), 4);
  std::vector<Vector> qs;
  for (int i = 0; i < 500; ++i) qs.push_back(oracle::random_vector(rng, 2, 2.0));
  EXPECT_EQ(decide(ens, qs), decide(ens7, qs));
}

TEST(Lambda, Examples) {
  const auto lam = lambda_from_loglik(std::vector<double>{0.5, 0.5}, (Vector(2) << 0.0, -1.0).finished());
  EXPECT_NEAR(lam[0], 0.73106, 5e-6);
  EXPECT_NEAR(lam[1], 0.26894, 5e-6);
  const auto uniform = lambda_from_loglik(std::vector<double>{0.25, 0.25, 0.25, 0.25}, Vector::Constant(4, -3.0));
  for (double v : uniform) EXPECT_NEAR(v, 0.25, 1e-15);
  const auto floored =
      lambda_from_loglik(std::vector<double>{0.5, 0.5}, (Vector(2) << kLogDensityFloor, -2.0).finished());
  EXPECT_NEAR(floored[0], 0.0, 1e-300);
  EXPECT_NEAR(floored[1], 1.0, 1e-15);
}

TEST(Lambda, SimplexOverRandomQueries) {
  std::mt19937_64 rng(8);
  const auto ens = fixture::random_ensemble(rng, 5, 4, 3, false);
  for (int i = 0; i < 1000; ++i) {
    const Vector lam = lambda_weights(ens, oracle::random_vector(rng, 3, 3.0));
    EXPECT_GE(lam.minCoeff(), 0.0);
    EXPECT_NEAR(lam.sum(), 1.0, 1e-12);
  }
}

TEST(Lambda, NormalizedPosteriorIsLambdaWeighted) {
  std::mt19937_64 rng(9);
  const auto ens = fixture::random_ensemble(rng, 4, 3, 2, false);
  std::vector<Vector> qs;
  for (int i = 0; i < 100; ++i) qs.push_back(oracle::random_vector(rng, 2));
  const auto om = evaluate_objective(ens, qs);
  const Matrix np = normalized_posterior(om);
  const Matrix lam = lambda_weights(om);
  for (Eigen::Index i = 0; i < np.rows(); ++i) {
    EXPECT_NEAR(np.row(i).sum(), 1.0, 1e-12);
    const Vector direct = om.posteriors[static_cast<std::size_t>(i)].transpose() * lam.row(i).transpose();
    EXPECT_LT((np.row(i).transpose() - direct).norm(), 1e-12);
  }
}

TEST(MaxModel, DeltaWeightsReproduceMaxModelDecisions) {
  std::mt19937_64 rng(10);
  const auto ens = fixture::random_ensemble(rng, 6, 4, 2, true);
  std::vector<Vector> qs;
  for (int i = 0; i < 1000; ++i) qs.push_back(oracle::random_vector(rng, 2, 2.0));
  const auto om = evaluate_objective(ens, qs);
  EXPECT_EQ(decide_with_weights(om, argmax_density_delta(om)), max_model_decide(om));
  EXPECT_EQ(decide_with_weights(om, lambda_weights(om)), decide(om));
}

TEST(MaxModel, PicksTheDensestPartyWithLowIndexTies) {
  std::vector<PartyModel> p;
  p.emplace_back(constant_classifier({0, 1}, {0.4, 0.6}, 1), constant_density(1, -1.0), 1);
  p.emplace_back(constant_classifier({0, 1}, {0.9, 0.1}, 1), constant_density(1, -1.0), 100);
  const auto ens = build_ensemble(std::move(p), 2);
  const std::vector<Vector> q = {Vector::Zero(1)};
  EXPECT_EQ(max_model_decide(ens, q), (std::vector<ClassLabel>{1}));
  EXPECT_EQ(decide(ens, q), (std::vector<ClassLabel>{0}));
}

TEST(Accuracy, CountsMatches) {
  const std::vector<ClassLabel> a = {0, 1, 2, 3}, b = {0, 1, 0, 3};
  EXPECT_DOUBLE_EQ(accuracy(a, b), 0.75);
}
