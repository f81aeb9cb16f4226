#pragma once

// Small hand-controllable models for ensemble and calibration tests.

#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "mpreuse/classifier.hpp"
#include "mpreuse/density.hpp"
#include "mpreuse/ensemble.hpp"
#include "oracles.hpp"

namespace fixture {

using namespace mpreuse;

// log p(x) given by an arbitrary function of x.
class FunctionDensity final : public DensityEstimator {
 public:
  FunctionDensity(std::size_t dim, std::function<double(const Vector&)> f) : dim_(dim), f_(std::move(f)) {}
  std::unique_ptr<DensityEstimator> clone() const override { return std::make_unique<FunctionDensity>(*this); }
  std::string_view kind() const override { return "function"; }
  std::size_t dim() const override { return dim_; }
  double log_density(const Vector& x) const override { return f_(x); }

 private:
  std::size_t dim_;
  std::function<double(const Vector&)> f_;
};

inline std::unique_ptr<DensityEstimator> constant_density(std::size_t dim, double value) {
  return std::make_unique<FunctionDensity>(dim, [value](const Vector&) { return value; });
}

// Softmax regression whose posterior is exactly `probs` for every input.
inline std::unique_ptr<Classifier> constant_classifier(std::vector<ClassLabel> labels, const std::vector<double>& probs,
                                                        std::size_t dim) {
  Vector b(static_cast<Eigen::Index>(probs.size()));
  for (std::size_t k = 0; k < probs.size(); ++k) b[static_cast<Eigen::Index>(k)] = std::log(probs[k]);
  return std::make_unique<SoftmaxRegression>(std::move(labels), Matrix::Zero(b.size(), static_cast<Eigen::Index>(dim)),
                                              b);
}

// Random heterogeneous ensemble: softmax and MLP parties with random label
// spaces and GMM densities, so every piece is differentiable.
inline EnsembleModel random_ensemble(std::mt19937_64& rng, int K, std::size_t parties, std::size_t dim, bool mlp) {
  std::vector<PartyModel> models;
  std::normal_distribution<double> N(0.0, 1.0);
  std::uniform_real_distribution<double> U(0.4, 2.0);
  for (std::size_t i = 0; i < parties; ++i) {
    std::vector<ClassLabel> all(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) all[static_cast<std::size_t>(k)] = k;
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(2 + rng() % static_cast<std::uint64_t>(K - 1));
    std::sort(all.begin(), all.end());
    std::unique_ptr<Classifier> c;
    if (mlp) {
      c = std::make_unique<MlpClassifier>(all, dim, std::vector<std::size_t>{4 + rng() % 4}, rng());
    } else {
      c = std::make_unique<SoftmaxRegression>(all, dim, rng());
    }
    Vector theta = c->parameters();
    for (auto& t : theta) t = N(rng);
    c->set_parameters(theta);
    std::vector<double> w;
    std::vector<Vector> mu, var;
    for (int m = 0; m < 2; ++m) {
      w.push_back(U(rng));
      mu.push_back(oracle::random_vector(rng, static_cast<Eigen::Index>(dim)));
      var.push_back(oracle::random_uniform_vector(rng, static_cast<Eigen::Index>(dim), 0.4, 2.0));
    }
    models.emplace_back(std::move(c), std::make_unique<GaussianMixture>(w, mu, var), 10 + rng() % 90);
  }
  return build_ensemble(std::move(models), K);
}

}  // namespace fixture
