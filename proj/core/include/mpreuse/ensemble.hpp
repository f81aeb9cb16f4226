#pragma once

#include <memory>
#include <span>
#include <vector>

#include "mpreuse/classifier.hpp"
#include "mpreuse/common.hpp"
#include "mpreuse/density.hpp"

namespace mpreuse {

/// One party's contribution: classifier F_i, log-density estimator G_i, |S_i|.
struct PartyModel {
  std::unique_ptr<Classifier> classifier;
  std::unique_ptr<DensityEstimator> estimator;
  std::size_t shard_size = 0;

  PartyModel() = default;
  PartyModel(std::unique_ptr<Classifier> c, std::unique_ptr<DensityEstimator> e, std::size_t size)
      : classifier(std::move(c)), estimator(std::move(e)), shard_size(size) {}
  PartyModel(const PartyModel& other);
  PartyModel& operator=(const PartyModel& other);
  PartyModel(PartyModel&&) noexcept = default;
  PartyModel& operator=(PartyModel&&) noexcept = default;
};

/// N party models plus dataset priors p_i = |S_i| / sum_j |S_j|.
class EnsembleModel {
 public:
  EnsembleModel(std::vector<PartyModel> parties, int num_classes);

  std::size_t num_parties() const { return parties_.size(); }
  int num_classes() const { return num_classes_; }
  std::size_t input_dim() const { return parties_.front().classifier->input_dim(); }
  const std::vector<double>& priors() const { return priors_; }
  const std::vector<PartyModel>& parties() const { return parties_; }
  const PartyModel& party(std::size_t i) const { return parties_[i]; }
  // Mutable access for calibration; priors do not depend on parameters.
  PartyModel& party(std::size_t i) { return parties_[i]; }

 private:
  std::vector<PartyModel> parties_;
  std::vector<double> priors_;
  int num_classes_;
};

EnsembleModel build_ensemble(std::vector<PartyModel> parties, int num_classes);

/// Per-query intermediate and final values of the decision objective.
///
/// For query i, party j and class k:
///   posteriors[i](j, k)  zero-filled global posterior of party j
///   loglik(i, j)         log p(x_i | S_j)
///   rowmax[i]            max_j loglik(i, j)
///   weights(i, j)        p_j * exp(loglik(i, j) - rowmax[i])
///   objective(i, k)      sum_j posteriors[i](j, k) * weights(i, j)
/// J is only comparable across classes of the same query.
struct ObjectiveMatrix {
  std::vector<Matrix> posteriors;
  Matrix loglik;
  Vector rowmax;
  Matrix weights;
  Matrix objective;

  std::size_t num_queries() const { return static_cast<std::size_t>(objective.rows()); }
};

/// Assembles an ObjectiveMatrix from precomputed posteriors (one N x K matrix
/// per query) and log-likelihoods (queries x N). The sum over parties runs in
/// index order.
ObjectiveMatrix compute_objective(std::span<const double> priors, std::vector<Matrix> posteriors, Matrix loglik);

ObjectiveMatrix evaluate_objective(const EnsembleModel& ens, std::span<const Vector> queries);

// argmax_k J, lowest class on ties.
std::vector<ClassLabel> decide(const ObjectiveMatrix& om);
std::vector<ClassLabel> decide(const EnsembleModel& ens, std::span<const Vector> queries);

// J rows rescaled to sum to one: the lambda-weighted global posterior.
Matrix normalized_posterior(const ObjectiveMatrix& om);

/// lambda_j = p(S_j | x) from priors and per-party log-likelihoods.
Vector lambda_from_loglik(std::span<const double> priors, const Vector& loglik);
Vector lambda_weights(const EnsembleModel& ens, const Vector& x);
// One lambda row per query, from an already evaluated objective.
Matrix lambda_weights(const ObjectiveMatrix& om);

/// Decision under arbitrary per-query party weights (queries x N):
/// argmax_k sum_j lambda(i, j) * posteriors[i](j, k).
std::vector<ClassLabel> decide_with_weights(const ObjectiveMatrix& om, const Matrix& lambda);

// Kronecker delta at the highest-density party of each query (lowest index on ties).
Matrix argmax_density_delta(const ObjectiveMatrix& om);

/// Max-model baseline: each query is delegated to the party with the highest
/// log-density, whose posterior argmax is returned.
std::vector<ClassLabel> max_model_decide(const ObjectiveMatrix& om);
std::vector<ClassLabel> max_model_decide(const EnsembleModel& ens, std::span<const Vector> queries);

double accuracy(std::span<const ClassLabel> predicted, std::span<const ClassLabel> truth);

}  // namespace mpreuse
