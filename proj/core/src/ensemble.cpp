#include "mpreuse/ensemble.hpp"

#include <cmath>
#include <string>

namespace mpreuse {

PartyModel::PartyModel(const PartyModel& other)
    : classifier(other.classifier ? other.classifier->clone() : nullptr),
      estimator(other.estimator ? other.estimator->clone() : nullptr),
      shard_size(other.shard_size) {}

PartyModel& PartyModel::operator=(const PartyModel& other) {
  if (this != &other) {
    PartyModel copy(other);
    *this = std::move(copy);
  }
  return *this;
}

EnsembleModel::EnsembleModel(std::vector<PartyModel> parties, int num_classes)
    : parties_(std::move(parties)), num_classes_(num_classes) {
  if (parties_.empty()) throw InvalidArgument("ensemble needs at least one party");
  if (num_classes_ < 1) throw InvalidArgument("ensemble needs at least one class");
  double total = 0.0;
  const std::size_t dim = parties_.front().classifier ? parties_.front().classifier->input_dim() : 0;
  for (std::size_t j = 0; j < parties_.size(); ++j) {
    const auto& p = parties_[j];
    const std::string where = "party " + std::to_string(j);
    if (!p.classifier || !p.estimator) throw InvalidArgument(where + " is missing its classifier or estimator");
    if (p.shard_size < 1) throw InvalidArgument(where + " has shard_size 0");
    if (p.classifier->label_space().back() >= num_classes_) {
      throw InvalidArgument(where + " has a class outside [0, " + std::to_string(num_classes_) + ")");
    }
    if (p.classifier->input_dim() != dim || p.estimator->dim() != dim) {
      throw InvalidArgument(where + " disagrees on the feature dimension");
    }
    total += static_cast<double>(p.shard_size);
  }
  priors_.reserve(parties_.size());
  for (const auto& p : parties_) priors_.push_back(static_cast<double>(p.shard_size) / total);
}

EnsembleModel build_ensemble(std::vector<PartyModel> parties, int num_classes) {
  return EnsembleModel(std::move(parties), num_classes);
}

ObjectiveMatrix compute_objective(std::span<const double> priors, std::vector<Matrix> posteriors, Matrix loglik) {
  const auto m = static_cast<Eigen::Index>(posteriors.size());
  const auto n = static_cast<Eigen::Index>(priors.size());
  if (loglik.rows() != m || loglik.cols() != n) throw InvalidArgument("compute_objective: loglik shape mismatch");
  const Eigen::Index k = posteriors.empty() ? 0 : posteriors.front().cols();
  ObjectiveMatrix om;
  om.rowmax.resize(m);
  om.weights.resize(m, n);
  om.objective = Matrix::Zero(m, k);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Matrix& post = posteriors[static_cast<std::size_t>(i)];
    if (post.rows() != n || post.cols() != k) throw InvalidArgument("compute_objective: posterior shape mismatch");
    const double top = loglik.row(i).maxCoeff();
    om.rowmax[i] = top;
    for (Eigen::Index j = 0; j < n; ++j) {
      // The top party gets exp(0) = 1 exactly, so its weight is exactly p_j.
      om.weights(i, j) = priors[static_cast<std::size_t>(j)] * std::exp(loglik(i, j) - top);
    }
    for (Eigen::Index j = 0; j < n; ++j) om.objective.row(i) += om.weights(i, j) * post.row(j);
  }
  om.posteriors = std::move(posteriors);
  om.loglik = std::move(loglik);
  return om;
}

ObjectiveMatrix evaluate_objective(const EnsembleModel& ens, std::span<const Vector> queries) {
  const auto n = static_cast<Eigen::Index>(ens.num_parties());
  const int k = ens.num_classes();
  std::vector<Matrix> posteriors;
  posteriors.reserve(queries.size());
  Matrix loglik(static_cast<Eigen::Index>(queries.size()), n);
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const Vector& x = queries[i];
    if (!x.allFinite()) throw InvalidArgument("evaluate_objective: query " + std::to_string(i) + " is not finite");
    Matrix post(n, k);
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& party = ens.party(static_cast<std::size_t>(j));
      post.row(j) = global_posterior(*party.classifier, x, k).transpose();
      loglik(static_cast<Eigen::Index>(i), j) = party.estimator->log_density(x);
    }
    posteriors.push_back(std::move(post));
  }
  return compute_objective(ens.priors(), std::move(posteriors), std::move(loglik));
}

std::vector<ClassLabel> decide(const ObjectiveMatrix& om) {
  std::vector<ClassLabel> out(om.num_queries());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<ClassLabel>(argmax(om.objective.row(static_cast<Eigen::Index>(i)).transpose()));
  }
  return out;
}

std::vector<ClassLabel> decide(const EnsembleModel& ens, std::span<const Vector> queries) {
  return decide(evaluate_objective(ens, queries));
}

Matrix normalized_posterior(const ObjectiveMatrix& om) {
  Matrix out = om.objective;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double total = out.row(i).sum();
    if (total > 0.0) out.row(i) /= total;
  }
  return out;
}

Vector lambda_from_loglik(std::span<const double> priors, const Vector& loglik) {
  if (static_cast<std::size_t>(loglik.size()) != priors.size()) {
    throw InvalidArgument("lambda_from_loglik: one log-likelihood per party required");
  }
  const double top = loglik.maxCoeff();
  Vector w(loglik.size());
  for (Eigen::Index j = 0; j < w.size(); ++j) w[j] = priors[static_cast<std::size_t>(j)] * std::exp(loglik[j] - top);
  return w / w.sum();
}

Vector lambda_weights(const EnsembleModel& ens, const Vector& x) {
  Vector loglik(static_cast<Eigen::Index>(ens.num_parties()));
  for (std::size_t j = 0; j < ens.num_parties(); ++j) {
    loglik[static_cast<Eigen::Index>(j)] = ens.party(j).estimator->log_density(x);
  }
  return lambda_from_loglik(ens.priors(), loglik);
}

Matrix lambda_weights(const ObjectiveMatrix& om) {
  Matrix out = om.weights;
  for (Eigen::Index i = 0; i < out.rows(); ++i) out.row(i) /= out.row(i).sum();
  return out;
}

std::vector<ClassLabel> decide_with_weights(const ObjectiveMatrix& om, const Matrix& lambda) {
  if (static_cast<std::size_t>(lambda.rows()) != om.num_queries() || lambda.cols() != om.weights.cols()) {
    throw InvalidArgument("decide_with_weights: lambda shape mismatch");
  }
  std::vector<ClassLabel> out(om.num_queries());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Matrix& post = om.posteriors[i];
    Vector score = Vector::Zero(post.cols());
    for (Eigen::Index j = 0; j < post.rows(); ++j) score += lambda(static_cast<Eigen::Index>(i), j) * post.row(j).transpose();
    out[i] = static_cast<ClassLabel>(argmax(score));
  }
  return out;
}

Matrix argmax_density_delta(const ObjectiveMatrix& om) {
  Matrix delta = Matrix::Zero(om.loglik.rows(), om.loglik.cols());
  for (Eigen::Index i = 0; i < delta.rows(); ++i) {
    delta(i, static_cast<Eigen::Index>(argmax(om.loglik.row(i).transpose()))) = 1.0;
  }
  return delta;
}

std::vector<ClassLabel> max_model_decide(const ObjectiveMatrix& om) {
  std::vector<ClassLabel> out(om.num_queries());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const auto best = static_cast<Eigen::Index>(argmax(om.loglik.row(row).transpose()));
    out[i] = static_cast<ClassLabel>(argmax(om.posteriors[i].row(best).transpose()));
  }
  return out;
}

std::vector<ClassLabel> max_model_decide(const EnsembleModel& ens, std::span<const Vector> queries) {
  return max_model_decide(evaluate_objective(ens, queries));
}

double accuracy(std::span<const ClassLabel> predicted, std::span<const ClassLabel> truth) {
  if (predicted.size() != truth.size()) throw InvalidArgument("accuracy: length mismatch");
  if (truth.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(truth.size());
}

}  // namespace mpreuse
