#include "mpreuse/density.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "mpreuse/random.hpp"

namespace mpreuse {
namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void check_dim(const Vector& x, std::size_t dim, std::string_view who) {
  if (static_cast<std::size_t>(x.size()) != dim) {
    throw InvalidArgument(std::string(who) + ": query has dimension " + std::to_string(x.size()) + ", model expects " +
                          std::to_string(dim));
  }
}

double floored(double log_p) { return std::isnan(log_p) ? kLogDensityFloor : std::max(log_p, kLogDensityFloor); }

}  // namespace

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(m)) return m;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - m);
  return m + std::log(sum);
}

void DensityEstimator::set_parameters(const Vector& params) {
  if (params.size() != 0) throw InvalidArgument(std::string(kind()) + " estimator has no trainable parameters");
}

Vector DensityEstimator::nll_grad(const Vector&) const { return Vector(); }

// ---------------------------------------------------------------------------
// KDE

KernelDensity::KernelDensity(Matrix points, double bandwidth)
    : points_(std::move(points)), bandwidth_(bandwidth), dim_(static_cast<std::size_t>(points_.cols())) {
  if (!(bandwidth_ > 0.0) || !std::isfinite(bandwidth_)) throw InvalidArgument("KDE bandwidth must be positive");
  if (points_.rows() == 0) throw InvalidArgument("KDE needs at least one training point");
  if (!points_.allFinite()) throw InvalidArgument("KDE training points must be finite");
  const double d = static_cast<double>(dim_);
  log_norm_ = -std::log(static_cast<double>(points_.rows())) - 0.5 * d * (kLog2Pi + 2.0 * std::log(bandwidth_));
}

double KernelDensity::log_density(const Vector& x) const {
  check_dim(x, dim_, "kde_log_density");
  const Vector sq = (points_.rowwise() - x.transpose()).rowwise().squaredNorm();
  const double nearest = sq.minCoeff();
  const double inv = 1.0 / (2.0 * bandwidth_ * bandwidth_);
  const double sum = ((nearest - sq.array()) * inv).exp().sum();
  return floored(log_norm_ - nearest * inv + std::log(sum));
}

KernelDensity kde_fit(std::span<const Vector> samples, double bandwidth) {
  if (samples.empty()) throw InvalidArgument("kde_fit: empty sample set");
  const auto d = samples.front().size();
  Matrix points(static_cast<Eigen::Index>(samples.size()), d);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].size() != d) throw InvalidArgument("kde_fit: inconsistent sample dimension");
    points.row(static_cast<Eigen::Index>(i)) = samples[i].transpose();
  }
  return KernelDensity(std::move(points), bandwidth);
}

// ---------------------------------------------------------------------------
// GMM

GaussianMixture::GaussianMixture(std::vector<double> weights, std::vector<Vector> means,
                                 std::vector<Vector> variances, double variance_floor)
    : weights_(std::move(weights)),
      means_(std::move(means)),
      variances_(std::move(variances)),
      variance_floor_(variance_floor) {
  if (weights_.empty()) throw InvalidArgument("GMM needs at least one component");
  if (means_.size() != weights_.size() || variances_.size() != weights_.size()) {
    throw InvalidArgument("GMM weights, means and variances must have one entry per component");
  }
  if (!(variance_floor_ > 0.0)) throw InvalidArgument("GMM variance floor must be positive");
  dim_ = static_cast<std::size_t>(means_.front().size());
  double total = 0.0;
  for (std::size_t m = 0; m < weights_.size(); ++m) {
    if (!(weights_[m] >= 0.0)) throw InvalidArgument("GMM weights must be nonnegative");
    if (static_cast<std::size_t>(means_[m].size()) != dim_ || static_cast<std::size_t>(variances_[m].size()) != dim_) {
      throw InvalidArgument("GMM component dimensions disagree");
    }
    if (!means_[m].allFinite() || !variances_[m].allFinite()) throw InvalidArgument("GMM parameters must be finite");
    variances_[m] = variances_[m].cwiseMax(variance_floor_);
    total += weights_[m];
  }
  if (!(total > 0.0)) throw InvalidArgument("GMM weights must not all be zero");
  for (double& w : weights_) w /= total;
  refresh_cache();
}

void GaussianMixture::refresh_cache() {
  log_weights_.resize(weights_.size());
  log_norms_.resize(weights_.size());
  for (std::size_t m = 0; m < weights_.size(); ++m) {
    log_weights_[m] = weights_[m] > 0.0 ? std::log(weights_[m]) : -std::numeric_limits<double>::infinity();
    log_norms_[m] = -0.5 * (static_cast<double>(dim_) * kLog2Pi + variances_[m].array().log().sum());
  }
}

std::vector<double> GaussianMixture::component_log_terms(const Vector& x) const {
  check_dim(x, dim_, "gmm_log_density");
  std::vector<double> terms(weights_.size());
  for (std::size_t m = 0; m < weights_.size(); ++m) {
    const double maha = ((x - means_[m]).array().square() / variances_[m].array()).sum();
    terms[m] = log_weights_[m] + log_norms_[m] - 0.5 * maha;
  }
  return terms;
}

double GaussianMixture::log_density(const Vector& x) const {
  const auto terms = component_log_terms(x);
  return floored(log_sum_exp(terms));
}

std::size_t GaussianMixture::num_params() const { return weights_.size() * (1 + 2 * dim_); }

Vector GaussianMixture::parameters() const {
  const std::size_t M = weights_.size();
  Vector p(static_cast<Eigen::Index>(num_params()));
  Eigen::Index at = 0;
  for (std::size_t m = 0; m < M; ++m) p[at++] = std::log(std::max(weights_[m], 1e-300));
  for (std::size_t m = 0; m < M; ++m) {
    p.segment(at, static_cast<Eigen::Index>(dim_)) = means_[m];
    at += static_cast<Eigen::Index>(dim_);
  }
  for (std::size_t m = 0; m < M; ++m) {
    p.segment(at, static_cast<Eigen::Index>(dim_)) = variances_[m].array().log().matrix();
    at += static_cast<Eigen::Index>(dim_);
  }
  return p;
}

void GaussianMixture::set_parameters(const Vector& params) {
  if (static_cast<std::size_t>(params.size()) != num_params()) {
    throw InvalidArgument("GMM set_parameters: expected " + std::to_string(num_params()) + " values");
  }
  if (!params.allFinite()) throw InvalidArgument("GMM set_parameters: non-finite parameter");
  const std::size_t M = weights_.size();
  const auto d = static_cast<Eigen::Index>(dim_);
  const Vector logits = params.head(static_cast<Eigen::Index>(M));
  const double lse = log_sum_exp(std::span<const double>(logits.data(), M));
  for (std::size_t m = 0; m < M; ++m) weights_[m] = std::exp(logits[static_cast<Eigen::Index>(m)] - lse);
  Eigen::Index at = static_cast<Eigen::Index>(M);
  for (std::size_t m = 0; m < M; ++m, at += d) means_[m] = params.segment(at, d);
  for (std::size_t m = 0; m < M; ++m, at += d) {
    variances_[m] = params.segment(at, d).array().exp().matrix().cwiseMax(variance_floor_);
  }
  refresh_cache();
}

Vector GaussianMixture::nll_grad(const Vector& x) const {
  const std::size_t M = weights_.size();
  const auto d = static_cast<Eigen::Index>(dim_);
  const auto terms = component_log_terms(x);
  const double lse = log_sum_exp(terms);
  Vector g = Vector::Zero(static_cast<Eigen::Index>(num_params()));
  // Flat below the floor.
  if (!(lse > kLogDensityFloor)) return g;
  Eigen::Index mean_at = static_cast<Eigen::Index>(M);
  Eigen::Index var_at = mean_at + static_cast<Eigen::Index>(M) * d;
  for (std::size_t m = 0; m < M; ++m) {
    const double r = std::exp(terms[m] - lse);
    g[static_cast<Eigen::Index>(m)] = weights_[m] - r;
    const Vector diff = x - means_[m];
    const auto base = static_cast<Eigen::Index>(m) * d;
    g.segment(mean_at + base, d) = -r * (diff.array() / variances_[m].array()).matrix();
    g.segment(var_at + base, d) = (0.5 * r * (1.0 - diff.array().square() / variances_[m].array())).matrix();
  }
  return g;
}

namespace {

struct Responsibilities {
  double avg_log_likelihood = 0.0;
  Matrix r;  // n x M
};

Responsibilities e_step(const GaussianMixture& model, std::span<const Vector> samples) {
  Responsibilities out;
  const std::size_t M = model.num_components();
  out.r.resize(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(M));
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto terms = model.component_log_terms(samples[i]);
    const double lse = log_sum_exp(terms);
    total += lse;
    for (std::size_t m = 0; m < M; ++m) {
      out.r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m)) = std::exp(terms[m] - lse);
    }
  }
  out.avg_log_likelihood = total / static_cast<double>(samples.size());
  return out;
}

GaussianMixture m_step(const GaussianMixture& prev, std::span<const Vector> samples, const Matrix& r,
                       double variance_floor) {
  const std::size_t M = prev.num_components();
  const auto n = static_cast<double>(samples.size());
  std::vector<double> weights(M);
  std::vector<Vector> means = prev.means();
  std::vector<Vector> variances = prev.variances();
  for (std::size_t m = 0; m < M; ++m) {
    const auto col = static_cast<Eigen::Index>(m);
    const double nk = r.col(col).sum();
    weights[m] = nk / n;
    // An empty component keeps its parameters with zero weight.
    if (!(nk > 1e-300)) continue;
    Vector mean = Vector::Zero(means[m].size());
    for (std::size_t i = 0; i < samples.size(); ++i) mean += r(static_cast<Eigen::Index>(i), col) * samples[i];
    mean /= nk;
    Vector var = Vector::Zero(means[m].size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      var += r(static_cast<Eigen::Index>(i), col) * (samples[i] - mean).array().square().matrix();
    }
    var /= nk;
    means[m] = mean;
    variances[m] = var.cwiseMax(variance_floor);
  }
  return GaussianMixture(std::move(weights), std::move(means), std::move(variances), variance_floor);
}

}  // namespace

GmmFit gmm_fit(std::span<const Vector> samples, const GmmOptions& options) {
  const std::size_t M = options.num_components;
  if (M < 1) throw InvalidArgument("gmm_fit: num_components must be at least 1");
  if (samples.size() < M) throw InvalidArgument("gmm_fit: fewer samples than components");
  const auto d = samples.front().size();
  for (const auto& s : samples) {
    if (s.size() != d) throw InvalidArgument("gmm_fit: inconsistent sample dimension");
    if (!s.allFinite()) throw InvalidArgument("gmm_fit: non-finite sample");
  }

  // Global per-dimension variance seeds every component.
  Vector mean = Vector::Zero(d);
  for (const auto& s : samples) mean += s;
  mean /= static_cast<double>(samples.size());
  Vector var = Vector::Zero(d);
  for (const auto& s : samples) var += (s - mean).array().square().matrix();
  var /= static_cast<double>(samples.size());
  var = var.cwiseMax(options.variance_floor);

  Rng rng(options.seed);
  std::vector<Vector> means;
  std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
  means.push_back(samples[pick(rng)]);
  std::vector<double> nearest(samples.size(), std::numeric_limits<double>::infinity());
  while (means.size() < M) {
    double total = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      nearest[i] = std::min(nearest[i], (samples[i] - means.back()).squaredNorm());
      total += nearest[i];
    }
    if (!(total > 0.0)) {
      means.push_back(samples[pick(rng)]);
      continue;
    }
    std::uniform_real_distribution<double> u(0.0, total);
    double target = u(rng);
    std::size_t chosen = samples.size() - 1;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      target -= nearest[i];
      if (target <= 0.0) {
        chosen = i;
        break;
      }
    }
    means.push_back(samples[chosen]);
  }

  GaussianMixture model(std::vector<double>(M, 1.0 / static_cast<double>(M)), std::move(means),
                        std::vector<Vector>(M, var), options.variance_floor);
  GmmFit fit{model, {}, 0};
  auto resp = e_step(model, samples);
  fit.log_likelihood_trace.push_back(resp.avg_log_likelihood);
  for (std::size_t it = 1; it <= options.max_iters; ++it) {
    GaussianMixture next = m_step(fit.model, samples, resp.r, options.variance_floor);
    auto next_resp = e_step(next, samples);
    if (!std::isfinite(next_resp.avg_log_likelihood)) throw NumericalError("gmm_fit: log-likelihood became non-finite");
    const double improvement = next_resp.avg_log_likelihood - fit.log_likelihood_trace.back();
    fit.model = std::move(next);
    fit.log_likelihood_trace.push_back(next_resp.avg_log_likelihood);
    fit.iterations = it;
    resp = std::move(next_resp);
    if (improvement < options.tol) break;
  }
  return fit;
}

}  // namespace mpreuse
