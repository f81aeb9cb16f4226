#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "mpreuse/common.hpp"

namespace mpreuse {

// Replaces -inf so that max-subtracted exponentials never see inf - inf.
inline constexpr double kLogDensityFloor = -745.0;

/// log(sum_i exp(v_i)); -inf for an empty span or all -inf entries.
double log_sum_exp(std::span<const double> values);

/// Log-density estimator G: x -> log p(x | S).
///
/// Implementations are immutable once fitted and safe to query concurrently.
/// Estimators with trainable parameters additionally expose them as a flat
/// vector together with the gradient of the per-sample negative log-likelihood.
class DensityEstimator {
 public:
  virtual ~DensityEstimator() = default;

  virtual std::unique_ptr<DensityEstimator> clone() const = 0;
  virtual std::string_view kind() const = 0;
  virtual std::size_t dim() const = 0;

  // Natural-log density, floored at kLogDensityFloor. Throws on dimension mismatch.
  virtual double log_density(const Vector& x) const = 0;

  virtual bool differentiable() const { return false; }
  virtual std::size_t num_params() const { return 0; }
  virtual Vector parameters() const { return Vector(); }
  virtual void set_parameters(const Vector& params);
  // Gradient of -log p(x) w.r.t. parameters(); empty for nonparametric estimators.
  virtual Vector nll_grad(const Vector& x) const;
};

/// Gaussian kernel density estimate with isotropic bandwidth h:
/// p(x) = (1/n) sum_i N(x; x_i, h^2 I).
class KernelDensity final : public DensityEstimator {
 public:
  // points: one training point per row.
  KernelDensity(Matrix points, double bandwidth);

  std::unique_ptr<DensityEstimator> clone() const override { return std::make_unique<KernelDensity>(*this); }
  std::string_view kind() const override { return "kde"; }
  std::size_t dim() const override { return dim_; }
  double log_density(const Vector& x) const override;

  const Matrix& points() const { return points_; }
  std::size_t num_points() const { return static_cast<std::size_t>(points_.rows()); }
  double bandwidth() const { return bandwidth_; }

 private:
  Matrix points_;
  double bandwidth_;
  std::size_t dim_;
  double log_norm_;  // -log n - (d/2) log(2 pi h^2)
};

KernelDensity kde_fit(std::span<const Vector> samples, double bandwidth);

/// Diagonal-covariance Gaussian mixture.
///
/// Trainable parameters are laid out as [weight logits (M), means (M*d),
/// log-variances (M*d)], component-major. set_parameters re-applies the
/// variance floor, so gradient steps can never drive a variance to zero.
class GaussianMixture final : public DensityEstimator {
 public:
  static constexpr double kDefaultVarianceFloor = 1e-6;

  GaussianMixture(std::vector<double> weights, std::vector<Vector> means, std::vector<Vector> variances,
                  double variance_floor = kDefaultVarianceFloor);

  std::unique_ptr<DensityEstimator> clone() const override { return std::make_unique<GaussianMixture>(*this); }
  std::string_view kind() const override { return "gmm"; }
  std::size_t dim() const override { return dim_; }
  double log_density(const Vector& x) const override;

  bool differentiable() const override { return true; }
  std::size_t num_params() const override;
  Vector parameters() const override;
  void set_parameters(const Vector& params) override;
  Vector nll_grad(const Vector& x) const override;

  std::size_t num_components() const { return weights_.size(); }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<Vector>& means() const { return means_; }
  const std::vector<Vector>& variances() const { return variances_; }
  double variance_floor() const { return variance_floor_; }

  // log(pi_m) + log N(x; mu_m, Sigma_m) per component (unfloored).
  std::vector<double> component_log_terms(const Vector& x) const;

 private:
  void refresh_cache();

  std::vector<double> weights_;
  std::vector<Vector> means_;
  std::vector<Vector> variances_;
  double variance_floor_;
  std::size_t dim_;
  std::vector<double> log_weights_;
  std::vector<double> log_norms_;  // -(1/2) sum log(2 pi var)
};

struct GmmOptions {
  std::size_t num_components = 1;
  std::uint64_t seed = 0;
  double tol = 1e-6;
  std::size_t max_iters = 200;
  double variance_floor = GaussianMixture::kDefaultVarianceFloor;
};

struct GmmFit {
  GaussianMixture model;
  // Average log-likelihood of the data under the parameters entering each EM
  // iteration, followed by the value for the returned model.
  std::vector<double> log_likelihood_trace;
  std::size_t iterations = 0;
};

/// EM for diagonal Gaussian mixtures. Means are seeded by k-means++ style
/// selection from the samples; the run stops when the average log-likelihood
/// improves by less than tol or after max_iters iterations.
GmmFit gmm_fit(std::span<const Vector> samples, const GmmOptions& options);

}  // namespace mpreuse
