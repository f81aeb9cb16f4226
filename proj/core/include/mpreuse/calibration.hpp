#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "mpreuse/common.hpp"
#include "mpreuse/data.hpp"
#include "mpreuse/ensemble.hpp"
#include "mpreuse/random.hpp"

namespace mpreuse {

// Lower bound on the weighted true-class probability inside the log.
inline constexpr double kProbabilityFloor = 1e-12;

/// Multiparty cross-entropy at one sample:
///   value = -log max(eps, sum_j w_j * p_j(y | x)),  w_j = p_j * exp(L_j - max L).
/// The x-dependent additive term (-max L + log p(x)) is not included, so values
/// are comparable across steps but are not absolute cross-entropies (except for
/// N = 1, where the weight is exactly 1).
struct MpceLoss {
  double value = 0.0;
  double inner = 0.0;  // the unfloored weighted true-class probability
  Vector weights;      // w_j
  Vector true_class_posteriors;
};

MpceLoss mpce_loss(const EnsembleModel& ens, const Vector& x, ClassLabel y);

// Which density estimators receive a generative-loss gradient for a sample of class y.
enum class DensityIndicator {
  kLabelSpace,  // parties whose label space contains y
  kAll,         // every party
};

/// Offsets of each party's blocks inside the flat gradient/parameter vector:
/// all classifier blocks in party order, then (when density updates are on)
/// the blocks of differentiable estimators in party order.
struct ParameterLayout {
  std::vector<Eigen::Index> theta_offset;
  std::vector<Eigen::Index> theta_size;
  std::vector<Eigen::Index> mu_offset;
  std::vector<Eigen::Index> mu_size;  // 0 for nonparametric estimators
  Eigen::Index total = 0;

  static ParameterLayout of(const EnsembleModel& ens, bool include_density);
};

Vector flatten_parameters(const EnsembleModel& ens, const ParameterLayout& layout);
void assign_parameters(EnsembleModel& ens, const ParameterLayout& layout, const Vector& params);

struct MpceGradOptions {
  bool include_density = false;
  DensityIndicator indicator = DensityIndicator::kLabelSpace;
};

/// Gradient of mpce_loss w.r.t. every party's classifier parameters (weights
/// w_j held constant), optionally followed by the negative log-likelihood
/// gradients of the selected density estimators.
Vector mpce_grad(const EnsembleModel& ens, const Vector& x, ClassLabel y, const MpceGradOptions& options = {});

struct ClipConfig {
  double clip_norm = 1.0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  // Clip every per-sample gradient before averaging (DP-SGD style) instead of the batch mean.
  bool per_example = false;
};

/// g / max(1, |g|_2 / C) + N(0, sigma^2 C^2 I).
Vector clip_and_noise(const Vector& g, const ClipConfig& cfg, Rng& rng);
Vector clip_and_noise(const Vector& g, const ClipConfig& cfg);

enum class CalibrationData {
  kPooled,    // batches drawn from the pooled training set
  kPerParty,  // pick a party proportionally to shard size, then a sample from its shard
};

struct CalibrationConfig {
  double learning_rate = 1e-5;
  std::size_t batch_size = 64;
  std::size_t steps = 0;
  bool update_density = false;
  DensityIndicator indicator = DensityIndicator::kLabelSpace;
  CalibrationData data = CalibrationData::kPooled;
  std::optional<ClipConfig> clip;
  // Test accuracy is recorded every eval_every steps (and at the last step); 0 disables it.
  std::size_t eval_every = 0;
  std::uint64_t seed = 0;
};

struct TraceRow {
  std::size_t step = 0;
  double loss = 0.0;  // mean batch loss before the update
  double test_accuracy = std::numeric_limits<double>::quiet_NaN();
};

struct CalibrationResult {
  EnsembleModel model;
  std::vector<TraceRow> trace;
};

/// Runs cfg.steps rounds of: draw a batch, average per-sample MPCE gradients,
/// optionally clip and noise, step all parameters by -learning_rate * g.
/// Throws NumericalError on a non-finite loss or gradient.
CalibrationResult calibrate(EnsembleModel ens, const LocalDataset& train, const CalibrationConfig& cfg,
                            const LocalDataset* test = nullptr, const std::vector<LocalDataset>* shards = nullptr);

}  // namespace mpreuse
