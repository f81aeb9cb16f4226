#include "mpreuse/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace mpreuse {
namespace {

struct SampleTerms {
  MpceLoss loss;
  std::vector<std::optional<std::size_t>> local_y;
};

SampleTerms sample_terms(const EnsembleModel& ens, const Vector& x, ClassLabel y) {
  if (y < 0 || y >= ens.num_classes()) {
    throw InvalidArgument("mpce: label " + std::to_string(y) + " outside [0, " + std::to_string(ens.num_classes()) + ")");
  }
  const std::size_t n = ens.num_parties();
  SampleTerms t;
  t.local_y.resize(n);
  Vector loglik(static_cast<Eigen::Index>(n));
  t.loss.true_class_posteriors = Vector::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    const auto& party = ens.party(j);
    const auto jj = static_cast<Eigen::Index>(j);
    loglik[jj] = party.estimator->log_density(x);
    t.local_y[j] = party.classifier->local_index(y);
    if (t.local_y[j]) {
      t.loss.true_class_posteriors[jj] = party.classifier->posterior(x)[static_cast<Eigen::Index>(*t.local_y[j])];
    }
  }
  const double top = loglik.maxCoeff();
  t.loss.weights.resize(static_cast<Eigen::Index>(n));
  double inner = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    t.loss.weights[jj] = ens.priors()[j] * std::exp(loglik[jj] - top);
    inner += t.loss.weights[jj] * t.loss.true_class_posteriors[jj];
  }
  t.loss.inner = inner;
  t.loss.value = -std::log(std::max(inner, kProbabilityFloor));
  return t;
}

Vector grad_from_terms(const EnsembleModel& ens, const Vector& x, const SampleTerms& t, const ParameterLayout& layout, const MpceGradOptions& options) {
  Vector g = Vector::Zero(layout.total);
  const std::size_t n = ens.num_parties();
  // Below the floor the loss is constant.
  if (t.loss.inner >= kProbabilityFloor) {
    for (std::size_t j = 0; j < n; ++j) {
      const double w = t.loss.weights[static_cast<Eigen::Index>(j)];
      if (!t.local_y[j] || w == 0.0) continue;
      const auto& clf = *ens.party(j).classifier;
      Vector upstream = Vector::Zero(static_cast<Eigen::Index>(clf.num_local_classes()));
      upstream[static_cast<Eigen::Index>(*t.local_y[j])] = -w / t.loss.inner;
      g.segment(layout.theta_offset[j], layout.theta_size[j]) = clf.posterior_grad(x, upstream);
    }
  }
  if (options.include_density) {
    for (std::size_t j = 0; j < n; ++j) {
      if (layout.mu_size[j] == 0) continue;
      const bool selected = options.indicator == DensityIndicator::kAll || t.local_y[j].has_value();
      if (!selected) continue;
      g.segment(layout.mu_offset[j], layout.mu_size[j]) = ens.party(j).estimator->nll_grad(x);
    }
  }
  return g;
}

}  // namespace

MpceLoss mpce_loss(const EnsembleModel& ens, const Vector& x, ClassLabel y) { return sample_terms(ens, x, y).loss; }

ParameterLayout ParameterLayout::of(const EnsembleModel& ens, bool include_density) {
  ParameterLayout layout;
  const std::size_t n = ens.num_parties();
  Eigen::Index at = 0;
  for (std::size_t j = 0; j < n; ++j) {
    layout.theta_offset.push_back(at);
    layout.theta_size.push_back(static_cast<Eigen::Index>(ens.party(j).classifier->num_params()));
    at += layout.theta_size.back();
  }
  for (std::size_t j = 0; j < n; ++j) {
    const auto& est = *ens.party(j).estimator;
    const Eigen::Index size = include_density && est.differentiable() ? static_cast<Eigen::Index>(est.num_params()) : 0;
    layout.mu_offset.push_back(at);
    layout.mu_size.push_back(size);
    at += size;
  }
  layout.total = at;
  return layout;
}

Vector flatten_parameters(const EnsembleModel& ens, const ParameterLayout& layout) {
  Vector p(layout.total);
  for (std::size_t j = 0; j < ens.num_parties(); ++j) {
    p.segment(layout.theta_offset[j], layout.theta_size[j]) = ens.party(j).classifier->parameters();
    if (layout.mu_size[j] > 0) p.segment(layout.mu_offset[j], layout.mu_size[j]) = ens.party(j).estimator->parameters();
  }
  return p;
}

void assign_parameters(EnsembleModel& ens, const ParameterLayout& layout, const Vector& params) {
  if (params.size() != layout.total) throw InvalidArgument("assign_parameters: length mismatch");
  for (std::size_t j = 0; j < ens.num_parties(); ++j) {
    ens.party(j).classifier->set_parameters(params.segment(layout.theta_offset[j], layout.theta_size[j]));
    if (layout.mu_size[j] > 0) {
      ens.party(j).estimator->set_parameters(params.segment(layout.mu_offset[j], layout.mu_size[j]));
    }
  }
}

Vector mpce_grad(const EnsembleModel& ens, const Vector& x, ClassLabel y, const MpceGradOptions& options) {
  const auto layout = ParameterLayout::of(ens, options.include_density);
  return grad_from_terms(ens, x, sample_terms(ens, x, y), layout, options);
}

Vector clip_and_noise(const Vector& g, const ClipConfig& cfg, Rng& rng) {
  if (!(cfg.clip_norm > 0.0)) throw InvalidArgument("clip_and_noise: clip norm must be positive");
  if (!(cfg.noise_sigma >= 0.0)) throw InvalidArgument("clip_and_noise: noise sigma must be nonnegative");
  if (!g.allFinite()) throw InvalidArgument("clip_and_noise: gradient is not finite");
  Vector out = g / std::max(1.0, g.norm() / cfg.clip_norm);
  // Rounding can leave the scaled norm an ulp above C; shrink until the bound holds exactly.
  while (out.norm() > cfg.clip_norm) out *= std::nextafter(1.0, 0.0);
  if (cfg.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma * cfg.clip_norm);
    for (Eigen::Index i = 0; i < out.size(); ++i) out[i] += noise(rng);
  }
  return out;
}

Vector clip_and_noise(const Vector& g, const ClipConfig& cfg) {
  Rng rng(cfg.seed);
  return clip_and_noise(g, cfg, rng);
}

namespace {

double ensemble_accuracy(const EnsembleModel& ens, const LocalDataset& ds) {
  const auto queries = ds.features();
  const auto predicted = decide(ens, queries);
  const auto truth = ds.labels();
  return accuracy(predicted, truth);
}

}  // namespace

CalibrationResult calibrate(EnsembleModel ens, const LocalDataset& train, const CalibrationConfig& cfg,
                            const LocalDataset* test, const std::vector<LocalDataset>* shards) {
  if (!(cfg.learning_rate > 0.0)) throw InvalidArgument("calibrate: learning rate must be positive");
  if (cfg.batch_size < 1) throw InvalidArgument("calibrate: batch size must be at least 1");
  if (train.empty()) throw InvalidArgument("calibrate: empty training set");
  if (train.num_classes() > ens.num_classes()) throw InvalidArgument("calibrate: training labels exceed K");
  if (cfg.data == CalibrationData::kPerParty) {
    if (!shards || shards->size() != ens.num_parties()) {
      throw InvalidArgument("calibrate: per-party mode needs one shard per party");
    }
    for (const auto& s : *shards) {
      if (s.empty()) throw InvalidArgument("calibrate: per-party mode got an empty shard");
    }
  }
  if (cfg.clip) {
    if (!(cfg.clip->clip_norm > 0.0) || !(cfg.clip->noise_sigma >= 0.0)) {
      throw InvalidArgument("calibrate: invalid clip configuration");
    }
  }

  const MpceGradOptions grad_options{cfg.update_density, cfg.indicator};
  const auto layout = ParameterLayout::of(ens, cfg.update_density);
  Vector params = flatten_parameters(ens, layout);

  const SeedStreams streams(cfg.seed);
  Rng batch_rng = streams.rng("batching");
  Rng noise_rng(cfg.clip ? cfg.clip->seed : 0);

  std::vector<std::size_t> pool(train.size());
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  std::vector<double> shard_weights;
  if (shards) {
    for (const auto& s : *shards) shard_weights.push_back(static_cast<double>(s.size()));
  }

  auto draw_batch = [&]() {
    std::vector<const LabeledSample*> batch;
    batch.reserve(cfg.batch_size);
    if (cfg.data == CalibrationData::kPerParty) {
      std::discrete_distribution<std::size_t> which(shard_weights.begin(), shard_weights.end());
      for (std::size_t b = 0; b < cfg.batch_size; ++b) {
        const auto& shard = (*shards)[which(batch_rng)];
        std::uniform_int_distribution<std::size_t> pick(0, shard.size() - 1);
        batch.push_back(&shard[pick(batch_rng)]);
      }
    } else if (cfg.batch_size <= pool.size()) {
      // Partial Fisher-Yates: the first batch_size entries become a uniform subset.
      for (std::size_t b = 0; b < cfg.batch_size; ++b) {
        std::uniform_int_distribution<std::size_t> pick(b, pool.size() - 1);
        std::swap(pool[b], pool[pick(batch_rng)]);
        batch.push_back(&train[pool[b]]);
      }
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      for (std::size_t b = 0; b < cfg.batch_size; ++b) batch.push_back(&train[pick(batch_rng)]);
    }
    return batch;
  };

  std::vector<TraceRow> trace;
  trace.reserve(cfg.steps);
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    const auto batch = draw_batch();
    const auto b = static_cast<double>(batch.size());
    double loss = 0.0;
    Vector g = Vector::Zero(layout.total);
    for (const LabeledSample* s : batch) {
      const auto terms = sample_terms(ens, s->features, s->label);
      loss += terms.loss.value;
      Vector gi = grad_from_terms(ens, s->features, terms, layout, grad_options);
      if (cfg.clip && cfg.clip->per_example) gi /= std::max(1.0, gi.norm() / cfg.clip->clip_norm);
      g += gi;
    }
    loss /= b;
    if (!std::isfinite(loss) || !g.allFinite()) {
      throw NumericalError("calibrate: non-finite loss or gradient at step " + std::to_string(step) +
                           " (loss = " + std::to_string(loss) + ")");
    }
    if (cfg.clip && cfg.clip->per_example) {
      if (cfg.clip->noise_sigma > 0.0) {
        std::normal_distribution<double> noise(0.0, cfg.clip->noise_sigma * cfg.clip->clip_norm);
        for (Eigen::Index i = 0; i < g.size(); ++i) g[i] += noise(noise_rng);
      }
      g /= b;
    } else {
      g /= b;
      if (cfg.clip) g = clip_and_noise(g, *cfg.clip, noise_rng);
    }
    params -= cfg.learning_rate * g;
    assign_parameters(ens, layout, params);
    // Estimators may project parameters (variance floor); keep the flat copy in sync.
    if (cfg.update_density) params = flatten_parameters(ens, layout);

    TraceRow row{step, loss, std::numeric_limits<double>::quiet_NaN()};
    if (test && cfg.eval_every > 0 && (step % cfg.eval_every == 0 || step == cfg.steps)) {
      row.test_accuracy = ensemble_accuracy(ens, *test);
    }
    trace.push_back(row);
  }
  return {std::move(ens), std::move(trace)};
}

}  // namespace mpreuse
