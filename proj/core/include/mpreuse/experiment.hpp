#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mpreuse/calibration.hpp"
#include "mpreuse/classifier.hpp"
#include "mpreuse/data.hpp"
#include "mpreuse/density.hpp"
#include "mpreuse/ensemble.hpp"
#include "mpreuse/serialization.hpp"

namespace mpreuse {

/// Config validation failure; the message starts with the offending field path.
class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

struct DataSettings {
  // Synthetic blobs unless both CSV paths are set.
  std::size_t num_samples = 2000;
  int num_classes = 5;
  double train_ratio = 0.5;
  std::optional<std::filesystem::path> train_csv;
  std::optional<std::filesystem::path> test_csv;
};

struct ClassifierSettings {
  std::string type = "softmax";  // "softmax" | "mlp"
  std::vector<std::size_t> hidden = {32};
  TrainOptions train;  // seed is overwritten from the root seed
};

struct EstimatorSettings {
  std::string type = "kde";  // "kde" | "gmm"
  double bandwidth = 0.1;
  GmmOptions gmm;  // seed is overwritten from the root seed
};

struct PartySettings {
  ClassifierSettings classifier;
  EstimatorSettings estimator;
};

struct CalibrationSettings {
  bool enabled = false;
  // Re-initialize every classifier at random before calibrating.
  bool from_raw = false;
  CalibrationConfig config;  // seed is overwritten from the root seed
};

struct PlotSettings {
  bool enabled = false;
  std::size_t resolution = 200;
  std::optional<std::size_t> density_party;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DataSettings data;
  PartitionSpec partition;
  std::vector<PartySettings> parties;
  CalibrationSettings calibration;
  PlotSettings plot;
  std::filesystem::path output_dir;

  /// Parses the JSON config format (see README). Relative paths resolve
  /// against base_dir. Throws ConfigError naming the field path.
  static ExperimentConfig from_json(const Json& j, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);
  Json to_json() const;
  void validate() const;
};

struct StageTimings {
  double data_seconds = 0.0;
  double training_seconds = 0.0;
  double zero_shot_seconds = 0.0;
  double calibration_seconds = 0.0;
};

struct MetricsReport {
  std::uint64_t seed = 0;
  std::vector<std::size_t> shard_sizes;
  double ensemble_accuracy = 0.0;
  double max_model_accuracy = 0.0;
  std::vector<double> local_accuracy;  // each party's classifier alone on the full test set
  std::optional<double> calibrated_accuracy;
  std::vector<TraceRow> calibration_trace;
  StageTimings timings;

  // method,accuracy rows; contains no timings, so identical runs give identical bytes.
  std::string metrics_csv() const;
  Json to_json() const;
};

/// Everything produced by one run, kept in memory for callers that need the models.
struct ExperimentOutputs {
  MetricsReport report;
  LocalDataset train;
  LocalDataset test;
  std::vector<LocalDataset> shards;
  EnsembleModel ensemble;
  std::optional<EnsembleModel> calibrated;
  std::vector<ClassLabel> ensemble_predictions;
  std::vector<ClassLabel> max_model_predictions;
};

/// Stage helpers, exposed for the CLI subcommands.
std::pair<LocalDataset, LocalDataset> prepare_data(const ExperimentConfig& cfg);
std::vector<PartyModel> train_parties(const ExperimentConfig& cfg, const std::vector<LocalDataset>& shards);
std::vector<LocalDataset> partition_for(const ExperimentConfig& cfg, const LocalDataset& train);

/// Trains parties on their shards, evaluates zero-shot and max-model decisions
/// on the test set, optionally calibrates, and (when output_dir is set and
/// write_artifacts is true) writes every artifact there.
ExperimentOutputs run_experiment_full(const ExperimentConfig& cfg, bool write_artifacts = true);
MetricsReport run_experiment(const ExperimentConfig& cfg, bool write_artifacts = true);

struct SummaryRow {
  std::string method;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation
  std::size_t runs = 0;
};

struct SweepResult {
  std::vector<MetricsReport> runs;
  std::vector<SummaryRow> summary;

  std::string runs_csv() const;
  std::string summary_csv() const;
  // Markdown table, one row per method: "mean ± std" in percent.
  std::string summary_table() const;
};

// Runs cfg once per seed without writing artifacts, on up to `threads`
// workers (0 = hardware concurrency). Results keep the seed order.
SweepResult run_sweep(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds, std::size_t threads = 0);

}  // namespace mpreuse
