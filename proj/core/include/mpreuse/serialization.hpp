#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

#include "mpreuse/calibration.hpp"
#include "mpreuse/classifier.hpp"
#include "mpreuse/data.hpp"
#include "mpreuse/density.hpp"
#include "mpreuse/ensemble.hpp"

namespace mpreuse {

using Json = nlohmann::json;

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const Json& j, const std::filesystem::path& path);

// {"rows": r, "cols": c, "data": [row-major values]}
Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);

/// SoftmaxRegression:
///   {"type": "softmax", "label_space": [...], "weights": matrix, "bias": [...]}
/// MlpClassifier:
///   {"type": "mlp", "label_space": [...], "activation": "tanh",
///    "layers": [{"weights": matrix, "bias": [...]}, ...]}
Json classifier_to_json(const Classifier& model);
std::unique_ptr<Classifier> classifier_from_json(const Json& j);

/// KernelDensity: {"type": "kde", "bandwidth": h, "points": matrix}
/// GaussianMixture: {"type": "gmm", "weights": [...], "means": [[...]],
///                   "variances": [[...]], "variance_floor": v}
Json estimator_to_json(const DensityEstimator& model);
std::unique_ptr<DensityEstimator> estimator_from_json(const Json& j);

// {"seed": int, "parties": [{"classes": [int], "fraction": float}]}
PartitionSpec partition_spec_from_json(const Json& j);
Json partition_spec_to_json(const PartitionSpec& spec);
PartitionSpec load_partition_spec(const std::filesystem::path& path);

/// Writes one classifier and one estimator file per party into dir and a
/// manifest.json listing them with shard sizes:
///   {"num_classes": K, "parties": [{"classifier": "party0_classifier.json",
///     "estimator": "party0_density.json", "shard_size": n}, ...]}
/// Returns the manifest path. Model paths are relative to the manifest.
std::filesystem::path save_ensemble(const EnsembleModel& ens, const std::filesystem::path& dir);
EnsembleModel load_ensemble(const std::filesystem::path& manifest);

// query_index,label[,J0,...,J{K-1}]
void write_predictions_csv(const std::filesystem::path& path, std::span<const ClassLabel> labels,
                           const Matrix* objective = nullptr);
std::vector<ClassLabel> read_predictions_csv(const std::filesystem::path& path);

// step,loss,test_accuracy (empty field when accuracy was not evaluated)
void write_trace_csv(const std::filesystem::path& path, std::span<const TraceRow> trace);

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace mpreuse
