#include "mpreuse/serialization.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <string>

namespace mpreuse {
namespace fs = std::filesystem;

namespace {

const Json& field(const Json& j, const char* key, std::string_view where) {
  if (!j.is_object() || !j.contains(key)) throw InvalidArgument(std::string(where) + ": missing field '" + key + "'");
  return j.at(key);
}

Json vector_to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Vector vector_from_json(const Json& j, std::string_view where) {
  if (!j.is_array()) throw InvalidArgument(std::string(where) + ": expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw InvalidArgument(std::string(where) + ": expected an array of numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

std::vector<ClassLabel> labels_from_json(const Json& j, std::string_view where) {
  if (!j.is_array()) throw InvalidArgument(std::string(where) + ": expected an array of class labels");
  std::vector<ClassLabel> out;
  for (const auto& v : j) {
    if (!v.is_number_integer()) throw InvalidArgument(std::string(where) + ": class labels must be integers");
    out.push_back(v.get<ClassLabel>());
  }
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

Json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

void write_json_file(const Json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

Json matrix_to_json(const Matrix& m) {
  Json data = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const Json& j) {
  const auto rows = field(j, "rows", "matrix").get<Eigen::Index>();
  const auto cols = field(j, "cols", "matrix").get<Eigen::Index>();
  const Vector data = vector_from_json(field(j, "data", "matrix"), "matrix.data");
  if (rows < 0 || cols < 0 || data.size() != rows * cols) throw InvalidArgument("matrix: data length != rows * cols");
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[r * cols + c];
  }
  return m;
}

Json classifier_to_json(const Classifier& model) {
  Json j;
  j["type"] = std::string(model.kind());
  j["label_space"] = model.label_space();
  if (const auto* s = dynamic_cast<const SoftmaxRegression*>(&model)) {
    j["weights"] = matrix_to_json(s->weights());
    j["bias"] = vector_to_json(s->bias());
  } else if (const auto* m = dynamic_cast<const MlpClassifier*>(&model)) {
    j["activation"] = "tanh";
    Json layers = Json::array();
    for (const auto& layer : m->layers()) {
      layers.push_back({{"weights", matrix_to_json(layer.weights)}, {"bias", vector_to_json(layer.bias)}});
    }
    j["layers"] = std::move(layers);
  } else {
    throw InvalidArgument("classifier_to_json: unsupported classifier type '" + std::string(model.kind()) + "'");
  }
  return j;
}

std::unique_ptr<Classifier> classifier_from_json(const Json& j) {
  const auto type = field(j, "type", "classifier").get<std::string>();
  auto labels = labels_from_json(field(j, "label_space", "classifier"), "classifier.label_space");
  if (type == "softmax") {
    return std::make_unique<SoftmaxRegression>(std::move(labels), matrix_from_json(field(j, "weights", "classifier")),
                                               vector_from_json(field(j, "bias", "classifier"), "classifier.bias"));
  }
  if (type == "mlp") {
    if (j.contains("activation") && j["activation"] != "tanh") {
      throw InvalidArgument("classifier: only tanh MLPs are supported");
    }
    std::vector<DenseLayer> layers;
    for (const auto& l : field(j, "layers", "classifier")) {
      layers.push_back({matrix_from_json(field(l, "weights", "classifier.layers[]")),
                        vector_from_json(field(l, "bias", "classifier.layers[]"), "classifier.layers[].bias")});
    }
    return std::make_unique<MlpClassifier>(std::move(labels), std::move(layers));
  }
  throw InvalidArgument("classifier: unknown type '" + type + "'");
}

Json estimator_to_json(const DensityEstimator& model) {
  Json j;
  j["type"] = std::string(model.kind());
  if (const auto* k = dynamic_cast<const KernelDensity*>(&model)) {
    j["bandwidth"] = k->bandwidth();
    j["points"] = matrix_to_json(k->points());
  } else if (const auto* g = dynamic_cast<const GaussianMixture*>(&model)) {
    j["weights"] = g->weights();
    Json means = Json::array();
    Json vars = Json::array();
    for (std::size_t m = 0; m < g->num_components(); ++m) {
      means.push_back(vector_to_json(g->means()[m]));
      vars.push_back(vector_to_json(g->variances()[m]));
    }
    j["means"] = std::move(means);
    j["variances"] = std::move(vars);
    j["variance_floor"] = g->variance_floor();
  } else {
    throw InvalidArgument("estimator_to_json: unsupported estimator type '" + std::string(model.kind()) + "'");
  }
  return j;
}

std::unique_ptr<DensityEstimator> estimator_from_json(const Json& j) {
  const auto type = field(j, "type", "estimator").get<std::string>();
  if (type == "kde") {
    return std::make_unique<KernelDensity>(matrix_from_json(field(j, "points", "estimator")),
                                           field(j, "bandwidth", "estimator").get<double>());
  }
  if (type == "gmm") {
    const Json& means_j = field(j, "means", "estimator");
    const Json& vars_j = field(j, "variances", "estimator");
    std::vector<Vector> means;
    std::vector<Vector> vars;
    for (const auto& m : means_j) means.push_back(vector_from_json(m, "estimator.means[]"));
    for (const auto& v : vars_j) vars.push_back(vector_from_json(v, "estimator.variances[]"));
    const double floor = j.value("variance_floor", GaussianMixture::kDefaultVarianceFloor);
    return std::make_unique<GaussianMixture>(field(j, "weights", "estimator").get<std::vector<double>>(),
                                             std::move(means), std::move(vars), floor);
  }
  throw InvalidArgument("estimator: unknown type '" + type + "'");
}

PartitionSpec partition_spec_from_json(const Json& j) {
  PartitionSpec spec;
  if (!j.is_object()) throw InvalidArgument("partition spec: expected an object");
  spec.seed = j.value("seed", std::uint64_t{0});
  const Json& parties = field(j, "parties", "partition spec");
  if (!parties.is_array()) throw InvalidArgument("partition spec: 'parties' must be an array");
  for (std::size_t p = 0; p < parties.size(); ++p) {
    const std::string where = "parties[" + std::to_string(p) + "]";
    PartyRule rule;
    rule.classes = labels_from_json(field(parties[p], "classes", where), where + ".classes");
    rule.fraction = parties[p].value("fraction", 1.0);
    if (parties[p].contains("class_fractions")) {
      const Json& fr = parties[p]["class_fractions"];
      if (!fr.is_array()) throw InvalidArgument(where + ".class_fractions must be an array of numbers");
      for (const auto& f : fr) {
        if (!f.is_number()) throw InvalidArgument(where + ".class_fractions must be an array of numbers");
        rule.class_fractions.push_back(f.get<double>());
      }
    }
    spec.parties.push_back(std::move(rule));
  }
  return spec;
}

Json partition_spec_to_json(const PartitionSpec& spec) {
  Json parties = Json::array();
  for (const auto& rule : spec.parties) {
    Json r = {{"classes", rule.classes}, {"fraction", rule.fraction}};
    if (!rule.class_fractions.empty()) r["class_fractions"] = rule.class_fractions;
    parties.push_back(std::move(r));
  }
  return {{"seed", spec.seed}, {"parties", std::move(parties)}};
}

PartitionSpec load_partition_spec(const fs::path& path) {
  try {
    return partition_spec_from_json(read_json_file(path));
  } catch (const Json::exception& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

fs::path save_ensemble(const EnsembleModel& ens, const fs::path& dir) {
  fs::create_directories(dir);
  Json parties = Json::array();
  for (std::size_t j = 0; j < ens.num_parties(); ++j) {
    const std::string clf = "party" + std::to_string(j) + "_classifier.json";
    const std::string est = "party" + std::to_string(j) + "_density.json";
    write_json_file(classifier_to_json(*ens.party(j).classifier), dir / clf);
    write_json_file(estimator_to_json(*ens.party(j).estimator), dir / est);
    parties.push_back({{"classifier", clf}, {"estimator", est}, {"shard_size", ens.party(j).shard_size}});
  }
  const fs::path manifest = dir / "manifest.json";
  write_json_file({{"num_classes", ens.num_classes()}, {"parties", std::move(parties)}}, manifest);
  return manifest;
}

EnsembleModel load_ensemble(const fs::path& manifest) {
  const Json j = read_json_file(manifest);
  const fs::path base = manifest.parent_path();
  try {
    std::vector<PartyModel> parties;
    for (const auto& p : field(j, "parties", "manifest")) {
      parties.emplace_back(classifier_from_json(read_json_file(base / field(p, "classifier", "manifest.parties[]").get<std::string>())),
                           estimator_from_json(read_json_file(base / field(p, "estimator", "manifest.parties[]").get<std::string>())),
                           field(p, "shard_size", "manifest.parties[]").get<std::size_t>());
    }
    return EnsembleModel(std::move(parties), field(j, "num_classes", "manifest").get<int>());
  } catch (const Json::exception& e) {
    throw InvalidArgument(manifest.string() + ": " + e.what());
  }
}

void write_predictions_csv(const fs::path& path, std::span<const ClassLabel> labels, const Matrix* objective) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot open " + path.string() + " for writing");
  out << "query_index,label";
  if (objective) {
    for (Eigen::Index k = 0; k < objective->cols(); ++k) out << ",J" << k;
  }
  out << '\n';
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out << i << ',' << labels[i];
    if (objective) {
      for (Eigen::Index k = 0; k < objective->cols(); ++k) out << ',' << format_double((*objective)(static_cast<Eigen::Index>(i), k));
    }
    out << '\n';
  }
}

std::vector<ClassLabel> read_predictions_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<ClassLabel> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto first = line.find(',');
    const auto second = line.find(',', first + 1);
    if (first == std::string::npos) throw InvalidArgument(path.string() + ":" + std::to_string(line_no) + ": malformed row");
    const std::string_view field_view(line.data() + first + 1,
                                      (second == std::string::npos ? line.size() : second) - first - 1);
    ClassLabel label = 0;
    auto [ptr, ec] = std::from_chars(field_view.data(), field_view.data() + field_view.size(), label);
    if (ec != std::errc() || ptr != field_view.data() + field_view.size()) {
      throw InvalidArgument(path.string() + ":" + std::to_string(line_no) + ": bad label");
    }
    labels.push_back(label);
  }
  return labels;
}

void write_trace_csv(const fs::path& path, std::span<const TraceRow> trace) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot open " + path.string() + " for writing");
  out << "step,loss,test_accuracy\n";
  for (const auto& row : trace) {
    out << row.step << ',' << format_double(row.loss) << ',';
    if (!std::isnan(row.test_accuracy)) out << format_double(row.test_accuracy);
    out << '\n';
  }
}

}  // namespace mpreuse
