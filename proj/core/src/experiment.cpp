#include "mpreuse/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "mpreuse/plot.hpp"
#include "mpreuse/random.hpp"

namespace mpreuse {
namespace {

// Signed JSON integers count too: values written back from an int field are signed.
bool nonnegative_integer(const Json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

namespace fs = std::filesystem;

// Typed, path-aware access to one JSON object; rejects unknown keys on finish().
class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  [[noreturn]] static void fail(const std::string& path, const std::string& what) {
    throw ConfigError((path.empty() ? std::string("config") : path) + ": " + what);
  }

  std::string path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }
  const Json& at(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const Json& v = at(key);
    if (!v.is_number()) fail(path(key), "expected a number");
    return v.get<double>();
  }
  std::uint64_t uint(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const Json& v = at(key);
    if (!nonnegative_integer(v)) fail(path(key), "expected a nonnegative integer");
    return v.get<std::uint64_t>();
  }
  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const Json& v = at(key);
    if (!v.is_boolean()) fail(path(key), "expected true or false");
    return v.get<bool>();
  }
  std::string string(const std::string& key, std::string fallback) {
    if (!has(key)) return fallback;
    const Json& v = at(key);
    if (!v.is_string()) fail(path(key), "expected a string");
    return v.get<std::string>();
  }
  std::vector<std::size_t> uint_list(const std::string& key, std::vector<std::size_t> fallback) {
    if (!has(key)) return fallback;
    const Json& v = at(key);
    if (!v.is_array()) fail(path(key), "expected an array of integers");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!nonnegative_integer(v[i])) fail(path(key) + "[" + std::to_string(i) + "]", "expected a nonnegative integer");
      out.push_back(v[i].get<std::size_t>());
    }
    return out;
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.contains(item.key())) fail(path(item.key()), "unknown field");
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

fs::path resolve(const fs::path& p, const fs::path& base) { return p.is_relative() && !base.empty() ? base / p : p; }

DataSettings parse_data(Reader r, const fs::path& base) {
  DataSettings d;
  d.num_samples = r.uint("num_samples", d.num_samples);
  d.num_classes = static_cast<int>(r.uint("num_classes", static_cast<std::uint64_t>(d.num_classes)));
  d.train_ratio = r.number("train_ratio", d.train_ratio);
  if (r.has("train_csv")) d.train_csv = resolve(r.string("train_csv", ""), base);
  if (r.has("test_csv")) d.test_csv = resolve(r.string("test_csv", ""), base);
  r.finish();
  return d;
}

PartySettings parse_party(Reader r) {
  PartySettings p;
  if (r.has("classifier")) {
    Reader c(r.at("classifier"), r.path("classifier"));
    p.classifier.type = c.string("type", p.classifier.type);
    p.classifier.hidden = c.uint_list("hidden", p.classifier.hidden);
    p.classifier.train.learning_rate = c.number("learning_rate", p.classifier.train.learning_rate);
    p.classifier.train.epochs = c.uint("epochs", p.classifier.train.epochs);
    p.classifier.train.batch_size = c.uint("batch_size", p.classifier.train.batch_size);
    c.finish();
  }
  if (r.has("estimator")) {
    Reader e(r.at("estimator"), r.path("estimator"));
    p.estimator.type = e.string("type", p.estimator.type);
    p.estimator.bandwidth = e.number("bandwidth", p.estimator.bandwidth);
    p.estimator.gmm.num_components = e.uint("components", p.estimator.gmm.num_components);
    p.estimator.gmm.tol = e.number("tol", p.estimator.gmm.tol);
    p.estimator.gmm.max_iters = e.uint("max_iters", p.estimator.gmm.max_iters);
    p.estimator.gmm.variance_floor = e.number("variance_floor", p.estimator.gmm.variance_floor);
    e.finish();
  }
  r.finish();
  return p;
}

CalibrationSettings parse_calibration(Reader r) {
  CalibrationSettings s;
  CalibrationConfig& c = s.config;
  s.enabled = r.boolean("enabled", s.enabled);
  s.from_raw = r.boolean("from_raw", s.from_raw);
  c.learning_rate = r.number("learning_rate", c.learning_rate);
  c.batch_size = r.uint("batch_size", c.batch_size);
  c.steps = r.uint("steps", c.steps);
  c.update_density = r.boolean("update_density", c.update_density);
  c.eval_every = r.uint("eval_every", c.eval_every);
  const std::string indicator = r.string("indicator", "label_space");
  if (indicator == "label_space") {
    c.indicator = DensityIndicator::kLabelSpace;
  } else if (indicator == "all") {
    c.indicator = DensityIndicator::kAll;
  } else {
    Reader::fail(r.path("indicator"), "expected \"label_space\" or \"all\", got \"" + indicator + "\"");
  }
  const std::string data = r.string("data", "pooled");
  if (data == "pooled") {
    c.data = CalibrationData::kPooled;
  } else if (data == "per_party") {
    c.data = CalibrationData::kPerParty;
  } else {
    Reader::fail(r.path("data"), "expected \"pooled\" or \"per_party\", got \"" + data + "\"");
  }
  if (r.has("clip")) {
    Reader k(r.at("clip"), r.path("clip"));
    ClipConfig clip;
    clip.clip_norm = k.number("norm", clip.clip_norm);
    clip.noise_sigma = k.number("sigma", clip.noise_sigma);
    clip.per_example = k.boolean("per_example", clip.per_example);
    k.finish();
    c.clip = clip;
  }
  r.finish();
  return s;
}

PlotSettings parse_plot(Reader r) {
  PlotSettings p;
  p.enabled = r.boolean("enabled", p.enabled);
  p.resolution = r.uint("resolution", p.resolution);
  if (r.has("density_party")) p.density_party = r.uint("density_party", 0);
  r.finish();
  return p;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::unique_ptr<Classifier> make_classifier(const ClassifierSettings& s, const std::vector<ClassLabel>& labels,
                                            std::size_t dim, std::uint64_t seed) {
  if (s.type == "softmax") return std::make_unique<SoftmaxRegression>(labels, dim, seed);
  return std::make_unique<MlpClassifier>(labels, dim, s.hidden, seed);
}

std::unique_ptr<DensityEstimator> make_estimator(const EstimatorSettings& s, const LocalDataset& shard,
                                                 std::uint64_t seed) {
  const auto xs = shard.features();
  if (s.type == "kde") return std::make_unique<KernelDensity>(kde_fit(xs, s.bandwidth));
  GmmOptions options = s.gmm;
  options.seed = seed;
  return std::make_unique<GaussianMixture>(gmm_fit(xs, options).model);
}

std::vector<ClassLabel> predict_all(const EnsembleModel& ens, const LocalDataset& test, Matrix* objective) {
  const auto xs = test.features();
  const auto om = evaluate_objective(ens, xs);
  if (objective) *objective = om.objective;
  return decide(om);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot open " + path.string() + " for writing");
  out << text;
}

Json seeds_json(const ExperimentConfig& cfg) {
  const SeedStreams streams(cfg.seed);
  Json parties = Json::array();
  for (std::size_t i = 0; i < cfg.parties.size(); ++i) {
    parties.push_back({{"init", streams.seed("init", i)}, {"train", streams.seed("train", i)},
                       {"gmm", streams.seed("gmm", i)}});
  }
  return {{"root", cfg.seed},
          {"data", streams.seed("data")},
          {"split", streams.seed("split")},
          {"partition", streams.seed("partition", cfg.partition.seed)},
          {"batching", streams.seed("batching")},
          {"noise", streams.seed("noise")},
          {"parties", parties}};
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const Json& j, const fs::path& base_dir) {
  Reader r(j, "");
  ExperimentConfig cfg;
  cfg.seed = r.uint("seed", cfg.seed);
  if (r.has("data")) cfg.data = parse_data(Reader(r.at("data"), "data"), base_dir);

  if (!r.has("partition")) Reader::fail("partition", "missing (a path or an inline spec)");
  const Json& part = r.at("partition");
  try {
    if (part.is_string()) {
      const fs::path p = resolve(part.get<std::string>(), base_dir);
      if (!fs::exists(p)) Reader::fail("partition", "file not found: " + p.string());
      cfg.partition = load_partition_spec(p);
    } else {
      cfg.partition = partition_spec_from_json(part);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    Reader::fail("partition", e.what());
  }

  if (!r.has("parties")) Reader::fail("parties", "missing");
  const Json& parties = r.at("parties");
  if (!parties.is_array()) Reader::fail("parties", "expected an array");
  for (std::size_t i = 0; i < parties.size(); ++i) {
    cfg.parties.push_back(parse_party(Reader(parties[i], "parties[" + std::to_string(i) + "]")));
  }
  if (r.has("calibration")) cfg.calibration = parse_calibration(Reader(r.at("calibration"), "calibration"));
  if (r.has("plot")) cfg.plot = parse_plot(Reader(r.at("plot"), "plot"));
  cfg.output_dir = r.string("output_dir", "");
  r.finish();
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  Json j;
  try {
    j = read_json_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return from_json(j, path.parent_path());
}

void ExperimentConfig::validate() const {
  const auto fail = [](const std::string& path, const std::string& what) { Reader::fail(path, what); };
  const bool from_csv = data.train_csv.has_value() || data.test_csv.has_value();
  if (from_csv) {
    if (!data.train_csv || !data.test_csv) fail("data", "train_csv and test_csv must be given together");
    if (!fs::exists(*data.train_csv)) fail("data.train_csv", "file not found: " + data.train_csv->string());
    if (!fs::exists(*data.test_csv)) fail("data.test_csv", "file not found: " + data.test_csv->string());
  } else {
    if (data.num_samples == 0) fail("data.num_samples", "must be positive");
    if (!(data.train_ratio > 0.0 && data.train_ratio < 1.0)) fail("data.train_ratio", "must lie in (0, 1)");
  }
  if (data.num_classes < 2) fail("data.num_classes", "must be at least 2");
  try {
    partition.validate(data.num_classes);
  } catch (const std::exception& e) {
    fail("partition", e.what());
  }
  if (parties.empty()) fail("parties", "at least one party is required");
  if (parties.size() != partition.parties.size()) {
    fail("parties", "has " + std::to_string(parties.size()) + " entries but the partition defines " +
                        std::to_string(partition.parties.size()) + " parties");
  }
  for (std::size_t i = 0; i < parties.size(); ++i) {
    const std::string base = "parties[" + std::to_string(i) + "]";
    const auto& c = parties[i].classifier;
    if (c.type != "softmax" && c.type != "mlp") fail(base + ".classifier.type", "expected \"softmax\" or \"mlp\"");
    if (c.type == "mlp" && std::find(c.hidden.begin(), c.hidden.end(), 0) != c.hidden.end()) {
      fail(base + ".classifier.hidden", "layer widths must be positive");
    }
    if (!(c.train.learning_rate > 0.0)) fail(base + ".classifier.learning_rate", "must be positive");
    if (c.train.batch_size == 0) fail(base + ".classifier.batch_size", "must be positive");
    const auto& e = parties[i].estimator;
    if (e.type != "kde" && e.type != "gmm") fail(base + ".estimator.type", "expected \"kde\" or \"gmm\"");
    if (e.type == "kde" && !(e.bandwidth > 0.0)) fail(base + ".estimator.bandwidth", "must be positive");
    if (e.type == "gmm" && e.gmm.num_components == 0) fail(base + ".estimator.components", "must be positive");
    if (e.type == "gmm" && !(e.gmm.variance_floor > 0.0)) fail(base + ".estimator.variance_floor", "must be positive");
  }
  const auto& cal = calibration.config;
  if (calibration.enabled) {
    if (!(cal.learning_rate > 0.0)) fail("calibration.learning_rate", "must be positive");
    if (cal.batch_size == 0) fail("calibration.batch_size", "must be positive");
    if (cal.clip) {
      if (!(cal.clip->clip_norm > 0.0)) fail("calibration.clip.norm", "must be positive");
      if (!(cal.clip->noise_sigma >= 0.0)) fail("calibration.clip.sigma", "must be nonnegative");
    }
  }
  if (plot.enabled) {
    if (plot.resolution == 0) fail("plot.resolution", "must be positive");
    if (plot.density_party && *plot.density_party >= parties.size()) fail("plot.density_party", "no such party");
  }
}

Json ExperimentConfig::to_json() const {
  Json d = {{"num_samples", data.num_samples}, {"num_classes", data.num_classes}, {"train_ratio", data.train_ratio}};
  if (data.train_csv) d["train_csv"] = data.train_csv->string();
  if (data.test_csv) d["test_csv"] = data.test_csv->string();
  Json ps = Json::array();
  for (const auto& p : parties) {
    Json c = {{"type", p.classifier.type},
              {"learning_rate", p.classifier.train.learning_rate},
              {"epochs", p.classifier.train.epochs},
              {"batch_size", p.classifier.train.batch_size}};
    if (p.classifier.type == "mlp") c["hidden"] = p.classifier.hidden;
    Json e = {{"type", p.estimator.type}};
    if (p.estimator.type == "kde") {
      e["bandwidth"] = p.estimator.bandwidth;
    } else {
      e["components"] = p.estimator.gmm.num_components;
      e["tol"] = p.estimator.gmm.tol;
      e["max_iters"] = p.estimator.gmm.max_iters;
      e["variance_floor"] = p.estimator.gmm.variance_floor;
    }
    ps.push_back({{"classifier", c}, {"estimator", e}});
  }
  const auto& c = calibration.config;
  Json cal = {{"enabled", calibration.enabled},
              {"from_raw", calibration.from_raw},
              {"learning_rate", c.learning_rate},
              {"batch_size", c.batch_size},
              {"steps", c.steps},
              {"update_density", c.update_density},
              {"indicator", c.indicator == DensityIndicator::kAll ? "all" : "label_space"},
              {"data", c.data == CalibrationData::kPerParty ? "per_party" : "pooled"},
              {"eval_every", c.eval_every}};
  if (c.clip) {
    cal["clip"] = {{"norm", c.clip->clip_norm}, {"sigma", c.clip->noise_sigma}, {"per_example", c.clip->per_example}};
  }
  Json pl = {{"enabled", plot.enabled}, {"resolution", plot.resolution}};
  if (plot.density_party) pl["density_party"] = *plot.density_party;
  return {{"seed", seed},
          {"data", d},
          {"partition", partition_spec_to_json(partition)},
          {"parties", ps},
          {"calibration", cal},
          {"plot", pl},
          {"output_dir", output_dir.string()}};
}

std::string MetricsReport::metrics_csv() const {
  std::ostringstream out;
  out << "method,accuracy\n";
  out << "ensemble," << format_double(ensemble_accuracy) << '\n';
  out << "max_model," << format_double(max_model_accuracy) << '\n';
  for (std::size_t i = 0; i < local_accuracy.size(); ++i) {
    out << "local_" << i << ',' << format_double(local_accuracy[i]) << '\n';
  }
  if (calibrated_accuracy) out << "calibrated," << format_double(*calibrated_accuracy) << '\n';
  return out.str();
}

Json MetricsReport::to_json() const {
  Json trace = Json::array();
  for (const auto& row : calibration_trace) {
    Json r = {{"step", row.step}, {"loss", row.loss}};
    if (!std::isnan(row.test_accuracy)) r["test_accuracy"] = row.test_accuracy;
    trace.push_back(r);
  }
  Json j = {{"seed", seed},
            {"shard_sizes", shard_sizes},
            {"accuracy", {{"ensemble", ensemble_accuracy}, {"max_model", max_model_accuracy}, {"local", local_accuracy}}},
            {"calibration_trace", trace},
            {"timings_seconds",
             {{"data", timings.data_seconds},
              {"training", timings.training_seconds},
              {"zero_shot", timings.zero_shot_seconds},
              {"calibration", timings.calibration_seconds}}}};
  if (calibrated_accuracy) j["accuracy"]["calibrated"] = *calibrated_accuracy;
  return j;
}

std::pair<LocalDataset, LocalDataset> prepare_data(const ExperimentConfig& cfg) {
  if (cfg.data.train_csv && cfg.data.test_csv) {
    return {read_csv(*cfg.data.train_csv, cfg.data.num_classes), read_csv(*cfg.data.test_csv, cfg.data.num_classes)};
  }
  const SeedStreams streams(cfg.seed);
  const auto all = generate_toy(streams.seed("data"), cfg.data.num_samples, cfg.data.num_classes);
  return split_train_test(all, cfg.data.train_ratio, streams.seed("split"));
}

std::vector<LocalDataset> partition_for(const ExperimentConfig& cfg, const LocalDataset& train) {
  PartitionSpec spec = cfg.partition;
  spec.seed = SeedStreams(cfg.seed).seed("partition", cfg.partition.seed);
  return partition(train, spec);
}

std::vector<PartyModel> train_parties(const ExperimentConfig& cfg, const std::vector<LocalDataset>& shards) {
  if (shards.size() != cfg.parties.size()) throw InvalidArgument("one shard per configured party is required");
  const SeedStreams streams(cfg.seed);
  std::vector<PartyModel> models;
  models.reserve(shards.size());
  for (std::size_t i = 0; i < shards.size(); ++i) {
    const auto& settings = cfg.parties[i];
    auto classifier =
        make_classifier(settings.classifier, shards[i].label_space(), shards[i].dim(), streams.seed("init", i));
    TrainOptions options = settings.classifier.train;
    options.seed = streams.seed("train", i);
    train(*classifier, shards[i], options);
    auto estimator = make_estimator(settings.estimator, shards[i], streams.seed("gmm", i));
    models.emplace_back(std::move(classifier), std::move(estimator), shards[i].size());
  }
  return models;
}

ExperimentOutputs run_experiment_full(const ExperimentConfig& cfg, bool write_artifacts) {
  cfg.validate();
  using Clock = std::chrono::steady_clock;
  const SeedStreams streams(cfg.seed);
  MetricsReport report;
  report.seed = cfg.seed;

  auto start = Clock::now();
  auto [train_set, test_set] = prepare_data(cfg);
  auto shards = partition_for(cfg, train_set);
  report.timings.data_seconds = seconds_since(start);
  for (const auto& s : shards) report.shard_sizes.push_back(s.size());

  start = Clock::now();
  EnsembleModel ensemble = build_ensemble(train_parties(cfg, shards), cfg.data.num_classes);
  report.timings.training_seconds = seconds_since(start);

  start = Clock::now();
  const auto test_x = test_set.features();
  const auto truth = test_set.labels();
  const auto om = evaluate_objective(ensemble, test_x);
  auto ensemble_pred = decide(om);
  auto max_pred = max_model_decide(om);
  report.ensemble_accuracy = accuracy(ensemble_pred, truth);
  report.max_model_accuracy = accuracy(max_pred, truth);
  for (const auto& p : ensemble.parties()) report.local_accuracy.push_back(accuracy(*p.classifier, test_set));
  report.timings.zero_shot_seconds = seconds_since(start);

  std::optional<EnsembleModel> calibrated;
  if (cfg.calibration.enabled) {
    start = Clock::now();
    EnsembleModel initial = ensemble;
    if (cfg.calibration.from_raw) {
      for (std::size_t i = 0; i < initial.num_parties(); ++i) {
        initial.party(i).classifier->reinitialize(streams.seed("init", i));
      }
    }
    CalibrationConfig cc = cfg.calibration.config;
    cc.seed = streams.seed("batching");
    if (cc.clip) cc.clip->seed = streams.seed("noise");
    auto result = calibrate(std::move(initial), train_set, cc, &test_set, &shards);
    report.calibration_trace = std::move(result.trace);
    calibrated = std::move(result.model);
    report.calibrated_accuracy = accuracy(decide(*calibrated, test_x), truth);
    report.timings.calibration_seconds = seconds_since(start);
  }

  if (write_artifacts && !cfg.output_dir.empty()) {
    const fs::path out = cfg.output_dir;
    fs::create_directories(out / "data");
    fs::create_directories(out / "shards");
    write_csv(train_set, out / "data" / "train.csv");
    write_csv(test_set, out / "data" / "test.csv");
    for (std::size_t i = 0; i < shards.size(); ++i) {
      write_csv(shards[i], out / "shards" / ("party" + std::to_string(i) + ".csv"));
    }
    save_ensemble(ensemble, out / "models");
    write_predictions_csv(out / "predictions.csv", ensemble_pred, &om.objective);
    write_predictions_csv(out / "max_model_predictions.csv", max_pred);
    if (calibrated) {
      save_ensemble(*calibrated, out / "calibrated");
      write_trace_csv(out / "trace.csv", report.calibration_trace);
      Matrix objective;
      const auto pred = predict_all(*calibrated, test_set, &objective);
      write_predictions_csv(out / "calibrated_predictions.csv", pred, &objective);
    }
    write_text(out / "metrics.csv", report.metrics_csv());
    write_json_file(report.to_json(), out / "metrics.json");
    Json resolved = cfg.to_json();
    resolved["seeds"] = seeds_json(cfg);
    write_json_file(resolved, out / "config.resolved.json");

    if (cfg.plot.enabled && ensemble.input_dim() == 2) {
      const Region region = bounding_region(test_set);
      plot_decision_boundary(ensemble, region, cfg.plot.resolution, out / "decision_boundary.svg", &test_set);
      if (calibrated) {
        plot_decision_boundary(*calibrated, region, cfg.plot.resolution, out / "calibrated_decision_boundary.svg",
                               &test_set);
      }
      for (std::size_t i = 0; i < ensemble.num_parties(); ++i) {
        if (cfg.plot.density_party && *cfg.plot.density_party != i) continue;
        plot_density(*ensemble.party(i).estimator, region, cfg.plot.resolution,
                     out / ("density_party" + std::to_string(i) + ".svg"));
      }
    }
  }

  return ExperimentOutputs{std::move(report),         std::move(train_set),     std::move(test_set),
                           std::move(shards),         std::move(ensemble),      std::move(calibrated),
                           std::move(ensemble_pred),  std::move(max_pred)};
}

MetricsReport run_experiment(const ExperimentConfig& cfg, bool write_artifacts) {
  return run_experiment_full(cfg, write_artifacts).report;
}

std::string SweepResult::runs_csv() const {
  std::ostringstream out;
  out << "seed,ensemble,max_model";
  const std::size_t n_local = runs.empty() ? 0 : runs.front().local_accuracy.size();
  const bool has_cal = !runs.empty() && runs.front().calibrated_accuracy.has_value();
  for (std::size_t i = 0; i < n_local; ++i) out << ",local_" << i;
  if (has_cal) out << ",calibrated";
  out << '\n';
  for (const auto& r : runs) {
    out << r.seed << ',' << format_double(r.ensemble_accuracy) << ',' << format_double(r.max_model_accuracy);
    for (double a : r.local_accuracy) out << ',' << format_double(a);
    if (has_cal) out << ',' << format_double(r.calibrated_accuracy.value_or(std::nan("")));
    out << '\n';
  }
  return out.str();
}

std::string SweepResult::summary_csv() const {
  std::ostringstream out;
  out << "method,mean,std,runs\n";
  for (const auto& s : summary) {
    out << s.method << ',' << format_double(s.mean) << ',' << format_double(s.stddev) << ',' << s.runs << '\n';
  }
  return out.str();
}

std::string SweepResult::summary_table() const {
  std::ostringstream out;
  out << "| method | accuracy (%) |\n|---|---|\n";
  char buf[64];
  for (const auto& s : summary) {
    std::snprintf(buf, sizeof(buf), "%.1f ± %.1f", 100.0 * s.mean, 100.0 * s.stddev);
    out << "| " << s.method << " | " << buf << " |\n";
  }
  return out.str();
}

SweepResult run_sweep(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds, std::size_t threads) {
  if (seeds.empty()) throw InvalidArgument("sweep needs at least one seed");
  cfg.validate();
  SweepResult result;
  result.runs.resize(seeds.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, seeds.size());

  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      try {
        ExperimentConfig run = cfg;
        run.seed = seeds[i];
        result.runs[i] = run_experiment(run, false);
      } catch (...) {
        const std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }
  if (error) std::rethrow_exception(error);

  const auto summarize = [&](const std::string& method, auto&& value) {
    std::vector<double> xs;
    for (const auto& r : result.runs) xs.push_back(value(r));
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    const double sd = xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0;
    result.summary.push_back({method, mean, sd, xs.size()});
  };
  summarize("ensemble", [](const MetricsReport& r) { return r.ensemble_accuracy; });
  summarize("max_model", [](const MetricsReport& r) { return r.max_model_accuracy; });
  for (std::size_t i = 0; i < result.runs.front().local_accuracy.size(); ++i) {
    summarize("local_" + std::to_string(i), [i](const MetricsReport& r) { return r.local_accuracy[i]; });
  }
  if (result.runs.front().calibrated_accuracy) {
    summarize("calibrated", [](const MetricsReport& r) { return *r.calibrated_accuracy; });
  }
  return result;
}

}  // namespace mpreuse
