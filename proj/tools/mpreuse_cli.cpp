// mpreuse command line: data generation, partitioning, local training,
// zero-shot evaluation, calibration, plotting and seed sweeps.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "mpreuse/calibration.hpp"
#include "mpreuse/data.hpp"
#include "mpreuse/ensemble.hpp"
#include "mpreuse/experiment.hpp"
#include "mpreuse/plot.hpp"
#include "mpreuse/serialization.hpp"

namespace fs = std::filesystem;
using namespace mpreuse;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool config_required) {
  auto* opt = cmd->add_option("--config", c.config, "experiment config (JSON)");
  if (config_required) opt->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "root seed override");
  cmd->add_option("--out", c.out, "output directory override");
}

ExperimentConfig load_config(const Common& c) {
  auto cfg = ExperimentConfig::load(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.output_dir = c.out;
  return cfg;
}

fs::path require_out(const Common& c, const ExperimentConfig* cfg = nullptr) {
  fs::path out = c.out.empty() && cfg ? cfg->output_dir : fs::path(c.out);
  if (out.empty()) throw InvalidArgument("--out: an output directory is required");
  fs::create_directories(out);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot open " + path.string() + " for writing");
  f << text;
}

std::vector<LocalDataset> read_shards(const fs::path& dir, const PartitionSpec& spec, int num_classes) {
  std::vector<LocalDataset> shards;
  for (std::size_t i = 0; i < spec.parties.size(); ++i) {
    const auto path = dir / ("party" + std::to_string(i) + ".csv");
    auto ds = read_csv(path, num_classes);
    shards.emplace_back(ds.samples(), spec.parties[i].classes, num_classes);
  }
  return shards;
}

void print_report(const MetricsReport& r) {
  std::cout << "ensemble accuracy:  " << r.ensemble_accuracy << '\n'
            << "max-model accuracy: " << r.max_model_accuracy << '\n';
  for (std::size_t i = 0; i < r.local_accuracy.size(); ++i) {
    std::cout << "party " << i << " alone:       " << r.local_accuracy[i] << '\n';
  }
  if (r.calibrated_accuracy) std::cout << "calibrated accuracy: " << *r.calibrated_accuracy << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiparty model reuse: density-weighted ensembles of local classifiers"};
  app.require_subcommand(1);

  // gen-data
  Common gen;
  std::size_t gen_n = 2000;
  int gen_k = 5;
  double gen_ratio = 0.5;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate the 2D blob dataset and split it");
  add_common(gen_cmd, gen, false);
  gen_cmd->add_option("--n", gen_n, "number of samples");
  gen_cmd->add_option("--classes", gen_k, "number of classes")->check(CLI::Range(2, 1000));
  gen_cmd->add_option("--ratio", gen_ratio, "train fraction")->check(CLI::Range(0.0, 1.0));

  // partition
  Common part;
  std::string part_data, part_spec;
  int part_k = 0;
  auto* part_cmd = app.add_subcommand("partition", "split a labelled CSV into party shards");
  add_common(part_cmd, part, false);
  part_cmd->add_option("--data", part_data, "input CSV")->required()->check(CLI::ExistingFile);
  part_cmd->add_option("--spec", part_spec, "partition spec JSON (defaults to the config's)");
  part_cmd->add_option("--classes", part_k, "global class count (default: max label + 1)");

  // train-local
  Common tr;
  std::string tr_shards;
  auto* tr_cmd = app.add_subcommand("train-local", "train every party's classifier and density estimator");
  add_common(tr_cmd, tr, true);
  tr_cmd->add_option("--shards", tr_shards, "directory of party<i>.csv shards (default: build from the config)");

  // eval-zeroshot
  Common ev;
  std::string ev_manifest, ev_test;
  auto* ev_cmd = app.add_subcommand("eval-zeroshot", "evaluate the ensemble and the max-model baseline");
  add_common(ev_cmd, ev, false);
  ev_cmd->add_option("--manifest", ev_manifest, "model manifest.json")->required()->check(CLI::ExistingFile);
  ev_cmd->add_option("--test", ev_test, "test CSV")->required()->check(CLI::ExistingFile);

  // calibrate
  Common cal;
  std::string cal_manifest, cal_train, cal_test, cal_shards;
  std::optional<std::size_t> cal_steps;
  std::optional<double> cal_lr;
  auto* cal_cmd = app.add_subcommand("calibrate", "fine-tune the composite model with the multiparty cross-entropy");
  add_common(cal_cmd, cal, false);
  cal_cmd->add_option("--manifest", cal_manifest, "model manifest.json")->required()->check(CLI::ExistingFile);
  cal_cmd->add_option("--train", cal_train, "training CSV")->required()->check(CLI::ExistingFile);
  cal_cmd->add_option("--test", cal_test, "test CSV for the accuracy trace")->check(CLI::ExistingFile);
  cal_cmd->add_option("--shards", cal_shards, "shard directory (needed for per-party batches)");
  cal_cmd->add_option("--steps", cal_steps, "number of steps");
  cal_cmd->add_option("--lr", cal_lr, "learning rate");

  // plot
  Common pl;
  std::string pl_manifest, pl_test;
  std::size_t pl_res = 200;
  auto* pl_cmd = app.add_subcommand("plot", "write decision-boundary and density SVGs");
  add_common(pl_cmd, pl, false);
  pl_cmd->add_option("--manifest", pl_manifest, "model manifest.json")->required()->check(CLI::ExistingFile);
  pl_cmd->add_option("--test", pl_test, "CSV drawn on top and used for the plot extent")
      ->required()
      ->check(CLI::ExistingFile);
  pl_cmd->add_option("--resolution", pl_res, "grid cells per side")->check(CLI::PositiveNumber);

  // sweep
  Common sw;
  std::size_t sw_seeds = 20;
  std::size_t sw_threads = 0;
  auto* sw_cmd = app.add_subcommand("sweep", "repeat an experiment over seeds and summarize");
  add_common(sw_cmd, sw, true);
  sw_cmd->add_option("--seeds", sw_seeds, "number of seeds (root seed, root seed + 1, ...)")->check(CLI::PositiveNumber);
  sw_cmd->add_option("--threads", sw_threads, "worker threads (0 = all cores)");

  // run
  Common run;
  auto* run_cmd = app.add_subcommand("run", "run a whole experiment and write every artifact");
  add_common(run_cmd, run, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen_cmd->parsed()) {
      ExperimentConfig cfg;
      if (!gen.config.empty()) {
        cfg = load_config(gen);
      } else {
        cfg.data.num_samples = gen_n;
        cfg.data.num_classes = gen_k;
        cfg.data.train_ratio = gen_ratio;
        if (gen.seed) cfg.seed = *gen.seed;
      }
      const auto out = require_out(gen, &cfg);
      if (cfg.data.train_csv) throw InvalidArgument("gen-data: the config reads data from CSV files");
      if (!(cfg.data.train_ratio > 0.0 && cfg.data.train_ratio < 1.0)) throw InvalidArgument("--ratio must lie in (0, 1)");
      const auto [train_set, test_set] = prepare_data(cfg);
      write_csv(train_set, out / "train.csv");
      write_csv(test_set, out / "test.csv");
      std::cout << "wrote " << train_set.size() << " train and " << test_set.size() << " test samples to "
                << out.string() << '\n';
    } else if (part_cmd->parsed()) {
      PartitionSpec spec;
      std::uint64_t root = 0;
      std::optional<ExperimentConfig> cfg;
      if (!part.config.empty()) {
        cfg = load_config(part);
        spec = cfg->partition;
        root = cfg->seed;
        if (part_k == 0) part_k = cfg->data.num_classes;
      }
      if (!part_spec.empty()) spec = load_partition_spec(part_spec);
      if (spec.parties.empty()) throw InvalidArgument("partition: give --spec or --config");
      if (part.seed) root = *part.seed;
      const auto ds = read_csv(part_data, part_k > 0 ? std::optional<int>(part_k) : std::nullopt);
      const auto out = require_out(part, cfg ? &*cfg : nullptr);
      ExperimentConfig tmp;
      tmp.seed = root;
      tmp.partition = spec;
      const auto shards = partition_for(tmp, ds);
      for (std::size_t i = 0; i < shards.size(); ++i) {
        write_csv(shards[i], out / ("party" + std::to_string(i) + ".csv"));
        std::cout << "party " << i << ": " << shards[i].size() << " samples\n";
      }
    } else if (tr_cmd->parsed()) {
      const auto cfg = load_config(tr);
      cfg.validate();
      const auto out = require_out(tr, &cfg);
      std::vector<LocalDataset> shards;
      if (!tr_shards.empty()) {
        shards = read_shards(tr_shards, cfg.partition, cfg.data.num_classes);
      } else {
        const auto [train_set, test_set] = prepare_data(cfg);
        shards = partition_for(cfg, train_set);
        fs::create_directories(out / "data");
        write_csv(train_set, out / "data" / "train.csv");
        write_csv(test_set, out / "data" / "test.csv");
      }
      const auto ens = build_ensemble(train_parties(cfg, shards), cfg.data.num_classes);
      const auto manifest = save_ensemble(ens, out / "models");
      std::cout << "wrote " << manifest.string() << '\n';
    } else if (ev_cmd->parsed()) {
      const auto ens = load_ensemble(ev_manifest);
      const auto test_set = read_csv(ev_test, ens.num_classes());
      const fs::path out = require_out(ev);
      const auto xs = test_set.features();
      const auto truth = test_set.labels();
      const auto om = evaluate_objective(ens, xs);
      const auto pred = decide(om);
      const auto max_pred = max_model_decide(om);
      write_predictions_csv(out / "predictions.csv", pred, &om.objective);
      write_predictions_csv(out / "max_model_predictions.csv", max_pred);
      MetricsReport r;
      r.ensemble_accuracy = accuracy(pred, truth);
      r.max_model_accuracy = accuracy(max_pred, truth);
      for (const auto& p : ens.parties()) r.local_accuracy.push_back(accuracy(*p.classifier, test_set));
      write_text(out / "metrics.csv", r.metrics_csv());
      print_report(r);
    } else if (cal_cmd->parsed()) {
      CalibrationConfig cc;
      cc.steps = 100;
      std::uint64_t root = 0;
      if (!cal.config.empty()) {
        const auto cfg = load_config(cal);
        cc = cfg.calibration.config;
        root = cfg.seed;
      }
      if (cal.seed) root = *cal.seed;
      if (cal_steps) cc.steps = *cal_steps;
      if (cal_lr) cc.learning_rate = *cal_lr;
      if (!(cc.learning_rate > 0.0)) throw InvalidArgument("--lr must be positive");
      const SeedStreams streams(root);
      cc.seed = streams.seed("batching");
      if (cc.clip) cc.clip->seed = streams.seed("noise");
      if (cc.eval_every == 0 && !cal_test.empty()) cc.eval_every = std::max<std::size_t>(1, cc.steps / 20);

      auto ens = load_ensemble(cal_manifest);
      const auto train_set = read_csv(cal_train, ens.num_classes());
      std::optional<LocalDataset> test_set;
      if (!cal_test.empty()) test_set = read_csv(cal_test, ens.num_classes());
      std::vector<LocalDataset> shards;
      if (!cal_shards.empty()) {
        PartitionSpec spec;
        for (const auto& p : ens.parties()) spec.parties.push_back({p.classifier->label_space(), 1.0, {}});
        shards = read_shards(cal_shards, spec, ens.num_classes());
      }
      if (cc.data == CalibrationData::kPerParty && shards.empty()) {
        throw InvalidArgument("calibration.data = per_party needs --shards");
      }
      const fs::path out = require_out(cal);
      auto result = calibrate(std::move(ens), train_set, cc, test_set ? &*test_set : nullptr,
                              shards.empty() ? nullptr : &shards);
      save_ensemble(result.model, out / "models");
      write_trace_csv(out / "trace.csv", result.trace);
      if (!result.trace.empty()) std::cout << "final batch loss: " << result.trace.back().loss << '\n';
      if (test_set) {
        const auto xs = test_set->features();
        const auto truth = test_set->labels();
        std::cout << "calibrated accuracy: " << accuracy(decide(result.model, xs), truth) << '\n';
      }
    } else if (pl_cmd->parsed()) {
      const auto ens = load_ensemble(pl_manifest);
      const auto test_set = read_csv(pl_test, ens.num_classes());
      const fs::path out = require_out(pl);
      const auto region = bounding_region(test_set);
      plot_decision_boundary(ens, region, pl_res, out / "decision_boundary.svg", &test_set);
      for (std::size_t i = 0; i < ens.num_parties(); ++i) {
        plot_density(*ens.party(i).estimator, region, pl_res, out / ("density_party" + std::to_string(i) + ".svg"));
      }
      std::cout << "wrote plots to " << out.string() << '\n';
    } else if (sw_cmd->parsed()) {
      const auto cfg = load_config(sw);
      std::vector<std::uint64_t> seeds;
      for (std::size_t i = 0; i < sw_seeds; ++i) seeds.push_back(cfg.seed + i);
      const auto result = run_sweep(cfg, seeds, sw_threads);
      std::cout << result.summary_table();
      if (!cfg.output_dir.empty()) {
        fs::create_directories(cfg.output_dir);
        write_text(cfg.output_dir / "sweep_runs.csv", result.runs_csv());
        write_text(cfg.output_dir / "sweep_summary.csv", result.summary_csv());
        write_text(cfg.output_dir / "sweep_summary.md", result.summary_table());
      }
    } else if (run_cmd->parsed()) {
      const auto cfg = load_config(run);
      const auto report = run_experiment(cfg, true);
      print_report(report);
      if (!cfg.output_dir.empty()) std::cout << "artifacts in " << cfg.output_dir.string() << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
