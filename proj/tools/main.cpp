#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "plot.hpp"
#include "psvae/checkpoint.hpp"
#include "psvae/experiment.hpp"

namespace fs = std::filesystem;
using namespace psvae;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

struct CommonOpts {
  std::string config_path;
  int64_t seed = -1;
  std::string variant;
  std::string out;
  bool smoke = false;
  bool source_only = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool config_required = true) {
  auto* c = cmd->add_option("--config", opts.config_path, "experiment config JSON");
  if (config_required) c->required();
  cmd->add_option("--seed", opts.seed, "override the config seed");
  cmd->add_option("--variant", opts.variant,
                  "override the model variant "
                  "(cyclegan_fc|d_cyclegan|d_cyclegan_vae|ps_ae|ps_vae)");
  cmd->add_option("--out", opts.out, "override the output directory");
  cmd->add_flag("--smoke", opts.smoke, "tiny profile: few iterations, small data");
  cmd->add_flag("--source-only", opts.source_only, "train the source-only baseline");
}

ExperimentConfig load_config(const CommonOpts& opts) {
  auto cfg = ExperimentConfig::from_file(opts.config_path);
  if (opts.seed >= 0) cfg.seed = static_cast<uint64_t>(opts.seed);
  if (!opts.variant.empty()) cfg.variant = variant_from_string(opts.variant);
  if (!opts.out.empty()) cfg.out_dir = opts.out;
  if (opts.source_only) cfg.source_only = true;
  if (opts.smoke) cfg.apply_smoke_profile();
  cfg.validate();
  return cfg;
}

fs::path default_checkpoint(const ExperimentConfig& cfg) {
  const auto best = cfg.out_dir / "checkpoints" / "best";
  if (fs::exists(best / "manifest.json")) return best;
  auto latest = find_latest_checkpoint(cfg.out_dir);
  if (latest.empty()) throw DataError("no checkpoint under " + cfg.out_dir.string());
  return latest;
}

void print_report(const EvalReport& report) {
  if (report.accuracy.has_value()) {
    std::cout << "accuracy: " << *report.accuracy << "\n";
  }
  if (report.pck_at_headline.has_value()) {
    std::cout << jointwise_table(*report.pck_at_headline) << "\n";
  }
}

int cmd_prepare(const CommonOpts& opts, bool force) {
  auto cfg = load_config(opts);
  prepare_data(cfg, force);
  std::cout << "prepared data in " << cfg.prepared_dir().string() << "\n";
  std::ifstream in(cfg.prepared_dir() / "manifest.json");
  std::cout << in.rdbuf() << "\n";
  return kExitOk;
}

int cmd_train(const CommonOpts& opts, bool resume) {
  auto cfg = load_config(opts);
  auto result = run_training(cfg, resume);
  std::cout << "ran " << result.iterations_run << " iterations; best checkpoint: "
            << result.best_checkpoint.string() << "\n";
  return kExitOk;
}

EvalReport eval_run(const ExperimentConfig& cfg, const fs::path& checkpoint,
                    Domain domain, bool allow_mismatch, const std::string& features) {
  auto report = evaluate(cfg, checkpoint, domain, allow_mismatch);
  const std::string stem = "eval_" + to_string(domain);
  report.write_json(cfg.out_dir / (stem + ".json"));
  report.write_csv(cfg.out_dir / (stem + ".csv"));
  if (!features.empty()) export_experiment_features(cfg, checkpoint, features);
  return report;
}

int cmd_eval(const CommonOpts& opts, const std::string& checkpoint,
             const std::string& domain, bool allow_mismatch,
             const std::string& features) {
  auto cfg = load_config(opts);
  const fs::path ckpt = checkpoint.empty() ? default_checkpoint(cfg) : fs::path(checkpoint);
  const Domain d = domain == "source" ? Domain::kSource : Domain::kTarget;
  auto report = eval_run(cfg, ckpt, d, allow_mismatch, features);
  print_report(report);
  return kExitOk;
}

int cmd_ablate(const CommonOpts& opts, std::vector<std::string> variant_ids) {
  auto base = load_config(opts);
  if (variant_ids.empty()) {
    variant_ids = {"cyclegan_fc", "d_cyclegan", "d_cyclegan_vae", "ps_ae", "ps_vae"};
  }

  struct Row {
    std::string variant;
    bool ok = false;
    std::string error;
    EvalReport report;
  };
  std::vector<Row> rows;
  for (const auto& id : variant_ids) {
    Row row;
    row.variant = id;
    try {
      auto cfg = base;
      cfg.variant = variant_from_string(id);
      cfg.out_dir = base.out_dir / id;
      run_training(cfg);
      row.report = eval_run(cfg, default_checkpoint(cfg), Domain::kTarget, false, "");
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
      std::cerr << "variant " << id << " failed: " << e.what() << "\n";
    }
    rows.push_back(std::move(row));
  }

  fs::create_directories(base.out_dir);
  std::ofstream csv(base.out_dir / "ablation_report.csv");
  if (base.task == Task::kDigit) {
    csv << "variant,status,accuracy\n";
    for (const auto& r : rows) {
      csv << r.variant << ',' << (r.ok ? "ok" : "failed") << ','
          << (r.ok && r.report.accuracy ? std::to_string(*r.report.accuracy) : "") << "\n";
    }
  } else {
    csv << "variant,status";
    if (!rows.empty()) {
      for (const auto& [name, _] : jointwise_columns(PckResult{})) csv << ',' << name;
    }
    csv << "\n";
    for (const auto& r : rows) {
      csv << r.variant << ',' << (r.ok ? "ok" : "failed");
      if (r.ok && r.report.pck_at_headline) {
        for (const auto& [_, value] : jointwise_columns(*r.report.pck_at_headline)) {
          csv << ',' << value;
        }
      }
      csv << "\n";
    }
  }
  std::cout << "ablation report: " << (base.out_dir / "ablation_report.csv").string()
            << "\n";
  const bool all_ok =
      std::all_of(rows.begin(), rows.end(), [](const Row& r) { return r.ok; });
  return all_ok ? kExitOk : kExitData;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"partially shared variational auto-encoder experiments"};
  app.require_subcommand(1);

  CommonOpts prep_opts, train_opts, eval_opts, ablate_opts;
  bool force = false, resume = false, allow_mismatch = false;
  std::string checkpoint, eval_domain = "target", features;
  std::vector<std::string> variant_ids;
  std::string plot_metrics, plot_features, plot_out = "plots";
  std::vector<std::string> plot_reports;

  auto* prepare = app.add_subcommand("prepare-data", "build dataset splits + manifest");
  add_common(prepare, prep_opts);
  prepare->add_flag("--force", force, "rebuild even if the manifest matches");

  auto* train = app.add_subcommand("train", "train one model");
  add_common(train, train_opts);
  train->add_flag("--resume", resume, "continue from the newest checkpoint");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, eval_opts);
  eval->add_option("--checkpoint", checkpoint, "checkpoint directory (default: best)");
  eval->add_option("--domain", eval_domain, "test split: source|target")
      ->check(CLI::IsMember({"source", "target"}));
  eval->add_flag("--allow-hash-mismatch", allow_mismatch,
                 "evaluate despite a foreign config hash");
  eval->add_option("--features", features, "also dump z features to this CSV");

  auto* ablate = app.add_subcommand("ablate", "train + evaluate several variants");
  add_common(ablate, ablate_opts);
  ablate->add_option("--variants", variant_ids, "variant ids (default: all five)");

  auto* plot = app.add_subcommand("plot", "render metric/report plots");
  plot->add_option("--metrics", plot_metrics, "metrics.csv for loss curves");
  plot->add_option("--reports", plot_reports, "EvalReport JSONs for PCK curves");
  plot->add_option("--features", plot_features, "feature dump CSV for a scatter");
  plot->add_option("--out", plot_out, "output directory for PNGs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (prepare->parsed()) return cmd_prepare(prep_opts, force);
    if (train->parsed()) return cmd_train(train_opts, resume);
    if (eval->parsed()) {
      return cmd_eval(eval_opts, checkpoint, eval_domain, allow_mismatch, features);
    }
    if (ablate->parsed()) return cmd_ablate(ablate_opts, variant_ids);
    if (plot->parsed()) {
      if (plot_metrics.empty() && plot_reports.empty() && plot_features.empty()) {
        throw ConfigError("plot needs --metrics, --reports and/or --features");
      }
      const fs::path out = plot_out;
      if (!plot_metrics.empty()) plot::loss_curves(plot_metrics, out / "loss_curves.png");
      if (!plot_reports.empty()) {
        std::vector<fs::path> paths(plot_reports.begin(), plot_reports.end());
        plot::pck_curves(paths, out / "pck_curves.png");
      }
      if (!plot_features.empty()) {
        plot::feature_scatter(plot_features, out / "feature_scatter.png");
      }
      std::cout << "plots written to " << out.string() << "\n";
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
