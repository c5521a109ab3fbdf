#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "psvae/model.hpp"
#include "psvae/train.hpp"
#include "psvae/types.hpp"

namespace psvae {

/// One experiment, fully determined by one config file. Digit tasks name a
/// dataset pair (mnist/usps/svhn); pose tasks draw from pose containers or
/// the bundled synthetic renderer.
struct ExperimentConfig {
  Task task = Task::kDigit;

  // digit task
  std::string source_dataset = "mnist";
  std::string target_dataset = "usps";
  double imbalance_rate = 0.10;
  bool synthetic_digits = false;   // render stand-in datasets during prepare-data
  int64_t synth_per_class = 700;   // stand-in training pool size per class
  int64_t synth_test_per_class = 100;
  int64_t source_per_class = 0;    // 0 = the experiment protocol count
  int64_t target_per_class = 0;    // 0 = the protocol table count; >0 shrinks the split

  // pose task
  std::string pose_source_container;  // empty = synthesize
  std::string pose_target_container;
  int64_t pose_train_count = 300;
  int64_t pose_test_count = 100;
  double background_margin_mm = 700.0;  // clears the clutter band of the bundled renderer
  double heatmap_sigma_px = 4.0;

  Variant variant = Variant::kPsVae;
  bool source_only = false;

  // training
  int64_t iterations = 2000;
  int64_t batch_size = 32;
  double lr_g = 2e-4;
  double lr_d = 1e-4;
  int64_t checkpoint_every = 500;
  double val_fraction = 0.1;
  double invert_target_p = -1.0;  // -1 = auto (0.5 for svhn->mnist, else 0)
  LossWeights weights;
  bool weights_overridden = false;
  uint64_t seed = 0;

  // evaluation
  std::vector<double> eval_thresholds;  // default 1..30 px

  std::filesystem::path out_dir = "runs/default";
  std::filesystem::path data_root;  // default: PSVAE_DATA_ROOT or ./data

  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& text);
  static ExperimentConfig from_file(const std::filesystem::path& path);
  void write_file(const std::filesystem::path& path) const;

  /// Stable content hash of the canonical JSON form; recorded in every
  /// artifact the experiment produces.
  std::string hash() const;

  /// Hash over the data-affecting fields only. Configs differing just in
  /// variant or training schedule share prepared data.
  std::string data_hash() const;

  void validate() const;
  void apply_smoke_profile();

  NetworkSpec network_spec() const;
  TrainConfig train_config() const;
  LossWeights effective_weights() const;
  double effective_invert_p() const;
  std::vector<double> effective_thresholds() const;
  std::filesystem::path effective_data_root() const;
  std::filesystem::path prepared_dir() const { return out_dir / "data"; }
};

/// FNV-1a 64-bit, hex encoded.
std::string fnv1a_hex(const std::string& text);

}  // namespace psvae
