#pragma once

#include <filesystem>
#include <vector>

#include "psvae/config.hpp"
#include "psvae/data.hpp"
#include "psvae/eval.hpp"
#include "psvae/train.hpp"

namespace psvae {

/// Materialized digit experiment data, loaded from the prepared directory.
struct PreparedDigits {
  LabeledData source_train;
  LabeledData source_val;
  TargetData target_train;
  DigitDataset source_test;
  DigitDataset target_test;
};

/// Materialized pose experiment data (cropped 256x128 depth images).
struct PreparedPose {
  LabeledData source_train;  // heatmap labels come from a provider
  LabeledData source_val;
  TargetData target_train;
  torch::Tensor source_test_images;
  torch::Tensor target_test_images;
  std::vector<JointSet> source_test_joints;
  std::vector<JointSet> target_test_joints;
};

/// Builds out_dir/data (splits, containers, manifest). Idempotent: a
/// manifest recording the same config hash short-circuits unless `force`.
void prepare_data(const ExperimentConfig& cfg, bool force = false);

PreparedDigits load_prepared_digits(const ExperimentConfig& cfg);
PreparedPose load_prepared_pose(const ExperimentConfig& cfg);

/// prepare (if needed) + train; `resume` picks up the newest checkpoint
/// under out_dir/checkpoints.
RunResult run_training(const ExperimentConfig& cfg, bool resume = false);

/// Newest iteration checkpoint in out_dir/checkpoints (falls back to
/// "final"); empty path if none exists.
std::filesystem::path find_latest_checkpoint(const std::filesystem::path& out_dir);

/// Batched class prediction (argmax ids) on the deterministic code.
torch::Tensor predict_classes(ModelBundle bundle, const torch::Tensor& images,
                              Domain domain, int64_t batch_size = 64);

/// Batched pose prediction, decoded to joint sets.
std::vector<JointSet> predict_joints(ModelBundle bundle, const torch::Tensor& images,
                                     Domain domain, int64_t batch_size = 16);

/// Evaluates a checkpoint on the prepared test split of `domain`. The
/// checkpoint must record this config's hash unless `allow_hash_mismatch`.
EvalReport evaluate(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                    Domain domain = Domain::kTarget, bool allow_hash_mismatch = false);

/// Writes z-partition features of both test splits into one CSV.
void export_experiment_features(const ExperimentConfig& cfg,
                                const std::filesystem::path& checkpoint,
                                const std::filesystem::path& csv_path);

}  // namespace psvae
