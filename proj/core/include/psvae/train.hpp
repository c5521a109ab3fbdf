#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include "psvae/checkpoint.hpp"
#include "psvae/model.hpp"
#include "psvae/types.hpp"

namespace psvae {

struct TrainConfig {
  Task task = Task::kDigit;
  Variant variant = Variant::kPsVae;
  bool source_only = false;  // baseline: encoder + predictor on L_pred only
  LossWeights weights = LossWeights::digit_defaults();
  int64_t iterations = 2000;
  int64_t batch_size = 32;
  double lr_g = 2e-4;
  double lr_d = 1e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  uint64_t seed = 0;
  int64_t checkpoint_every = 500;
  double invert_target_p = 0.0;  // pixel-inversion augmentation on target batches
  std::filesystem::path out_dir;
  std::string config_hash;
};

struct LabeledData {
  torch::Tensor images;
  torch::Tensor labels;  // class ids (digit) or heatmap stacks (pose)

  /// When set, labels are materialized per batch (pose heatmap stacks are
  /// too large to hold for a whole dataset).
  std::function<torch::Tensor(const torch::Tensor& indices)> label_provider;

  torch::Tensor labels_for(const torch::Tensor& indices) const {
    if (label_provider) return label_provider(indices);
    return labels.index_select(0, indices);
  }
};

/// Unlabeled target-domain handle. Labels may be stored (for later
/// evaluation) but every read is counted, so the no-target-label training
/// contract can be asserted.
class TargetData {
 public:
  explicit TargetData(torch::Tensor images, torch::Tensor labels = {})
      : images_(std::move(images)), labels_(std::move(labels)) {}

  const torch::Tensor& images() const { return images_; }
  const torch::Tensor& labels() const {
    ++label_accesses_;
    return labels_;
  }
  bool has_labels() const { return labels_.defined(); }
  int64_t label_accesses() const { return label_accesses_; }

 private:
  torch::Tensor images_;
  torch::Tensor labels_;
  mutable int64_t label_accesses_ = 0;
};

struct RunResult {
  int64_t iterations_run = 0;
  double best_val_pred_loss = std::numeric_limits<double>::infinity();
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
  std::vector<LossBreakdown> history;
};

/// Alternating adversarial training: one discriminator update, then one
/// generator-side update per iteration.
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, const NetworkSpec& spec);

  /// Resumes model, optimizer moments, iteration counter and RNG streams.
  Trainer(const TrainConfig& cfg, const std::filesystem::path& checkpoint_dir);

  LossBreakdown train_step(const ImageBatch& batch_s, const ImageBatch& batch_t);

  RunResult run(const LabeledData& source_train, const LabeledData& source_val,
                const TargetData& target);

  ModelBundle bundle() { return bundle_; }
  int64_t iteration() const { return iteration_; }
  std::mt19937_64& data_rng() { return data_rng_; }
  torch::optim::Adam& generator_optimizer() { return *opt_g_; }
  torch::optim::Adam& discriminator_optimizer() { return *opt_d_; }

  void save(const std::filesystem::path& dir);

  double validation_pred_loss(const LabeledData& val, int64_t batch_size = 64);

 private:
  void init_optimizers();
  LossBreakdown source_only_step(const ImageBatch& batch_s);
  void check_finite(const LossBreakdown& parts, const ImageBatch& batch_s,
                    const ImageBatch& batch_t);

  TrainConfig cfg_;
  ModelBundle bundle_{nullptr};
  std::unique_ptr<torch::optim::Adam> opt_g_, opt_d_;
  std::mt19937_64 data_rng_;
  int64_t iteration_ = 0;
  bool resumed_ = false;
};

std::string rng_to_string(const std::mt19937_64& rng);
std::mt19937_64 rng_from_string(const std::string& s);

}  // namespace psvae
