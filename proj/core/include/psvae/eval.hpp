#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "psvae/data.hpp"
#include "psvae/model.hpp"
#include "psvae/types.hpp"

namespace psvae {

double classification_accuracy(const torch::Tensor& preds, const torch::Tensor& labels);

struct PckResult {
  std::array<double, kNumJoints> per_joint{};  // NaN for never-visible joints
  std::array<int64_t, kNumJoints> visible_count{};
  double average = 0.0;  // over all evaluated joint instances
};

/// Fraction of visible ground-truth joints whose prediction error is
/// strictly below threshold_px. Invisible ground-truth joints are excluded
/// from the denominators.
PckResult pck(const std::vector<JointSet>& pred, const std::vector<JointSet>& gt,
              double threshold_px);

struct PckCurve {
  std::vector<double> thresholds;
  std::vector<double> average_rates;
};

PckCurve pck_curve(const std::vector<JointSet>& pred, const std::vector<JointSet>& gt,
                   std::vector<double> thresholds);

struct EvalReport {
  Task task = Task::kDigit;
  Variant variant = Variant::kPsVae;
  bool baseline = false;
  double imbalance_rate = 0.0;
  int64_t sample_count = 0;
  uint64_t seed = 0;
  std::string checkpoint_id;
  std::string config_hash;

  std::optional<double> accuracy;            // digit task
  std::optional<PckResult> pck_at_headline;  // pose task, 10 px
  std::optional<PckCurve> curve;

  std::string to_json() const;
  static EvalReport from_json(const std::string& text);
  void write_json(const std::filesystem::path& path) const;
  void write_csv(const std::filesystem::path& path) const;
};

/// Display columns: left/right pairs averaged; Avg is the unweighted mean
/// over all evaluated joint instances, not the mean of the columns.
std::vector<std::pair<std::string, double>> jointwise_columns(const PckResult& result);
std::string jointwise_table(const PckResult& result);

/// Writes one CSV row per sample: domain tag followed by the flattened z
/// partition of the encoding mean.
void export_features(ModelBundle bundle, const torch::Tensor& images, Domain domain,
                     const std::filesystem::path& path, int64_t batch_size = 64,
                     bool append = false);

}  // namespace psvae
