#pragma once

#include <torch/torch.h>

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "psvae/types.hpp"

namespace psvae {

// ---------------------------------------------------------------------------
// Digit datasets
// ---------------------------------------------------------------------------

enum class DigitSource { kMnist, kUsps, kSvhn };

std::string to_string(DigitSource d);
DigitSource digit_source_from_string(const std::string& s);

/// Images N x C x 32 x 32 in [-1,1], labels N (int64 class ids).
struct DigitDataset {
  torch::Tensor images;
  torch::Tensor labels;

  int64_t size() const { return images.defined() ? images.size(0) : 0; }
};

// IDX (MNIST distribution format) readers/writers. Images are returned as
// uint8 N x H x W.
torch::Tensor read_idx_images(const std::filesystem::path& path);
torch::Tensor read_idx_labels(const std::filesystem::path& path);
void write_idx_images(const std::filesystem::path& path, const torch::Tensor& images);
void write_idx_labels(const std::filesystem::path& path, const torch::Tensor& labels);

/// Reads the standard IDX pair and rescales to 32x32, mapping pixels to
/// [-1,1].
DigitDataset load_mnist_like(const std::filesystem::path& images_path,
                             const std::filesystem::path& labels_path);

/// USPS text distribution: one sample per line, class id followed by
/// 256 gray values in [-1,1].
DigitDataset load_usps(const std::filesystem::path& path);
void write_usps(const std::filesystem::path& path, const DigitDataset& data);

/// SVHN cropped-digit MAT file (X: 32x32x3xN uint8, y: class labels with
/// 10 meaning digit zero).
DigitDataset load_svhn(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Class-imbalance protocol
// ---------------------------------------------------------------------------

struct ImbalanceSpec {
  DigitSource dataset = DigitSource::kMnist;
  double rate = 0.10;           // share of the special class in the split
  int64_t special_class = 1;
  int64_t per_other_class = 0;  // samples per non-special class
};

/// Special-class count implied by rate: round(9 n rate / (1 - rate)).
int64_t class1_count(int64_t per_other, double rate);

/// Per-other-class counts used in the experiments, per dataset and rate.
int64_t table_per_other_count(DigitSource dataset, double rate);

struct SplitEntry {
  int64_t index;  // into the base dataset
  int dx;         // horizontal shift of the over-sampled copy; 0 = original
};

/// Draws the class-imbalanced split: exact per-class counts, deterministic
/// under seed. A USPS special-class deficit is filled with shifted copies
/// (dx in {-2,-1,+1,+2}); any other deficit is an error.
std::vector<SplitEntry> make_imbalanced_split(const DigitDataset& data,
                                              const ImbalanceSpec& spec,
                                              uint64_t seed);

/// Instantiates a split, applying augment_shift where dx != 0.
DigitDataset materialize_split(const DigitDataset& data,
                               const std::vector<SplitEntry>& split);

std::map<int64_t, int64_t> split_class_counts(const DigitDataset& data,
                                              const std::vector<SplitEntry>& split);

/// Horizontal translation with edge-replication padding; dx in
/// {-2,-1,+1,+2}.
torch::Tensor augment_shift(const torch::Tensor& img, int dx);

/// With probability p, flips the sign of every pixel ([-1,1] convention).
torch::Tensor invert_pixels_randomly(const torch::Tensor& img, double p,
                                     std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Synthetic stand-in digits
// ---------------------------------------------------------------------------

/// Rendering styles for the bundled digit synthesizer. The two styles
/// differ in polarity, stroke weight and blur, giving a bridgeable domain
/// gap for smoke experiments when the real datasets are not on disk.
enum class DigitStyle { kSourceStyle, kTargetStyle };

DigitDataset make_synthetic_digits(int64_t per_class, DigitStyle style, uint64_t seed);

// ---------------------------------------------------------------------------
// Pose data
// ---------------------------------------------------------------------------

struct Joint {
  double u = 0.0;  // column
  double v = 0.0;  // row
  bool visible = false;
};

using JointSet = std::array<Joint, kNumJoints>;

const std::array<std::string, kNumJoints>& joint_names();

inline constexpr double kBackgroundFillMm = 8000.0;  // also the CG background depth

/// Per-pixel max over valid (nonzero) frames; pixels never valid stay 0.
torch::Tensor estimate_background(const std::vector<torch::Tensor>& depth_video);

struct ForegroundResult {
  torch::Tensor mask;     // bool H x W
  torch::Tensor cleaned;  // depth with background set to fill_mm
};

/// Foreground iff depth < background - margin_mm (both valid).
ForegroundResult subtract_background(const torch::Tensor& frame,
                                     const torch::Tensor& background,
                                     double margin_mm,
                                     double fill_mm = kBackgroundFillMm);

struct CropResult {
  torch::Tensor image;  // 1 x 256 x 128, depth normalized to [-1,1]
  JointSet joints;      // transformed; out-of-crop joints flagged invisible
};

/// Tight mask bounding box expanded to 2:1 (h:w), nearest-neighbor resized
/// to 256x128. Throws DataError on an empty mask.
CropResult crop_resize(const torch::Tensor& cleaned_frame, const torch::Tensor& mask,
                       const JointSet& joints = {}, double fill_mm = kBackgroundFillMm);

/// Maps depth in [0, fill_mm] to [-1,1].
torch::Tensor normalize_depth(const torch::Tensor& depth_mm, double fill_mm = kBackgroundFillMm);

/// Gaussian peak of height 1 at each visible joint; zero channel otherwise.
torch::Tensor encode_heatmaps(const JointSet& joints, double sigma_px = 4.0,
                              int64_t height = kPoseHeight, int64_t width = kPoseWidth);

/// Per-channel argmax (first in row-major order on ties); peaks below 0.05
/// decode as invisible.
JointSet decode_heatmaps(const torch::Tensor& heatmaps);

struct PoseSample {
  torch::Tensor depth;  // H x W float, millimeters
  JointSet joints;
};

/// Length-prefixed binary container plus a JSON sidecar (path + ".json").
void write_pose_container(const std::filesystem::path& path,
                          const std::vector<PoseSample>& samples,
                          const std::string& metadata_json = "{}");
std::vector<PoseSample> read_pose_container(const std::filesystem::path& path);

enum class PoseStyle { kCgStyle, kObservedStyle };

/// Articulated stick-figure depth renderer; the stand-in for the rendered
/// and captured pose datasets. Observed-style frames add sensor noise and
/// background clutter, CG-style frames sit on the uniform fill.
PoseSample render_stick_figure(std::mt19937_64& rng, PoseStyle style,
                               int64_t height = 424, int64_t width = 512);

}  // namespace psvae
