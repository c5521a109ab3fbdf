#pragma once

#include <torch/torch.h>

#include <optional>
#include <stdexcept>
#include <string>

namespace psvae {

enum class Domain { kSource, kTarget };

enum class Task { kDigit, kPose };

/// Model family selector. ps_vae is the full model; the others are the
/// ablation variants.
enum class Variant {
  kCycleGanFc,    // undivided feature, shared weights, no VAE
  kDCycleGan,     // divided feature, unshared encoder/decoder pairs, no VAE
  kDCycleGanVae,  // d_cyclegan plus KL and resampling at the identity loss
  kPsAe,          // partially shared, divided feature, no VAE
  kPsVae,         // full model
};

/// Structural switches implied by a Variant.
struct VariantFlags {
  bool shared = true;  // one encoder/decoder parameter set serves both domains
  bool split = true;   // feature divided into z / zeta_s / zeta_t
  bool vae = true;     // KL loss and resampling at the identity loss
};

inline VariantFlags variant_flags(Variant v) {
  switch (v) {
    case Variant::kCycleGanFc:
      return {true, false, false};
    case Variant::kDCycleGan:
      return {false, true, false};
    case Variant::kDCycleGanVae:
      return {false, true, true};
    case Variant::kPsAe:
      return {true, true, false};
    case Variant::kPsVae:
      return {true, true, true};
  }
  throw std::invalid_argument("unknown variant");
}

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::kCycleGanFc: return "cyclegan_fc";
    case Variant::kDCycleGan: return "d_cyclegan";
    case Variant::kDCycleGanVae: return "d_cyclegan_vae";
    case Variant::kPsAe: return "ps_ae";
    case Variant::kPsVae: return "ps_vae";
  }
  throw std::invalid_argument("unknown variant");
}

inline Variant variant_from_string(const std::string& s) {
  if (s == "cyclegan_fc") return Variant::kCycleGanFc;
  if (s == "d_cyclegan") return Variant::kDCycleGan;
  if (s == "d_cyclegan_vae") return Variant::kDCycleGanVae;
  if (s == "ps_ae") return Variant::kPsAe;
  if (s == "ps_vae") return Variant::kPsVae;
  throw std::invalid_argument("unknown variant id: " + s);
}

inline std::string to_string(Task t) { return t == Task::kDigit ? "digit" : "pose"; }

inline Task task_from_string(const std::string& s) {
  if (s == "digit") return Task::kDigit;
  if (s == "pose") return Task::kPose;
  throw std::invalid_argument("unknown task: " + s);
}

inline std::string to_string(Domain d) { return d == Domain::kSource ? "source" : "target"; }

inline Domain opposite(Domain d) {
  return d == Domain::kSource ? Domain::kTarget : Domain::kSource;
}

// Channel partition of the encoder output: z | zeta_s | zeta_t.
inline constexpr int64_t kZChannels = 64;
inline constexpr int64_t kZetaChannels = 96;
inline constexpr int64_t kFeatureChannels = kZChannels + 2 * kZetaChannels;  // 256

inline constexpr int64_t kNumJoints = 18;
inline constexpr int64_t kPoseHeight = 256;
inline constexpr int64_t kPoseWidth = 128;
inline constexpr int64_t kDigitSize = 32;
inline constexpr int64_t kNumDigitClasses = 10;

/// The five scalars weighting the total objective.
struct LossWeights {
  double alpha = 3.0;    // cycle consistency
  double beta = 1.0;     // identity reconstruction
  double gamma = 3.0;    // KL
  double delta = 10.0;   // feature consistency
  double epsilon = 3.0;  // prediction

  static LossWeights digit_defaults() { return {3.0, 1.0, 3.0, 10.0, 3.0}; }
  static LossWeights pose_defaults() { return {5.0, 10.0, 3.0, 20.0, 3.0}; }
  static LossWeights defaults_for(Task t) {
    return t == Task::kDigit ? digit_defaults() : pose_defaults();
  }
};

/// Per-iteration loss report. `total` is the generator-side objective;
/// `adv_d` is the discriminator-side loss, reported separately.
struct LossBreakdown {
  double adv_d = 0.0;
  double adv_g = 0.0;
  double cyc = 0.0;
  double id = 0.0;
  double kl = 0.0;
  double fc = 0.0;
  double pred = 0.0;
  double total = 0.0;

  bool finite() const {
    for (double v : {adv_d, adv_g, cyc, id, kl, fc, pred, total}) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }
};

/// Batched images in [-1,1] with a domain tag and optional labels.
/// Digit labels are class ids (B); pose labels are heatmap stacks
/// (B x 18 x H x W).
struct ImageBatch {
  torch::Tensor pixels;  // B x C x H x W
  Domain domain = Domain::kSource;
  std::optional<torch::Tensor> labels;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace psvae
