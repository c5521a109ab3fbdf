#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

#include "psvae/types.hpp"

namespace psvae {

/// Per-pixel-grid Gaussian code emitted by the encoder. Channel layout is
/// z | zeta_s | zeta_t.
struct GaussianFeature {
  torch::Tensor mu;      // B x C x h x w
  torch::Tensor logvar;  // same shape
};

/// Point-form code, split into the domain-invariant and the two
/// domain-specific partitions.
struct DisentangledCode {
  torch::Tensor z;
  torch::Tensor zeta_s;
  torch::Tensor zeta_t;

  torch::Tensor full() const { return torch::cat({z, zeta_s, zeta_t}, 1); }
};

/// Architecture description. The digit and pose geometries follow the
/// backbone tables; n_z/n_zeta may be shrunk only for toy-scale tests.
struct NetworkSpec {
  Task task = Task::kDigit;
  Variant variant = Variant::kPsVae;
  bool use_resblocks = true;
  int64_t in_channels = 1;
  int64_t height = kDigitSize;
  int64_t width = kDigitSize;
  int64_t base_channels = 64;
  int64_t n_z = kZChannels;
  int64_t n_zeta = kZetaChannels;
  int64_t num_classes = kNumDigitClasses;
  int64_t num_joints = kNumJoints;
  int64_t sn_power_iters = 1;

  int64_t feature_channels() const { return n_z + 2 * n_zeta; }
  int64_t code_height() const { return height / 4; }
  int64_t code_width() const { return width / 4; }

  void validate() const;

  std::string to_json() const;
  static NetworkSpec from_json(const std::string& text);

  /// MNIST<->USPS: 1 channel, no ResBlocks. SVHN->MNIST: 3 channels, with
  /// ResBlocks.
  static NetworkSpec digit(Variant v, int64_t in_channels = 1,
                           bool use_resblocks = false);
  static NetworkSpec pose(Variant v);
};

DisentangledCode split_code(const torch::Tensor& feature, const NetworkSpec& spec);

/// code = mu + exp(0.5 logvar) * eps, eps ~ N(0,1) from the global RNG.
DisentangledCode reparameterize(const GaussianFeature& f, const NetworkSpec& spec);

/// Deterministic code: the mean, partitioned.
DisentangledCode take_mean(const GaussianFeature& f, const NetworkSpec& spec);

/// Divides `weight` (viewed as out_features x rest) by the power-iteration
/// estimate of its top singular value. `u_state` is the persistent left
/// vector, updated in place; pass an empty tensor to cold-start.
torch::Tensor spectral_normalize(const torch::Tensor& weight, int64_t iters,
                                 torch::Tensor& u_state);

class ResBlockImpl : public torch::nn::Module {
 public:
  explicit ResBlockImpl(int64_t channels);
  torch::Tensor forward(torch::Tensor x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
  torch::nn::PReLU act1_{nullptr}, act2_{nullptr};
};
TORCH_MODULE(ResBlock);

class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(const NetworkSpec& spec);
  GaussianFeature forward(torch::Tensor x);

 private:
  torch::nn::Conv2d conv_in_{nullptr}, conv_down1_{nullptr}, conv_down2_{nullptr};
  torch::nn::Conv2d conv_mu_{nullptr}, conv_logvar_{nullptr};
  torch::nn::PReLU act1_{nullptr}, act2_{nullptr}, act3_{nullptr};
  std::vector<ResBlock> resblocks_;
};
TORCH_MODULE(Encoder);

class DecoderImpl : public torch::nn::Module {
 public:
  explicit DecoderImpl(const NetworkSpec& spec);
  torch::Tensor forward(torch::Tensor code);  // full feature-channel input

 private:
  std::vector<ResBlock> resblocks_;
  torch::nn::Conv2d conv_up1_{nullptr}, conv_up2_{nullptr}, conv_out_{nullptr};
  torch::nn::PReLU act1_{nullptr}, act2_{nullptr};
};
TORCH_MODULE(Decoder);

/// Conv2d with spectrally normalized weight. Output size rounds up on
/// strided layers, matching the (h/16 + 4) discriminator geometry.
class SNConv2dImpl : public torch::nn::Module {
 public:
  SNConv2dImpl(int64_t in, int64_t out, int64_t kernel, int64_t stride,
               int64_t pad, int64_t power_iters);
  torch::Tensor forward(torch::Tensor x);
  torch::Tensor normalized_weight();

  torch::Tensor weight, bias;

 private:
  torch::Tensor u_;
  int64_t stride_, pad_, kernel_;
  int64_t power_iters_;
};
TORCH_MODULE(SNConv2d);

class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const NetworkSpec& spec);
  torch::Tensor forward(torch::Tensor x);
  std::vector<SNConv2d> conv_layers() { return convs_; }

 private:
  std::vector<SNConv2d> convs_;
  std::vector<torch::nn::PReLU> acts_;
};
TORCH_MODULE(Discriminator);

class DigitClassifierImpl : public torch::nn::Module {
 public:
  explicit DigitClassifierImpl(const NetworkSpec& spec);
  torch::Tensor forward(torch::Tensor z);

 private:
  int64_t flat_dim_;
  torch::nn::PReLU act_{nullptr};
  torch::nn::Dropout dropout_{nullptr};
  torch::nn::Linear fc_{nullptr};
};
TORCH_MODULE(DigitClassifier);

class PoseRegressorImpl : public torch::nn::Module {
 public:
  explicit PoseRegressorImpl(const NetworkSpec& spec);
  torch::Tensor forward(torch::Tensor z);

 private:
  std::vector<ResBlock> resblocks_;
  torch::nn::Conv2d conv_up1_{nullptr}, conv_up2_{nullptr}, conv_out_{nullptr};
  torch::nn::PReLU act1_{nullptr}, act2_{nullptr};
  int64_t in_height_, in_width_;
};
TORCH_MODULE(PoseRegressor);

/// The full set of networks for one experiment. Encoder/decoder parameter
/// sets are shared or per-domain according to the variant.
class ModelBundleImpl : public torch::nn::Module {
 public:
  explicit ModelBundleImpl(const NetworkSpec& spec);

  GaussianFeature encode(const torch::Tensor& pixels, Domain domain);
  GaussianFeature encode(const ImageBatch& batch) {
    return encode(batch.pixels, batch.domain);
  }

  /// Decodes with zero-substitution: for the source domain the decoder
  /// consumes {z, zeta_s, 0}, for the target {z, 0, zeta_t}. Undivided
  /// variants consume the full code unchanged.
  torch::Tensor decode(const DisentangledCode& code, Domain domain);

  torch::Tensor discriminate(const torch::Tensor& pixels, Domain domain);

  torch::Tensor predict_class(const torch::Tensor& z);
  torch::Tensor predict_pose(const torch::Tensor& z);
  torch::Tensor predict(const torch::Tensor& z);

  std::vector<torch::Tensor> generator_parameters();
  std::vector<torch::Tensor> discriminator_parameters();

  const NetworkSpec& spec() const { return spec_; }
  const VariantFlags& flags() const { return flags_; }

  Encoder encoder_for(Domain domain) {
    return flags_.shared ? encoder_ : (domain == Domain::kSource ? encoder_s_ : encoder_t_);
  }
  Decoder decoder_for(Domain domain) {
    return flags_.shared ? decoder_ : (domain == Domain::kSource ? decoder_s_ : decoder_t_);
  }
  Discriminator discriminator_for(Domain domain) {
    return domain == Domain::kSource ? disc_s_ : disc_t_;
  }

 private:
  NetworkSpec spec_;
  VariantFlags flags_;
  Encoder encoder_{nullptr}, encoder_s_{nullptr}, encoder_t_{nullptr};
  Decoder decoder_{nullptr}, decoder_s_{nullptr}, decoder_t_{nullptr};
  Discriminator disc_s_{nullptr}, disc_t_{nullptr};
  DigitClassifier classifier_{nullptr};
  PoseRegressor regressor_{nullptr};
};
TORCH_MODULE(ModelBundle);

/// normal(0, 0.02) for conv/linear weights, zero biases.
void init_weights(torch::nn::Module& module);

}  // namespace psvae
