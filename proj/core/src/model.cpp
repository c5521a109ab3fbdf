#include "psvae/model.hpp"

#include <nlohmann/json.hpp>

namespace F = torch::nn::functional;

namespace psvae {

namespace {

torch::Tensor l2_normalize(const torch::Tensor& v) {
  return v / (v.norm() + 1e-12);
}

// Strided conv whose output size rounds up, matching the (h/16 + 4)
// discriminator geometry: pads right/bottom so every stride window is
// covered.
torch::Tensor conv2d_ceil(const torch::Tensor& x, const torch::Tensor& w,
                          const torch::Tensor& b, int64_t stride, int64_t pad) {
  const int64_t k = w.size(2);
  const int64_t h = x.size(2), wd = x.size(3);
  const int64_t extra_h = (stride - ((h + 2 * pad - k) % stride)) % stride;
  const int64_t extra_w = (stride - ((wd + 2 * pad - k) % stride)) % stride;
  auto padded = F::pad(x, F::PadFuncOptions({pad, pad + extra_w, pad, pad + extra_h}));
  return torch::conv2d(padded, w, b, stride);
}

}  // namespace

void NetworkSpec::validate() const {
  if (height % 4 != 0 || width % 4 != 0) {
    throw ConfigError("image size must be divisible by 4");
  }
  if (n_z + 2 * n_zeta != 4 * base_channels) {
    throw ConfigError("feature partition must match encoder output channels");
  }
  if (task == Task::kDigit && (height != kDigitSize || width != kDigitSize)) {
    throw ConfigError("digit task requires 32x32 input");
  }
  if (task == Task::kPose && (height != kPoseHeight || width != kPoseWidth)) {
    throw ConfigError("pose task requires 256x128 input");
  }
}

std::string NetworkSpec::to_json() const {
  nlohmann::json j;
  j["task"] = psvae::to_string(task);
  j["variant"] = psvae::to_string(variant);
  j["use_resblocks"] = use_resblocks;
  j["in_channels"] = in_channels;
  j["height"] = height;
  j["width"] = width;
  j["base_channels"] = base_channels;
  j["n_z"] = n_z;
  j["n_zeta"] = n_zeta;
  j["num_classes"] = num_classes;
  j["num_joints"] = num_joints;
  j["sn_power_iters"] = sn_power_iters;
  return j.dump(2);
}

NetworkSpec NetworkSpec::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  NetworkSpec s;
  s.task = task_from_string(j.at("task").get<std::string>());
  s.variant = variant_from_string(j.at("variant").get<std::string>());
  s.use_resblocks = j.at("use_resblocks").get<bool>();
  s.in_channels = j.at("in_channels").get<int64_t>();
  s.height = j.at("height").get<int64_t>();
  s.width = j.at("width").get<int64_t>();
  s.base_channels = j.at("base_channels").get<int64_t>();
  s.n_z = j.at("n_z").get<int64_t>();
  s.n_zeta = j.at("n_zeta").get<int64_t>();
  s.num_classes = j.at("num_classes").get<int64_t>();
  s.num_joints = j.at("num_joints").get<int64_t>();
  s.sn_power_iters = j.value("sn_power_iters", int64_t{1});
  return s;
}

NetworkSpec NetworkSpec::digit(Variant v, int64_t in_channels, bool use_resblocks) {
  NetworkSpec s;
  s.task = Task::kDigit;
  s.variant = v;
  s.in_channels = in_channels;
  s.use_resblocks = use_resblocks;
  s.height = kDigitSize;
  s.width = kDigitSize;
  return s;
}

NetworkSpec NetworkSpec::pose(Variant v) {
  NetworkSpec s;
  s.task = Task::kPose;
  s.variant = v;
  s.in_channels = 1;
  s.use_resblocks = true;
  s.height = kPoseHeight;
  s.width = kPoseWidth;
  return s;
}

DisentangledCode split_code(const torch::Tensor& feature, const NetworkSpec& spec) {
  DisentangledCode c;
  c.z = feature.narrow(1, 0, spec.n_z);
  c.zeta_s = feature.narrow(1, spec.n_z, spec.n_zeta);
  c.zeta_t = feature.narrow(1, spec.n_z + spec.n_zeta, spec.n_zeta);
  return c;
}

DisentangledCode reparameterize(const GaussianFeature& f, const NetworkSpec& spec) {
  auto eps = torch::randn_like(f.mu);
  auto code = f.mu + torch::exp(0.5 * f.logvar) * eps;
  return split_code(code, spec);
}

DisentangledCode take_mean(const GaussianFeature& f, const NetworkSpec& spec) {
  return split_code(f.mu, spec);
}

torch::Tensor spectral_normalize(const torch::Tensor& weight, int64_t iters,
                                 torch::Tensor& u_state) {
  auto w2 = weight.reshape({weight.size(0), -1});
  bool cold_start = false;
  if (!u_state.defined() || u_state.numel() != w2.size(0)) {
    u_state = l2_normalize(torch::randn({w2.size(0)}, weight.options()));
    cold_start = true;
  }
  torch::Tensor u = u_state, v;
  {
    torch::NoGradGuard guard;
    auto w = w2.detach();
    if (cold_start) {
      // A random vector can start nearly orthogonal to the top singular
      // direction, in which case a handful of iterations underestimates
      // sigma badly. Burn in until the estimate stabilizes so that the
      // accuracy contract holds from the first call on.
      double prev = 0.0;
      for (int64_t i = 0; i < 200; ++i) {
        v = l2_normalize(w.t().mv(u));
        u = l2_normalize(w.mv(v));
        const double est = torch::dot(u, w.mv(v)).item<double>();
        if (std::abs(est - prev) <= 1e-6 * std::max(1.0, std::abs(est))) break;
        prev = est;
      }
    }
    for (int64_t i = 0; i < iters; ++i) {
      v = l2_normalize(w.t().mv(u));
      u = l2_normalize(w.mv(v));
    }
    u_state.copy_(u);
  }
  auto sigma = torch::dot(u.detach(), w2.mv(v.detach()));
  sigma = torch::clamp(sigma, 1e-12);
  return weight / sigma;
}

ResBlockImpl::ResBlockImpl(int64_t channels) {
  conv1_ = register_module(
      "conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 3).padding(1)));
  conv2_ = register_module(
      "conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 3).padding(1)));
  act1_ = register_module("act1", torch::nn::PReLU());
  act2_ = register_module("act2", torch::nn::PReLU());
}

torch::Tensor ResBlockImpl::forward(torch::Tensor x) {
  return x + act2_(conv2_(act1_(conv1_(x))));
}

EncoderImpl::EncoderImpl(const NetworkSpec& spec) {
  const int64_t b = spec.base_channels;
  conv_in_ = register_module(
      "conv_in", torch::nn::Conv2d(torch::nn::Conv2dOptions(spec.in_channels, b, 7)
                                       .padding(3)
                                       .padding_mode(torch::kReflect)));
  conv_down1_ = register_module(
      "conv_down1",
      torch::nn::Conv2d(torch::nn::Conv2dOptions(b, 2 * b, 3).stride(2).padding(1)));
  conv_down2_ = register_module(
      "conv_down2",
      torch::nn::Conv2d(torch::nn::Conv2dOptions(2 * b, 4 * b, 3).stride(2).padding(1)));
  act1_ = register_module("act1", torch::nn::PReLU());
  act2_ = register_module("act2", torch::nn::PReLU());
  act3_ = register_module("act3", torch::nn::PReLU());
  if (spec.use_resblocks) {
    for (int i = 0; i < 4; ++i) {
      resblocks_.push_back(ResBlock(4 * b));
      register_module("resblock" + std::to_string(i), resblocks_.back());
    }
  }
  conv_mu_ = register_module(
      "conv_mu", torch::nn::Conv2d(torch::nn::Conv2dOptions(4 * b, 4 * b, 3).padding(1)));
  conv_logvar_ = register_module(
      "conv_logvar", torch::nn::Conv2d(torch::nn::Conv2dOptions(4 * b, 4 * b, 3).padding(1)));
}

GaussianFeature EncoderImpl::forward(torch::Tensor x) {
  auto h = act1_(conv_in_(x));
  h = act2_(conv_down1_(h));
  h = act3_(conv_down2_(h));
  for (auto& block : resblocks_) h = block->forward(h);
  GaussianFeature f;
  f.mu = conv_mu_(h);
  // keep exp(logvar) representable
  f.logvar = torch::clamp(conv_logvar_(h), -20.0, 20.0);
  return f;
}

DecoderImpl::DecoderImpl(const NetworkSpec& spec) {
  const int64_t b = spec.base_channels;
  if (spec.use_resblocks) {
    for (int i = 0; i < 4; ++i) {
      resblocks_.push_back(ResBlock(4 * b));
      register_module("resblock" + std::to_string(i), resblocks_.back());
    }
  }
  conv_up1_ = register_module(
      "conv_up1", torch::nn::Conv2d(torch::nn::Conv2dOptions(4 * b, 2 * b, 3).padding(1)));
  conv_up2_ = register_module(
      "conv_up2", torch::nn::Conv2d(torch::nn::Conv2dOptions(2 * b, b, 3).padding(1)));
  conv_out_ = register_module(
      "conv_out", torch::nn::Conv2d(torch::nn::Conv2dOptions(b, spec.in_channels, 7)
                                        .padding(3)
                                        .padding_mode(torch::kReflect)));
  act1_ = register_module("act1", torch::nn::PReLU());
  act2_ = register_module("act2", torch::nn::PReLU());
}

torch::Tensor DecoderImpl::forward(torch::Tensor code) {
  auto h = code;
  for (auto& block : resblocks_) h = block->forward(h);
  h = F::interpolate(h, F::InterpolateFuncOptions().scale_factor(std::vector<double>{2, 2}).mode(torch::kNearest));
  h = act1_(conv_up1_(h));
  h = F::interpolate(h, F::InterpolateFuncOptions().scale_factor(std::vector<double>{2, 2}).mode(torch::kNearest));
  h = act2_(conv_up2_(h));
  return torch::tanh(conv_out_(h));
}

SNConv2dImpl::SNConv2dImpl(int64_t in, int64_t out, int64_t kernel, int64_t stride,
                           int64_t pad, int64_t power_iters)
    : stride_(stride), pad_(pad), kernel_(kernel), power_iters_(power_iters) {
  weight = register_parameter("weight", torch::randn({out, in, kernel, kernel}) * 0.02);
  bias = register_parameter("bias", torch::zeros({out}));
  u_ = register_buffer("u", l2_normalize(torch::randn({out})));
}

torch::Tensor SNConv2dImpl::normalized_weight() {
  auto u = u_.clone();
  return spectral_normalize(weight, is_training() ? power_iters_ : 1, u);
}

torch::Tensor SNConv2dImpl::forward(torch::Tensor x) {
  torch::Tensor w_sn;
  if (is_training()) {
    w_sn = spectral_normalize(weight, power_iters_, u_);
  } else {
    auto u = u_.clone();
    w_sn = spectral_normalize(weight, 1, u);
  }
  return conv2d_ceil(x, w_sn, bias, stride_, pad_);
}

DiscriminatorImpl::DiscriminatorImpl(const NetworkSpec& spec) {
  const int64_t b = spec.base_channels;
  const int64_t p = spec.sn_power_iters;
  struct Layer { int64_t in, out, stride; };
  const std::vector<Layer> layers = {
      {spec.in_channels, b, 2}, {b, 2 * b, 2},     {2 * b, 4 * b, 2},
      {4 * b, 8 * b, 2},        {8 * b, 8 * b, 1}, {8 * b, 1, 1},
  };
  for (size_t i = 0; i < layers.size(); ++i) {
    convs_.push_back(SNConv2d(layers[i].in, layers[i].out, 4, layers[i].stride, 2, p));
    register_module("conv" + std::to_string(i), convs_.back());
    if (i + 1 < layers.size()) {
      acts_.push_back(torch::nn::PReLU());
      register_module("act" + std::to_string(i), acts_.back());
    }
  }
}

torch::Tensor DiscriminatorImpl::forward(torch::Tensor x) {
  auto h = x;
  for (size_t i = 0; i < convs_.size(); ++i) {
    h = convs_[i]->forward(h);
    if (i < acts_.size()) h = acts_[i](h);
  }
  return h;
}

DigitClassifierImpl::DigitClassifierImpl(const NetworkSpec& spec) {
  flat_dim_ = spec.n_z * spec.code_height() * spec.code_width();
  act_ = register_module("act", torch::nn::PReLU());
  dropout_ = register_module("dropout", torch::nn::Dropout(0.5));
  fc_ = register_module("fc", torch::nn::Linear(flat_dim_, spec.num_classes));
}

torch::Tensor DigitClassifierImpl::forward(torch::Tensor z) {
  if (z.dim() != 4 || z.size(1) * z.size(2) * z.size(3) != flat_dim_) {
    throw ConfigError("classifier input does not match the code geometry");
  }
  auto h = z.reshape({z.size(0), flat_dim_});
  return fc_(dropout_(act_(h)));
}

PoseRegressorImpl::PoseRegressorImpl(const NetworkSpec& spec)
    : in_height_(spec.code_height()), in_width_(spec.code_width()) {
  const int64_t c = spec.n_z;
  for (int i = 0; i < 4; ++i) {
    resblocks_.push_back(ResBlock(c));
    register_module("resblock" + std::to_string(i), resblocks_.back());
  }
  conv_up1_ = register_module(
      "conv_up1", torch::nn::Conv2d(torch::nn::Conv2dOptions(c, c / 2, 3).padding(1)));
  conv_up2_ = register_module(
      "conv_up2", torch::nn::Conv2d(torch::nn::Conv2dOptions(c / 2, c / 4, 3).padding(1)));
  conv_out_ = register_module(
      "conv_out", torch::nn::Conv2d(torch::nn::Conv2dOptions(c / 4, spec.num_joints, 7)
                                        .padding(3)
                                        .padding_mode(torch::kReflect)));
  act1_ = register_module("act1", torch::nn::PReLU());
  act2_ = register_module("act2", torch::nn::PReLU());
}

torch::Tensor PoseRegressorImpl::forward(torch::Tensor z) {
  if (z.size(2) != in_height_ || z.size(3) != in_width_) {
    throw ConfigError("regressor input does not match the code geometry");
  }
  auto h = z;
  for (auto& block : resblocks_) h = block->forward(h);
  h = F::interpolate(h, F::InterpolateFuncOptions().scale_factor(std::vector<double>{2, 2}).mode(torch::kNearest));
  h = act1_(conv_up1_(h));
  h = F::interpolate(h, F::InterpolateFuncOptions().scale_factor(std::vector<double>{2, 2}).mode(torch::kNearest));
  h = act2_(conv_up2_(h));
  return conv_out_(h);
}

ModelBundleImpl::ModelBundleImpl(const NetworkSpec& spec)
    : spec_(spec), flags_(variant_flags(spec.variant)) {
  spec_.validate();
  if (flags_.shared) {
    encoder_ = register_module("encoder", Encoder(spec_));
    decoder_ = register_module("decoder", Decoder(spec_));
  } else {
    encoder_s_ = register_module("encoder_source", Encoder(spec_));
    encoder_t_ = register_module("encoder_target", Encoder(spec_));
    decoder_s_ = register_module("decoder_source", Decoder(spec_));
    decoder_t_ = register_module("decoder_target", Decoder(spec_));
  }
  disc_s_ = register_module("discriminator_source", Discriminator(spec_));
  disc_t_ = register_module("discriminator_target", Discriminator(spec_));
  if (spec_.task == Task::kDigit) {
    classifier_ = register_module("classifier", DigitClassifier(spec_));
  } else {
    regressor_ = register_module("regressor", PoseRegressor(spec_));
  }
  init_weights(*this);
}

GaussianFeature ModelBundleImpl::encode(const torch::Tensor& pixels, Domain domain) {
  if (pixels.dim() != 4 || pixels.size(1) != spec_.in_channels ||
      pixels.size(2) != spec_.height || pixels.size(3) != spec_.width) {
    throw ConfigError("input image shape does not match the network spec");
  }
  return encoder_for(domain)->forward(pixels);
}

torch::Tensor ModelBundleImpl::decode(const DisentangledCode& code, Domain domain) {
  torch::Tensor input;
  if (!flags_.split) {
    input = code.full();
  } else if (domain == Domain::kSource) {
    input = torch::cat({code.z, code.zeta_s, torch::zeros_like(code.zeta_t)}, 1);
  } else {
    input = torch::cat({code.z, torch::zeros_like(code.zeta_s), code.zeta_t}, 1);
  }
  return decoder_for(domain)->forward(input);
}

torch::Tensor ModelBundleImpl::discriminate(const torch::Tensor& pixels, Domain domain) {
  return discriminator_for(domain)->forward(pixels);
}

torch::Tensor ModelBundleImpl::predict_class(const torch::Tensor& z) {
  if (spec_.task != Task::kDigit) throw ConfigError("predict_class requires the digit task");
  return classifier_->forward(z);
}

torch::Tensor ModelBundleImpl::predict_pose(const torch::Tensor& z) {
  if (spec_.task != Task::kPose) throw ConfigError("predict_pose requires the pose task");
  return regressor_->forward(z);
}

torch::Tensor ModelBundleImpl::predict(const torch::Tensor& z) {
  return spec_.task == Task::kDigit ? predict_class(z) : predict_pose(z);
}

std::vector<torch::Tensor> ModelBundleImpl::generator_parameters() {
  std::vector<torch::Tensor> params;
  auto append = [&params](const std::vector<torch::Tensor>& p) {
    params.insert(params.end(), p.begin(), p.end());
  };
  if (flags_.shared) {
    append(encoder_->parameters());
    append(decoder_->parameters());
  } else {
    append(encoder_s_->parameters());
    append(encoder_t_->parameters());
    append(decoder_s_->parameters());
    append(decoder_t_->parameters());
  }
  if (classifier_) append(classifier_->parameters());
  if (regressor_) append(regressor_->parameters());
  return params;
}

std::vector<torch::Tensor> ModelBundleImpl::discriminator_parameters() {
  auto params = disc_s_->parameters();
  auto pt = disc_t_->parameters();
  params.insert(params.end(), pt.begin(), pt.end());
  return params;
}

void init_weights(torch::nn::Module& module) {
  torch::NoGradGuard guard;
  for (auto& item : module.named_parameters()) {
    if (item.key().ends_with("bias")) {
      item.value().zero_();
    } else if (item.value().dim() >= 2) {
      item.value().normal_(0.0, 0.02);
    }
    // 1-d "weight" parameters are PReLU slopes; keep their 0.25 init
  }
}

}  // namespace psvae
