#include <chrono>
#include <fstream>
#include <sstream>

#include "psvae/data.hpp"
#include "psvae/losses.hpp"
#include "psvae/train.hpp"

namespace psvae {

namespace {

void set_requires_grad(const std::vector<torch::Tensor>& params, bool value) {
  for (auto& p : params) p.set_requires_grad(value);
}

torch::Tensor sample_indices(int64_t n, int64_t count, std::mt19937_64& rng) {
  std::uniform_int_distribution<int64_t> pick(0, n - 1);
  std::vector<int64_t> idx(count);
  for (auto& i : idx) i = pick(rng);
  return torch::tensor(idx, torch::kInt64);
}

}  // namespace

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

std::mt19937_64 rng_from_string(const std::string& s) {
  std::mt19937_64 rng;
  std::istringstream is(s);
  is >> rng;
  return rng;
}

Trainer::Trainer(const TrainConfig& cfg, const NetworkSpec& spec)
    : cfg_(cfg), data_rng_(cfg.seed) {
  torch::manual_seed(cfg.seed);
  bundle_ = ModelBundle(spec);
  init_optimizers();
}

Trainer::Trainer(const TrainConfig& cfg, const std::filesystem::path& checkpoint_dir)
    : cfg_(cfg) {
  auto info = read_checkpoint_info(checkpoint_dir);
  if (!info.has_optimizers) {
    throw ConfigError("checkpoint has no training state: " + checkpoint_dir.string());
  }
  bundle_ = load_checkpoint_model(checkpoint_dir);
  init_optimizers();
  load_checkpoint_optimizers(checkpoint_dir, *opt_g_, *opt_d_);
  data_rng_ = rng_from_string(info.data_rng_state);
  iteration_ = info.iteration;
  resumed_ = true;
}

void Trainer::init_optimizers() {
  auto opts_g = torch::optim::AdamOptions(cfg_.lr_g)
                    .betas({cfg_.adam_beta1, cfg_.adam_beta2});
  auto opts_d = torch::optim::AdamOptions(cfg_.lr_d)
                    .betas({cfg_.adam_beta1, cfg_.adam_beta2});
  opt_g_ = std::make_unique<torch::optim::Adam>(bundle_->generator_parameters(), opts_g);
  opt_d_ = std::make_unique<torch::optim::Adam>(bundle_->discriminator_parameters(), opts_d);
}

LossBreakdown Trainer::source_only_step(const ImageBatch& batch_s) {
  bundle_->train();
  opt_g_->zero_grad();
  const auto& spec = bundle_->spec();
  auto code = take_mean(bundle_->encode(batch_s), spec);
  auto output = bundle_->predict(code.z);
  auto pred = spec.task == Task::kDigit
                  ? prediction_loss_cls(output, *batch_s.labels)
                  : prediction_loss_reg(output, *batch_s.labels);
  auto total = cfg_.weights.epsilon * pred;
  total.backward();
  opt_g_->step();
  LossBreakdown parts;
  parts.pred = pred.item<double>();
  parts.total = total.item<double>();
  return parts;
}

LossBreakdown Trainer::train_step(const ImageBatch& batch_s, const ImageBatch& batch_t) {
  if (!batch_s.labels.has_value()) throw DataError("source batch must carry labels");
  if (batch_t.labels.has_value()) throw DataError("target batch must not carry labels");

  LossBreakdown parts;
  if (cfg_.source_only) {
    parts = source_only_step(batch_s);
    check_finite(parts, batch_s, batch_t);
    ++iteration_;
    return parts;
  }

  bundle_->train();
  const auto& spec = bundle_->spec();
  const auto flags = bundle_->flags();
  const auto& x_s = batch_s.pixels;
  const auto& x_t = batch_t.pixels;

  // translations, on deterministic codes with cross-domain zero-substitution
  auto f_s = bundle_->encode(x_s, Domain::kSource);
  auto f_t = bundle_->encode(x_t, Domain::kTarget);
  auto code_s = take_mean(f_s, spec);
  auto code_t = take_mean(f_t, spec);
  auto xhat_t = bundle_->decode(code_s, Domain::kTarget);
  auto xhat_s = bundle_->decode(code_t, Domain::kSource);

  // --- discriminator update, generator outputs gradient-blocked ---
  opt_d_->zero_grad();
  auto loss_d = adversarial_loss_d(bundle_->discriminate(x_s, Domain::kSource),
                                   bundle_->discriminate(xhat_s.detach(), Domain::kSource)) +
                adversarial_loss_d(bundle_->discriminate(x_t, Domain::kTarget),
                                   bundle_->discriminate(xhat_t.detach(), Domain::kTarget));
  loss_d.backward();
  opt_d_->step();
  parts.adv_d = loss_d.item<double>();

  // --- generator-side update ---
  opt_g_->zero_grad();
  set_requires_grad(bundle_->discriminator_parameters(), false);
  auto adv_g = adversarial_loss_g(bundle_->discriminate(xhat_t, Domain::kTarget)) +
               adversarial_loss_g(bundle_->discriminate(xhat_s, Domain::kSource));

  auto f_re_t = bundle_->encode(xhat_t, Domain::kTarget);
  auto f_re_s = bundle_->encode(xhat_s, Domain::kSource);
  auto code_re_t = take_mean(f_re_t, spec);
  auto code_re_s = take_mean(f_re_s, spec);
  auto cyc = cycle_loss(x_s, bundle_->decode(code_re_t, Domain::kSource)) +
             cycle_loss(x_t, bundle_->decode(code_re_s, Domain::kTarget));

  // identity path, the only one with resampling (VAE variants)
  auto code_id_s = flags.vae ? reparameterize(f_s, spec) : code_s;
  auto code_id_t = flags.vae ? reparameterize(f_t, spec) : code_t;
  auto id = identity_loss(x_s, bundle_->decode(code_id_s, Domain::kSource)) +
            identity_loss(x_t, bundle_->decode(code_id_t, Domain::kTarget));

  auto kl = flags.vae ? kl_loss(f_s, Domain::kSource, spec) +
                            kl_loss(f_t, Domain::kTarget, spec)
                      : torch::zeros({});

  // feature consistency: reference code constant, gradient reaches only
  // the re-encoding path; undivided variants compare the whole feature
  auto ref = [&](const DisentangledCode& c) {
    return (flags.split ? c.z : c.full()).detach();
  };
  auto re = [&](const DisentangledCode& c) { return flags.split ? c.z : c.full(); };
  auto fc = feature_consistency_loss(ref(code_s), re(code_re_t)) +
            feature_consistency_loss(ref(code_t), re(code_re_s));

  auto output = bundle_->predict(code_s.z);
  auto pred = spec.task == Task::kDigit
                  ? prediction_loss_cls(output, *batch_s.labels)
                  : prediction_loss_reg(output, *batch_s.labels);

  auto total = total_loss(adv_g, cyc, id, kl, fc, pred, cfg_.weights);
  total.backward();
  set_requires_grad(bundle_->discriminator_parameters(), true);
  opt_g_->step();

  parts.adv_g = adv_g.item<double>();
  parts.cyc = cyc.item<double>();
  parts.id = id.item<double>();
  parts.kl = kl.item<double>();
  parts.fc = fc.item<double>();
  parts.pred = pred.item<double>();
  parts.total = total.item<double>();
  check_finite(parts, batch_s, batch_t);
  ++iteration_;
  return parts;
}

void Trainer::check_finite(const LossBreakdown& parts, const ImageBatch& batch_s,
                           const ImageBatch& batch_t) {
  if (parts.finite()) return;
  std::filesystem::path snapshot = cfg_.out_dir.empty() ? "." : cfg_.out_dir;
  snapshot /= "nan_snapshot";
  std::filesystem::create_directories(snapshot);
  struct Holder : torch::nn::Module {
    Holder(torch::Tensor s, torch::Tensor t) {
      register_buffer("batch_source", s);
      register_buffer("batch_target", t);
    }
  } holder(batch_s.pixels, batch_t.pixels);
  save_named_tensors(snapshot / "batch.bin", {}, holder.named_buffers());
  throw NumericalError("non-finite loss at iteration " + std::to_string(iteration_) +
                       "; triggering batch saved to " + snapshot.string());
}

double Trainer::validation_pred_loss(const LabeledData& val, int64_t batch_size) {
  torch::NoGradGuard guard;
  bundle_->eval();
  const auto& spec = bundle_->spec();
  double sum = 0.0;
  int64_t batches = 0;
  for (int64_t start = 0; start < val.images.size(0); start += batch_size) {
    const int64_t n = std::min(batch_size, val.images.size(0) - start);
    auto code = take_mean(
        bundle_->encode(val.images.narrow(0, start, n), Domain::kSource), spec);
    auto output = bundle_->predict(code.z);
    auto labels = val.labels_for(torch::arange(start, start + n, torch::kInt64));
    auto loss = spec.task == Task::kDigit ? prediction_loss_cls(output, labels)
                                          : prediction_loss_reg(output, labels);
    sum += loss.item<double>();
    batches++;
  }
  bundle_->train();
  return batches > 0 ? sum / batches : 0.0;
}

void Trainer::save(const std::filesystem::path& dir) {
  CheckpointInfo info;
  info.spec = bundle_->spec();
  info.iteration = iteration_;
  info.data_rng_state = rng_to_string(data_rng_);
  info.config_hash = cfg_.config_hash;
  info.baseline = cfg_.source_only;
  save_checkpoint(dir, bundle_, info, opt_g_.get(), opt_d_.get());
}

RunResult Trainer::run(const LabeledData& source_train, const LabeledData& source_val,
                       const TargetData& target) {
  if (!cfg_.out_dir.empty()) std::filesystem::create_directories(cfg_.out_dir);
  const auto metrics_path = cfg_.out_dir / "metrics.csv";
  std::ofstream metrics;
  if (!cfg_.out_dir.empty()) {
    metrics.open(metrics_path, resumed_ ? std::ios::app : std::ios::out);
    if (!metrics) throw DataError("cannot write " + metrics_path.string());
    if (!resumed_) {
      metrics << "iteration,adv_d,adv_g,cyc,id,kl,fc,pred,total,wall_time_s\n";
    }
  }

  RunResult result;
  const auto t0 = std::chrono::steady_clock::now();
  for (; iteration_ < cfg_.iterations;) {
    auto idx_s = sample_indices(source_train.images.size(0), cfg_.batch_size, data_rng_);
    auto idx_t = sample_indices(target.images().size(0), cfg_.batch_size, data_rng_);
    ImageBatch batch_s{source_train.images.index_select(0, idx_s), Domain::kSource,
                       source_train.labels_for(idx_s)};
    auto target_pixels = target.images().index_select(0, idx_t);
    if (cfg_.invert_target_p > 0.0) {
      std::vector<torch::Tensor> rows;
      rows.reserve(target_pixels.size(0));
      for (int64_t i = 0; i < target_pixels.size(0); ++i) {
        rows.push_back(
            invert_pixels_randomly(target_pixels[i], cfg_.invert_target_p, data_rng_));
      }
      target_pixels = torch::stack(rows);
    }
    ImageBatch batch_t{target_pixels, Domain::kTarget, std::nullopt};

    auto parts = train_step(batch_s, batch_t);
    result.history.push_back(parts);
    result.iterations_run++;

    if (metrics.is_open()) {
      const double wall =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      metrics << iteration_ << ',' << parts.adv_d << ',' << parts.adv_g << ','
              << parts.cyc << ',' << parts.id << ',' << parts.kl << ',' << parts.fc
              << ',' << parts.pred << ',' << parts.total << ',' << wall << '\n';
      metrics.flush();
    }

    const bool at_cadence = cfg_.checkpoint_every > 0 &&
                            (iteration_ % cfg_.checkpoint_every == 0 ||
                             iteration_ == cfg_.iterations);
    if (at_cadence && !cfg_.out_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "iter_%06lld",
                    static_cast<long long>(iteration_));
      const auto ckpt_dir = cfg_.out_dir / "checkpoints" / name;
      save(ckpt_dir);
      result.last_checkpoint = ckpt_dir;

      // model selection: lowest source-domain validation prediction loss
      // (no target labels are ever consulted)
      const double val_loss = validation_pred_loss(source_val);
      if (val_loss < result.best_val_pred_loss) {
        result.best_val_pred_loss = val_loss;
        result.best_checkpoint = cfg_.out_dir / "checkpoints" / "best";
        save(result.best_checkpoint);
      }
    }
  }
  if (!cfg_.out_dir.empty() && result.last_checkpoint.empty()) {
    const auto ckpt_dir = cfg_.out_dir / "checkpoints" / "final";
    save(ckpt_dir);
    result.last_checkpoint = ckpt_dir;
  }
  return result;
}

}  // namespace psvae
