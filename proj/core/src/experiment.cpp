#include <algorithm>
#include <fstream>
#include <memory>

#include <nlohmann/json.hpp>

#include "psvae/checkpoint.hpp"
#include "psvae/experiment.hpp"

namespace psvae {

namespace {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Digit preparation
// ---------------------------------------------------------------------------

torch::Tensor to_u8(const torch::Tensor& images) {
  return ((images + 1.0) * 127.5).round().clamp(0, 255).to(torch::kUInt8);
}

/// Renders the stand-in pool for one dataset name in that dataset's native
/// distribution format, so the regular readers exercise the same code path
/// as with the real files. Cached under <data_root>/synthetic/<name>.
void ensure_synthetic(const fs::path& dir, const std::string& name, DigitStyle style,
                      int64_t per_class, int64_t test_per_class, uint64_t seed) {
  nlohmann::json key;
  key["seed"] = seed;
  key["per_class"] = per_class;
  key["test_per_class"] = test_per_class;
  key["style"] = style == DigitStyle::kSourceStyle ? "source" : "target";

  const auto key_path = dir / "synth_key.json";
  if (fs::exists(key_path)) {
    std::ifstream in(key_path);
    nlohmann::json existing = nlohmann::json::parse(in, nullptr, false);
    if (existing == key) return;
  }
  fs::create_directories(dir);

  auto train = make_synthetic_digits(per_class, style, seed);
  auto test = make_synthetic_digits(test_per_class, style, seed + 1);
  if (name == "usps") {
    write_usps(dir / "usps_train.txt", train);
    write_usps(dir / "usps_test.txt", test);
  } else {
    write_idx_images(dir / "train-images-idx3-ubyte", to_u8(train.images.squeeze(1)));
    write_idx_labels(dir / "train-labels-idx1-ubyte", train.labels);
    write_idx_images(dir / "t10k-images-idx3-ubyte", to_u8(test.images.squeeze(1)));
    write_idx_labels(dir / "t10k-labels-idx1-ubyte", test.labels);
  }
  std::ofstream out(key_path);
  out << key.dump(2) << "\n";
}

DigitDataset load_raw_digits(const ExperimentConfig& cfg, const std::string& name,
                             bool train) {
  const auto root = cfg.effective_data_root();
  fs::path dir = root / name;
  if (cfg.synthetic_digits) {
    dir = root / "synthetic" / name;
    const bool is_source = name == cfg.source_dataset;
    ensure_synthetic(dir, name,
                     is_source ? DigitStyle::kSourceStyle : DigitStyle::kTargetStyle,
                     cfg.synth_per_class, cfg.synth_test_per_class,
                     cfg.seed * 2 + (is_source ? 101 : 202));
  }
  const auto ds = digit_source_from_string(name);
  switch (ds) {
    case DigitSource::kUsps:
      return load_usps(dir / (train ? "usps_train.txt" : "usps_test.txt"));
    case DigitSource::kSvhn:
      return load_svhn(dir / (train ? "train_32x32.mat" : "test_32x32.mat"));
    case DigitSource::kMnist:
      break;
  }
  return load_mnist_like(dir / (train ? "train-images-idx3-ubyte" : "t10k-images-idx3-ubyte"),
                         dir / (train ? "train-labels-idx1-ubyte" : "t10k-labels-idx1-ubyte"));
}

DigitDataset expand_channels(DigitDataset d, int64_t channels) {
  if (d.images.size(1) != channels) {
    if (d.images.size(1) != 1) throw DataError("cannot mix channel counts");
    d.images = d.images.repeat({1, channels, 1, 1});
  }
  return d;
}

void save_tensors(const fs::path& path, const torch::Tensor& images,
                  const torch::Tensor& labels) {
  torch::save(std::vector<torch::Tensor>{images, labels}, path.string());
}

std::pair<torch::Tensor, torch::Tensor> load_tensors(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("missing prepared file: " + path.string());
  std::vector<torch::Tensor> v;
  torch::load(v, path.string());
  if (v.size() != 2) throw DataError("unexpected prepared file layout: " + path.string());
  return {v[0], v[1]};
}

void prepare_digits(const ExperimentConfig& cfg) {
  const auto dir = cfg.prepared_dir();
  fs::create_directories(dir);

  auto src_train = load_raw_digits(cfg, cfg.source_dataset, true);
  auto src_test = load_raw_digits(cfg, cfg.source_dataset, false);
  auto tgt_train = load_raw_digits(cfg, cfg.target_dataset, true);
  auto tgt_test = load_raw_digits(cfg, cfg.target_dataset, false);
  const int64_t channels = cfg.network_spec().in_channels;
  src_train = expand_channels(std::move(src_train), channels);
  src_test = expand_channels(std::move(src_test), channels);
  tgt_train = expand_channels(std::move(tgt_train), channels);
  tgt_test = expand_channels(std::move(tgt_test), channels);

  // the source pool stays balanced (rate 0.10 with equal per-class counts
  // degenerates to a balanced draw)
  if (cfg.source_per_class > 0) {
    ImbalanceSpec balanced{digit_source_from_string(cfg.source_dataset), 0.10, 1,
                           cfg.source_per_class};
    src_train = materialize_split(
        src_train, make_imbalanced_split(src_train, balanced, cfg.seed + 1));
  }

  // the protocol table count unless a reduced split is requested
  const int64_t per_other =
      cfg.target_per_class > 0
          ? cfg.target_per_class
          : table_per_other_count(digit_source_from_string(cfg.target_dataset),
                                  cfg.imbalance_rate);
  ImbalanceSpec spec{digit_source_from_string(cfg.target_dataset), cfg.imbalance_rate, 1,
                     per_other};
  auto split = make_imbalanced_split(tgt_train, spec, cfg.seed + 2);
  auto class_counts = split_class_counts(tgt_train, split);
  auto tgt_imb = materialize_split(tgt_train, split);

  // deterministic source train/val partition
  const int64_t n = src_train.size();
  auto perm_idx = [&] {
    std::vector<int64_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(cfg.seed + 3);
    std::shuffle(order.begin(), order.end(), rng);
    return torch::tensor(order, torch::kInt64);
  }();
  const int64_t n_val = std::max<int64_t>(
      cfg.val_fraction > 0 ? 1 : 0, static_cast<int64_t>(cfg.val_fraction * n));
  auto val_idx = perm_idx.narrow(0, 0, n_val);
  auto train_idx = perm_idx.narrow(0, n_val, n - n_val);

  save_tensors(dir / "source_train.pt", src_train.images.index_select(0, train_idx),
               src_train.labels.index_select(0, train_idx));
  save_tensors(dir / "source_val.pt", src_train.images.index_select(0, val_idx),
               src_train.labels.index_select(0, val_idx));
  save_tensors(dir / "source_test.pt", src_test.images, src_test.labels);
  save_tensors(dir / "target_train.pt", tgt_imb.images, tgt_imb.labels);
  save_tensors(dir / "target_test.pt", tgt_test.images, tgt_test.labels);

  nlohmann::json manifest;
  manifest["format"] = "psvae-prepared-digits";
  manifest["config_hash"] = cfg.hash();
  manifest["data_hash"] = cfg.data_hash();
  manifest["source_train"] = n - n_val;
  manifest["source_val"] = n_val;
  manifest["source_test"] = src_test.size();
  manifest["target_train"] = tgt_imb.size();
  manifest["target_test"] = tgt_test.size();
  for (const auto& [cls, count] : class_counts) {
    manifest["target_class_counts"][std::to_string(cls)] = count;
  }
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Pose preparation
// ---------------------------------------------------------------------------

std::vector<PoseSample> pose_pool(const ExperimentConfig& cfg, Domain domain) {
  const auto& path = domain == Domain::kSource ? cfg.pose_source_container
                                               : cfg.pose_target_container;
  const int64_t wanted = cfg.pose_train_count + cfg.pose_test_count;
  if (!path.empty()) {
    auto samples = read_pose_container(path);
    if (static_cast<int64_t>(samples.size()) < wanted) {
      throw DataError("pose container too small: " + path);
    }
    return samples;
  }
  std::mt19937_64 rng(cfg.seed * 2 + (domain == Domain::kSource ? 31 : 32));
  const auto style =
      domain == Domain::kSource ? PoseStyle::kCgStyle : PoseStyle::kObservedStyle;
  std::vector<PoseSample> samples;
  samples.reserve(wanted);
  for (int64_t i = 0; i < wanted; ++i) samples.push_back(render_stick_figure(rng, style));
  return samples;
}

std::vector<PoseSample> crop_pipeline(const std::vector<PoseSample>& raw, Domain domain,
                                      double margin_mm) {
  torch::Tensor background;
  if (domain == Domain::kSource) {
    // rendered frames sit on the known uniform background
    background = torch::full_like(raw.front().depth, kBackgroundFillMm);
  } else {
    std::vector<torch::Tensor> frames;
    frames.reserve(raw.size());
    for (const auto& s : raw) frames.push_back(s.depth);
    background = estimate_background(frames);
  }
  std::vector<PoseSample> cropped;
  cropped.reserve(raw.size());
  for (const auto& s : raw) {
    auto fg = subtract_background(s.depth, background, margin_mm);
    auto crop = crop_resize(fg.cleaned, fg.mask, s.joints);
    PoseSample out;
    // containers carry millimeters; invert the [-1,1] normalization
    out.depth = (crop.image.squeeze(0) + 1.0) * (kBackgroundFillMm / 2.0);
    out.joints = crop.joints;
    cropped.push_back(std::move(out));
  }
  return cropped;
}

void prepare_pose(const ExperimentConfig& cfg) {
  const auto dir = cfg.prepared_dir();
  fs::create_directories(dir);

  nlohmann::json meta;
  meta["config_hash"] = cfg.hash();
  const std::string meta_str = meta.dump();

  for (Domain domain : {Domain::kSource, Domain::kTarget}) {
    auto cropped = crop_pipeline(pose_pool(cfg, domain), domain, cfg.background_margin_mm);
    const auto tag = to_string(domain);
    std::vector<PoseSample> train(cropped.begin(), cropped.begin() + cfg.pose_train_count);
    std::vector<PoseSample> test(cropped.begin() + cfg.pose_train_count, cropped.end());
    write_pose_container(dir / (tag + "_train.psp"), train, meta_str);
    write_pose_container(dir / (tag + "_test.psp"), test, meta_str);
  }

  nlohmann::json manifest;
  manifest["format"] = "psvae-prepared-pose";
  manifest["config_hash"] = cfg.hash();
  manifest["data_hash"] = cfg.data_hash();
  manifest["train_count"] = cfg.pose_train_count;
  manifest["test_count"] = cfg.pose_test_count;
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << "\n";
}

bool manifest_matches(const ExperimentConfig& cfg) {
  std::ifstream in(cfg.prepared_dir() / "manifest.json");
  if (!in) return false;
  auto manifest = nlohmann::json::parse(in, nullptr, false);
  return manifest.is_object() && manifest.value("data_hash", "") == cfg.data_hash();
}

std::pair<torch::Tensor, std::vector<JointSet>> load_pose_split(const fs::path& path) {
  auto samples = read_pose_container(path);
  std::vector<torch::Tensor> images;
  std::vector<JointSet> joints;
  images.reserve(samples.size());
  joints.reserve(samples.size());
  for (auto& s : samples) {
    images.push_back(normalize_depth(s.depth).unsqueeze(0));
    joints.push_back(s.joints);
  }
  return {torch::stack(images), joints};
}

LabeledData heatmap_labeled(torch::Tensor images, std::vector<JointSet> joints,
                            double sigma) {
  LabeledData d;
  d.images = std::move(images);
  auto shared = std::make_shared<std::vector<JointSet>>(std::move(joints));
  d.label_provider = [shared, sigma](const torch::Tensor& indices) {
    std::vector<torch::Tensor> maps;
    maps.reserve(indices.size(0));
    auto acc = indices.accessor<int64_t, 1>();
    for (int64_t i = 0; i < indices.size(0); ++i) {
      maps.push_back(encode_heatmaps((*shared)[acc[i]], sigma));
    }
    return torch::stack(maps);
  };
  return d;
}

EvalReport base_report(const ExperimentConfig& cfg, const CheckpointInfo& info,
                       const fs::path& checkpoint) {
  EvalReport r;
  r.task = cfg.task;
  r.variant = info.spec.variant;
  r.baseline = info.baseline;
  r.imbalance_rate = cfg.task == Task::kDigit ? cfg.imbalance_rate : 0.0;
  r.seed = cfg.seed;
  r.checkpoint_id = checkpoint.filename().string();
  r.config_hash = info.config_hash;
  return r;
}

}  // namespace

void prepare_data(const ExperimentConfig& cfg, bool force) {
  cfg.validate();
  if (!force && manifest_matches(cfg)) return;
  if (cfg.task == Task::kDigit) {
    prepare_digits(cfg);
  } else {
    prepare_pose(cfg);
  }
}

PreparedDigits load_prepared_digits(const ExperimentConfig& cfg) {
  const auto dir = cfg.prepared_dir();
  if (!manifest_matches(cfg)) {
    throw DataError("prepared data missing or stale; run prepare-data first: " +
                    dir.string());
  }
  auto [train_x, train_y] = load_tensors(dir / "source_train.pt");
  auto [val_x, val_y] = load_tensors(dir / "source_val.pt");
  auto [stest_x, stest_y] = load_tensors(dir / "source_test.pt");
  auto [ttrain_x, ttrain_y] = load_tensors(dir / "target_train.pt");
  auto [ttest_x, ttest_y] = load_tensors(dir / "target_test.pt");
  PreparedDigits p{LabeledData{train_x, train_y},
                   LabeledData{val_x, val_y},
                   TargetData(ttrain_x, ttrain_y),
                   DigitDataset{stest_x, stest_y},
                   DigitDataset{ttest_x, ttest_y}};
  return p;
}

PreparedPose load_prepared_pose(const ExperimentConfig& cfg) {
  const auto dir = cfg.prepared_dir();
  if (!manifest_matches(cfg)) {
    throw DataError("prepared data missing or stale; run prepare-data first: " +
                    dir.string());
  }
  auto [strain_x, strain_j] = load_pose_split(dir / "source_train.psp");
  auto [stest_x, stest_j] = load_pose_split(dir / "source_test.psp");
  auto [ttrain_x, ttrain_j] = load_pose_split(dir / "target_train.psp");
  auto [ttest_x, ttest_j] = load_pose_split(dir / "target_test.psp");

  // deterministic train/val partition of the source pool
  const int64_t n = strain_x.size(0);
  std::vector<int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed + 3);
  std::shuffle(order.begin(), order.end(), rng);
  const int64_t n_val = std::max<int64_t>(
      cfg.val_fraction > 0 ? 1 : 0, static_cast<int64_t>(cfg.val_fraction * n));

  auto pick = [&](int64_t begin, int64_t count) {
    std::vector<torch::Tensor> imgs;
    std::vector<JointSet> js;
    for (int64_t i = begin; i < begin + count; ++i) {
      imgs.push_back(strain_x[order[i]]);
      js.push_back(strain_j[order[i]]);
    }
    return heatmap_labeled(torch::stack(imgs), std::move(js), cfg.heatmap_sigma_px);
  };

  PreparedPose p{pick(n_val, n - n_val),
                 pick(0, n_val),
                 TargetData(ttrain_x),
                 stest_x,
                 ttest_x,
                 std::move(stest_j),
                 std::move(ttest_j)};
  return p;
}

std::filesystem::path find_latest_checkpoint(const std::filesystem::path& out_dir) {
  const auto ckpts = out_dir / "checkpoints";
  if (!fs::exists(ckpts)) return {};
  fs::path best;
  for (const auto& entry : fs::directory_iterator(ckpts)) {
    const auto name = entry.path().filename().string();
    if (name.starts_with("iter_") && (best.empty() || name > best.filename().string())) {
      best = entry.path();
    }
  }
  if (best.empty() && fs::exists(ckpts / "final")) return ckpts / "final";
  return best;
}

RunResult run_training(const ExperimentConfig& cfg, bool resume) {
  prepare_data(cfg);
  fs::create_directories(cfg.out_dir);
  cfg.write_file(cfg.out_dir / "config.json");

  auto tc = cfg.train_config();
  std::unique_ptr<Trainer> trainer;
  if (resume) {
    const auto latest = find_latest_checkpoint(cfg.out_dir);
    if (latest.empty()) throw ConfigError("no checkpoint to resume in " + cfg.out_dir.string());
    const auto info = read_checkpoint_info(latest);
    if (info.config_hash != cfg.hash()) {
      throw ConfigError("checkpoint belongs to a different config: " + latest.string());
    }
    trainer = std::make_unique<Trainer>(tc, latest);
  } else {
    trainer = std::make_unique<Trainer>(tc, cfg.network_spec());
  }

  if (cfg.task == Task::kDigit) {
    auto data = load_prepared_digits(cfg);
    return trainer->run(data.source_train, data.source_val, data.target_train);
  }
  auto data = load_prepared_pose(cfg);
  return trainer->run(data.source_train, data.source_val, data.target_train);
}

torch::Tensor predict_classes(ModelBundle bundle, const torch::Tensor& images,
                              Domain domain, int64_t batch_size) {
  torch::NoGradGuard guard;
  bundle->eval();
  std::vector<torch::Tensor> out;
  for (int64_t start = 0; start < images.size(0); start += batch_size) {
    const int64_t n = std::min(batch_size, images.size(0) - start);
    auto code = take_mean(bundle->encode(images.narrow(0, start, n), domain),
                          bundle->spec());
    out.push_back(bundle->predict_class(code.z).argmax(1));
  }
  return torch::cat(out);
}

std::vector<JointSet> predict_joints(ModelBundle bundle, const torch::Tensor& images,
                                     Domain domain, int64_t batch_size) {
  torch::NoGradGuard guard;
  bundle->eval();
  std::vector<JointSet> out;
  out.reserve(images.size(0));
  for (int64_t start = 0; start < images.size(0); start += batch_size) {
    const int64_t n = std::min(batch_size, images.size(0) - start);
    auto code = take_mean(bundle->encode(images.narrow(0, start, n), domain),
                          bundle->spec());
    auto maps = bundle->predict_pose(code.z);
    for (int64_t i = 0; i < n; ++i) out.push_back(decode_heatmaps(maps[i]));
  }
  return out;
}

EvalReport evaluate(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                    Domain domain, bool allow_hash_mismatch) {
  const auto info = read_checkpoint_info(checkpoint);
  if (!allow_hash_mismatch && info.config_hash != cfg.hash()) {
    throw ConfigError("checkpoint config hash does not match this config (" +
                      info.config_hash + " vs " + cfg.hash() + ")");
  }
  auto bundle = load_checkpoint_model(checkpoint);
  auto report = base_report(cfg, info, checkpoint);

  if (cfg.task == Task::kDigit) {
    auto data = load_prepared_digits(cfg);
    const auto& test = domain == Domain::kSource ? data.source_test : data.target_test;
    auto preds = predict_classes(bundle, test.images, domain);
    report.sample_count = test.size();
    report.accuracy = classification_accuracy(preds, test.labels);
    return report;
  }

  auto data = load_prepared_pose(cfg);
  const auto& images =
      domain == Domain::kSource ? data.source_test_images : data.target_test_images;
  const auto& gt =
      domain == Domain::kSource ? data.source_test_joints : data.target_test_joints;
  auto preds = predict_joints(bundle, images, domain);
  report.sample_count = images.size(0);
  report.pck_at_headline = pck(preds, gt, 10.0);
  report.curve = pck_curve(preds, gt, cfg.effective_thresholds());
  return report;
}

void export_experiment_features(const ExperimentConfig& cfg,
                                const std::filesystem::path& checkpoint,
                                const std::filesystem::path& csv_path) {
  auto bundle = load_checkpoint_model(checkpoint);
  torch::Tensor source_images, target_images;
  if (cfg.task == Task::kDigit) {
    auto data = load_prepared_digits(cfg);
    source_images = data.source_test.images;
    target_images = data.target_test.images;
  } else {
    auto data = load_prepared_pose(cfg);
    source_images = data.source_test_images;
    target_images = data.target_test_images;
  }
  export_features(bundle, source_images, Domain::kSource, csv_path, 64, false);
  export_features(bundle, target_images, Domain::kTarget, csv_path, 64, true);
}

}  // namespace psvae
