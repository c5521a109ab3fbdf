#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "psvae/config.hpp"
#include "psvae/data.hpp"

namespace psvae {

namespace {

nlohmann::json canonical_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["task"] = to_string(c.task);
  j["variant"] = to_string(c.variant);
  j["source_only"] = c.source_only;
  if (c.task == Task::kDigit) {
    j["source_dataset"] = c.source_dataset;
    j["target_dataset"] = c.target_dataset;
    j["imbalance_rate"] = c.imbalance_rate;
    j["synthetic_digits"] = c.synthetic_digits;
    j["synth_per_class"] = c.synth_per_class;
    j["synth_test_per_class"] = c.synth_test_per_class;
    j["source_per_class"] = c.source_per_class;
    j["target_per_class"] = c.target_per_class;
  } else {
    j["pose_source_container"] = c.pose_source_container;
    j["pose_target_container"] = c.pose_target_container;
    j["pose_train_count"] = c.pose_train_count;
    j["pose_test_count"] = c.pose_test_count;
    j["background_margin_mm"] = c.background_margin_mm;
    j["heatmap_sigma_px"] = c.heatmap_sigma_px;
  }
  j["iterations"] = c.iterations;
  j["batch_size"] = c.batch_size;
  j["lr_g"] = c.lr_g;
  j["lr_d"] = c.lr_d;
  j["checkpoint_every"] = c.checkpoint_every;
  j["val_fraction"] = c.val_fraction;
  j["invert_target_p"] = c.invert_target_p;
  j["seed"] = c.seed;
  if (c.weights_overridden) {
    j["weights"] = {{"alpha", c.weights.alpha}, {"beta", c.weights.beta},
                    {"gamma", c.weights.gamma}, {"delta", c.weights.delta},
                    {"epsilon", c.weights.epsilon}};
  }
  if (!c.eval_thresholds.empty()) j["eval_thresholds"] = c.eval_thresholds;
  j["out_dir"] = c.out_dir.string();
  j["data_root"] = c.data_root.string();
  return j;
}

}  // namespace

std::string fnv1a_hex(const std::string& text) {
  uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string ExperimentConfig::to_json() const { return canonical_json(*this).dump(2); }

std::string ExperimentConfig::hash() const {
  auto j = canonical_json(*this);
  // The output location must not change the experiment identity.
  j.erase("out_dir");
  j.erase("data_root");
  return fnv1a_hex(j.dump());
}

std::string ExperimentConfig::data_hash() const {
  nlohmann::json j;
  j["task"] = to_string(task);
  j["seed"] = seed;
  j["val_fraction"] = val_fraction;
  if (task == Task::kDigit) {
    j["source_dataset"] = source_dataset;
    j["target_dataset"] = target_dataset;
    j["imbalance_rate"] = imbalance_rate;
    j["synthetic_digits"] = synthetic_digits;
    j["synth_per_class"] = synth_per_class;
    j["synth_test_per_class"] = synth_test_per_class;
    j["source_per_class"] = source_per_class;
    j["target_per_class"] = target_per_class;
  } else {
    j["pose_source_container"] = pose_source_container;
    j["pose_target_container"] = pose_target_container;
    j["pose_train_count"] = pose_train_count;
    j["pose_test_count"] = pose_test_count;
    j["background_margin_mm"] = background_margin_mm;
  }
  return fnv1a_hex(j.dump());
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config JSON: ") + e.what());
  }
  ExperimentConfig c;
  try {
    if (j.contains("task")) c.task = task_from_string(j.at("task").get<std::string>());
    if (j.contains("variant")) c.variant = variant_from_string(j.at("variant").get<std::string>());
    c.source_only = j.value("source_only", c.source_only);
    c.source_dataset = j.value("source_dataset", c.source_dataset);
    c.target_dataset = j.value("target_dataset", c.target_dataset);
    c.imbalance_rate = j.value("imbalance_rate", c.imbalance_rate);
    c.synthetic_digits = j.value("synthetic_digits", c.synthetic_digits);
    c.synth_per_class = j.value("synth_per_class", c.synth_per_class);
    c.synth_test_per_class = j.value("synth_test_per_class", c.synth_test_per_class);
    c.source_per_class = j.value("source_per_class", c.source_per_class);
    c.target_per_class = j.value("target_per_class", c.target_per_class);
    c.pose_source_container = j.value("pose_source_container", c.pose_source_container);
    c.pose_target_container = j.value("pose_target_container", c.pose_target_container);
    c.pose_train_count = j.value("pose_train_count", c.pose_train_count);
    c.pose_test_count = j.value("pose_test_count", c.pose_test_count);
    c.background_margin_mm = j.value("background_margin_mm", c.background_margin_mm);
    c.heatmap_sigma_px = j.value("heatmap_sigma_px", c.heatmap_sigma_px);
    c.iterations = j.value("iterations", c.iterations);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr_g = j.value("lr_g", c.lr_g);
    c.lr_d = j.value("lr_d", c.lr_d);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.invert_target_p = j.value("invert_target_p", c.invert_target_p);
    c.seed = j.value("seed", c.seed);
    if (j.contains("weights")) {
      const auto& w = j.at("weights");
      c.weights.alpha = w.value("alpha", c.weights.alpha);
      c.weights.beta = w.value("beta", c.weights.beta);
      c.weights.gamma = w.value("gamma", c.weights.gamma);
      c.weights.delta = w.value("delta", c.weights.delta);
      c.weights.epsilon = w.value("epsilon", c.weights.epsilon);
      c.weights_overridden = true;
    }
    if (j.contains("eval_thresholds")) {
      c.eval_thresholds = j.at("eval_thresholds").get<std::vector<double>>();
    }
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("data_root")) c.data_root = j.at("data_root").get<std::string>();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config field: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

void ExperimentConfig::write_file(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file: " + path.string());
  out << to_json() << "\n";
}

void ExperimentConfig::validate() const {
  if (iterations <= 0) throw ConfigError("iterations must be positive");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (lr_g <= 0 || lr_d <= 0) throw ConfigError("learning rates must be positive");
  if (val_fraction < 0 || val_fraction >= 1) {
    throw ConfigError("val_fraction must lie in [0,1)");
  }
  if (checkpoint_every <= 0) throw ConfigError("checkpoint_every must be positive");
  if (task == Task::kDigit) {
    const auto src = digit_source_from_string(source_dataset);
    const auto tgt = digit_source_from_string(target_dataset);
    if (src == tgt) throw ConfigError("source and target datasets must differ");
    if (tgt == DigitSource::kSvhn) {
      throw ConfigError("SVHN serves only as the source domain");
    }
    if (src == DigitSource::kSvhn && tgt != DigitSource::kMnist) {
      throw ConfigError("SVHN pairs only with MNIST as the target");
    }
    if (synthetic_digits && (src == DigitSource::kSvhn || tgt == DigitSource::kSvhn)) {
      throw ConfigError("the synthetic stand-in covers only grayscale pairs");
    }
    // rejects unsupported rates up front (SVHN only has the 10% cell)
    table_per_other_count(tgt, imbalance_rate);
    if (src == DigitSource::kSvhn) table_per_other_count(src, imbalance_rate);
  } else {
    if (pose_train_count <= 0 || pose_test_count <= 0) {
      throw ConfigError("pose sample counts must be positive");
    }
    if (heatmap_sigma_px <= 0) throw ConfigError("heatmap_sigma_px must be positive");
  }
}

void ExperimentConfig::apply_smoke_profile() {
  iterations = std::min<int64_t>(iterations, 40);
  batch_size = std::min<int64_t>(batch_size, 8);
  checkpoint_every = std::min(checkpoint_every, iterations);
  if (task == Task::kDigit) {
    synthetic_digits = true;
    synth_per_class = std::min<int64_t>(synth_per_class, 120);
    synth_test_per_class = std::min<int64_t>(synth_test_per_class, 20);
    source_per_class = source_per_class > 0 ? std::min<int64_t>(source_per_class, 80) : 80;
    target_per_class = target_per_class > 0 ? std::min<int64_t>(target_per_class, 60) : 60;
  } else {
    pose_train_count = std::min<int64_t>(pose_train_count, 24);
    pose_test_count = std::min<int64_t>(pose_test_count, 8);
  }
}

NetworkSpec ExperimentConfig::network_spec() const {
  if (task == Task::kPose) return NetworkSpec::pose(variant);
  const bool svhn = source_dataset == "svhn" || target_dataset == "svhn";
  return NetworkSpec::digit(variant, svhn ? 3 : 1, svhn);
}

LossWeights ExperimentConfig::effective_weights() const {
  return weights_overridden ? weights : LossWeights::defaults_for(task);
}

double ExperimentConfig::effective_invert_p() const {
  if (invert_target_p >= 0) return invert_target_p;
  return (task == Task::kDigit && source_dataset == "svhn") ? 0.5 : 0.0;
}

std::vector<double> ExperimentConfig::effective_thresholds() const {
  if (!eval_thresholds.empty()) return eval_thresholds;
  std::vector<double> t;
  for (int px = 1; px <= 30; ++px) t.push_back(static_cast<double>(px));
  return t;
}

std::filesystem::path ExperimentConfig::effective_data_root() const {
  if (!data_root.empty()) return data_root;
  if (const char* env = std::getenv("PSVAE_DATA_ROOT"); env != nullptr && *env != '\0') {
    return env;
  }
  return "data";
}

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig t;
  t.task = task;
  t.variant = variant;
  t.source_only = source_only;
  t.weights = effective_weights();
  t.iterations = iterations;
  t.batch_size = batch_size;
  t.lr_g = lr_g;
  t.lr_d = lr_d;
  t.seed = seed;
  t.checkpoint_every = checkpoint_every;
  t.invert_target_p = effective_invert_p();
  t.out_dir = out_dir;
  t.config_hash = hash();
  return t;
}

}  // namespace psvae
