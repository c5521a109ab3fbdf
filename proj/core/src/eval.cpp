#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "psvae/eval.hpp"

namespace psvae {

double classification_accuracy(const torch::Tensor& preds, const torch::Tensor& labels) {
  if (preds.numel() == 0) throw DataError("empty prediction set");
  if (preds.numel() != labels.numel()) throw DataError("prediction/label length mismatch");
  return preds.eq(labels).to(torch::kFloat64).mean().item<double>();
}

PckResult pck(const std::vector<JointSet>& pred, const std::vector<JointSet>& gt,
              double threshold_px) {
  if (pred.size() != gt.size()) throw DataError("prediction/ground-truth length mismatch");
  PckResult r;
  std::array<int64_t, kNumJoints> hits{};
  int64_t total_visible = 0, total_hits = 0;
  for (size_t i = 0; i < gt.size(); ++i) {
    for (size_t j = 0; j < kNumJoints; ++j) {
      if (!gt[i][j].visible) continue;
      r.visible_count[j]++;
      total_visible++;
      const double du = pred[i][j].u - gt[i][j].u;
      const double dv = pred[i][j].v - gt[i][j].v;
      const bool hit =
          pred[i][j].visible && std::sqrt(du * du + dv * dv) < threshold_px;
      if (hit) {
        hits[j]++;
        total_hits++;
      }
    }
  }
  if (total_visible == 0) throw DataError("no visible ground-truth joints");
  for (size_t j = 0; j < kNumJoints; ++j) {
    r.per_joint[j] = r.visible_count[j] > 0
                         ? static_cast<double>(hits[j]) / r.visible_count[j]
                         : std::numeric_limits<double>::quiet_NaN();
  }
  r.average = static_cast<double>(total_hits) / total_visible;
  return r;
}

PckCurve pck_curve(const std::vector<JointSet>& pred, const std::vector<JointSet>& gt,
                   std::vector<double> thresholds) {
  std::sort(thresholds.begin(), thresholds.end());
  PckCurve curve;
  curve.thresholds = thresholds;
  for (double t : thresholds) curve.average_rates.push_back(pck(pred, gt, t).average);
  return curve;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["task"] = psvae::to_string(task);
  j["variant"] = psvae::to_string(variant);
  j["baseline"] = baseline;
  j["imbalance_rate"] = imbalance_rate;
  j["sample_count"] = sample_count;
  j["seed"] = seed;
  j["checkpoint_id"] = checkpoint_id;
  j["config_hash"] = config_hash;
  if (accuracy) j["accuracy"] = *accuracy;
  if (pck_at_headline) {
    nlohmann::json p;
    for (size_t i = 0; i < kNumJoints; ++i) {
      p[joint_names()[i]] = pck_at_headline->per_joint[i];
    }
    j["pck_10px"] = p;
    j["pck_10px_avg"] = pck_at_headline->average;
  }
  if (curve) {
    j["curve"]["thresholds"] = curve->thresholds;
    j["curve"]["average_rates"] = curve->average_rates;
  }
  return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  EvalReport r;
  r.task = task_from_string(j.at("task").get<std::string>());
  r.variant = variant_from_string(j.at("variant").get<std::string>());
  r.baseline = j.value("baseline", false);
  r.imbalance_rate = j.value("imbalance_rate", 0.0);
  r.sample_count = j.value("sample_count", int64_t{0});
  r.seed = j.value("seed", uint64_t{0});
  r.checkpoint_id = j.value("checkpoint_id", std::string());
  r.config_hash = j.value("config_hash", std::string());
  if (j.contains("accuracy")) r.accuracy = j["accuracy"].get<double>();
  if (j.contains("pck_10px")) {
    PckResult p;
    for (size_t i = 0; i < kNumJoints; ++i) {
      p.per_joint[i] = j["pck_10px"].value(joint_names()[i], 0.0);
    }
    p.average = j.value("pck_10px_avg", 0.0);
    r.pck_at_headline = p;
  }
  if (j.contains("curve")) {
    PckCurve c;
    c.thresholds = j["curve"]["thresholds"].get<std::vector<double>>();
    c.average_rates = j["curve"]["average_rates"].get<std::vector<double>>();
    r.curve = c;
  }
  return r;
}

void EvalReport::write_json(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_json() << "\n";
}

void EvalReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "task,variant,baseline,imbalance_rate,sample_count,metric,value\n";
  auto row = [&](const std::string& metric, double value) {
    out << psvae::to_string(task) << ',' << psvae::to_string(variant) << ','
        << (baseline ? 1 : 0) << ',' << imbalance_rate << ',' << sample_count << ','
        << metric << ',' << value << '\n';
  };
  if (accuracy) row("accuracy", *accuracy);
  if (pck_at_headline) {
    for (auto& [name, value] : jointwise_columns(*pck_at_headline)) {
      row("pck10_" + name, value);
    }
  }
  if (curve) {
    for (size_t i = 0; i < curve->thresholds.size(); ++i) {
      row("pck_at_" + std::to_string(curve->thresholds[i]), curve->average_rates[i]);
    }
  }
}

std::vector<std::pair<std::string, double>> jointwise_columns(const PckResult& r) {
  auto pair_avg = [&](int l, int rj) {
    double sum = 0.0;
    int n = 0;
    for (int j : {l, rj}) {
      if (r.visible_count[j] > 0) {
        sum += r.per_joint[j];
        n++;
      }
    }
    return n > 0 ? sum / n : std::numeric_limits<double>::quiet_NaN();
  };
  std::vector<std::pair<std::string, double>> cols = {
      {"Head", r.per_joint[0]},        {"Neck", r.per_joint[1]},
      {"Chest", r.per_joint[2]},       {"Waist", r.per_joint[3]},
      {"Shoulder", pair_avg(4, 5)},    {"Elbow", pair_avg(6, 7)},
      {"Wrists", pair_avg(8, 9)},      {"Hands", pair_avg(10, 11)},
      {"Knees", pair_avg(12, 13)},     {"Ankles", pair_avg(14, 15)},
      {"Foots", pair_avg(16, 17)},     {"Avg", r.average},
  };
  return cols;
}

std::string jointwise_table(const PckResult& r) {
  auto cols = jointwise_columns(r);
  std::ostringstream header, values;
  for (auto& [name, value] : cols) {
    header << std::setw(10) << name;
    values << std::setw(10) << std::fixed << std::setprecision(1) << value * 100.0;
  }
  return header.str() + "\n" + values.str() + "\n";
}

void export_features(ModelBundle bundle, const torch::Tensor& images, Domain domain,
                     const std::filesystem::path& path, int64_t batch_size,
                     bool append) {
  torch::NoGradGuard guard;
  bundle->eval();
  std::ofstream out(path, append ? std::ios::app : std::ios::out);
  if (!out) throw DataError("cannot write " + path.string());
  const auto& spec = bundle->spec();
  const int64_t dim = spec.n_z * spec.code_height() * spec.code_width();
  if (!append) {
    out << "domain";
    for (int64_t k = 0; k < dim; ++k) out << ",dim_" << k;
    out << "\n";
  }
  for (int64_t start = 0; start < images.size(0); start += batch_size) {
    const int64_t n = std::min(batch_size, images.size(0) - start);
    auto batch = images.narrow(0, start, n);
    auto code = take_mean(bundle->encode(batch, domain), spec);
    auto flat = code.z.reshape({n, dim}).contiguous();
    auto acc = flat.accessor<float, 2>();
    for (int64_t i = 0; i < n; ++i) {
      out << psvae::to_string(domain);
      for (int64_t k = 0; k < dim; ++k) out << ',' << acc[i][k];
      out << '\n';
    }
  }
}

}  // namespace psvae
