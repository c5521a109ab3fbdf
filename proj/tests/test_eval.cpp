#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "psvae/eval.hpp"
#include "psvae/model.hpp"

// doctest last: torch's logging shim also defines a CHECK macro
#include <doctest.h>

using namespace psvae;
namespace fs = std::filesystem;

namespace {

// independent brute-force PCK
PckResult pck_oracle(const std::vector<JointSet>& pred, const std::vector<JointSet>& gt,
                     double threshold) {
  PckResult r;
  std::array<int64_t, kNumJoints> hits{};
  int64_t total_hits = 0, total_vis = 0;
  for (size_t i = 0; i < gt.size(); ++i) {
    for (int j = 0; j < kNumJoints; ++j) {
      if (!gt[i][j].visible) continue;
      r.visible_count[j]++;
      total_vis++;
      if (!pred[i][j].visible) continue;
      const double du = pred[i][j].u - gt[i][j].u;
      const double dv = pred[i][j].v - gt[i][j].v;
      if (std::sqrt(du * du + dv * dv) < threshold) {
        hits[j]++;
        total_hits++;
      }
    }
  }
  for (int j = 0; j < kNumJoints; ++j) {
    r.per_joint[j] = r.visible_count[j] > 0
                         ? static_cast<double>(hits[j]) / r.visible_count[j]
                         : std::numeric_limits<double>::quiet_NaN();
  }
  r.average = total_vis > 0 ? static_cast<double>(total_hits) / total_vis : 0.0;
  return r;
}

std::vector<JointSet> random_joints(int n, std::mt19937_64& rng, bool all_visible) {
  std::uniform_real_distribution<double> du(0, kPoseWidth), dv(0, kPoseHeight);
  std::bernoulli_distribution vis(0.8);
  std::vector<JointSet> out(n);
  for (auto& js : out) {
    for (auto& j : js) j = {du(rng), dv(rng), all_visible || vis(rng)};
  }
  return out;
}

}  // namespace

TEST_CASE("classification accuracy") {
  auto preds = torch::tensor({1L, 2L, 3L, 4L});
  CHECK(classification_accuracy(preds, torch::tensor({1L, 2L, 0L, 4L})) ==
        doctest::Approx(0.75));
  CHECK_THROWS_AS(classification_accuracy(torch::empty({0}, torch::kInt64),
                                          torch::empty({0}, torch::kInt64)),
                  DataError);
  CHECK_THROWS_AS(classification_accuracy(preds, torch::tensor({1L})), DataError);
}

TEST_CASE("pck matches the brute-force oracle") {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 30; ++trial) {
    auto gt = random_joints(8, rng, false);
    auto pred = random_joints(8, rng, false);
    const double thr = 2.0 + (trial % 10) * 5.0;
    auto a = pck(pred, gt, thr);
    auto b = pck_oracle(pred, gt, thr);
    CHECK(a.average == doctest::Approx(b.average).epsilon(1e-12));
    for (int j = 0; j < kNumJoints; ++j) {
      CHECK(a.visible_count[j] == b.visible_count[j]);
      if (b.visible_count[j] > 0) {
        CHECK(a.per_joint[j] == doctest::Approx(b.per_joint[j]).epsilon(1e-12));
      } else {
        CHECK(std::isnan(a.per_joint[j]));
      }
    }
  }
}

TEST_CASE("pck edge rules: strict threshold, invisible handling") {
  JointSet g{}, p{};
  g[0] = {10.0, 10.0, true};
  p[0] = {13.0, 14.0, true};  // distance exactly 5
  CHECK(pck({p}, {g}, 5.0).average == 0.0);  // strict <
  CHECK(pck({p}, {g}, 5.0001).average == 1.0);

  // invisible ground truth leaves the joint out of the denominator
  g[1] = {50.0, 50.0, false};
  p[1] = {50.0, 50.0, true};
  auto r = pck({p}, {g}, 6.0);
  CHECK(r.visible_count[1] == 0);
  CHECK(r.average == 1.0);

  // invisible prediction on a visible joint counts as a miss
  g[2] = {80.0, 80.0, true};
  p[2] = {80.0, 80.0, false};
  r = pck({p}, {g}, 6.0);
  CHECK(r.average == doctest::Approx(0.5));

  CHECK_THROWS_AS(pck({p}, {}, 5.0), DataError);
}

TEST_CASE("pck_curve is monotone non-decreasing and sorted") {
  std::mt19937_64 rng(62);
  auto gt = random_joints(10, rng, true);
  auto pred = random_joints(10, rng, true);
  auto curve = pck_curve(pred, gt, {30.0, 1.0, 10.0, 5.0, 20.0});
  REQUIRE(curve.thresholds.size() == 5);
  CHECK(std::is_sorted(curve.thresholds.begin(), curve.thresholds.end()));
  for (size_t i = 1; i < curve.average_rates.size(); ++i) {
    CHECK(curve.average_rates[i] >= curve.average_rates[i - 1]);
  }
  // agreement with pointwise pck
  for (size_t i = 0; i < curve.thresholds.size(); ++i) {
    CHECK(curve.average_rates[i] ==
          doctest::Approx(pck(pred, gt, curve.thresholds[i]).average));
  }
}

TEST_CASE("jointwise columns: pairs averaged, Avg over instances") {
  PckResult r;
  for (int j = 0; j < kNumJoints; ++j) {
    r.per_joint[j] = j / 20.0;
    r.visible_count[j] = 10;
  }
  r.average = 0.33;
  auto cols = jointwise_columns(r);
  REQUIRE(!cols.empty());
  CHECK(cols.front().first == "Head");
  CHECK(cols.back().first == "Avg");
  CHECK(cols.back().second == doctest::Approx(0.33));
  // a left/right pair is averaged: shoulders are joints 4 and 5
  bool found = false;
  for (const auto& [name, value] : cols) {
    if (name == "Shoulder") {
      found = true;
      CHECK(value == doctest::Approx((4 / 20.0 + 5 / 20.0) / 2));
    }
  }
  CHECK(found);
  CHECK_NOTHROW(jointwise_table(r));
}

TEST_CASE("EvalReport JSON and CSV round-trip") {
  EvalReport r;
  r.task = Task::kPose;
  r.variant = Variant::kPsAe;
  r.baseline = true;
  r.sample_count = 42;
  r.seed = 9;
  r.checkpoint_id = "iter_000500";
  r.config_hash = "abc123";
  PckResult pr;
  for (int j = 0; j < kNumJoints; ++j) {
    pr.per_joint[j] = 0.5;
    pr.visible_count[j] = 3;
  }
  pr.average = 0.5;
  r.pck_at_headline = pr;
  r.curve = PckCurve{{1.0, 2.0}, {0.1, 0.2}};

  auto back = EvalReport::from_json(r.to_json());
  CHECK(back.task == Task::kPose);
  CHECK(back.variant == Variant::kPsAe);
  CHECK(back.baseline);
  CHECK(back.sample_count == 42);
  CHECK(back.checkpoint_id == "iter_000500");
  REQUIRE(back.pck_at_headline.has_value());
  CHECK(back.pck_at_headline->average == doctest::Approx(0.5));
  REQUIRE(back.curve.has_value());
  CHECK(back.curve->thresholds == (std::vector<double>{1.0, 2.0}));

  const auto dir = fs::temp_directory_path() / "psvae_eval_tests";
  fs::create_directories(dir);
  r.write_json(dir / "r.json");
  r.write_csv(dir / "r.csv");
  CHECK(fs::exists(dir / "r.json"));
  std::ifstream csv(dir / "r.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header.find("task") != std::string::npos);
}

TEST_CASE("feature export writes one row per sample with a domain tag") {
  torch::manual_seed(63);
  NetworkSpec spec = NetworkSpec::digit(Variant::kPsVae);
  spec.base_channels = 8;
  spec.n_z = 8;
  spec.n_zeta = 12;
  ModelBundle bundle(spec);
  const auto dir = fs::temp_directory_path() / "psvae_eval_tests";
  fs::create_directories(dir);
  const auto path = dir / "features.csv";
  export_features(bundle, torch::randn({3, 1, 32, 32}), Domain::kSource, path);
  export_features(bundle, torch::randn({2, 1, 32, 32}), Domain::kTarget, path, 64, true);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("domain,dim_0", 0) == 0);
  int source_rows = 0, target_rows = 0;
  while (std::getline(in, line)) {
    if (line.rfind("source,", 0) == 0) ++source_rows;
    if (line.rfind("target,", 0) == 0) ++target_rows;
  }
  CHECK(source_rows == 3);
  CHECK(target_rows == 2);
}
