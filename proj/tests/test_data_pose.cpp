#include <filesystem>
#include <random>

#include "psvae/data.hpp"

// doctest last: torch's logging shim also defines a CHECK macro
#include <doctest.h>

using namespace psvae;
namespace fs = std::filesystem;

TEST_CASE("background estimation: per-pixel max over valid frames") {
  auto a = torch::tensor({{1000.0f, 0.0f}, {3000.0f, 500.0f}});
  auto b = torch::tensor({{2000.0f, 0.0f}, {2500.0f, 800.0f}});
  auto bg = estimate_background({a, b});
  CHECK(bg[0][0].item<float>() == 2000.0f);
  CHECK(bg[0][1].item<float>() == 0.0f);  // never valid
  CHECK(bg[1][0].item<float>() == 3000.0f);
  CHECK(bg[1][1].item<float>() == 800.0f);
  CHECK_THROWS_AS(estimate_background({}), DataError);
}

TEST_CASE("background subtraction: margin rule and fill value") {
  auto bg = torch::full({4, 4}, 3000.0f);
  auto frame = bg.clone();
  frame[1][1] = 2000.0f;  // person
  frame[2][2] = 2950.0f;  // inside the margin: background
  frame[3][3] = 0.0f;     // invalid
  auto fg = subtract_background(frame, bg, 100.0);
  CHECK(fg.mask[1][1].item<bool>());
  CHECK_FALSE(fg.mask[2][2].item<bool>());
  CHECK_FALSE(fg.mask[3][3].item<bool>());
  CHECK(fg.cleaned[1][1].item<float>() == 2000.0f);
  CHECK(fg.cleaned[0][0].item<float>() == static_cast<float>(kBackgroundFillMm));
}

TEST_CASE("crop_resize: 2:1 geometry, joint transfer, out-of-crop joints") {
  auto frame = torch::full({100, 120}, static_cast<float>(kBackgroundFillMm));
  auto mask = torch::zeros({100, 120}, torch::kBool);
  // person blob rows 20..59, cols 50..69
  for (int64_t r = 20; r < 60; ++r)
    for (int64_t c = 50; c < 70; ++c) {
      mask[r][c] = true;
      frame[r][c] = 2500.0f;
    }
  JointSet joints{};
  joints[0] = {60.0, 40.0, true};   // center of the blob
  joints[1] = {5.0, 5.0, true};     // far away, should fall outside the crop
  auto crop = crop_resize(frame, mask, joints);
  CHECK(crop.image.sizes() == torch::IntArrayRef({1, 256, 128}));
  CHECK(crop.image.min().item<float>() >= -1.0f);
  CHECK(crop.image.max().item<float>() <= 1.0f);
  CHECK(crop.joints[0].visible);
  // blob center stays near the crop center
  CHECK(crop.joints[0].u == doctest::Approx(64.0).epsilon(0.15));
  CHECK(crop.joints[0].v == doctest::Approx(128.0).epsilon(0.15));
  CHECK_FALSE(crop.joints[1].visible);
  // person pixels are nearer (lower normalized value) than the fill
  const double person_val = crop.image[0][128][64].item<float>();
  CHECK(person_val < 0.0);

  CHECK_THROWS_AS(crop_resize(frame, torch::zeros({100, 120}, torch::kBool), joints),
                  DataError);
}

TEST_CASE("heatmap codec: exact round-trip on integer joints") {
  std::mt19937_64 rng(51);
  std::uniform_int_distribution<int> du(0, kPoseWidth - 1), dv(0, kPoseHeight - 1);
  for (int trial = 0; trial < 50; ++trial) {
    JointSet joints{};
    for (int j = 0; j < kNumJoints; ++j) {
      joints[j] = {static_cast<double>(du(rng)), static_cast<double>(dv(rng)),
                   trial % 5 != 0 || j % 3 != 0};
    }
    auto maps = encode_heatmaps(joints);
    auto back = decode_heatmaps(maps);
    for (int j = 0; j < kNumJoints; ++j) {
      CHECK(back[j].visible == joints[j].visible);
      if (joints[j].visible) {
        CHECK(back[j].u == joints[j].u);
        CHECK(back[j].v == joints[j].v);
      }
    }
  }
}

TEST_CASE("heatmap decode: tie goes to the first row-major peak, low peaks invisible") {
  auto maps = torch::zeros({kNumJoints, kPoseHeight, kPoseWidth});
  maps[0][10][20] = 0.7;
  maps[0][30][5] = 0.7;  // same height, later in row-major order
  maps[1][50][50] = 0.04;  // below the visibility threshold
  auto joints = decode_heatmaps(maps);
  CHECK(joints[0].visible);
  CHECK(joints[0].u == 20.0);
  CHECK(joints[0].v == 10.0);
  CHECK_FALSE(joints[1].visible);
  CHECK_FALSE(joints[2].visible);  // empty channel
}

TEST_CASE("heatmap peak height and sigma profile") {
  JointSet joints{};
  joints[0] = {40.0, 60.0, true};
  auto maps = encode_heatmaps(joints, 4.0);
  CHECK(maps[0][60][40].item<float>() == doctest::Approx(1.0));
  // one sigma away: exp(-0.5)
  CHECK(maps[0][60][44].item<float>() == doctest::Approx(std::exp(-0.5)).epsilon(1e-4));
  CHECK(maps[0][64][40].item<float>() == doctest::Approx(std::exp(-0.5)).epsilon(1e-4));
}

TEST_CASE("pose container round-trip") {
  const auto dir = fs::temp_directory_path() / "psvae_pose_tests";
  fs::create_directories(dir);
  std::mt19937_64 rng(52);
  std::vector<PoseSample> samples;
  for (int i = 0; i < 3; ++i) {
    PoseSample s;
    s.depth = torch::rand({32, 16}) * 4000.0;
    for (int j = 0; j < kNumJoints; ++j) {
      s.joints[j] = {j * 0.5 + i, j * 0.25, j % 2 == 0};
    }
    samples.push_back(std::move(s));
  }
  write_pose_container(dir / "t.psp", samples, R"({"note":"fixture"})");
  auto back = read_pose_container(dir / "t.psp");
  REQUIRE(back.size() == samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    CHECK(torch::equal(back[i].depth, samples[i].depth));
    for (int j = 0; j < kNumJoints; ++j) {
      CHECK(back[i].joints[j].u == samples[i].joints[j].u);
      CHECK(back[i].joints[j].v == samples[i].joints[j].v);
      CHECK(back[i].joints[j].visible == samples[i].joints[j].visible);
    }
  }
  CHECK(fs::exists(dir / "t.psp.json"));
}

TEST_CASE("stick-figure renderer: styles and determinism") {
  std::mt19937_64 rng(53);
  auto cg = render_stick_figure(rng, PoseStyle::kCgStyle);
  CHECK(cg.depth.sizes() == torch::IntArrayRef({424, 512}));
  // CG background is exactly the uniform fill
  CHECK(cg.depth[0][0].item<float>() == static_cast<float>(kBackgroundFillMm));
  // a person exists: some pixels well in front of the background
  CHECK((cg.depth < 4000.0f).sum().item<int64_t>() > 500);

  std::mt19937_64 rng2(53);
  auto cg2 = render_stick_figure(rng2, PoseStyle::kCgStyle);
  CHECK(torch::equal(cg.depth, cg2.depth));

  auto obs = render_stick_figure(rng, PoseStyle::kObservedStyle);
  // observed background is cluttered and noisy, never the uniform fill
  CHECK((obs.depth == static_cast<float>(kBackgroundFillMm)).sum().item<int64_t>() == 0);
  CHECK((obs.depth == 0.0f).sum().item<int64_t>() > 0);  // invalid pixels

  int visible = 0;
  for (const auto& j : cg.joints) visible += j.visible ? 1 : 0;
  CHECK(visible >= 12);
}

TEST_CASE("joint name table") {
  const auto& names = joint_names();
  CHECK(names.size() == kNumJoints);
  CHECK(names[0] == "head");
  CHECK(names[17] == "r_foot");
}
