#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "psvae/data.hpp"

namespace psvae {

const std::array<std::string, kNumJoints>& joint_names() {
  static const std::array<std::string, kNumJoints> names = {
      "head",       "neck",       "chest",      "waist",     "l_shoulder",
      "r_shoulder", "l_elbow",    "r_elbow",    "l_wrist",   "r_wrist",
      "l_hand",     "r_hand",     "l_knee",     "r_knee",    "l_ankle",
      "r_ankle",    "l_foot",     "r_foot"};
  return names;
}

torch::Tensor estimate_background(const std::vector<torch::Tensor>& depth_video) {
  if (depth_video.empty()) throw DataError("empty depth video");
  auto background = torch::zeros_like(depth_video.front());
  for (const auto& frame : depth_video) {
    background = torch::where(frame > background, frame, background);
  }
  return background;  // pixels never valid remain 0
}

ForegroundResult subtract_background(const torch::Tensor& frame,
                                     const torch::Tensor& background,
                                     double margin_mm, double fill_mm) {
  auto valid = (frame > 0) & (background > 0);
  ForegroundResult r;
  r.mask = valid & (frame < background - margin_mm);
  r.cleaned = torch::where(r.mask, frame, torch::full_like(frame, fill_mm));
  return r;
}

torch::Tensor normalize_depth(const torch::Tensor& depth_mm, double fill_mm) {
  return (depth_mm / fill_mm).clamp(0.0, 1.0) * 2.0 - 1.0;
}

CropResult crop_resize(const torch::Tensor& cleaned_frame, const torch::Tensor& mask,
                       const JointSet& joints, double fill_mm) {
  auto rows_any = mask.any(1);
  auto cols_any = mask.any(0);
  auto row_idx = rows_any.nonzero();
  auto col_idx = cols_any.nonzero();
  if (row_idx.numel() == 0) throw DataError("empty foreground mask");
  const int64_t r0 = row_idx[0].item<int64_t>();
  const int64_t r1 = row_idx[-1].item<int64_t>();
  const int64_t c0 = col_idx[0].item<int64_t>();
  const int64_t c1 = col_idx[-1].item<int64_t>();
  int64_t box_h = r1 - r0 + 1;
  int64_t box_w = c1 - c0 + 1;

  // expand the tight box to 2:1 (h:w) around its center
  int64_t crop_h, crop_w;
  if (box_h >= 2 * box_w) {
    crop_h = box_h;
    crop_w = (box_h + 1) / 2;
  } else {
    crop_w = box_w;
    crop_h = 2 * box_w;
  }
  const int64_t cr0 = r0 + box_h / 2 - crop_h / 2;
  const int64_t cc0 = c0 + box_w / 2 - crop_w / 2;

  // materialize the crop, padding out-of-frame area with the fill value
  auto crop = torch::full({crop_h, crop_w}, fill_mm, cleaned_frame.options());
  const int64_t fr0 = std::max<int64_t>(cr0, 0);
  const int64_t fr1 = std::min<int64_t>(cr0 + crop_h, cleaned_frame.size(0));
  const int64_t fc0 = std::max<int64_t>(cc0, 0);
  const int64_t fc1 = std::min<int64_t>(cc0 + crop_w, cleaned_frame.size(1));
  if (fr1 > fr0 && fc1 > fc0) {
    crop.narrow(0, fr0 - cr0, fr1 - fr0).narrow(1, fc0 - cc0, fc1 - fc0) =
        cleaned_frame.narrow(0, fr0, fr1 - fr0).narrow(1, fc0, fc1 - fc0);
  }

  // nearest-neighbor resize to 256 x 128
  auto row_map = ((torch::arange(kPoseHeight, torch::kFloat64) + 0.5) *
                  (static_cast<double>(crop_h) / kPoseHeight))
                     .floor()
                     .clamp(0, crop_h - 1)
                     .to(torch::kInt64);
  auto col_map = ((torch::arange(kPoseWidth, torch::kFloat64) + 0.5) *
                  (static_cast<double>(crop_w) / kPoseWidth))
                     .floor()
                     .clamp(0, crop_w - 1)
                     .to(torch::kInt64);
  auto resized = crop.index_select(0, row_map).index_select(1, col_map);

  CropResult result;
  result.image = normalize_depth(resized, fill_mm).unsqueeze(0);
  const double su = static_cast<double>(kPoseWidth) / crop_w;
  const double sv = static_cast<double>(kPoseHeight) / crop_h;
  for (size_t j = 0; j < kNumJoints; ++j) {
    Joint out;
    if (joints[j].visible) {
      out.u = (joints[j].u - cc0 + 0.5) * su - 0.5;
      out.v = (joints[j].v - cr0 + 0.5) * sv - 0.5;
      out.visible = out.u >= 0 && out.u < kPoseWidth && out.v >= 0 && out.v < kPoseHeight;
    }
    result.joints[j] = out;
  }
  return result;
}

torch::Tensor encode_heatmaps(const JointSet& joints, double sigma_px,
                              int64_t height, int64_t width) {
  auto maps = torch::zeros({kNumJoints, height, width});
  auto vv = torch::arange(height, torch::kFloat32).reshape({height, 1});
  auto uu = torch::arange(width, torch::kFloat32).reshape({1, width});
  for (size_t j = 0; j < kNumJoints; ++j) {
    if (!joints[j].visible) continue;
    auto d2 = (uu - joints[j].u).square() + (vv - joints[j].v).square();
    maps[j] = torch::exp(-d2 / (2.0 * sigma_px * sigma_px));
  }
  return maps;
}

JointSet decode_heatmaps(const torch::Tensor& heatmaps) {
  JointSet joints{};
  auto maps = heatmaps.contiguous();
  auto acc = maps.accessor<float, 3>();
  const int64_t h = maps.size(1), w = maps.size(2);
  for (int64_t j = 0; j < kNumJoints; ++j) {
    float best = -std::numeric_limits<float>::infinity();
    int64_t best_v = 0, best_u = 0;
    for (int64_t v = 0; v < h; ++v) {
      for (int64_t u = 0; u < w; ++u) {
        if (acc[j][v][u] > best) {  // strict: first row-major maximum wins
          best = acc[j][v][u];
          best_v = v;
          best_u = u;
        }
      }
    }
    if (best >= 0.05f) {
      joints[j] = {static_cast<double>(best_u), static_cast<double>(best_v), true};
    }
  }
  return joints;
}

// ------------------------------ container ----------------------------------

namespace {
constexpr char kPoseMagic[4] = {'P', 'S', 'P', 'O'};
constexpr uint32_t kPoseVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("truncated pose container");
  return v;
}
}  // namespace

void write_pose_container(const std::filesystem::path& path,
                          const std::vector<PoseSample>& samples,
                          const std::string& metadata_json) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kPoseMagic, 4);
  write_pod(out, kPoseVersion);
  write_pod(out, static_cast<uint64_t>(samples.size()));
  for (const auto& s : samples) {
    auto depth = s.depth.to(torch::kFloat32).contiguous();
    const uint32_t h = static_cast<uint32_t>(depth.size(0));
    const uint32_t w = static_cast<uint32_t>(depth.size(1));
    const uint32_t record_len =
        8 + h * w * 4 + static_cast<uint32_t>(kNumJoints) * 17;
    write_pod(out, record_len);
    write_pod(out, h);
    write_pod(out, w);
    out.write(reinterpret_cast<const char*>(depth.data_ptr<float>()), int64_t{h} * w * 4);
    for (const auto& joint : s.joints) {
      write_pod(out, static_cast<double>(joint.u));
      write_pod(out, static_cast<double>(joint.v));
      write_pod(out, static_cast<uint8_t>(joint.visible ? 1 : 0));
    }
  }
  nlohmann::json meta = nlohmann::json::parse(metadata_json);
  meta["format"] = "pose-container";
  meta["version"] = kPoseVersion;
  meta["count"] = samples.size();
  std::ofstream side(path.string() + ".json");
  side << meta.dump(2) << "\n";
}

std::vector<PoseSample> read_pose_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kPoseMagic, 4) != 0) {
    throw DataError("not a pose container: " + path.string());
  }
  const auto version = read_pod<uint32_t>(in);
  if (version != kPoseVersion) {
    throw DataError("unsupported pose container version " + std::to_string(version));
  }
  const auto count = read_pod<uint64_t>(in);
  std::vector<PoseSample> samples;
  samples.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    (void)read_pod<uint32_t>(in);  // record length, for skipping by readers
    const auto h = read_pod<uint32_t>(in);
    const auto w = read_pod<uint32_t>(in);
    PoseSample s;
    s.depth = torch::empty({h, w}, torch::kFloat32);
    in.read(reinterpret_cast<char*>(s.depth.data_ptr<float>()), int64_t{h} * w * 4);
    if (!in) throw DataError("truncated pose container");
    for (auto& joint : s.joints) {
      joint.u = read_pod<double>(in);
      joint.v = read_pod<double>(in);
      joint.visible = read_pod<uint8_t>(in) != 0;
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

// --------------------------- stick-figure renderer -------------------------

namespace {

struct Vec2 {
  double u, v;
};

void draw_capsule(torch::Tensor& depth, Vec2 a, Vec2 b, double radius,
                  double depth_mm) {
  auto acc = depth.accessor<float, 2>();
  const int64_t h = depth.size(0), w = depth.size(1);
  const int64_t u0 = std::max<int64_t>(0, std::floor(std::min(a.u, b.u) - radius));
  const int64_t u1 = std::min<int64_t>(w - 1, std::ceil(std::max(a.u, b.u) + radius));
  const int64_t v0 = std::max<int64_t>(0, std::floor(std::min(a.v, b.v) - radius));
  const int64_t v1 = std::min<int64_t>(h - 1, std::ceil(std::max(a.v, b.v) + radius));
  const double du = b.u - a.u, dv = b.v - a.v;
  const double len2 = du * du + dv * dv;
  for (int64_t v = v0; v <= v1; ++v) {
    for (int64_t u = u0; u <= u1; ++u) {
      double t = len2 > 0 ? ((u - a.u) * du + (v - a.v) * dv) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double pu = a.u + t * du, pv = a.v + t * dv;
      const double d2 = (u - pu) * (u - pu) + (v - pv) * (v - pv);
      if (d2 <= radius * radius) {
        const auto val = static_cast<float>(depth_mm);
        if (acc[v][u] == 0.0f || val < acc[v][u]) acc[v][u] = val;
      }
    }
  }
}

}  // namespace

PoseSample render_stick_figure(std::mt19937_64& rng, PoseStyle style,
                               int64_t height, int64_t width) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const double person_depth = 2200.0 + unit(rng) * 1200.0;
  const double scale = 260.0 + gauss(rng) * 20.0;  // hip-to-head pixels

  // CG poses stand more upright; observed poses lean and swing more,
  // giving the two domains different pose statistics.
  const double sway = style == PoseStyle::kCgStyle ? 0.25 : 0.55;

  const double cx = width / 2.0 + gauss(rng) * 30.0;
  const double cy = height * 0.55 + gauss(rng) * 15.0;

  JointSet joints{};
  auto set = [&](int idx, double u, double v) {
    joints[idx] = {u, v, u >= 0 && u < width && v >= 0 && v < height};
  };

  const double lean = gauss(rng) * 0.1 * sway;
  Vec2 waist{cx, cy};
  Vec2 chest{cx + std::sin(lean) * scale * 0.35, cy - scale * 0.35};
  Vec2 neck{chest.u + std::sin(lean) * scale * 0.15, chest.v - scale * 0.15};
  Vec2 head{neck.u, neck.v - scale * 0.18};
  set(0, head.u, head.v);
  set(1, neck.u, neck.v);
  set(2, chest.u, chest.v);
  set(3, waist.u, waist.v);

  auto limb = [&](Vec2 origin, double base_angle, double l1, double l2, double l3,
                  int j1, int j2, int j3) {
    const double a1 = base_angle + gauss(rng) * sway;
    Vec2 p1{origin.u + std::cos(a1) * l1, origin.v + std::sin(a1) * l1};
    const double a2 = a1 + gauss(rng) * sway;
    Vec2 p2{p1.u + std::cos(a2) * l2, p1.v + std::sin(a2) * l2};
    const double a3 = a2 + gauss(rng) * sway * 0.5;
    Vec2 p3{p2.u + std::cos(a3) * l3, p2.v + std::sin(a3) * l3};
    set(j1, p1.u, p1.v);
    set(j2, p2.u, p2.v);
    set(j3, p3.u, p3.v);
    return std::array<Vec2, 3>{p1, p2, p3};
  };

  const double arm_seg = scale * 0.22, hand_seg = scale * 0.08;
  Vec2 l_sh{neck.u - scale * 0.18, neck.v + scale * 0.03};
  Vec2 r_sh{neck.u + scale * 0.18, neck.v + scale * 0.03};
  set(4, l_sh.u, l_sh.v);
  set(5, r_sh.u, r_sh.v);
  auto l_arm = limb(l_sh, M_PI * 0.75, arm_seg, arm_seg, hand_seg, 6, 8, 10);
  auto r_arm = limb(r_sh, M_PI * 0.25, arm_seg, arm_seg, hand_seg, 7, 9, 11);

  const double leg_seg = scale * 0.30, foot_seg = scale * 0.10;
  Vec2 l_hip{waist.u - scale * 0.10, waist.v};
  Vec2 r_hip{waist.u + scale * 0.10, waist.v};
  auto l_leg = limb(l_hip, M_PI * 0.55, leg_seg, leg_seg, foot_seg, 12, 14, 16);
  auto r_leg = limb(r_hip, M_PI * 0.45, leg_seg, leg_seg, foot_seg, 13, 15, 17);

  auto depth = torch::zeros({height, width}, torch::kFloat32);
  const double limb_r = scale * 0.045;
  draw_capsule(depth, waist, chest, limb_r * 1.8, person_depth);
  draw_capsule(depth, chest, neck, limb_r * 1.5, person_depth);
  draw_capsule(depth, head, head, limb_r * 2.2, person_depth - 30.0);
  draw_capsule(depth, l_sh, r_sh, limb_r, person_depth);
  draw_capsule(depth, l_sh, l_arm[0], limb_r, person_depth + 20.0);
  draw_capsule(depth, l_arm[0], l_arm[1], limb_r * 0.8, person_depth + 20.0);
  draw_capsule(depth, l_arm[1], l_arm[2], limb_r * 0.7, person_depth + 20.0);
  draw_capsule(depth, r_sh, r_arm[0], limb_r, person_depth - 20.0);
  draw_capsule(depth, r_arm[0], r_arm[1], limb_r * 0.8, person_depth - 20.0);
  draw_capsule(depth, r_arm[1], r_arm[2], limb_r * 0.7, person_depth - 20.0);
  draw_capsule(depth, l_hip, l_leg[0], limb_r * 1.1, person_depth + 10.0);
  draw_capsule(depth, l_leg[0], l_leg[1], limb_r, person_depth + 10.0);
  draw_capsule(depth, l_leg[1], l_leg[2], limb_r * 0.9, person_depth + 10.0);
  draw_capsule(depth, r_hip, r_leg[0], limb_r * 1.1, person_depth - 10.0);
  draw_capsule(depth, r_leg[0], r_leg[1], limb_r, person_depth - 10.0);
  draw_capsule(depth, r_leg[1], r_leg[2], limb_r * 0.9, person_depth - 10.0);

  PoseSample sample;
  sample.joints = joints;
  if (style == PoseStyle::kCgStyle) {
    // rendered frames sit directly on the uniform background value
    sample.depth = torch::where(depth > 0, depth,
                                torch::full_like(depth, kBackgroundFillMm));
  } else {
    // observed frames: wall plus clutter behind the person, sensor noise,
    // a few invalid pixels
    auto scene = torch::full({height, width}, 4200.0f + static_cast<float>(gauss(rng)) * 80.0f);
    const int n_clutter = 3 + static_cast<int>(unit(rng) * 4);
    for (int i = 0; i < n_clutter; ++i) {
      const int64_t bw = 30 + static_cast<int64_t>(unit(rng) * 100);
      const int64_t bh = 30 + static_cast<int64_t>(unit(rng) * 120);
      const int64_t r = static_cast<int64_t>(unit(rng) * (height - bh));
      const int64_t c = static_cast<int64_t>(unit(rng) * (width - bw));
      scene.narrow(0, r, bh).narrow(1, c, bw) = 3600.0f + static_cast<float>(unit(rng)) * 500.0f;
    }
    auto frame = torch::where(depth > 0, depth, scene);
    auto noise = torch::empty_like(frame);
    auto nacc = noise.accessor<float, 2>();
    for (int64_t v = 0; v < height; ++v)
      for (int64_t u = 0; u < width; ++u) nacc[v][u] = static_cast<float>(gauss(rng) * 8.0);
    frame = frame + noise;
    // sprinkle invalid pixels
    for (int i = 0; i < 200; ++i) {
      const int64_t r = static_cast<int64_t>(unit(rng) * height);
      const int64_t c = static_cast<int64_t>(unit(rng) * width);
      frame[r][c] = 0.0f;
    }
    sample.depth = frame;
  }
  return sample;
}

}  // namespace psvae
