// Acceptance gate: one test case per criterion, one PASS/FAIL line each.
// All tolerances are pinned here, in code.


#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "psvae/experiment.hpp"
#include "psvae/losses.hpp"

// doctest last: torch's logging shim also defines a CHECK macro
#include <doctest.h>

using namespace psvae;
namespace fs = std::filesystem;

namespace {

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("%s  criterion %2d: %s\n", pass ? "PASS" : "FAIL", criterion,
              detail.c_str());
  std::fflush(stdout);
  CHECK_MESSAGE(pass, "criterion ", criterion, ": ", detail);
}

double huber(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * a * a : a - 0.5;
}

fs::path work_dir() {
  auto dir = fs::temp_directory_path() / "psvae_acceptance";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("criterion 1: loss oracle suite") {
  constexpr double kTol = 1e-6;  // absolute, pinned
  torch::manual_seed(9001);
  std::mt19937_64 rng(9001);
  std::uniform_int_distribution<int64_t> dim(1, 32);

  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int64_t n = dim(rng), m = dim(rng);  // <= 1024 elements
    auto a = torch::randn({n, m}, torch::kFloat64) * 3.0;
    auto b = torch::randn({n, m}, torch::kFloat64) * 3.0;

    // smooth_l1 family (cycle, identity, fc, regression share the kernel)
    double oracle = 0.0;
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < m; ++j)
        oracle += huber(a[i][j].item<double>() - b[i][j].item<double>());
    oracle /= static_cast<double>(n * m);
    worst = std::max(worst, std::abs(smooth_l1(a, b).item<double>() - oracle));
    worst = std::max(worst, std::abs(cycle_loss(a, b).item<double>() - oracle));
    worst = std::max(worst, std::abs(identity_loss(a, b).item<double>() - oracle));
    worst = std::max(
        worst, std::abs(feature_consistency_loss(a.detach(), b).item<double>() - oracle));

    // adversarial pair
    double d_oracle = 0.0, g_oracle = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t j = 0; j < m; ++j) {
        const double r = a[i][j].item<double>(), f = b[i][j].item<double>();
        d_oracle += (r - 1.0) * (r - 1.0) / (n * m) + (f + 1.0) * (f + 1.0) / (n * m);
        g_oracle += (f - 1.0) * (f - 1.0) / (n * m);
      }
    }
    worst = std::max(worst, std::abs(adversarial_loss_d(a, b).item<double>() - d_oracle));
    worst = std::max(worst, std::abs(adversarial_loss_g(b).item<double>() - g_oracle));

    // KL over the sliced channels
    NetworkSpec spec;
    spec.base_channels = 1;
    spec.n_z = 1;
    spec.n_zeta = 1;
    const int64_t hw = 1 + trial % 8;
    GaussianFeature f{torch::randn({2, 3, hw, hw}, torch::kFloat64), torch::randn({2, 3, hw, hw}, torch::kFloat64)};
    for (Domain d : {Domain::kSource, Domain::kTarget}) {
      const int64_t off = d == Domain::kSource ? 1 : 2;
      double kl_oracle = 0.0;
      int64_t count = 0;
      for (int64_t bi = 0; bi < 2; ++bi) {
        for (int64_t c : {int64_t{0}, off}) {
          for (int64_t y = 0; y < hw; ++y)
            for (int64_t x = 0; x < hw; ++x) {
              const double mu = f.mu[bi][c][y][x].item<double>();
              const double lv = f.logvar[bi][c][y][x].item<double>();
              kl_oracle += -0.5 * (1.0 + lv - mu * mu - std::exp(lv));
              ++count;
            }
        }
      }
      kl_oracle /= static_cast<double>(count);
      worst = std::max(worst, std::abs(kl_loss(f, d, spec).item<double>() - kl_oracle));
    }

    // categorical cross-entropy
    auto logits = torch::randn({n, 10}, torch::kFloat64);
    auto labels = torch::randint(0, 10, {n}, torch::kInt64);
    double ce_oracle = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      double z_max = -1e30;
      for (int64_t c = 0; c < 10; ++c) z_max = std::max(z_max, logits[i][c].item<double>());
      double denom = 0.0;
      for (int64_t c = 0; c < 10; ++c) denom += std::exp(logits[i][c].item<double>() - z_max);
      ce_oracle -=
          logits[i][labels[i].item<int64_t>()].item<double>() - z_max - std::log(denom);
    }
    ce_oracle /= static_cast<double>(n);
    worst = std::max(worst,
                     std::abs(prediction_loss_cls(logits, labels).item<double>() - ce_oracle));
  }
  std::ostringstream msg;
  msg << "loss ops vs element-loop oracles, max |diff| = " << worst << " (tol " << kTol
      << ")";
  report(1, worst < kTol, msg.str());
}

TEST_CASE("criterion 2: closed-form KL vs Monte Carlo") {
  constexpr double kRelTol = 0.01;        // pinned
  constexpr int64_t kSamples = 100000;    // pinned
  torch::manual_seed(9002);
  NetworkSpec spec;
  spec.base_channels = 1;
  spec.n_z = 1;
  spec.n_zeta = 1;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    // keep the divergence bounded away from zero so relative error is meaningful
    auto mu = torch::rand({1, 3, 1, 1}) * 1.5 + 0.5;
    auto lv = torch::rand({1, 3, 1, 1}) * 2.0 - 1.0;
    const double closed = kl_loss({mu, lv}, Domain::kSource, spec).item<double>();

    double mc = 0.0;
    for (int64_t c : {0, 1}) {  // z and the source zeta channel
      const double m = mu[0][c][0][0].item<double>();
      const double s = std::exp(0.5 * lv[0][c][0][0].item<double>());
      auto x = torch::randn({kSamples}) * s + m;
      auto log_q = -0.5 * ((x - m) / s).square() - std::log(s);
      auto log_p = -0.5 * x.square();
      mc += (log_q - log_p).mean().item<double>();
    }
    mc /= 2.0;
    worst = std::max(worst, std::abs(closed - mc) / std::abs(mc));
  }
  std::ostringstream msg;
  msg << "20 configs, 1e5 samples each, max relative error = " << worst << " (tol "
      << kRelTol << ")";
  report(2, worst < kRelTol, msg.str());
}

TEST_CASE("criterion 3: analytic gradients vs central finite differences") {
  constexpr double kStep = 1e-4;    // pinned
  constexpr double kRelTol = 1e-4;  // pinned
  torch::manual_seed(9003);
  double worst = 0.0;
  int points = 0;

  // smooth_l1: 100 coordinates away from the |x| = 1 kink
  while (points < 100) {
    auto base = torch::randn({10}, torch::kFloat64) * 2.0;
    base = torch::where((base.abs() - 1.0).abs() < 0.1, base + 0.3, base);
    auto b = torch::randn({10}, torch::kFloat64);
    auto a = base.clone().requires_grad_(true);
    smooth_l1(a, b).backward();
    for (int64_t k = 0; k < 10 && points < 100; ++k, ++points) {
      auto ap = base.clone(), am = base.clone();
      ap[k] += kStep;
      am[k] -= kStep;
      const double fd =
          (smooth_l1(ap, b).item<double>() - smooth_l1(am, b).item<double>()) / (2 * kStep);
      const double an = a.grad()[k].item<double>();
      worst = std::max(worst, std::abs(an - fd) / std::max(1.0, std::abs(fd)));
    }
  }

  // kl_loss over mu and logvar coordinates
  NetworkSpec spec;
  spec.base_channels = 1;
  spec.n_z = 1;
  spec.n_zeta = 1;
  for (int trial = 0; trial < 10; ++trial) {
    auto mu0 = torch::randn({1, 3, 2, 2}, torch::kFloat64);
    auto lv0 = torch::randn({1, 3, 2, 2}, torch::kFloat64);
    auto mu = mu0.clone().requires_grad_(true);
    auto lv = lv0.clone().requires_grad_(true);
    kl_loss({mu, lv}, Domain::kSource, spec).backward();
    for (int64_t c : {0, 1}) {
      auto mp = mu0.clone(), mm = mu0.clone();
      mp[0][c][0][0] += kStep;
      mm[0][c][0][0] -= kStep;
      double fd = (kl_loss({mp, lv0}, Domain::kSource, spec).item<double>() -
                   kl_loss({mm, lv0}, Domain::kSource, spec).item<double>()) /
                  (2 * kStep);
      worst = std::max(
          worst, std::abs(mu.grad()[0][c][0][0].item<double>() - fd) / std::max(1.0, std::abs(fd)));
      auto lp = lv0.clone(), lm = lv0.clone();
      lp[0][c][1][1] += kStep;
      lm[0][c][1][1] -= kStep;
      fd = (kl_loss({mu0, lp}, Domain::kSource, spec).item<double>() -
            kl_loss({mu0, lm}, Domain::kSource, spec).item<double>()) /
           (2 * kStep);
      worst = std::max(
          worst, std::abs(lv.grad()[0][c][1][1].item<double>() - fd) / std::max(1.0, std::abs(fd)));
    }
  }
  std::ostringstream msg;
  msg << "smooth_l1 + kl gradients, max relative error = " << worst << " (tol " << kRelTol
      << ")";
  report(3, worst < kRelTol, msg.str());
}

TEST_CASE("criterion 4: stop-gradient contract, bitwise") {
  torch::manual_seed(9004);
  torch::nn::Linear enc(6, 4), dec(4, 6);  // 2-layer toy encoder/decoder
  auto x = torch::randn({8, 6});

  auto grads = [&](bool substitute) {
    enc->zero_grad();
    dec->zero_grad();
    auto z_first = enc->forward(x);
    auto z_ref = substitute ? z_first.detach().clone() : z_first.detach();
    auto z_re = enc->forward(torch::tanh(dec->forward(z_first)));
    feature_consistency_loss(z_ref, z_re).backward();
    std::vector<torch::Tensor> g;
    for (auto& p : enc->parameters()) g.push_back(p.grad().clone());
    for (auto& p : dec->parameters()) g.push_back(p.grad().clone());
    return g;
  };

  auto detached = grads(false);
  auto constant = grads(true);
  bool bitwise = true, nonzero = true;
  for (size_t i = 0; i < detached.size(); ++i) {
    bitwise &= torch::equal(detached[i], constant[i]);
    nonzero &= detached[i].abs().sum().item<double>() > 0.0;
  }
  report(4, bitwise && nonzero,
         std::string("first-pass gradients bitwise-equal to constant substitution (") +
             (bitwise ? "yes" : "NO") + "), re-encode path nonzero (" +
             (nonzero ? "yes" : "NO") + ")");
}

TEST_CASE("criterion 5: structural invariants") {
  torch::manual_seed(9005);
  bool ok = true;
  std::ostringstream why;

  // encoder shapes + partition, both geometries
  {
    Encoder enc(NetworkSpec::digit(Variant::kPsVae));
    auto f = enc->forward(torch::randn({2, 1, 32, 32}));
    ok &= f.mu.sizes() == torch::IntArrayRef({2, 256, 8, 8});
    auto code = take_mean(f, NetworkSpec::digit(Variant::kPsVae));
    ok &= code.z.size(1) == 64 && code.zeta_s.size(1) == 96 && code.zeta_t.size(1) == 96;
    if (!ok) why << " digit-shapes";
  }
  {
    Encoder enc(NetworkSpec::pose(Variant::kPsVae));
    auto f = enc->forward(torch::randn({1, 1, 256, 128}));
    bool pose_ok = f.mu.sizes() == torch::IntArrayRef({1, 256, 64, 32});
    auto code = take_mean(f, NetworkSpec::pose(Variant::kPsVae));
    pose_ok &= code.z.size(1) == 64 && code.zeta_s.size(1) == 96 && code.zeta_t.size(1) == 96;
    if (!pose_ok) why << " pose-shapes";
    ok &= pose_ok;
  }

  // zero-substitution symmetry under the shared decoder, exact
  {
    ModelBundle bundle(NetworkSpec::digit(Variant::kPsVae));
    auto z = torch::randn({2, 64, 8, 8});
    DisentangledCode zeroed{z, torch::zeros({2, 96, 8, 8}), torch::zeros({2, 96, 8, 8})};
    const bool sym = torch::equal(bundle->decode(zeroed, Domain::kSource),
                                  bundle->decode(zeroed, Domain::kTarget));
    if (!sym) why << " zero-substitution";
    ok &= sym;
  }

  // variant structure flags
  {
    const bool flags_ok =
        variant_flags(Variant::kCycleGanFc).shared &&
        !variant_flags(Variant::kCycleGanFc).split &&
        !variant_flags(Variant::kCycleGanFc).vae &&
        !variant_flags(Variant::kDCycleGan).shared &&
        variant_flags(Variant::kDCycleGan).split &&
        !variant_flags(Variant::kDCycleGan).vae &&
        !variant_flags(Variant::kDCycleGanVae).shared &&
        variant_flags(Variant::kDCycleGanVae).split &&
        variant_flags(Variant::kDCycleGanVae).vae &&
        variant_flags(Variant::kPsAe).shared && variant_flags(Variant::kPsAe).split &&
        !variant_flags(Variant::kPsAe).vae && variant_flags(Variant::kPsVae).shared &&
        variant_flags(Variant::kPsVae).split && variant_flags(Variant::kPsVae).vae;
    if (!flags_ok) why << " variant-flags";
    ok &= flags_ok;
  }
  report(5, ok, ok ? "shapes, 64/96/96 partition, zero-substitution symmetry, variant flags"
                   : ("violated:" + why.str()));
}

TEST_CASE("criterion 6: spectral normalization vs exact SVD") {
  constexpr double kLo = 0.98, kHi = 1.02;  // pinned
  constexpr int64_t kIters = 5;             // pinned
  torch::manual_seed(9006);
  std::mt19937_64 rng(9006);
  std::uniform_int_distribution<int64_t> dim(2, 64);
  double lo = 1e9, hi = -1e9;
  for (int i = 0; i < 50; ++i) {
    auto w = torch::randn({dim(rng), dim(rng)}) * (0.05 + 2.0 * (i % 7) / 6.0);
    torch::Tensor u;
    auto wn = spectral_normalize(w, kIters, u);
    const double sigma = torch::linalg_svdvals(wn).max().item<double>();
    lo = std::min(lo, sigma);
    hi = std::max(hi, sigma);
  }
  std::ostringstream msg;
  msg << "50 matrices, top singular value in [" << lo << ", " << hi << "] (required ["
      << kLo << ", " << kHi << "])";
  report(6, lo >= kLo && hi <= kHi, msg.str());
}

TEST_CASE("criterion 7: imbalance protocol vs the published table") {
  bool ok = true;
  std::ostringstream why;

  // class-1 entries from per-other count and rate
  ok &= class1_count(4000, 0.1) == 4000;
  ok &= class1_count(2000, 0.2) == 4500;
  ok &= class1_count(1400, 0.3) == 5400;
  ok &= class1_count(1000, 0.4) == 6000;
  ok &= class1_count(700, 0.5) == 6300;
  ok &= class1_count(500, 0.1) == 500;
  ok &= class1_count(500, 0.2) == 1125;
  ok &= std::abs(class1_count(500, 0.3) - 1922) <= 7;  // formula 1929, print 1922
  ok &= class1_count(500, 0.4) == 3000;
  ok &= class1_count(500, 0.5) == 4500;
  ok &= class1_count(4000, 0.1) == 4000;  // SVHN cell
  if (!ok) why << " class1-formula";

  // generated split counts, label-only datasets sized to cover every cell
  auto make_labels = [](int64_t per_class) {
    DigitDataset d;
    const int64_t n = per_class * 10;
    d.images = torch::zeros({n, 1, 1, 1});
    d.labels = torch::arange(n, torch::kInt64).remainder(10);
    return d;
  };
  const auto mnist_pool = make_labels(7000);
  for (double rate : {0.1, 0.2, 0.3, 0.4, 0.5}) {
    const int64_t per_other = table_per_other_count(DigitSource::kMnist, rate);
    auto split = make_imbalanced_split(
        mnist_pool, {DigitSource::kMnist, rate, 1, per_other}, 42);
    auto counts = split_class_counts(mnist_pool, split);
    for (int64_t c = 0; c < 10; ++c) {
      const int64_t want = c == 1 ? class1_count(per_other, rate) : per_other;
      if (counts[c] != want) {
        ok = false;
        why << " mnist@" << rate;
      }
    }
  }
  {
    auto split = make_imbalanced_split(make_labels(4100),
                                       {DigitSource::kSvhn, 0.1, 1, 4000}, 42);
    auto counts = split_class_counts(make_labels(4100), split);
    for (int64_t c = 0; c < 10; ++c) ok &= counts[c] == 4000;
  }
  const auto usps_pool = make_labels(700);
  for (double rate : {0.1, 0.2, 0.3, 0.4, 0.5}) {
    auto split =
        make_imbalanced_split(usps_pool, {DigitSource::kUsps, rate, 1, 500}, 42);
    auto counts = split_class_counts(usps_pool, split);
    for (int64_t c = 0; c < 10; ++c) {
      const int64_t want = c == 1 ? class1_count(500, rate) : 500;
      if (counts[c] != want) {
        ok = false;
        why << " usps@" << rate;
      }
    }
  }
  report(7, ok,
         ok ? "all MNIST/SVHN cells exact; USPS exact with 30% formula value 1929 "
              "(published print: 1922, documented)"
            : ("mismatch:" + why.str()));
}

TEST_CASE("criterion 8: heatmap codec and PCK oracles") {
  torch::manual_seed(9008);
  std::mt19937_64 rng(9008);
  std::uniform_int_distribution<int> du(0, kPoseWidth - 1), dv(0, kPoseHeight - 1);
  std::bernoulli_distribution vis(0.85);

  bool codec_ok = true;
  for (int trial = 0; trial < 1000; ++trial) {
    JointSet joints{};
    for (int j = 0; j < kNumJoints; ++j) {
      joints[j] = {static_cast<double>(du(rng)), static_cast<double>(dv(rng)), vis(rng)};
    }
    auto back = decode_heatmaps(encode_heatmaps(joints));
    for (int j = 0; j < kNumJoints; ++j) {
      codec_ok &= back[j].visible == joints[j].visible;
      if (joints[j].visible) {
        codec_ok &= back[j].u == joints[j].u && back[j].v == joints[j].v;
      }
    }
    if (!codec_ok) break;
  }

  // PCK vs brute force, plus curve monotonicity
  bool pck_ok = true, monotone_ok = true;
  std::uniform_real_distribution<double> fu(0, kPoseWidth), fv(0, kPoseHeight);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<JointSet> gt(5), pred(5);
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < kNumJoints; ++j) {
        gt[i][j] = {fu(rng), fv(rng), vis(rng)};
        pred[i][j] = {fu(rng), fv(rng), vis(rng)};
      }
    }
    const double thr = 1.0 + (trial % 30);
    auto got = pck(pred, gt, thr);
    // oracle
    int64_t hits = 0, total = 0;
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < kNumJoints; ++j) {
        if (!gt[i][j].visible) continue;
        ++total;
        if (!pred[i][j].visible) continue;
        const double d = std::hypot(pred[i][j].u - gt[i][j].u, pred[i][j].v - gt[i][j].v);
        if (d < thr) ++hits;
      }
    }
    const double oracle = total > 0 ? static_cast<double>(hits) / total : 0.0;
    pck_ok &= got.average == oracle;

    auto curve = pck_curve(pred, gt, {5.0, 1.0, 25.0, 10.0});
    for (size_t k = 1; k < curve.average_rates.size(); ++k) {
      monotone_ok &= curve.average_rates[k] >= curve.average_rates[k - 1];
    }
  }
  std::ostringstream msg;
  msg << "codec round-trip 1000/1000 (" << (codec_ok ? "exact" : "BROKEN")
      << "), PCK oracle " << (pck_ok ? "exact" : "MISMATCH") << ", curves "
      << (monotone_ok ? "monotone" : "NON-MONOTONE");
  report(8, codec_ok && pck_ok && monotone_ok, msg.str());
}

TEST_CASE("criterion 9: desk-scale adaptation beats the source-only baseline") {
  constexpr double kMinGainPp = 5.0;  // pinned: >= 5 percentage points
  const auto base = work_dir() / "adaptation";

  ExperimentConfig cfg;
  cfg.task = Task::kDigit;
  cfg.source_dataset = "mnist";
  cfg.target_dataset = "usps";
  cfg.imbalance_rate = 0.10;
  cfg.synthetic_digits = true;  // stand-in corpus in the native file formats
  cfg.synth_per_class = 700;
  cfg.synth_test_per_class = 100;
  cfg.source_per_class = 500;  // reduced-capacity protocol
  cfg.iterations = 2000;  // generator steps, pinned
  cfg.batch_size = 6;     // sized so the run stays within the CPU-time budget
  cfg.checkpoint_every = 500;
  cfg.seed = 1234;  // pinned
  cfg.data_root = base / "data_root";

  // (a) source-only baseline
  auto baseline_cfg = cfg;
  baseline_cfg.source_only = true;
  baseline_cfg.out_dir = base / "source_only";
  auto baseline_result = run_training(baseline_cfg);
  const bool baseline_finite = std::all_of(
      baseline_result.history.begin(), baseline_result.history.end(),
      [](const LossBreakdown& p) { return p.finite(); });
  auto baseline_report =
      evaluate(baseline_cfg, find_latest_checkpoint(baseline_cfg.out_dir), Domain::kTarget);

  // (b) full ps_vae
  auto full_cfg = cfg;
  full_cfg.variant = Variant::kPsVae;
  full_cfg.out_dir = base / "ps_vae";
  auto full_result = run_training(full_cfg);
  const bool full_finite =
      std::all_of(full_result.history.begin(), full_result.history.end(),
                  [](const LossBreakdown& p) { return p.finite(); });
  auto full_report =
      evaluate(full_cfg, find_latest_checkpoint(full_cfg.out_dir), Domain::kTarget);

  const double base_acc = baseline_report.accuracy.value_or(0.0) * 100.0;
  const double full_acc = full_report.accuracy.value_or(0.0) * 100.0;
  const double gain = full_acc - base_acc;
  std::ostringstream msg;
  msg << "target accuracy source-only " << base_acc << "%, ps_vae " << full_acc
      << "%, gain " << gain << "pp (required >= " << kMinGainPp
      << "pp); losses finite: " << ((baseline_finite && full_finite) ? "yes" : "NO");
  report(9, gain >= kMinGainPp && baseline_finite && full_finite, msg.str());
}

TEST_CASE("criterion 10: determinism and resume") {
  const auto base = work_dir() / "determinism";
  fs::remove_all(base);

  ExperimentConfig cfg;
  cfg.synthetic_digits = true;
  cfg.apply_smoke_profile();
  cfg.iterations = 12;
  cfg.checkpoint_every = 6;
  cfg.seed = 4321;
  cfg.data_root = base / "data_root";

  auto strip_walltime = [](const fs::path& csv) {
    std::ifstream in(csv);
    std::ostringstream out;
    std::string line;
    while (std::getline(in, line)) out << line.substr(0, line.rfind(',')) << "\n";
    return out.str();
  };

  auto cfg_a = cfg;
  cfg_a.out_dir = base / "run_a";
  run_training(cfg_a);
  auto cfg_b = cfg;
  cfg_b.out_dir = base / "run_b";
  run_training(cfg_b);
  const auto metrics_a = strip_walltime(cfg_a.out_dir / "metrics.csv");
  const bool identical = metrics_a == strip_walltime(cfg_b.out_dir / "metrics.csv");

  // interrupted at the checkpoint cadence, then resumed
  auto data = load_prepared_digits(cfg_a);
  auto tc = cfg.train_config();
  tc.out_dir = base / "run_resumed";
  {
    auto tc_half = tc;
    tc_half.iterations = 6;
    Trainer half(tc_half, cfg.network_spec());
    half.run(data.source_train, data.source_val, data.target_train);
  }
  {
    Trainer rest(tc, tc.out_dir / "checkpoints" / "iter_000006");
    rest.run(data.source_train, data.source_val, data.target_train);
  }
  const bool resume_identical = metrics_a == strip_walltime(tc.out_dir / "metrics.csv");

  std::ostringstream msg;
  msg << "two seeded runs identical (" << (identical ? "yes" : "NO")
      << "), resumed run reproduces the uninterrupted stream ("
      << (resume_identical ? "yes" : "NO") << "); wall-time column excluded";
  report(10, identical && resume_identical, msg.str());
}

TEST_CASE("criterion 11: UDA contract, no target-label reads") {
  const auto base = work_dir() / "uda";
  ExperimentConfig cfg;
  cfg.synthetic_digits = true;
  cfg.apply_smoke_profile();
  cfg.iterations = 6;
  cfg.checkpoint_every = 6;
  cfg.seed = 99;
  cfg.data_root = base / "data_root";
  cfg.out_dir = base / "run";
  fs::remove_all(cfg.out_dir);
  prepare_data(cfg);
  auto data = load_prepared_digits(cfg);
  REQUIRE(data.target_train.has_labels());  // instrumented loader carries labels

  auto tc = cfg.train_config();
  Trainer trainer(tc, cfg.network_spec());
  trainer.run(data.source_train, data.source_val, data.target_train);
  const auto reads = data.target_train.label_accesses();
  std::ostringstream msg;
  msg << "instrumented target-label loader recorded " << reads
      << " accesses during training (required 0)";
  report(11, reads == 0, msg.str());
}
