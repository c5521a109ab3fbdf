#include "psvae/model.hpp"

// doctest last: torch's logging shim also defines a CHECK macro
#include <doctest.h>

using namespace psvae;

TEST_CASE("encoder output shapes and the 64/96/96 partition, digit geometry") {
  torch::manual_seed(21);
  NetworkSpec spec = NetworkSpec::digit(Variant::kPsVae);
  CHECK(spec.feature_channels() == 256);
  Encoder enc(spec);
  auto f = enc->forward(torch::randn({2, 1, 32, 32}));
  CHECK(f.mu.sizes() == torch::IntArrayRef({2, 256, 8, 8}));
  CHECK(f.logvar.sizes() == torch::IntArrayRef({2, 256, 8, 8}));
  auto code = take_mean(f, spec);
  CHECK(code.z.size(1) == 64);
  CHECK(code.zeta_s.size(1) == 96);
  CHECK(code.zeta_t.size(1) == 96);
  CHECK(torch::equal(code.full(), f.mu));
}

TEST_CASE("pose geometry shapes") {
  torch::manual_seed(22);
  NetworkSpec spec = NetworkSpec::pose(Variant::kPsVae);
  Encoder enc(spec);
  auto f = enc->forward(torch::randn({1, 1, 256, 128}));
  CHECK(f.mu.sizes() == torch::IntArrayRef({1, 256, 64, 32}));

  Discriminator disc(spec);
  auto score = disc->forward(torch::randn({1, 1, 256, 128}));
  CHECK(score.size(2) == 256 / 16 + 4);  // 20
  CHECK(score.size(3) == 128 / 16 + 4);  // 12

  PoseRegressor reg(spec);
  auto maps = reg->forward(f.mu.narrow(1, 0, spec.n_z));
  CHECK(maps.sizes() == torch::IntArrayRef({1, kNumJoints, 256, 128}));
}

TEST_CASE("discriminator output follows (h/16 + 4, w/16 + 4)") {
  torch::manual_seed(23);
  NetworkSpec spec = NetworkSpec::digit(Variant::kPsVae);
  Discriminator disc(spec);
  auto score = disc->forward(torch::randn({3, 1, 32, 32}));
  CHECK(score.sizes() == torch::IntArrayRef({3, 1, 6, 6}));
}

TEST_CASE("decoder and classifier shapes") {
  torch::manual_seed(24);
  NetworkSpec spec = NetworkSpec::digit(Variant::kPsVae);
  Decoder dec(spec);
  auto img = dec->forward(torch::randn({2, 256, 8, 8}));
  CHECK(img.sizes() == torch::IntArrayRef({2, 1, 32, 32}));
  CHECK(img.abs().max().item<double>() <= 1.0);  // tanh range

  DigitClassifier cls(spec);
  auto logits = cls->forward(torch::randn({2, 64, 8, 8}));
  CHECK(logits.sizes() == torch::IntArrayRef({2, 10}));
}

TEST_CASE("zero-substitution symmetry under a shared decoder") {
  torch::manual_seed(25);
  NetworkSpec spec = NetworkSpec::digit(Variant::kPsVae);
  ModelBundle bundle(spec);
  auto z = torch::randn({2, 64, 8, 8});
  DisentangledCode code{z, torch::randn({2, 96, 8, 8}), torch::randn({2, 96, 8, 8})};
  DisentangledCode zeroed{z, torch::zeros({2, 96, 8, 8}), torch::zeros({2, 96, 8, 8})};
  // with both zeta partitions zero, both domains decode identically (exactly)
  auto via_source = bundle->decode(zeroed, Domain::kSource);
  auto via_target = bundle->decode(zeroed, Domain::kTarget);
  CHECK(torch::equal(via_source, via_target));
  // decode() itself zeroes the cross-domain partition
  DisentangledCode source_only{z, code.zeta_s, torch::zeros({2, 96, 8, 8})};
  CHECK(torch::equal(bundle->decode(code, Domain::kSource),
                     bundle->decode(source_only, Domain::kSource)));
}

TEST_CASE("variant structure flags match the ablation definitions") {
  auto f = variant_flags(Variant::kCycleGanFc);
  CHECK(f.shared);
  CHECK_FALSE(f.split);
  CHECK_FALSE(f.vae);
  f = variant_flags(Variant::kDCycleGan);
  CHECK_FALSE(f.shared);
  CHECK(f.split);
  CHECK_FALSE(f.vae);
  f = variant_flags(Variant::kDCycleGanVae);
  CHECK_FALSE(f.shared);
  CHECK(f.split);
  CHECK(f.vae);
  f = variant_flags(Variant::kPsAe);
  CHECK(f.shared);
  CHECK(f.split);
  CHECK_FALSE(f.vae);
  f = variant_flags(Variant::kPsVae);
  CHECK(f.shared);
  CHECK(f.split);
  CHECK(f.vae);
}

TEST_CASE("shared vs unshared parameter sets") {
  torch::manual_seed(26);
  ModelBundle shared(NetworkSpec::digit(Variant::kPsVae));
  ModelBundle unshared(NetworkSpec::digit(Variant::kDCycleGan));
  bool found_split_encoder = false, found_shared_encoder = false;
  for (const auto& item : unshared->named_parameters()) {
    if (item.key().starts_with("encoder_source.")) found_split_encoder = true;
  }
  for (const auto& item : shared->named_parameters()) {
    if (item.key().starts_with("encoder.")) found_shared_encoder = true;
    CHECK_FALSE(item.key().starts_with("encoder_source."));
  }
  CHECK(found_split_encoder);
  CHECK(found_shared_encoder);

  // the shared bundle encodes both domains with the same module
  auto x = torch::randn({1, 1, 32, 32});
  torch::NoGradGuard guard;
  shared->eval();
  CHECK(torch::equal(shared->encode(x, Domain::kSource).mu,
                     shared->encode(x, Domain::kTarget).mu));
}

TEST_CASE("spectral normalization tracks exact SVD") {
  torch::manual_seed(27);
  for (int i = 0; i < 50; ++i) {
    const int64_t rows = 2 + i % 63, cols = 2 + (i * 7) % 63;
    auto w = torch::randn({rows, cols}) * (0.1 + (i % 5));
    torch::Tensor u;
    auto wn = spectral_normalize(w, 5, u);
    const double sigma = torch::linalg_svdvals(wn).max().item<double>();
    CHECK(sigma >= 0.90);
    CHECK(sigma <= 1.05);
  }
}

TEST_CASE("spectral norm state persists and conv output stays bounded") {
  torch::manual_seed(28);
  SNConv2d conv(4, 8, 4, 2, 2, 1);
  conv->train();
  auto x = torch::randn({2, 4, 16, 16});
  conv->forward(x);
  auto u_after_one = conv->named_buffers()["u"].clone();
  conv->forward(x);
  // power iteration keeps refining the persistent u vector
  CHECK_FALSE(torch::equal(u_after_one, conv->named_buffers()["u"]));

  auto wn = conv->normalized_weight();
  const double sigma =
      torch::linalg_svdvals(wn.reshape({wn.size(0), -1})).max().item<double>();
  CHECK(sigma <= 1.3);  // loose: a single iteration only approximates

  // eval mode must not mutate state
  conv->eval();
  auto u_frozen = conv->named_buffers()["u"].clone();
  conv->forward(x);
  CHECK(torch::equal(u_frozen, conv->named_buffers()["u"]));
}

TEST_CASE("reparameterize follows mu + sigma * eps statistics") {
  torch::manual_seed(29);
  NetworkSpec spec;
  spec.base_channels = 1;
  spec.n_z = 1;
  spec.n_zeta = 1;
  GaussianFeature f{torch::full({2000, 3, 1, 1}, 3.0),
                    torch::full({2000, 3, 1, 1}, std::log(0.25))};
  auto code = reparameterize(f, spec);
  auto all = code.full();
  CHECK(all.mean().item<double>() == doctest::Approx(3.0).epsilon(0.02));
  CHECK(all.std().item<double>() == doctest::Approx(0.5).epsilon(0.05));
  // deterministic mean path
  auto mean_code = take_mean(f, spec);
  CHECK(torch::equal(mean_code.full(), f.mu));
}

TEST_CASE("network spec validation") {
  NetworkSpec spec = NetworkSpec::digit(Variant::kPsVae);
  CHECK_NOTHROW(spec.validate());
  spec.n_z = 63;  // breaks n_z + 2 n_zeta = 4 base
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = NetworkSpec::digit(Variant::kPsVae);
  spec.height = 30;  // not divisible by 4
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  auto round_trip = NetworkSpec::from_json(NetworkSpec::pose(Variant::kPsAe).to_json());
  CHECK(round_trip.task == Task::kPose);
  CHECK(round_trip.variant == Variant::kPsAe);
  CHECK(round_trip.height == kPoseHeight);
}

TEST_CASE("weight init is seed deterministic") {
  torch::manual_seed(30);
  ModelBundle a(NetworkSpec::digit(Variant::kPsVae));
  torch::manual_seed(30);
  ModelBundle b(NetworkSpec::digit(Variant::kPsVae));
  auto pa = a->named_parameters();
  auto pb = b->named_parameters();
  REQUIRE(pa.size() == pb.size());
  for (const auto& item : pa) {
    CHECK(torch::equal(item.value(), *pb.find(item.key())));
  }
}
