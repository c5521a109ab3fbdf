#include "psvae/config.hpp"

// doctest last: torch's logging shim also defines a CHECK macro
#include <doctest.h>

using namespace psvae;

TEST_CASE("config JSON round-trip preserves the hash") {
  ExperimentConfig cfg;
  cfg.task = Task::kDigit;
  cfg.source_dataset = "mnist";
  cfg.target_dataset = "usps";
  cfg.imbalance_rate = 0.30;
  cfg.seed = 7;
  auto back = ExperimentConfig::from_json(cfg.to_json());
  CHECK(back.hash() == cfg.hash());
  CHECK(back.imbalance_rate == doctest::Approx(0.30));
  CHECK(back.seed == 7);
}

TEST_CASE("hash ignores output locations, data hash ignores the variant") {
  ExperimentConfig a;
  auto b = a;
  b.out_dir = "somewhere/else";
  b.data_root = "other/data";
  CHECK(a.hash() == b.hash());

  auto c = a;
  c.variant = Variant::kDCycleGan;
  CHECK(a.hash() != c.hash());
  CHECK(a.data_hash() == c.data_hash());

  auto d = a;
  d.imbalance_rate = 0.50;
  CHECK(a.data_hash() != d.data_hash());
}

TEST_CASE("invalid configs are rejected") {
  ExperimentConfig cfg;
  cfg.target_dataset = "svhn";
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = ExperimentConfig{};
  cfg.imbalance_rate = 0.17;  // not a protocol rate
  CHECK_THROWS_AS(cfg.validate(), std::exception);

  cfg = ExperimentConfig{};
  cfg.source_dataset = "svhn";
  cfg.target_dataset = "mnist";
  cfg.imbalance_rate = 0.10;
  CHECK_NOTHROW(cfg.validate());
  cfg.imbalance_rate = 0.30;  // SVHN pairs have no imbalanced setting beyond 10%
  CHECK_THROWS_AS(cfg.validate(), std::exception);

  CHECK_THROWS_AS(ExperimentConfig::from_json("{ not json"), ConfigError);
}

TEST_CASE("smoke profile shrinks the schedule") {
  ExperimentConfig cfg;
  cfg.apply_smoke_profile();
  CHECK(cfg.iterations <= 40);
  CHECK(cfg.synthetic_digits);
  CHECK(cfg.checkpoint_every <= cfg.iterations);
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("variant-independent network spec selection") {
  ExperimentConfig cfg;
  auto spec = cfg.network_spec();
  CHECK(spec.in_channels == 1);
  CHECK_FALSE(spec.use_resblocks);

  cfg.source_dataset = "svhn";
  cfg.target_dataset = "mnist";
  spec = cfg.network_spec();
  CHECK(spec.in_channels == 3);
  CHECK(spec.use_resblocks);
  CHECK(cfg.effective_invert_p() == doctest::Approx(0.5));

  cfg.task = Task::kPose;
  spec = cfg.network_spec();
  CHECK(spec.height == kPoseHeight);
  CHECK(spec.width == kPoseWidth);
  CHECK(cfg.effective_weights().beta == doctest::Approx(10.0));
}
