#include <benchmark/benchmark.h>

#include "psvae/losses.hpp"
#include "psvae/model.hpp"

using namespace psvae;

static void BM_SmoothL1(benchmark::State& state) {
  torch::manual_seed(0);
  auto a = torch::randn({32, 1, 32, 32});
  auto b = torch::randn({32, 1, 32, 32});
  for (auto _ : state) benchmark::DoNotOptimize(smooth_l1(a, b));
}
BENCHMARK(BM_SmoothL1);

static void BM_KlLoss(benchmark::State& state) {
  torch::manual_seed(0);
  NetworkSpec spec = NetworkSpec::digit(Variant::kPsVae);
  GaussianFeature f{torch::randn({32, 256, 8, 8}), torch::randn({32, 256, 8, 8})};
  for (auto _ : state) benchmark::DoNotOptimize(kl_loss(f, Domain::kSource, spec));
}
BENCHMARK(BM_KlLoss);

static void BM_AdversarialD(benchmark::State& state) {
  torch::manual_seed(0);
  auto real = torch::randn({32, 1, 6, 6});
  auto fake = torch::randn({32, 1, 6, 6});
  for (auto _ : state) benchmark::DoNotOptimize(adversarial_loss_d(real, fake));
}
BENCHMARK(BM_AdversarialD);
