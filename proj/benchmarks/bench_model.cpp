#include <benchmark/benchmark.h>

#include "psvae/model.hpp"

using namespace psvae;

static void BM_SpectralNormalize(benchmark::State& state) {
  torch::manual_seed(0);
  auto w = torch::randn({64, 64 * 4 * 4});
  torch::Tensor u;
  for (auto _ : state) benchmark::DoNotOptimize(spectral_normalize(w, 1, u));
}
BENCHMARK(BM_SpectralNormalize);

static void BM_EncoderForward(benchmark::State& state) {
  torch::manual_seed(0);
  torch::NoGradGuard guard;
  Encoder enc(NetworkSpec::digit(Variant::kPsVae));
  enc->eval();
  auto x = torch::randn({8, 1, 32, 32});
  for (auto _ : state) benchmark::DoNotOptimize(enc->forward(x));
}
BENCHMARK(BM_EncoderForward);

static void BM_DiscriminatorForward(benchmark::State& state) {
  torch::manual_seed(0);
  torch::NoGradGuard guard;
  Discriminator disc(NetworkSpec::digit(Variant::kPsVae));
  disc->eval();
  auto x = torch::randn({8, 1, 32, 32});
  for (auto _ : state) benchmark::DoNotOptimize(disc->forward(x));
}
BENCHMARK(BM_DiscriminatorForward);

BENCHMARK_MAIN();
