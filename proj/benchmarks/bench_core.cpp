#include <benchmark/benchmark.h>

#include <vector>

#include "oodrecon/eval.hpp"
#include "oodrecon/generator.hpp"
#include "oodrecon/metrics.hpp"
#include "oodrecon/phantom.hpp"
#include "oodrecon/projection.hpp"
#include "oodrecon/rng.hpp"

using namespace oodrecon;

namespace {

std::vector<double> random_samples(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(0.0, 255.0);
  return v;
}

imaging::ImageGrid random_image(int res, std::uint64_t seed) {
  Rng rng(seed);
  imaging::ImageGrid img(res, res);
  for (auto& v : img.values) v = static_cast<float>(rng.uniform(0.0, 255.0));
  return img;
}

void BM_WassersteinCdf(benchmark::State& state) {
  const auto a = random_samples(state.range(0), 1);
  const auto b = random_samples(state.range(0) / 2 + 1, 2);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::wd_cdf_integral(a, b));
}
BENCHMARK(BM_WassersteinCdf)->Arg(256)->Arg(4096);

void BM_WassersteinFastPath(benchmark::State& state) {
  const auto a = random_samples(state.range(0), 3);
  const auto b = random_samples(state.range(0), 4);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::wd_mean_sorted_diff(a, b));
}
BENCHMARK(BM_WassersteinFastPath)->Arg(4096);

void BM_Ssim64(benchmark::State& state) {
  const auto a = random_image(64, 5);
  const auto b = random_image(64, 6);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::ssim(a, b));
}
BENCHMARK(BM_Ssim64);

void BM_Auroc(benchmark::State& state) {
  const auto pos = random_samples(state.range(0), 7);
  const auto neg = random_samples(state.range(0), 8);
  for (auto _ : state)
    benchmark::DoNotOptimize(eval::auroc(pos, neg, eval::Orientation::higher_is_ood));
}
BENCHMARK(BM_Auroc)->Arg(100)->Arg(10000);

void BM_GenPhantom64(benchmark::State& state) {
  imaging::PhantomSpec spec;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    spec.seed = ++seed;
    benchmark::DoNotOptimize(imaging::gen_phantom(spec));
  }
}
BENCHMARK(BM_GenPhantom64);

void BM_GeneratorForward64(benchmark::State& state) {
  generator::GeneratorConfig cfg;
  const auto params = generator::init_params(cfg, 1);
  Rng rng(2);
  generator::LatentCode z(cfg.latent_dim);
  for (auto& v : z) v = rng.normal_f();
  generator::ForwardState fwd;
  for (auto _ : state) benchmark::DoNotOptimize(generator::forward(params, z, fwd));
}
BENCHMARK(BM_GeneratorForward64);

void BM_GeneratorBackward64(benchmark::State& state) {
  generator::GeneratorConfig cfg;
  const auto params = generator::init_params(cfg, 1);
  Rng rng(2);
  generator::LatentCode z(cfg.latent_dim);
  for (auto& v : z) v = rng.normal_f();
  std::vector<float> upstream(64 * 64, 1e-3f);
  generator::ForwardState fwd;
  generator::forward(params, z, fwd);
  const bool with_params = state.range(0) != 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(generator::backward(params, z, fwd, upstream, with_params));
}
BENCHMARK(BM_GeneratorBackward64)->Arg(0)->Arg(1);

void BM_ProjectionStep64(benchmark::State& state) {
  generator::GeneratorConfig cfg;
  const auto params = generator::init_params(cfg, 1);
  const auto target = random_image(64, 9);
  const auto mask = imaging::BodyMask::full(64, 64);
  projection::ProjectionConfig pc;
  pc.latent_mean_samples = 16;
  pc.seed = 3;
  for (auto _ : state) {
    pc.num_steps = 1;
    benchmark::DoNotOptimize(projection::project(params, target, mask, pc));
  }
}
BENCHMARK(BM_ProjectionStep64);

}  // namespace

BENCHMARK_MAIN();
