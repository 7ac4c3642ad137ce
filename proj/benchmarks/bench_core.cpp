#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "zonalnet/losses.hpp"
#include "zonalnet/metrics.hpp"
#include "zonalnet/model.hpp"
#include "zonalnet/ops.hpp"
#include "zonalnet/phantom.hpp"
#include "zonalnet/stats.hpp"

using namespace zonalnet;

namespace {

Tensor random_tensor(const Shape& shape, std::uint64_t seed, bool requires_grad = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d(0.0f, 1.0f);
  std::vector<float> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = d(rng);
  return Tensor::from_vector(shape, std::move(v), requires_grad);
}

// Stem-sized convolution at the training profile: 8x(1x96x96) -> 16x48x48.
void bm_conv_forward(benchmark::State& state) {
  NoGradGuard guard;
  auto x = random_tensor({8, 1, 96, 96}, 1);
  auto w = random_tensor({16, 1, 7, 7}, 2);
  for (auto _ : state) {
    auto y = conv2d(x, w, {}, {2, 3, 1});
    benchmark::DoNotOptimize(y.values().data());
  }
}
BENCHMARK(bm_conv_forward)->Unit(benchmark::kMillisecond);

// Mid-network shape with backward pass included.
void bm_conv_train_step(benchmark::State& state) {
  auto x = random_tensor({8, 32, 24, 24}, 3, true);
  auto w = random_tensor({64, 32, 3, 3}, 4, true);
  for (auto _ : state) {
    auto loss = mean_all(conv2d(x, w, {}, {1, 1, 1}));
    loss.backward();
    benchmark::DoNotOptimize(loss.item());
    x.zero_grad();
    w.zero_grad();
  }
}
BENCHMARK(bm_conv_train_step)->Unit(benchmark::kMillisecond);

void bm_model_forward(benchmark::State& state) {
  ModelConfig cfg;
  cfg.width_multiplier = 0.25;
  cfg.input_size = 96;
  ModelGraph model = ModelGraph::build(cfg, 5);
  NoGradGuard guard;
  auto x = random_tensor({1, 1, 96, 96}, 6);
  // Eval-mode batch norm needs one train pass to seed the running stats.
  (void)model.forward(random_tensor({2, 1, 96, 96}, 7), true);
  for (auto _ : state) {
    auto y = model.forward(x, false);
    benchmark::DoNotOptimize(y.values().data());
  }
}
BENCHMARK(bm_model_forward)->Unit(benchmark::kMillisecond);

void bm_dsc_volume(benchmark::State& state) {
  const PhantomCase a = generate_phantom(1);
  const PhantomCase b = generate_phantom(2);
  for (auto _ : state) {
    auto d = dsc(a.mask, b.mask, Zone::pz);
    benchmark::DoNotOptimize(d);
  }
}
BENCHMARK(bm_dsc_volume)->Unit(benchmark::kMicrosecond);

void bm_phantom_generation(benchmark::State& state) {
  std::uint64_t seed = 0;
  for (auto _ : state) {
    const PhantomCase pc = generate_phantom(++seed);
    benchmark::DoNotOptimize(pc.image.image_data.data());
  }
}
BENCHMARK(bm_phantom_generation)->Unit(benchmark::kMillisecond);

void bm_exact_rank_sum(benchmark::State& state) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.5, 0.95);
  std::vector<double> a(12), b(12);
  for (auto& v : a) v = u(rng);
  for (auto& v : b) v = u(rng);
  for (auto _ : state) {
    auto r = stats::wilcoxon_rank_sum(a, b);
    benchmark::DoNotOptimize(r.p_value);
  }
}
BENCHMARK(bm_exact_rank_sum)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
