// OpenMP kernels against the serial reference on layer shapes from the desk preset.
#include <benchmark/benchmark.h>

#include <random>

#include "longiseg/nn/kernels.hpp"
#include "longiseg/nn/reference.hpp"

using namespace longiseg::nn;
namespace k = longiseg::nn::kernels;
namespace r = longiseg::nn::reference;

namespace {

Tensor<float> random_tensor(int n, int c, int h, int w, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  Tensor<float> t(n, c, h, w);
  for (auto& v : t.storage()) v = u(rng);
  return t;
}

// args: batch, in channels, out channels, size
struct ConvCase {
  Tensor<float> x, y, w, b, dy, dx, dw, db;
  k::ConvGeometry g{3, 1, 1};
  explicit ConvCase(const benchmark::State& s) {
    const int n = s.range(0), cin = s.range(1), cout = s.range(2), hw = s.range(3);
    x = random_tensor(n, cin, hw, hw, 1);
    y = Tensor<float>(n, cout, hw, hw);
    w = random_tensor(cout, cin, 3, 3, 2);
    b = random_tensor(1, cout, 1, 1, 3);
    dy = random_tensor(n, cout, hw, hw, 4);
    dx = Tensor<float>(n, cin, hw, hw);
    dw = Tensor<float>(cout, cin, 3, 3);
    db = Tensor<float>(1, cout, 1, 1);
  }
  void count(benchmark::State& s) const {
    s.counters["MAC/s"] = benchmark::Counter(static_cast<double>(y.size()) * x.c() * 9,
                                             benchmark::Counter::kIsIterationInvariantRate);
  }
};

void BM_conv_forward_omp(benchmark::State& s) {
  ConvCase c(s);
  for (auto _ : s) {
    k::conv2d_forward<float>(c.x.view(), c.w.data(), c.b.data(), c.g, c.y.view());
    benchmark::DoNotOptimize(c.y.data());
  }
  c.count(s);
}

void BM_conv_forward_serial(benchmark::State& s) {
  ConvCase c(s);
  for (auto _ : s) {
    r::conv2d_forward<float>(c.x.view(), c.w.data(), c.b.data(), c.g, c.y.view());
    benchmark::DoNotOptimize(c.y.data());
  }
  c.count(s);
}

void BM_conv_backward_omp(benchmark::State& s) {
  ConvCase c(s);
  for (auto _ : s) {
    k::conv2d_backward<float>(c.x.view(), c.w.data(), c.dy.view(), c.g, c.dx.view(), c.dw.data(), c.db.data());
    benchmark::DoNotOptimize(c.dw.data());
  }
  c.count(s);
}

void BM_conv_backward_serial(benchmark::State& s) {
  ConvCase c(s);
  for (auto _ : s) {
    r::conv2d_backward<float>(c.x.view(), c.w.data(), c.dy.view(), c.g, c.dx.view(), c.dw.data(), c.db.data());
    benchmark::DoNotOptimize(c.dw.data());
  }
  c.count(s);
}

void BM_softmax_omp(benchmark::State& s) {
  const auto x = random_tensor(s.range(0), 3, s.range(1), s.range(1), 5);
  Tensor<float> y(x.n(), x.c(), x.h(), x.w());
  for (auto _ : s) {
    k::softmax_channels<float>(x.view(), y.view());
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_softmax_serial(benchmark::State& s) {
  const auto x = random_tensor(s.range(0), 3, s.range(1), s.range(1), 5);
  Tensor<float> y(x.n(), x.c(), x.h(), x.w());
  for (auto _ : s) {
    r::softmax_channels<float>(x.view(), y.view());
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_maxpool_omp(benchmark::State& s) {
  const auto x = random_tensor(s.range(0), s.range(1), s.range(2), s.range(2), 6);
  Tensor<float> y(x.n(), x.c(), x.h() / 2, x.w() / 2);
  std::vector<std::int32_t> arg(y.size());
  for (auto _ : s) {
    k::maxpool2_forward<float>(x.view(), y.view(), arg.data());
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_maxpool_serial(benchmark::State& s) {
  const auto x = random_tensor(s.range(0), s.range(1), s.range(2), s.range(2), 6);
  Tensor<float> y(x.n(), x.c(), x.h() / 2, x.w() / 2);
  for (auto _ : s) {
    r::maxpool2_forward<float>(x.view(), y.view());
    benchmark::DoNotOptimize(y.data());
  }
}

void conv_shapes(benchmark::internal::Benchmark* b) {
  b->Args({4, 8, 16, 64})->Args({4, 40, 8, 64})->Args({2, 64, 8, 32})->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(BM_conv_forward_omp)->Apply(conv_shapes);
BENCHMARK(BM_conv_forward_serial)->Apply(conv_shapes);
BENCHMARK(BM_conv_backward_omp)->Apply(conv_shapes);
BENCHMARK(BM_conv_backward_serial)->Apply(conv_shapes);
BENCHMARK(BM_softmax_omp)->Args({8, 64})->Args({4, 150});
BENCHMARK(BM_softmax_serial)->Args({8, 64})->Args({4, 150});
BENCHMARK(BM_maxpool_omp)->Args({4, 32, 64});
BENCHMARK(BM_maxpool_serial)->Args({4, 32, 64});

BENCHMARK_MAIN();
