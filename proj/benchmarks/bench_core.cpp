#include <benchmark/benchmark.h>

#include "kdlab/data.hpp"
#include "kdlab/distill.hpp"
#include "kdlab/models.hpp"
#include "kdlab/rng.hpp"
#include "kdlab/tensor.hpp"

namespace {

kdlab::Tensor random_tensor(std::vector<int> shape, std::uint64_t seed) {
    kdlab::Tensor t = kdlab::Tensor::zeros(std::move(shape));
    kdlab::Rng rng(seed);
    for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
    return t;
}

void BM_Conv2dForward(benchmark::State& state) {
    const int channels = static_cast<int>(state.range(0));
    const kdlab::Tensor input = random_tensor({8, channels, 32, 32}, 1);
    const kdlab::Tensor kernel = random_tensor({channels, channels, 3, 3}, 2);
    kdlab::Tape tape;
    for (auto _ : state) {
        auto out = tape.conv2d(input, kernel, 1, 1);
        benchmark::DoNotOptimize(out.data.data());
    }
}
BENCHMARK(BM_Conv2dForward)->Arg(4)->Arg(8)->Arg(16);

void BM_ForwardSimple10(benchmark::State& state) {
    const double scale = static_cast<double>(state.range(0)) / 100.0;
    const auto spec = kdlab::build_simple10({3, 32, 32}, 3, scale);
    auto params = kdlab::init_parameters(spec, 1);
    const kdlab::Tensor batch = random_tensor({8, 3, 32, 32}, 3);
    for (auto _ : state) {
        auto probs = kdlab::forward(spec, params, batch);
        benchmark::DoNotOptimize(probs.data.data());
    }
}
BENCHMARK(BM_ForwardSimple10)->Arg(10)->Arg(20);

void BM_TrainStepSimple10(benchmark::State& state) {
    const double scale = static_cast<double>(state.range(0)) / 100.0;
    const auto spec = kdlab::build_simple10({3, 32, 32}, 3, scale);
    auto params = kdlab::init_parameters(spec, 1);
    const kdlab::Tensor batch = random_tensor({8, 3, 32, 32}, 3);
    const std::vector<int> labels = {0, 1, 2, 0, 1, 2, 0, 1};
    for (auto _ : state) {
        kdlab::Tape tape;
        auto probs = kdlab::forward(spec, params, batch, &tape);
        auto loss = kdlab::loss_hard(tape, probs, labels);
        tape.backward(loss.node);
        benchmark::DoNotOptimize(tape.grad(params.tensors[0].node));
    }
}
BENCHMARK(BM_TrainStepSimple10)->Arg(10)->Arg(20);

void BM_LocalHistEq(benchmark::State& state) {
    kdlab::LabeledSet set = kdlab::gen_target_set(30, 3, 32, 99);
    for (auto _ : state) {
        auto eq = kdlab::local_hist_eq(set.samples[0], 8);
        benchmark::DoNotOptimize(eq.pixels.data());
    }
}
BENCHMARK(BM_LocalHistEq);

}  // namespace

BENCHMARK_MAIN();
