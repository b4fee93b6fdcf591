#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "dcdp/cgm.hpp"
#include "dcdp/model.hpp"
#include "dcdp/ops.hpp"
#include "dcdp/trainer.hpp"

namespace {

using namespace dcdp;

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Tensor t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : t.storage()) v = n(rng);
  return t;
}

void BM_Conv1dForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_tensor({32, c, 128}, 1);
  Parameter w("w", random_tensor({c, c, 3}, 2));
  Parameter b("b", random_tensor({c}, 3));
  for (auto _ : state) {
    Tape tape;
    Var y = ops::conv1d(tape, tape.constant(x), tape.param(w), tape.param(b), 1, 1);
    benchmark::DoNotOptimize(tape.value(y).data());
  }
  state.SetItemsProcessed(state.iterations() * 32 * 128 * c * c * 3);
}
BENCHMARK(BM_Conv1dForward)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Conv1dForwardBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_tensor({32, c, 128}, 1);
  Parameter w("w", random_tensor({c, c, 3}, 2));
  Parameter b("b", random_tensor({c}, 3));
  for (auto _ : state) {
    Tape tape;
    Var y = ops::conv1d(tape, tape.constant(x), tape.param(w), tape.param(b), 1, 1);
    tape.backward(ops::sum(tape, y));
    benchmark::DoNotOptimize(w.grad.data());
  }
}
BENCHMARK(BM_Conv1dForwardBackward)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

ModelConfig bench_model() {
  ModelConfig cfg;
  cfg.classes = 6;
  cfg.partition = ChannelPartition::contiguous(9, 6);
  return cfg;
}

void BM_NetworkForward(benchmark::State& state) {
  DualPathNetwork net(bench_model(), 7);
  const Tensor x = random_tensor({static_cast<std::size_t>(state.range(0)), 128, 9}, 8);
  for (auto _ : state) {
    Tape tape;
    ForwardOutputs out = net.forward(tape, x, Mode::kEval);
    benchmark::DoNotOptimize(tape.value(out.fusion_logits).data());
  }
}
BENCHMARK(BM_NetworkForward)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_NetworkTrainLoss(benchmark::State& state) {
  DualPathNetwork net(bench_model(), 7);
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_tensor({n, 128, 9}, 8);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 6);
  std::vector<Parameter*> params = net.parameters();
  for (auto _ : state) {
    zero_grads(params);
    Tape tape;
    LossGraph g = build_loss(tape, net.forward(tape, x, Mode::kTrain), labels, 0.7, 0.5);
    tape.backward(g.total);
    benchmark::DoNotOptimize(params.front()->grad.data());
  }
}
BENCHMARK(BM_NetworkTrainLoss)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_ModulationCoefficient(benchmark::State& state) {
  double r = 0.5;
  for (auto _ : state) {
    benchmark::DoNotOptimize(modulation_coefficient(r, 0.9));
    r = r < 4.0 ? r + 1e-3 : 0.5;
  }
}
BENCHMARK(BM_ModulationCoefficient);

}  // namespace

BENCHMARK_MAIN();
