#include <benchmark/benchmark.h>

#include "dpars/rng.hpp"
#include "dpars/sigproc.hpp"
#include "dpars/train.hpp"

using namespace dpars;

namespace {

Matrix noise(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (double& v : m.data) v = rng.normal();
  return m;
}

void BM_Forward(benchmark::State& state) {
  const DparsConfig c;
  const auto p = train::init_params(c, 1);
  const auto w = noise(c.t_seq, c.c_in, 2);
  const sigproc::WindowView view{w.data, w.rows, w.cols, w.rows - 1};
  for (auto _ : state) benchmark::DoNotOptimize(model::forward(view, p));
}
BENCHMARK(BM_Forward);

void BM_StreamingStep(benchmark::State& state) {
  const DparsConfig c;
  const auto p = train::init_params(c, 1);
  const auto frames = noise(256, c.c_in, 3);
  StreamingDecoder dec(p);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(dec.step(frames.row(i)));
    i = (i + 1) % frames.rows;
  }
}
BENCHMARK(BM_StreamingStep);

void BM_ForwardBackward(benchmark::State& state) {
  const DparsConfig c;
  auto p = train::init_params(c, 1);
  const auto w = noise(c.t_seq, c.c_in, 4);
  const sigproc::WindowView view{w.data, w.rows, w.cols, w.rows - 1};
  const std::vector<double> target(6, 120.0);
  ad::Tape tape;
  for (auto _ : state) {
    tape.reset();
    const auto out = model::build_graph(tape, view, p);
    tape.backward(train::loss_graph(tape, out, target, 0.05));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ForwardBackward);

void BM_Preprocess(benchmark::State& state) {
  sigproc::RawEmgRecording rec;
  rec.samples = noise(2400, 64, 5);
  rec.times.resize(2400);
  rec.rep_ids.assign(2400, 1);
  for (std::size_t i = 0; i < 2400; ++i) rec.times[i] = static_cast<double>(i) / 2400.0;
  for (auto _ : state) benchmark::DoNotOptimize(sigproc::preprocess(rec, sigproc::PreprocessConfig{}));
  state.SetLabel("1 s of 64-channel EMG");
}
BENCHMARK(BM_Preprocess)->Unit(benchmark::kMillisecond);

void BM_StreamingPreprocessor(benchmark::State& state) {
  const auto x = noise(2400, 64, 6);
  sigproc::StreamingPreprocessor sp(sigproc::PreprocessConfig{}, 2400.0, 64);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sp.push(x.row(i)));
    i = (i + 1) % x.rows;
  }
}
BENCHMARK(BM_StreamingPreprocessor);

}  // namespace
BENCHMARK_MAIN();
