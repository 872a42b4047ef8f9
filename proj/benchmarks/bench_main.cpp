#include "fpage/age_head.hpp"
#include "fpage/cleaning.hpp"
#include "fpage/fpa.hpp"
#include "fpage/model.hpp"
#include "fpage/synthetic.hpp"

#include <benchmark/benchmark.h>

#include <numeric>
#include <random>

using namespace fpage;

namespace {

Tensor random_tensor(int batch, int h, int w, int channels, std::mt19937_64& rng) {
  Tensor t(batch, h, w, channels);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data.data()[i] = u(rng);
  return t;
}

Tensor random_masks(int batch, int h, int w, int classes, std::mt19937_64& rng) {
  Tensor t = random_tensor(batch, h, w, classes, rng);
  for (Eigen::Index p = 0; p < t.data.cols(); ++p) {
    auto col = t.data.col(p);
    col = (col.array() * 3.0).exp();
    col /= col.sum();
  }
  return t;
}

// Toy-scale shapes: 4x4 grid, 32 low / 64 high channels, 11 regions.
struct Setup {
  BackboneShape shape{32, 64, 11};
  LabelCodecConfig codec;
  ModelConfig model;
  ModelParams params;
  Tensor low, high, masks;

  explicit Setup(int batch) {
    std::mt19937_64 rng(1);
    model.trunk_channels = 32;
    model.norm_groups = 8;
    params = ModelParams::random(shape, codec, model, rng);
    low = random_tensor(batch, 4, 4, shape.low_channels, rng);
    high = random_tensor(batch, 4, 4, shape.high_channels, rng);
    masks = random_masks(batch, 4, 4, shape.num_classes, rng);
  }
};

void BM_FpaForward(benchmark::State& state) {
  const Setup s(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(fpa_forward(s.high, s.masks, s.params.fpa));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FpaForward)->Arg(1)->Arg(32);

void BM_HeadForward(benchmark::State& state) {
  const Setup s(static_cast<int>(state.range(0)));
  const FpaActivations v = fpa_forward(s.high, s.masks, s.params.fpa);
  for (auto _ : state) benchmark::DoNotOptimize(head_forward(s.low, v.output, s.params.head));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_HeadForward)->Arg(1)->Arg(32);

void BM_ForwardBackward(benchmark::State& state) {
  Setup s(static_cast<int>(state.range(0)));
  Matrix grad_logits = Matrix::Constant(s.codec.num_classes, s.low.batch, 1e-3);
  ModelParams grads = s.params.zeros_like();
  for (auto _ : state) {
    const ForwardPass pass = model_forward(s.low, s.high, s.masks, s.params, {});
    model_backward(s.high, pass, s.params, {}, grad_logits, grads);
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBackward)->Arg(32);

void BM_ConstrainedDbscan(benchmark::State& state) {
  PlantedStoreConfig pc;
  pc.num_subjects = 1;
  pc.num_ambiguous = 0;
  pc.main_size = static_cast<int>(state.range(0));
  pc.lookalikes = 3;
  const auto store = make_planted_store(pc, 2).store;
  const auto& faces = store.begin()->second;
  std::vector<int> order(faces.size());
  std::iota(order.begin(), order.end(), 0);
  for (auto _ : state) benchmark::DoNotOptimize(constrained_dbscan(faces, order, 0.35, 3));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(faces.size()));
}
BENCHMARK(BM_ConstrainedDbscan)->Arg(20)->Arg(100)->Arg(400);

void BM_ConsensusPerSubject(benchmark::State& state) {
  PlantedStoreConfig pc;
  pc.num_subjects = 1;
  pc.num_ambiguous = 0;
  const auto store = make_planted_store(pc, 3).store;
  const CleaningConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(consensus_for_subject(store.begin()->second, cfg));
}
BENCHMARK(BM_ConsensusPerSubject);

}  // namespace

BENCHMARK_MAIN();
