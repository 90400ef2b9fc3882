#include <benchmark/benchmark.h>

#include <random>

#include "kattn/encoders.hpp"
#include "kattn/model.hpp"
#include "kattn/synthetic.hpp"
#include "kattn/train.hpp"

namespace {

using namespace kattn;

Tensor random_tensor(Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(shape_size(shape));
  for (double& e : v) e = dist(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  const Tensor a = random_tensor({n, 330}, rng), b = random_tensor({330, 55}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Matmul)->Arg(100)->Arg(1000)->Arg(4000);

AttentionOptions default_options() {
  AttentionOptions o;
  o.attention_weight_dropout = 0.0;
  o.attention_output_dropout = 0.0;
  o.ffn_dropout = 0.0;
  return o;
}

void BM_KnowledgeEncoder(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(2);
  const AttentionOptions opt = default_options();
  KnowledgeAttentionLayer layer(opt, rng);
  const Tensor x = random_tensor({rows, opt.dim}, rng);
  RelationIndicatorSet set;
  set.keys = random_tensor({400, opt.dim}, rng);
  set.mean = mean_rows(set.keys);
  set.provenance.resize(400);
  const std::vector<bool> pad(rows, false);
  for (auto _ : state) {
    benchmark::DoNotOptimize(layer.forward(x, &set, SequenceLayout::single(rows), pad, {}));
  }
}
BENCHMARK(BM_KnowledgeEncoder)->Arg(40)->Arg(400);

void BM_SelfEncoder(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  const AttentionOptions opt = default_options();
  SelfAttentionLayer layer(opt, rng);
  const SequenceLayout layout{batch, 30};
  const Tensor x = random_tensor({layout.rows(), opt.dim}, rng);
  const std::vector<bool> pad(layout.rows(), false);
  for (auto _ : state) benchmark::DoNotOptimize(layer.forward(x, nullptr, layout, pad, {}));
}
BENCHMARK(BM_SelfEncoder)->Arg(1)->Arg(100);

// One training step (forward, backward) of a full model on a synthetic batch.
void BM_TrainStep(benchmark::State& state) {
  SyntheticOptions so;
  so.n_train = 200;
  so.n_dev = 10;
  so.n_test = 10;
  const SyntheticData data = generate_synthetic(so);
  ModelConfig c;
  c.kind = static_cast<ModelKind>(state.range(0));
  const Vocab vocab = build_vocab(data.splits, data.lexicon, c);
  const EncodedSplits enc = encode_splits(data.splits, vocab, encode_options(c));
  const RelationModel model(c, vocab, data.lexicon);
  std::vector<std::size_t> idx(100);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const Batch batch = make_batch(enc.train, idx);
  std::mt19937_64 rng(4);
  const ParamList params = model.parameters();
  for (auto _ : state) {
    zero_grads(params);
    Tape tape;
    TapeGuard guard(tape);
    const ModelOutput out = model.forward(batch, {true, &rng});
    tape.backward(out.loss);
  }
  state.SetLabel(to_string(c.kind));
}
BENCHMARK(BM_TrainStep)
    ->Arg(static_cast<int>(ModelKind::Knowledge))
    ->Arg(static_cast<int>(ModelKind::Self))
    ->Arg(static_cast<int>(ModelKind::Si))
    ->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
