#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "kattn/encoders.hpp"
#include "kattn/errors.hpp"
#include "naive.hpp"
#include "properties.hpp"

namespace kattn {
namespace {

using testkit::indicator_set;
using testkit::random_const;

AttentionOptions small(std::size_t d = 6, std::size_t h = 2) {
  AttentionOptions o;
  o.dim = d;
  o.heads = h;
  o.ffn_dim = 5;
  o.relative_clip = 2;
  o.relative_dim = 4;
  o.attention_weight_dropout = 0.0;
  o.attention_output_dropout = 0.0;
  o.ffn_dropout = 0.0;
  return o;
}

TEST(KnowledgeAttention, HandComputedTwoIndicators) {
  // q = [1 0], k = {[1 0], [0 0]}: scores 1/sqrt(2) and 0.
  const Tensor q = Tensor::from({1, 2}, {1.0, 0.0});
  const Tensor k = Tensor::from({2, 2}, {1.0, 0.0, 0.0, 0.0});
  const Tensor v = Tensor::from({2, 2}, {2.0, 0.0, 0.0, 4.0});
  const double a = 1.0 / (1.0 + std::exp(-1.0 / std::sqrt(2.0)));
  const Tensor out = knowledge_attention(q, k, v, MeanSource::ProjectedValues);
  EXPECT_NEAR(out.at(0, 0), 2.0 * a - 1.0, 1e-12);
  EXPECT_NEAR(out.at(0, 1), 4.0 * (1.0 - a) - 2.0, 1e-12);
  const Tensor raw = knowledge_attention(q, k, v, MeanSource::None);
  EXPECT_NEAR(raw.at(0, 0), 2.0 * a, 1e-12);
  const Tensor keyed = knowledge_attention(q, k, v, MeanSource::ProjectedKeys);
  EXPECT_NEAR(keyed.at(0, 0), 2.0 * a - 0.5, 1e-12);
}

TEST(KnowledgeAttention, RejectsEmptyAndMismatchedSets) {
  const Tensor q = Tensor::zeros({2, 3});
  EXPECT_THROW(knowledge_attention(q, Tensor::zeros({0, 3}), Tensor::zeros({0, 3})), ConfigError);
  EXPECT_THROW(knowledge_attention(q, Tensor::zeros({2, 3}), Tensor::zeros({3, 3})),
               DimensionError);
}

TEST(KnowledgeAttention, MatchesLoopOracle) {
  EXPECT_LT(testkit::oracle_gap_knowledge_attention(50, 101), 1e-9);
}

TEST(KnowledgeAttention, SingleIndicatorGivesExactZero) {
  EXPECT_EQ(testkit::single_indicator_output(50, 102), 0.0);
}

TEST(KnowledgeAttention, IdenticalIndicatorsGiveExactZero) {
  EXPECT_EQ(testkit::identical_indicator_output(50, 103), 0.0);
}

TEST(KnowledgeAttention, InvariantToPermutationAndDuplication) {
  EXPECT_LT(testkit::indicator_permutation_gap(50, 104), 1e-9);
  EXPECT_LT(testkit::indicator_duplication_gap(50, 105), 1e-9);
}

TEST(KnowledgeAttention, MeanSubtractionChangesOutput) {
  std::mt19937_64 rng(5);
  const AttentionOptions with = small();
  AttentionOptions without = with;
  without.mean_source = MeanSource::None;
  KnowledgeAttentionLayer a(with, rng);
  KnowledgeAttentionLayer b = a;
  b.opt = without;
  const Tensor x = random_const({4, 6}, rng);
  const auto set = indicator_set(random_const({5, 6}, rng));
  const std::vector<bool> pad(4, false);
  const Tensor ya = multi_head_knowledge(x, set, a, pad);
  const Tensor yb = multi_head_knowledge(x, set, b, pad);
  EXPECT_GT(testkit::max_abs_diff(ya.data(), yb.data()), 1e-6);
}

TEST(Encoders, MultiHeadKnowledgeMatchesOracle) {
  EXPECT_LT(testkit::oracle_gap_multi_head_knowledge(50, 111), 1e-9);
}

TEST(Encoders, MultiHeadSelfMatchesOracle) {
  EXPECT_LT(testkit::oracle_gap_multi_head_self(50, 112), 1e-9);
}

TEST(Encoders, KisaMatchesOracle) { EXPECT_LT(testkit::oracle_gap_kisa(50, 113), 1e-9); }

TEST(Encoders, PaddedRowsAreZero) { EXPECT_EQ(testkit::padded_row_output(60, 114), 0.0); }

TEST(Encoders, OutputShapeAndResidual) {
  std::mt19937_64 rng(6);
  KnowledgeAttentionLayer layer(small(), rng);
  const Tensor x = random_const({3, 6}, rng);
  const auto set = indicator_set(random_const({1, 6}, rng));
  const Tensor y = multi_head_knowledge(x, set, layer, {false, false, false});
  EXPECT_EQ(y.shape(), (Shape{3, 6}));
  // One indicator: every head output is zero, so y = x + FFN(W^O 0).
  const Tensor tail = layer.block.ffn.forward(Tensor::zeros({3, 6}));
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], x[i] + tail[i], 1e-12);
}

TEST(Encoders, SelfAttentionPermutationEquivariantWithoutRelativeTerm) {
  std::mt19937_64 rng(7);
  AttentionOptions opt = small();
  opt.relative_positions = false;
  SelfAttentionLayer layer(opt, rng);
  const Tensor x = random_const({5, 6}, rng);
  const std::vector<std::size_t> order{3, 0, 4, 1, 2};
  const std::vector<bool> pad(5, false);
  const Tensor y = multi_head_self(x, layer, pad);
  const Tensor yp = multi_head_self(gather_rows(x, order), layer, pad);
  const Tensor expected = gather_rows(y, order);
  EXPECT_LT(testkit::max_abs_diff(yp.data(), expected.data()), 1e-12);

  // Zero relative embeddings behave like no relative term at all.
  AttentionOptions rel = opt;
  rel.relative_positions = true;
  SelfAttentionLayer zeroed = layer;
  zeroed.opt = rel;
  zeroed.heads.relative = Tensor::zeros(Shape{2 * rel.relative_clip + 1, rel.relative_dim});
  for (auto& p : zeroed.heads.relative_proj) p = Tensor::zeros(Shape{rel.relative_dim, 3});
  const Tensor yz = multi_head_self(x, zeroed, pad);
  EXPECT_LT(testkit::max_abs_diff(yz.data(), y.data()), 1e-12);
}

TEST(Encoders, RelativeTermBreaksEquivariance) {
  std::mt19937_64 rng(8);
  SelfAttentionLayer layer(small(), rng);
  ParamList params;
  layer.collect(params, "l");
  testkit::randomize(params, rng);
  const Tensor x = random_const({5, 6}, rng);
  const std::vector<std::size_t> order{4, 3, 2, 1, 0};
  const std::vector<bool> pad(5, false);
  const Tensor y = gather_rows(multi_head_self(x, layer, pad), order);
  const Tensor yp = multi_head_self(gather_rows(x, order), layer, pad);
  EXPECT_GT(testkit::max_abs_diff(yp.data(), y.data()), 1e-6);
}

TEST(Encoders, PaddedKeysAreInvisibleToSelfAttention) {
  std::mt19937_64 rng(9);
  SelfAttentionLayer layer(small(), rng);
  const Tensor x = random_const({3, 6}, rng);
  Tensor longer = concat_rows({x, random_const({2, 6}, rng)});
  const Tensor y = multi_head_self(x, layer, {false, false, false});
  const Tensor yl = multi_head_self(longer, layer, {false, false, false, true, true});
  EXPECT_LT(testkit::max_abs_diff(y.data(), slice_rows(yl, 0, 3).data()), 1e-12);
}

TEST(Encoders, KisaDecomposesIntoKnowledgePlusSelf) {
  std::mt19937_64 rng(10);
  const AttentionOptions opt = small();
  KisaLayer kisa(opt, rng);
  ParamList params;
  kisa.collect(params, "k");
  testkit::randomize(params, rng);
  const Tensor x = random_const({4, 6}, rng);
  const auto set = indicator_set(random_const({3, 6}, rng));
  const std::vector<bool> pad{false, false, false, true};

  // Zeroing the self values leaves only the knowledge path.
  KisaLayer knowledge_only = kisa;
  for (auto& v : knowledge_only.self.value) v = Tensor::zeros(v.shape());
  KnowledgeAttentionLayer k(opt, rng);
  k.heads = kisa.knowledge;
  k.block = kisa.block;
  EXPECT_LT(testkit::max_abs_diff(kisa_forward(x, set, knowledge_only, pad).data(),
                                  multi_head_knowledge(x, set, k, pad).data()),
            1e-12);

  // And per head the two sub-outputs add.
  const auto kh = kisa.knowledge.forward(x, set, opt, {});
  const auto sh = kisa.self.forward(x, SequenceLayout::single(4), pad, opt, {});
  std::vector<Tensor> summed;
  for (std::size_t h = 0; h < kh.size(); ++h) summed.push_back(add(kh[h], sh[h]));
  const Tensor expected = kisa.block.forward(summed, x, pad, opt, {});
  EXPECT_LT(testkit::max_abs_diff(kisa_forward(x, set, kisa, pad).data(), expected.data()), 1e-12);
}

TEST(Encoders, BatchedLayoutMatchesPerSequence) {
  std::mt19937_64 rng(11);
  for (EncoderKind kind : {EncoderKind::Knowledge, EncoderKind::Self, EncoderKind::Kisa}) {
    auto enc = make_encoder(kind, small(), rng);
    const Tensor a = random_const({3, 6}, rng), b = random_const({3, 6}, rng);
    const auto set = indicator_set(random_const({2, 6}, rng));
    const std::vector<bool> pa{false, false, false}, pb{false, false, true};
    Tensor bz = b.clone();
    for (std::size_t c = 0; c < 6; ++c) bz.mutable_data()[12 + c] = 0.0;
    std::vector<bool> both(pa);
    both.insert(both.end(), pb.begin(), pb.end());
    const Tensor joint = enc->forward(concat_rows({a, bz}), &set, {2, 3}, both, {});
    const Tensor ya = enc->forward(a, &set, SequenceLayout::single(3), pa, {});
    const Tensor yb = enc->forward(bz, &set, SequenceLayout::single(3), pb, {});
    EXPECT_LT(testkit::max_abs_diff(joint.data(), concat_rows({ya, yb}).data()), 1e-12);
  }
}

TEST(Encoders, UnmaskedOutputsLeakIntoPaddedRows) {
  std::mt19937_64 rng(12);
  AttentionOptions opt = small();
  opt.mask_padding = false;
  KnowledgeAttentionLayer layer(opt, rng);
  const Tensor x = concat_rows({random_const({2, 6}, rng), Tensor::zeros({1, 6})});
  const auto set = indicator_set(random_const({3, 6}, rng));
  const Tensor y = multi_head_knowledge(x, set, layer, {false, false, true});
  double padded = 0.0;
  for (std::size_t c = 0; c < 6; ++c) padded += std::abs(y.at(2, c));
  EXPECT_GT(padded, 0.0);
}

TEST(Encoders, ValidationErrors) {
  std::mt19937_64 rng(13);
  AttentionOptions bad = small();
  bad.heads = 4;
  EXPECT_THROW(KnowledgeAttentionLayer(bad, rng), ConfigError);
  bad = small();
  bad.ffn_dropout = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);

  KnowledgeAttentionLayer layer(small(), rng);
  const auto set = indicator_set(random_const({2, 6}, rng));
  EXPECT_THROW(layer.forward(Tensor::zeros({3, 5}), &set, SequenceLayout::single(3),
                             {false, false, false}, {}),
               DimensionError);
  EXPECT_THROW(layer.forward(Tensor::zeros({3, 6}), &set, SequenceLayout::single(3), {false}, {}),
               DimensionError);
  EXPECT_THROW(layer.forward(Tensor::zeros({3, 6}), nullptr, SequenceLayout::single(3),
                             {false, false, false}, {}),
               ConfigError);
}

TEST(Encoders, DropoutOnlyInTraining) {
  std::mt19937_64 rng(14);
  AttentionOptions opt = small();
  opt.attention_output_dropout = 0.4;
  opt.ffn_dropout = 0.4;
  opt.attention_weight_dropout = 0.1;
  SelfAttentionLayer layer(opt, rng);
  const Tensor x = random_const({4, 6}, rng);
  const std::vector<bool> pad(4, false);
  const Tensor eval1 = multi_head_self(x, layer, pad);
  const Tensor eval2 = multi_head_self(x, layer, pad);
  EXPECT_EQ(testkit::max_abs_diff(eval1.data(), eval2.data()), 0.0);
  std::mt19937_64 drop(1);
  const Tensor trained = multi_head_self(x, layer, pad, {true, &drop});
  EXPECT_GT(testkit::max_abs_diff(eval1.data(), trained.data()), 1e-6);
}

}  // namespace
}  // namespace kattn
