#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "kattn/errors.hpp"
#include "kattn/model.hpp"
#include "properties.hpp"
#include "sample.hpp"

namespace kattn {
namespace {

double row_sum(const Tensor& t, std::size_t r) {
  double s = 0.0;
  for (std::size_t c = 0; c < t.cols(); ++c) s += t.at(r, c);
  return s;
}

TEST(Model, EveryKindProducesDistributions) {
  for (ModelKind kind : {ModelKind::Knowledge, ModelKind::Self, ModelKind::Kisa, ModelKind::Mca,
                         ModelKind::Si}) {
    const auto t = testkit::tiny_setup(kind);
    const RelationModel model = t.model();
    const Batch batch = t.batch();
    const ModelOutput out = model.forward(batch, {});
    EXPECT_EQ(out.probs.shape(), (Shape{4, 3})) << to_string(kind);
    for (std::size_t r = 0; r < 4; ++r) EXPECT_NEAR(row_sum(out.probs, r), 1.0, 1e-12);
    EXPECT_TRUE(std::isfinite(out.loss.item()));
    EXPECT_EQ(out.channels.size(), model.channel_names().size());
    for (const ChannelOutput& c : out.channels) {
      EXPECT_EQ(c.weights.shape(), (Shape{4, batch.len}));
      for (std::size_t r = 0; r < 4; ++r) EXPECT_NEAR(row_sum(c.weights, r), 1.0, 1e-12);
    }
  }
}

TEST(Model, ChannelLayout) {
  EXPECT_EQ(testkit::tiny_setup(ModelKind::Si).model().channel_names(),
            (std::vector<std::string>{"self", "knowledge"}));
  EXPECT_EQ(testkit::tiny_setup(ModelKind::Mca).model().channel_names(),
            (std::vector<std::string>{"knowledge", "self"}));
  EXPECT_EQ(testkit::tiny_setup(ModelKind::Kisa).model().channel_names(),
            (std::vector<std::string>{"kisa"}));
}

TEST(Model, SiLossIsSumOfChannelLosses) {
  const auto t = testkit::tiny_setup(ModelKind::Si);
  const RelationModel model = t.model();
  const Batch batch = t.batch();
  const ModelOutput out = model.forward(batch, {});
  double expected = 0.0;
  for (const Tensor& p : out.channel_probs) {
    double ce = 0.0;
    for (std::size_t r = 0; r < batch.size; ++r) ce -= std::log(p.at(r, batch.gold[r]));
    expected += ce / static_cast<double>(batch.size);
  }
  EXPECT_NEAR(out.loss.item(), expected, 1e-10);
  ASSERT_EQ(out.channel_probs.size(), 2u);
  const double beta = t.config.beta;
  for (std::size_t i = 0; i < out.probs.size(); ++i) {
    EXPECT_NEAR(out.probs[i],
                beta * out.channel_probs[0][i] + (1.0 - beta) * out.channel_probs[1][i], 1e-15);
  }
}

TEST(Model, InterpolationEndpointsReproduceChannels) {
  EXPECT_EQ(testkit::interpolation_endpoint_gap(30, 501), 0.0);
}

TEST(Model, McaWeightsAreConvex) {
  const auto t = testkit::tiny_setup(ModelKind::Mca);
  const ModelOutput out = t.model().forward(t.batch(), {});
  EXPECT_EQ(out.channel_weights.shape(), (Shape{4, 2}));
  for (std::size_t r = 0; r < 4; ++r) EXPECT_NEAR(row_sum(out.channel_weights, r), 1.0, 1e-12);
}

TEST(Model, OptionalFeaturesWidenTheModel) {
  auto t = testkit::tiny_setup(ModelKind::Mca);
  t.config.ner_features = true;
  t.config.category_features = true;
  const RelationModel model = t.model();
  bool has_ner = false, has_category = false;
  for (const auto& p : model.parameters()) {
    has_ner = has_ner || p.name == "embed.ner";
    has_category = has_category || p.name == "embed.category";
  }
  EXPECT_TRUE(has_ner);
  EXPECT_TRUE(has_category);
  const ModelOutput out = model.forward(t.batch(), {});
  EXPECT_EQ(out.channel_weights.shape(), (Shape{4, 3}));

  auto k = testkit::tiny_setup(ModelKind::Knowledge);
  k.config.ner_features = true;
  EXPECT_THROW(k.model(), ConfigError);
}

TEST(Model, ParameterNamesAreUniqueAndStable) {
  for (ModelKind kind : {ModelKind::Knowledge, ModelKind::Mca, ModelKind::Si}) {
    const auto t = testkit::tiny_setup(kind);
    const auto a = t.model().parameters();
    const auto b = t.model().parameters();
    ASSERT_EQ(a.size(), b.size());
    std::set<std::string> names;
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].name, b[i].name);
      EXPECT_EQ(a[i].tensor.data().size(), b[i].tensor.data().size());
      names.insert(a[i].name);
      // Same seed, same initial values.
      EXPECT_EQ(testkit::max_abs_diff(a[i].tensor.data(), b[i].tensor.data()), 0.0);
    }
    EXPECT_EQ(names.size(), a.size());
  }
}

TEST(Model, UnsharedSiTablesAndFrozenIndicators) {
  auto t = testkit::tiny_setup(ModelKind::Si);
  t.config.si_share_embeddings = false;
  t.config.recompute_indicators = false;
  const RelationModel model = t.model();
  bool separate = false;
  for (const auto& p : model.parameters()) separate = separate || p.name == "embed_knowledge.word";
  EXPECT_TRUE(separate);
  ASSERT_EQ(model.buffers().size(), 1u);
  EXPECT_EQ(model.indicators().keys.shape(), (Shape{4, 12}));
  EXPECT_TRUE(testkit::tiny_setup().model().buffers().empty());
}

TEST(Model, AblationsChangeStructure) {
  auto t = testkit::tiny_setup();
  t.config.apply_ablation("no-synonyms");
  EXPECT_EQ(t.model().indicators().size(), 3u);
  t.config.apply_ablation("no-relative-positions");
  t.config.apply_ablation("no-multi-head");
  const ModelOutput out = t.model().forward(t.batch(), {});
  EXPECT_TRUE(std::isfinite(out.loss.item()));
}

TEST(Model, PretrainedVectorsAreCopied) {
  const auto t = testkit::tiny_setup();
  RelationModel model = t.model();
  const auto dir = testkit::scratch_dir("model_pretrained");
  testkit::write_text(dir / "vec.txt", "hired 1 2 3 4 5 6 7 8\nunknownword 1 1 1 1 1 1 1 1\n");
  EXPECT_EQ(model.load_pretrained(dir / "vec.txt"), 1u);
  const std::size_t id = t.vocab.words.id("hired");
  const auto& word = model.parameters()[0].tensor;
  for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(word.at(id, c), static_cast<double>(c + 1));
}

TEST(Model, SelfModelNeedsNoLexicon) {
  auto t = testkit::tiny_setup(ModelKind::Self);
  const RelationModel model(t.config, t.vocab, {});
  EXPECT_THROW(model.indicators(), ConfigError);
  auto k = testkit::tiny_setup();
  EXPECT_THROW(RelationModel(k.config, k.vocab, {}), ConfigError);
}

}  // namespace
}  // namespace kattn
