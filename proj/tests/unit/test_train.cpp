#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <set>

#include <nlohmann/json.hpp>

#include "kattn/errors.hpp"
#include "kattn/train.hpp"
#include "sample.hpp"

namespace kattn {
namespace {

TEST(Sgd, MomentumUpdateByHand) {
  Tensor p = Tensor::parameter({1, 1}, {1.0});
  const ParamList params{{"p", p}};
  SgdState state;
  for (int step = 0; step < 2; ++step) {
    zero_grads(params);
    Tape tape;
    {
      TapeGuard guard(tape);
      tape.backward(sum(mul(p, p)));
    }
    sgd_step(params, state, 0.1, 0.9);
  }
  // v1 = 2, p1 = 0.8; v2 = 0.9 * 2 + 1.6 = 3.4, p2 = 0.8 - 0.34.
  EXPECT_NEAR(p[0], 0.46, 1e-15);
  EXPECT_NEAR(state.velocity[0][0], 3.4, 1e-15);
}

TEST(Sgd, ConvergesOnQuadraticBowl) {
  Tensor p = Tensor::parameter({1, 3}, {3.0, -2.0, 0.5});
  const Tensor target = Tensor::from({1, 3}, {1.0, 1.0, -1.0});
  const ParamList params{{"p", p}};
  SgdState state;
  for (int step = 0; step < 300; ++step) {
    zero_grads(params);
    Tape tape;
    TapeGuard guard(tape);
    const Tensor d = sub(p, target);
    tape.backward(sum(mul(d, d)));
    sgd_step(params, state, 0.05, 0.9);
  }
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(p[i], target[i], 1e-6);
}

TEST(Sgd, ClipsGlobalNorm) {
  Tensor a = Tensor::parameter({1, 2}, {0.0, 0.0});
  a.mutable_grad()[0] = 3.0;
  a.mutable_grad()[1] = 4.0;
  EXPECT_DOUBLE_EQ(grad_norm({{"a", a}}), 5.0);
  SgdState state;
  sgd_step({{"a", a}}, state, 1.0, 0.0, 1.0);
  EXPECT_NEAR(a[0], -0.6, 1e-15);
  EXPECT_NEAR(a[1], -0.8, 1e-15);
}

TEST(Sgd, RejectsNonFiniteGradients) {
  Tensor a = Tensor::parameter({1, 1}, {0.0});
  a.mutable_grad()[0] = std::numeric_limits<double>::quiet_NaN();
  SgdState state;
  try {
    sgd_step({{"weights.a", a}}, state, 0.1, 0.9);
    FAIL();
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("weights.a"), std::string::npos);
  }
}

TEST(Schedule, DecaysOnlyAfterThresholdOnPlateau) {
  const std::vector<double> rising{0.1, 0.2}, flat{0.2, 0.2}, dip{0.3, 0.2, 0.25};
  EXPECT_EQ(lr_schedule(15, flat, 1.0), 1.0);
  EXPECT_EQ(lr_schedule(16, flat, 1.0), 0.9);
  EXPECT_EQ(lr_schedule(16, rising, 1.0), 1.0);
  EXPECT_EQ(lr_schedule(16, std::vector<double>{0.5}, 1.0), 1.0);
  // 0.25 beats the previous epoch but not the best so far.
  EXPECT_EQ(lr_schedule(20, dip, 1.0, 0.9, 15, PlateauRule::PreviousEpoch), 1.0);
  EXPECT_EQ(lr_schedule(20, dip, 1.0, 0.9, 15, PlateauRule::BestSoFar), 0.9);
}

TEST(Median, LowerMedianEarliestTie) {
  EXPECT_EQ(median_index(std::vector<double>{0.3, 0.1, 0.2}), 2u);
  EXPECT_EQ(median_index(std::vector<double>{0.4, 0.1, 0.3, 0.2}), 3u);
  EXPECT_EQ(median_index(std::vector<double>{0.5, 0.5, 0.5}), 0u);
  EXPECT_EQ(median_index(std::vector<double>{0.7}), 0u);
}

TEST(Batches, EvalCoversEveryIndexOnceInLengthOrder) {
  const auto t = testkit::tiny_setup();
  const auto batches = eval_batches(t.data.dev, 3);
  ASSERT_EQ(batches.size(), 2u);
  std::vector<std::size_t> flat;
  for (const auto& b : batches) flat.insert(flat.end(), b.begin(), b.end());
  for (std::size_t i = 1; i < flat.size(); ++i) {
    EXPECT_LE(t.data.dev[flat[i - 1]].length(), t.data.dev[flat[i]].length());
  }
  EXPECT_EQ(std::set<std::size_t>(flat.begin(), flat.end()).size(), 4u);
  EXPECT_THROW(eval_batches(t.data.dev, 0), ConfigError);
}

TEST(Batches, TrainIsSeededPermutation) {
  const auto t = testkit::tiny_setup();
  std::mt19937_64 a(5), b(5);
  const auto x = train_batches(t.data.train, 3, a);
  EXPECT_EQ(x, train_batches(t.data.train, 3, b));
  std::multiset<std::size_t> seen;
  for (const auto& batch : x) seen.insert(batch.begin(), batch.end());
  EXPECT_EQ(seen, (std::multiset<std::size_t>{0, 1, 2, 3}));
}

TEST(Training, OneSmallStepLowersLoss) {
  for (ModelKind kind : {ModelKind::Knowledge, ModelKind::Self, ModelKind::Kisa, ModelKind::Mca,
                         ModelKind::Si}) {
    const auto t = testkit::tiny_setup(kind);
    const RelationModel model = t.model();
    const Batch batch = t.batch();
    const ParamList params = model.parameters();
    const ForwardContext eval;
    const double before = model.forward(batch, eval).loss.item();
    Tape tape;
    {
      TapeGuard guard(tape);
      tape.backward(model.forward(batch, eval).loss);
    }
    SgdState state;
    sgd_step(params, state, 1e-3, 0.0);
    const double after = model.forward(batch, eval).loss.item();
    EXPECT_LT(after, before) << to_string(kind);
  }
}

TEST(Training, EvaluationIsDeterministic) {
  const auto t = testkit::tiny_setup();
  const RelationModel model = t.model();
  const Predictions a = predict(model, t.data.dev, 3);
  const Predictions b = predict(model, t.data.dev, 1);
  EXPECT_EQ(a.probs, b.probs);
  EXPECT_EQ(a.pred, b.pred);
  EXPECT_EQ(a.gold, (std::vector<std::size_t>{1, 2, 0, 1}));
}

TEST(Training, ExperimentJsonIsReproducible) {
  auto t = testkit::tiny_setup();
  t.config.epochs = 3;
  const std::string a = run_experiment(t.config, t.vocab, t.lexicon, t.data, 2).to_json();
  const std::string b = run_experiment(t.config, t.vocab, t.lexicon, t.data, 2).to_json();
  EXPECT_EQ(a, b);
  const auto j = nlohmann::json::parse(a);
  for (const char* key : {"precision", "recall", "f1", "per_class", "history", "dev_f1"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["seeds"].size(), 2u);
}

TEST(Training, RecordsEpochs) {
  auto t = testkit::tiny_setup();
  t.config.epochs = 3;
  std::size_t calls = 0;
  TrainOptions options;
  options.on_epoch = [&](const EpochRecord& r) { EXPECT_EQ(r.epoch, ++calls); };
  const TrainResult r = train_model(t.config, t.vocab, t.lexicon, t.data, options);
  EXPECT_EQ(calls, 3u);
  EXPECT_EQ(r.epochs.size(), 3u);
  EXPECT_EQ(r.dev.history.size(), 3u);
  EncodedSplits empty = t.data;
  empty.train.clear();
  EXPECT_THROW(train_model(t.config, t.vocab, t.lexicon, empty), DataError);
}

Predictions sweep_fixture() {
  // Channel 0 predicts class 1 everywhere; channel 1 predicts the negative
  // class except on example 0.
  Predictions p;
  p.classes = 2;
  p.gold = {1, 1, 0};
  p.pred = {1, 1, 1};
  p.channel_probs = {{0.2, 0.8, 0.3, 0.7, 0.4, 0.6}, {0.1, 0.9, 0.9, 0.1, 0.95, 0.05}};
  p.probs = p.channel_probs[0];
  return p;
}

TEST(Sweep, EndpointsAreTheChannels) {
  const Predictions p = sweep_fixture();
  const auto points = sweep_beta(p, beta_grid(3), 0);
  ASSERT_EQ(points.size(), 3u);
  EXPECT_EQ(points[0].beta, 0.0);
  EXPECT_EQ(points[2].beta, 1.0);
  // beta = 1: channel 0 alone, 3 positive guesses, 2 right.
  EXPECT_DOUBLE_EQ(points[2].scores.precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(points[2].scores.recall, 1.0);
  // beta = 0: channel 1 alone, 1 positive guess, right.
  EXPECT_DOUBLE_EQ(points[0].scores.precision, 1.0);
  EXPECT_DOUBLE_EQ(points[0].scores.recall, 0.5);
  const std::string trend = sweep_trend(points);
  EXPECT_NE(trend.find("precision: non-increasing"), std::string::npos) << trend;
  EXPECT_NE(trend.find("recall: non-decreasing"), std::string::npos) << trend;
  EXPECT_EQ(sweep_csv(points).substr(0, 24), "beta,precision,recall,f1");
}

TEST(Sweep, GridAndErrors) {
  const auto g = beta_grid(11);
  ASSERT_EQ(g.size(), 11u);
  EXPECT_EQ(g.front(), 0.0);
  EXPECT_EQ(g.back(), 1.0);
  EXPECT_NEAR(g[3], 0.3, 1e-15);
  Predictions p = sweep_fixture();
  p.channel_probs.clear();
  EXPECT_THROW(sweep_beta(p, g, 0), ConfigError);
}

TEST(Sweep, UsesCachedPredictionsOnly) {
  // With the model's own beta the sweep reproduces its predictions.
  auto t = testkit::tiny_setup(ModelKind::Si);
  for (double beta : {0.0, 0.8, 1.0}) {
    t.config.beta = beta;
    const RelationModel model = t.model();
    const Predictions p = predict(model, t.data.dev);
    const auto points = sweep_beta(p, std::vector<double>{beta}, 0);
    const PRF direct = micro_prf(p.gold, p.pred, 0);
    EXPECT_EQ(points[0].scores.f1, direct.f1);
    EXPECT_EQ(points[0].scores.precision, direct.precision);
  }
}

}  // namespace
}  // namespace kattn
