#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kattn/config.hpp"
#include "kattn/lexicon.hpp"
#include "kattn/metrics.hpp"
#include "kattn/model.hpp"
#include "kattn/vocab.hpp"

namespace kattn {

/// Momentum buffers aligned with a parameter list.
struct SgdState {
  std::vector<std::vector<double>> velocity;
};

/// v <- momentum * v + g; p <- p - lr * v for every parameter, using the
/// gradients accumulated on the tensors. Gradients are rescaled to a global
/// norm of `clip_norm` first when it is positive. Throws TrainingError naming
/// the parameter on a non-finite gradient.
void sgd_step(const ParamList& params, SgdState& state, double lr, double momentum,
              double clip_norm = 0.0);

void zero_grads(const ParamList& params);
double grad_norm(const ParamList& params);

/// Learning rate for the epoch after `epoch` (1-based) given the dev F1 of
/// every finished epoch.
double lr_schedule(std::size_t epoch, std::span<const double> dev_f1_history, double lr,
                   double decay = 0.9, std::size_t decay_after = 15,
                   PlateauRule rule = PlateauRule::PreviousEpoch);

struct RawSplits {
  std::vector<RawExample> train;
  std::vector<RawExample> dev;
  std::vector<RawExample> test;
};

/// Reads train.jsonl, dev.jsonl and test.jsonl from `dir`.
RawSplits load_splits(const std::filesystem::path& dir);

struct EncodedSplits {
  std::vector<EncodedExample> train;
  std::vector<EncodedExample> dev;
  std::vector<EncodedExample> test;
};

EncodedSplits encode_splits(const RawSplits& raw, const Vocab& vocab, const EncodeOptions& options);

/// Batches of evaluation data in length order; every index appears once.
std::vector<std::vector<std::size_t>> eval_batches(std::span<const EncodedExample> data,
                                                   std::size_t batch_size);
/// Shuffled, length-bucketed training batches.
std::vector<std::vector<std::size_t>> train_batches(std::span<const EncodedExample> data,
                                                    std::size_t batch_size, std::mt19937_64& rng);

struct Predictions {
  std::size_t classes = 0;
  std::vector<std::size_t> gold;
  std::vector<std::size_t> pred;
  /// Row-major examples x classes.
  std::vector<double> probs;
  /// SI only: {p_self, p_knowledge}, each examples x classes.
  std::vector<std::vector<double>> channel_probs;
};

/// Evaluation-mode forward over every example, batched in length order.
Predictions predict(const RelationModel& model, std::span<const EncodedExample> data,
                    std::size_t batch_size = 100);

MetricsReport evaluate(const RelationModel& model, std::span<const EncodedExample> data,
                       std::size_t batch_size = 100);
MetricsReport report_from(const Predictions& p, const Vocab& vocab);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  PRF dev;
};

struct TrainOptions {
  std::optional<std::filesystem::path> embeddings;
  /// Called after every epoch; may be empty.
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  std::shared_ptr<RelationModel> model;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  MetricsReport dev;
  MetricsReport test;
};

/// Trains one model for config.epochs epochs with config.seed and keeps the
/// final-epoch parameters.
TrainResult train_model(const ModelConfig& config, const Vocab& vocab,
                        const std::vector<LexiconEntry>& lexicon, const EncodedSplits& data,
                        const TrainOptions& options = {});

/// Vocabulary over the training split plus every lexicon word.
Vocab build_vocab(const RawSplits& raw, std::span<const LexiconEntry> lexicon,
                  const ModelConfig& config);

struct ExperimentResult {
  std::vector<TrainResult> runs;
  std::size_t selected = 0;
  const TrainResult& best() const { return runs.at(selected); }
  /// Selected run's test metrics with its dev F1 history.
  MetricsReport report() const;
  /// Metrics document: test scores, dev scores, per-seed dev F1, selected seed.
  std::string to_json() const;
};

/// Index of the run with the median value; the lower median for even counts,
/// earliest run among ties.
std::size_t median_index(std::span<const double> values);

/// Trains one model per seed (config.seed, config.seed + 1, ...) and selects
/// the run with the median dev F1.
ExperimentResult run_experiment(const ModelConfig& config, const Vocab& vocab,
                                const std::vector<LexiconEntry>& lexicon,
                                const EncodedSplits& data, std::size_t seeds,
                                const TrainOptions& options = {});

struct SweepPoint {
  double beta = 0.0;
  PRF scores;
};

/// `steps` evenly spaced values from 0 to 1 inclusive.
std::vector<double> beta_grid(std::size_t steps);

/// Re-scores cached SI channel distributions for every beta in `grid`
/// without touching the model. Throws ConfigError when `p` carries no
/// channel distributions.
std::vector<SweepPoint> sweep_beta(const Predictions& p, std::span<const double> grid,
                                   std::size_t negative);
std::string sweep_csv(std::span<const SweepPoint> points);
/// One line per metric describing its trend over the grid.
std::string sweep_trend(std::span<const SweepPoint> points);

}  // namespace kattn
