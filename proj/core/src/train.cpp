#include "kattn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <nlohmann/json.hpp>

#include "kattn/errors.hpp"

namespace kattn {

void sgd_step(const ParamList& params, SgdState& state, double lr, double momentum,
              double clip_norm) {
  if (state.velocity.empty()) {
    for (const NamedParam& p : params) state.velocity.emplace_back(p.tensor.size(), 0.0);
  }
  if (state.velocity.size() != params.size()) {
    throw TrainingError("optimizer state holds " + std::to_string(state.velocity.size()) +
                        " buffers for " + std::to_string(params.size()) + " parameters");
  }
  for (const NamedParam& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.impl()->grad) {
      if (!std::isfinite(g)) throw TrainingError("non-finite gradient in parameter " + p.name);
    }
  }
  double factor = 1.0;
  if (clip_norm > 0.0) {
    const double norm = grad_norm(params);
    if (norm > clip_norm) factor = clip_norm / norm;
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].tensor;
    std::vector<double>& v = state.velocity[i];
    if (v.size() != t.size()) {
      throw TrainingError("optimizer state shape mismatch for parameter " + params[i].name);
    }
    auto data = t.mutable_data();
    if (t.has_grad()) {
      const std::vector<double>& g = t.impl()->grad;
      for (std::size_t k = 0; k < v.size(); ++k) {
        v[k] = momentum * v[k] + factor * g[k];
        data[k] -= lr * v[k];
      }
    } else {
      for (std::size_t k = 0; k < v.size(); ++k) {
        v[k] *= momentum;
        data[k] -= lr * v[k];
      }
    }
  }
}

void zero_grads(const ParamList& params) {
  for (const NamedParam& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

double grad_norm(const ParamList& params) {
  double total = 0.0;
  for (const NamedParam& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.impl()->grad) total += g * g;
  }
  return std::sqrt(total);
}

double lr_schedule(std::size_t epoch, std::span<const double> history, double lr, double decay,
                   std::size_t decay_after, PlateauRule rule) {
  if (epoch <= decay_after || history.size() < 2) return lr;
  const double current = history.back();
  const auto earlier = history.first(history.size() - 1);
  const double reference = rule == PlateauRule::PreviousEpoch
                               ? earlier.back()
                               : *std::max_element(earlier.begin(), earlier.end());
  return current <= reference ? lr * decay : lr;
}

RawSplits load_splits(const std::filesystem::path& dir) {
  RawSplits s;
  s.train = load_dataset(dir / "train.jsonl");
  s.dev = load_dataset(dir / "dev.jsonl");
  s.test = load_dataset(dir / "test.jsonl");
  return s;
}

EncodedSplits encode_splits(const RawSplits& raw, const Vocab& vocab,
                            const EncodeOptions& options) {
  EncodedSplits s;
  s.train = encode_all(raw.train, vocab, options);
  s.dev = encode_all(raw.dev, vocab, options);
  s.test = encode_all(raw.test, vocab, options);
  return s;
}

namespace {

std::vector<std::vector<std::size_t>> chunk(const std::vector<std::size_t>& order,
                                            std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const std::size_t end = std::min(order.size(), i + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

void sort_by_length(std::span<const EncodedExample> data, std::vector<std::size_t>::iterator first,
                    std::vector<std::size_t>::iterator last) {
  std::stable_sort(first, last, [&](std::size_t a, std::size_t b) {
    return data[a].length() < data[b].length();
  });
}

}  // namespace

std::vector<std::vector<std::size_t>> eval_batches(std::span<const EncodedExample> data,
                                                   std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  sort_by_length(data, order.begin(), order.end());
  return chunk(order, batch_size);
}

std::vector<std::vector<std::size_t>> train_batches(std::span<const EncodedExample> data,
                                                    std::size_t batch_size,
                                                    std::mt19937_64& rng) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  // Sort inside pools of several batches so padding stays small while batch
  // composition still changes every epoch.
  const std::size_t pool = batch_size * 10;
  for (std::size_t i = 0; i < order.size(); i += pool) {
    const auto first = order.begin() + static_cast<std::ptrdiff_t>(i);
    const auto last = order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + pool));
    sort_by_length(data, first, last);
  }
  auto batches = chunk(order, batch_size);
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

Predictions predict(const RelationModel& model, std::span<const EncodedExample> data,
                    std::size_t batch_size) {
  NoGradGuard no_grad;
  Predictions p;
  p.classes = model.num_classes();
  const std::size_t c = p.classes;
  p.gold.resize(data.size());
  p.pred.resize(data.size());
  p.probs.resize(data.size() * c);
  const bool si = model.config().kind == ModelKind::Si;
  if (si) p.channel_probs.assign(2, std::vector<double>(data.size() * c));
  const ForwardContext ctx;
  for (const auto& indices : eval_batches(data, batch_size)) {
    const Batch batch = make_batch(data, indices);
    const ModelOutput out = model.forward(batch, ctx, false);
    for (std::size_t r = 0; r < batch.size; ++r) {
      const std::size_t ex = batch.example_index[r];
      const auto row = out.probs.data().subspan(r * c, c);
      std::copy(row.begin(), row.end(), p.probs.begin() + static_cast<std::ptrdiff_t>(ex * c));
      p.gold[ex] = batch.gold[r];
      p.pred[ex] = argmax(row);
      for (std::size_t ch = 0; si && ch < 2; ++ch) {
        const auto src = out.channel_probs[ch].data().subspan(r * c, c);
        std::copy(src.begin(), src.end(),
                  p.channel_probs[ch].begin() + static_cast<std::ptrdiff_t>(ex * c));
      }
    }
  }
  return p;
}

MetricsReport report_from(const Predictions& p, const Vocab& vocab) {
  return make_report(p.gold, p.pred, vocab.relations, vocab.negative_id());
}

MetricsReport evaluate(const RelationModel& model, std::span<const EncodedExample> data,
                       std::size_t batch_size) {
  return report_from(predict(model, data, batch_size), model.vocab());
}

TrainResult train_model(const ModelConfig& config, const Vocab& vocab,
                        const std::vector<LexiconEntry>& lexicon, const EncodedSplits& data,
                        const TrainOptions& options) {
  if (data.train.empty()) throw DataError("training split is empty");
  TrainResult result;
  result.seed = config.seed;
  result.model = std::make_shared<RelationModel>(config, vocab, lexicon);
  RelationModel& model = *result.model;
  if (options.embeddings) model.load_pretrained(*options.embeddings);

  const ParamList params = model.parameters();
  SgdState state;
  // Shuffling and dropout draw from a stream separate from initialization.
  std::seed_seq seq{config.seed, std::uint64_t{0x5eed}};
  std::mt19937_64 rng(seq);
  double lr = config.lr;
  std::vector<double> history;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (const auto& indices : train_batches(data.train, config.batch_size, rng)) {
      const Batch batch = make_batch(data.train, indices);
      Tape tape;
      double loss = 0.0;
      {
        TapeGuard guard(tape);
        const ForwardContext ctx{true, &rng};
        ModelOutput out = model.forward(batch, ctx);
        loss = out.loss.item();
        tape.backward(out.loss);
      }
      if (!std::isfinite(loss)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch));
      }
      sgd_step(params, state, lr, config.momentum, config.clip_norm);
      zero_grads(params);
      loss_sum += loss * static_cast<double>(batch.size);
      seen += batch.size;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    const MetricsReport dev = evaluate(model, data.dev, config.batch_size);
    rec.dev = {dev.precision, dev.recall, dev.f1};
    history.push_back(dev.f1);
    result.epochs.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);
    lr = lr_schedule(epoch, history, lr, config.lr_decay, config.decay_after, config.plateau);
  }

  result.dev = evaluate(model, data.dev, config.batch_size);
  result.dev.history = history;
  result.test = data.test.empty() ? MetricsReport{} : evaluate(model, data.test, config.batch_size);
  result.test.history = history;
  return result;
}

Vocab build_vocab(const RawSplits& raw, std::span<const LexiconEntry> lexicon,
                  const ModelConfig& config) {
  const auto words = lexicon_words(lexicon);
  return Vocab::build(raw.train, words, config.negative_class);
}

std::size_t median_index(std::span<const double> values) {
  if (values.empty()) throw ConfigError("median of an empty set");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  const double median = values[order[(order.size() - 1) / 2]];
  return static_cast<std::size_t>(std::find(values.begin(), values.end(), median) - values.begin());
}

MetricsReport ExperimentResult::report() const { return best().test; }

std::string ExperimentResult::to_json() const {
  const TrainResult& sel = best();
  nlohmann::ordered_json j = nlohmann::ordered_json::parse(sel.test.to_json());
  j["dev_precision"] = sel.dev.precision;
  j["dev_recall"] = sel.dev.recall;
  j["dev_f1"] = sel.dev.f1;
  j["selected_seed"] = sel.seed;
  j["seeds"] = nlohmann::ordered_json::array();
  for (const TrainResult& r : runs) {
    j["seeds"].push_back({{"seed", r.seed}, {"dev_f1", r.dev.f1}, {"test_f1", r.test.f1}});
  }
  return j.dump(2);
}

ExperimentResult run_experiment(const ModelConfig& config, const Vocab& vocab,
                                const std::vector<LexiconEntry>& lexicon,
                                const EncodedSplits& data, std::size_t seeds,
                                const TrainOptions& options) {
  if (seeds < 1) throw ConfigError("run_experiment needs at least one seed");
  ExperimentResult result;
  std::vector<double> dev_f1;
  for (std::size_t s = 0; s < seeds; ++s) {
    ModelConfig c = config;
    c.seed = config.seed + s;
    result.runs.push_back(train_model(c, vocab, lexicon, data, options));
    dev_f1.push_back(result.runs.back().dev.f1);
  }
  result.selected = median_index(dev_f1);
  return result;
}

std::vector<double> beta_grid(std::size_t steps) {
  if (steps < 2) throw ConfigError("a beta grid needs at least two points");
  std::vector<double> grid(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    grid[i] = static_cast<double>(i) / static_cast<double>(steps - 1);
  }
  return grid;
}

std::vector<SweepPoint> sweep_beta(const Predictions& p, std::span<const double> grid,
                                   std::size_t negative) {
  if (p.channel_probs.size() != 2) {
    throw ConfigError("beta sweep needs a softmax-interpolation model");
  }
  const std::size_t c = p.classes;
  const std::size_t n = p.gold.size();
  std::vector<SweepPoint> points;
  std::vector<std::size_t> pred(n);
  for (double beta : grid) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto mixed = interpolate(std::span(p.channel_probs[0]).subspan(i * c, c),
                                     std::span(p.channel_probs[1]).subspan(i * c, c), beta);
      pred[i] = argmax(mixed);
    }
    points.push_back({beta, micro_prf(p.gold, pred, negative)});
  }
  return points;
}

std::string sweep_csv(std::span<const SweepPoint> points) {
  std::string out = "beta,precision,recall,f1\n";
  char buf[128];
  for (const SweepPoint& s : points) {
    std::snprintf(buf, sizeof buf, "%.4f,%.6f,%.6f,%.6f\n", s.beta, s.scores.precision,
                  s.scores.recall, s.scores.f1);
    out += buf;
  }
  return out;
}

std::string sweep_trend(std::span<const SweepPoint> points) {
  if (points.empty()) return {};
  auto describe = [&](const char* name, double PRF::*field) {
    bool up = true;
    bool down = true;
    for (std::size_t i = 1; i < points.size(); ++i) {
      const double a = points[i - 1].scores.*field;
      const double b = points[i].scores.*field;
      up = up && b >= a;
      down = down && b <= a;
    }
    const char* shape = up && down ? "constant"
                        : up       ? "non-decreasing"
                        : down     ? "non-increasing"
                                   : "not monotone";
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s: %s in beta (%.4f at beta=%.2f, %.4f at beta=%.2f)\n",
                  name, shape, points.front().scores.*field, points.front().beta,
                  points.back().scores.*field, points.back().beta);
    return std::string(buf);
  };
  return describe("precision", &PRF::precision) + describe("recall", &PRF::recall) +
         describe("f1", &PRF::f1);
}

}  // namespace kattn
