#include "properties.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gradcheck.hpp"
#include "kattn/heads.hpp"
#include "kattn/metrics.hpp"
#include "kattn/pooling.hpp"
#include "naive.hpp"
#include "sample.hpp"

namespace kattn::testkit {

namespace {

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

double gap(const Tensor& t, const naive::Mat& m) { return max_abs_diff(t.data(), m.v); }

Tensor zero_padded_rows(Tensor x, const std::vector<bool>& pad) {
  const std::size_t d = x.cols();
  for (std::size_t r = 0; r < pad.size(); ++r) {
    if (!pad[r]) continue;
    for (std::size_t c = 0; c < d; ++c) x.mutable_data()[r * d + c] = 0.0;
  }
  return x;
}

Tensor permute_rows(const Tensor& t, std::mt19937_64& rng) {
  std::vector<std::size_t> order(t.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  return gather_rows(t, order);
}

}  // namespace

void randomize(const ParamList& params, std::mt19937_64& rng, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (const NamedParam& p : params) {
    Tensor t = p.tensor;
    for (double& v : t.mutable_data()) v = dist(rng);
  }
}

RelationIndicatorSet indicator_set(const Tensor& keys) {
  RelationIndicatorSet s;
  s.keys = keys;
  s.mean = mean_rows(keys);
  s.provenance.resize(keys.rows());
  return s;
}

AttentionOptions random_options(std::mt19937_64& rng) {
  static const std::pair<std::size_t, std::size_t> dims[] = {{4, 1}, {4, 2}, {6, 2},
                                                             {6, 3}, {8, 2}, {8, 4}};
  const auto [d, h] = dims[pick(rng, 0, 5)];
  AttentionOptions o;
  o.dim = d;
  o.heads = h;
  o.ffn_dim = pick(rng, 3, 7);
  o.mean_source = static_cast<MeanSource>(pick(rng, 0, 2));
  o.relative_positions = pick(rng, 0, 3) != 0;
  o.relative_clip = pick(rng, 1, 4);
  o.relative_dim = pick(rng, 2, 5);
  o.attention_weight_dropout = 0.0;
  o.attention_output_dropout = 0.0;
  o.ffn_dropout = 0.0;
  return o;
}

std::vector<bool> random_pad(std::size_t n, std::mt19937_64& rng) {
  std::vector<bool> pad(n);
  for (std::size_t i = 0; i < n; ++i) pad[i] = pick(rng, 0, 2) == 0;
  pad[pick(rng, 0, n - 1)] = false;
  return pad;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return INFINITY;
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

double oracle_gap_knowledge_attention(std::size_t instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t n = pick(rng, 1, 7), m = pick(rng, 1, 6), d = pick(rng, 1, 6);
    const Tensor q = random_const({n, d}, rng), k = random_const({m, d}, rng),
                 v = random_const({m, d}, rng);
    const auto mean = static_cast<MeanSource>(i % 3);
    worst = std::max(worst, gap(knowledge_attention(q, k, v, mean),
                                naive::knowledge_attention(naive::Mat(q), naive::Mat(k),
                                                           naive::Mat(v), mean)));
  }
  return worst;
}

double oracle_gap_multi_head_knowledge(std::size_t instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    AttentionOptions opt = random_options(rng);
    opt.mask_padding = pick(rng, 0, 3) != 0;
    KnowledgeAttentionLayer layer(opt, rng);
    ParamList params;
    layer.collect(params, "l");
    randomize(params, rng);
    const std::size_t n = pick(rng, 1, 7), m = pick(rng, 1, 6);
    const Tensor x = random_const({n, opt.dim}, rng), keys = random_const({m, opt.dim}, rng);
    const auto pad = random_pad(n, rng);
    worst = std::max(worst, gap(multi_head_knowledge(x, indicator_set(keys), layer, pad),
                                naive::multi_head_knowledge(naive::Mat(x), naive::Mat(keys),
                                                            layer, pad)));
  }
  return worst;
}

double oracle_gap_multi_head_self(std::size_t instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    AttentionOptions opt = random_options(rng);
    opt.mask_padding = pick(rng, 0, 3) != 0;
    SelfAttentionLayer layer(opt, rng);
    ParamList params;
    layer.collect(params, "l");
    randomize(params, rng);
    const std::size_t n = pick(rng, 1, 9);
    const Tensor x = random_const({n, opt.dim}, rng);
    const auto pad = random_pad(n, rng);
    worst = std::max(worst, gap(multi_head_self(x, layer, pad),
                                naive::multi_head_self(naive::Mat(x), layer, pad)));
  }
  return worst;
}

double oracle_gap_kisa(std::size_t instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    const AttentionOptions opt = random_options(rng);
    KisaLayer layer(opt, rng);
    ParamList params;
    layer.collect(params, "l");
    randomize(params, rng);
    const std::size_t n = pick(rng, 1, 7), m = pick(rng, 1, 5);
    const Tensor x = random_const({n, opt.dim}, rng), keys = random_const({m, opt.dim}, rng);
    const auto pad = random_pad(n, rng);
    worst = std::max(worst, gap(kisa_forward(x, indicator_set(keys), layer, pad),
                                naive::kisa(naive::Mat(x), naive::Mat(keys), layer, pad)));
  }
  return worst;
}

double oracle_gap_pool(std::size_t instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t n = pick(rng, 1, 9), d = pick(rng, 2, 7), dp = pick(rng, 1, 4),
                      da = pick(rng, 1, 5);
    PositionAwareAttention params(d, 2 * dp, da, rng);
    const Tensor o = random_const({n, d}, rng), p = random_const({n, 2 * dp}, rng);
    const auto pad = random_pad(n, rng);
    const auto mode = i % 5 == 4 ? PoolingMode::ContentOnly : PoolingMode::PositionAware;
    const PooledOutput got = params.forward(o, p, SequenceLayout::single(n), pad, mode);
    const naive::Pooled want = naive::pool(naive::Mat(o), naive::Mat(p), params, pad, mode);
    worst = std::max({worst, max_abs_diff(got.features.data(), want.f),
                      max_abs_diff(got.weights.data(), want.a)});
  }
  return worst;
}

double oracle_gap_mca(std::size_t instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t channels = pick(rng, 1, 4), hidden = pick(rng, 1, 6);
    std::vector<std::size_t> dims(channels);
    for (auto& d : dims) d = pick(rng, 1, 6);
    MultiChannelAttention params(dims, hidden, 3, rng);
    ParamList list;
    params.collect(list, "mca");
    randomize(list, rng);
    const std::size_t batch = pick(rng, 1, 3);
    std::vector<Tensor> features;
    for (std::size_t d : dims) features.push_back(random_const({batch, d}, rng));
    const ChannelMix got = mca_combine(features, params);
    for (std::size_t b = 0; b < batch; ++b) {
      std::vector<std::vector<double>> row;
      for (const Tensor& f : features) {
        row.emplace_back(f.data().begin() + static_cast<std::ptrdiff_t>(b * f.cols()),
                         f.data().begin() + static_cast<std::ptrdiff_t>((b + 1) * f.cols()));
      }
      const naive::Mixed want = naive::mca(row, params);
      const auto r = got.combined.data().subspan(b * hidden, hidden);
      const auto w = got.weights.data().subspan(b * channels, channels);
      worst = std::max({worst, max_abs_diff(r, want.r), max_abs_diff(w, want.w)});
    }
  }
  return worst;
}

double single_indicator_output(std::size_t instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t n = pick(rng, 1, 6), d = pick(rng, 1, 6);
    const Tensor q = random_const({n, d}, rng), k = random_const({1, d}, rng),
                 v = random_const({1, d}, rng);
    for (MeanSource mean : {MeanSource::ProjectedValues, MeanSource::ProjectedKeys}) {
      // With the key mean, the single value row must equal the key row.
      const Tensor values = mean == MeanSource::ProjectedKeys ? k : v;
      const Tensor out = knowledge_attention(q, k, values, mean);
      for (double e : out.data()) worst = std::max(worst, std::abs(e));
    }
    AttentionOptions opt = random_options(rng);
    opt.mean_source = MeanSource::ProjectedValues;
    KnowledgeHeads heads(opt, rng);
    const Tensor x = random_const({n, opt.dim}, rng);
    for (const Tensor& h : heads.forward(x, indicator_set(random_const({1, opt.dim}, rng)), opt, {})) {
      for (double e : h.data()) worst = std::max(worst, std::abs(e));
    }
  }
  return worst;
}

double identical_indicator_output(std::size_t instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    AttentionOptions opt = random_options(rng);
    opt.mean_source = MeanSource::ProjectedValues;
    KnowledgeHeads heads(opt, rng);
    const std::size_t n = pick(rng, 1, 6), m = pick(rng, 2, 6);
    const Tensor row = random_const({1, opt.dim}, rng);
    const Tensor keys = concat_rows(std::vector<Tensor>(m, row));
    const Tensor x = random_const({n, opt.dim}, rng);
    for (const Tensor& h : heads.forward(x, indicator_set(keys), opt, {})) {
      for (double e : h.data()) worst = std::max(worst, std::abs(e));
    }
  }
  return worst;
}

double padded_row_output(std::size_t instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    const AttentionOptions opt = random_options(rng);
    const auto kind = static_cast<EncoderKind>(i % 3);
    auto encoder = make_encoder(kind, opt, rng);
    ParamList params;
    encoder->collect(params, "e");
    randomize(params, rng);
    const std::size_t batch = pick(rng, 1, 3), len = pick(rng, 1, 6);
    const SequenceLayout layout{batch, len};
    std::vector<bool> pad;
    for (std::size_t b = 0; b < batch; ++b) {
      const auto p = random_pad(len, rng);
      pad.insert(pad.end(), p.begin(), p.end());
    }
    const Tensor x = zero_padded_rows(random_const({layout.rows(), opt.dim}, rng), pad);
    const RelationIndicatorSet set = indicator_set(random_const({pick(rng, 1, 5), opt.dim}, rng));
    const Tensor out = encoder->forward(x, &set, layout, pad, {});
    for (std::size_t r = 0; r < pad.size(); ++r) {
      if (!pad[r]) continue;
      for (std::size_t c = 0; c < out.cols(); ++c) worst = std::max(worst, std::abs(out.at(r, c)));
    }
  }
  return worst;
}

double softmax_row_sum_gap(std::size_t instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t rows = pick(rng, 1, 5), cols = pick(rng, 1, 40);
    const Tensor x = random_const({rows, cols}, rng, -30.0, 30.0);
    std::vector<bool> masked(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
      const auto p = random_pad(cols, rng);
      std::copy(p.begin(), p.end(), masked.begin() + static_cast<std::ptrdiff_t>(r * cols));
    }
    for (const Tensor& s : {softmax_rows(x), softmax_rows(x, masked)}) {
      for (std::size_t r = 0; r < rows; ++r) {
        double total = 0.0;
        for (std::size_t c = 0; c < cols; ++c) total += s.at(r, c);
        worst = std::max(worst, std::abs(total - 1.0));
      }
    }
  }
  return worst;
}

namespace {

template <typename Transform>
double indicator_gap(std::size_t instances, std::uint64_t seed, Transform transform) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    AttentionOptions opt = random_options(rng);
    if (opt.mean_source == MeanSource::None) opt.mean_source = MeanSource::ProjectedValues;
    KnowledgeAttentionLayer layer(opt, rng);
    ParamList params;
    layer.collect(params, "l");
    randomize(params, rng);
    const std::size_t n = pick(rng, 1, 7), m = pick(rng, 1, 6);
    const Tensor x = random_const({n, opt.dim}, rng), keys = random_const({m, opt.dim}, rng);
    const auto pad = random_pad(n, rng);
    const Tensor base = multi_head_knowledge(x, indicator_set(keys), layer, pad);
    const Tensor moved = multi_head_knowledge(x, indicator_set(transform(keys, rng)), layer, pad);
    worst = std::max(worst, max_abs_diff(base.data(), moved.data()));
  }
  return worst;
}

}  // namespace

double indicator_permutation_gap(std::size_t instances, std::uint64_t seed) {
  return indicator_gap(instances, seed, permute_rows);
}

double indicator_duplication_gap(std::size_t instances, std::uint64_t seed) {
  return indicator_gap(instances, seed, [](const Tensor& k, std::mt19937_64& rng) {
    const std::size_t copies = pick(rng, 2, 3);
    return permute_rows(concat_rows(std::vector<Tensor>(copies, k)), rng);
  });
}

double interpolation_endpoint_gap(std::size_t instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t c = pick(rng, 2, 8);
    const Tensor a = softmax_rows(random_const({1, c}, rng)), b = softmax_rows(random_const({1, c}, rng));
    worst = std::max({worst, max_abs_diff(interpolate(a.data(), b.data(), 1.0), a.data()),
                      max_abs_diff(interpolate(a.data(), b.data(), 0.0), b.data())});
  }
  TinySetup t = tiny_setup(ModelKind::Si);
  for (std::uint64_t s = 0; s < 3; ++s) {
    t.config.seed = seed + s;
    for (double beta : {1.0, 0.0}) {
      t.config.beta = beta;
      const RelationModel model = t.model();
      const ModelOutput out = model.forward(t.batch(), {}, false);
      const Tensor& channel = out.channel_probs[beta == 1.0 ? 0 : 1];
      worst = std::max(worst, max_abs_diff(out.probs.data(), channel.data()));
    }
  }
  return worst;
}

std::size_t metrics_oracle_mismatches(std::size_t instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t classes = pick(rng, 2, 6), n = pick(rng, 0, 40);
    const std::size_t negative = pick(rng, 0, classes - 1);
    std::vector<std::size_t> gold(n), pred(n);
    for (std::size_t j = 0; j < n; ++j) {
      gold[j] = pick(rng, 0, classes - 1);
      // Bias toward agreement so that true positives are common.
      pred[j] = pick(rng, 0, 2) == 0 ? gold[j] : pick(rng, 0, classes - 1);
    }
    const PRF got = kattn::micro_prf(gold, pred, negative);
    const PRF want = naive::micro_prf(gold, pred, negative, classes);
    if (got.precision != want.precision || got.recall != want.recall || got.f1 != want.f1) {
      ++mismatches;
    }
  }
  return mismatches;
}

}  // namespace kattn::testkit
