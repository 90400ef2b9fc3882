#include "kattn/encoders.hpp"

#include <cmath>

#include "kattn/errors.hpp"

namespace kattn {

namespace {

std::vector<Tensor> per_head(std::size_t heads, std::size_t rows, std::size_t cols,
                             std::mt19937_64& rng) {
  std::vector<Tensor> out;
  out.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) out.push_back(xavier(rows, cols, rng));
  return out;
}

void collect_heads(ParamList& out, const std::string& prefix, const std::vector<Tensor>& ws) {
  for (std::size_t h = 0; h < ws.size(); ++h) {
    out.push_back({prefix + "." + std::to_string(h), ws[h]});
  }
}

void check_input(const Tensor& x, const SequenceLayout& layout, const std::vector<bool>& pad,
                 const AttentionOptions& opt) {
  if (x.rank() != 2 || x.cols() != opt.dim) {
    throw DimensionError("encoder input " + shape_str(x.shape()) + " does not have " +
                         std::to_string(opt.dim) + " columns");
  }
  if (pad.size() != x.rows()) {
    throw DimensionError("pad mask length " + std::to_string(pad.size()) + " != " +
                         std::to_string(x.rows()) + " input rows");
  }
  if (layout.rows() != x.rows()) {
    throw DimensionError("sequence layout covers " + std::to_string(layout.rows()) +
                         " rows, input has " + std::to_string(x.rows()));
  }
}

const AttentionOptions& validated(const AttentionOptions& opt) {
  opt.validate();
  return opt;
}

// Column mean taken relative to the first row: exact for identical rows.
Tensor shifted_mean(const Tensor& x) {
  const Tensor first = slice_rows(x, 0, 1);
  return add(first, mean_rows(sub_row(x, first)));
}

}  // namespace

void AttentionOptions::validate() const {
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("model dimension " + std::to_string(dim) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  for (double r : {attention_weight_dropout, attention_output_dropout, ffn_dropout}) {
    if (r < 0.0 || r >= 1.0) throw ConfigError("dropout rates must lie in [0, 1)");
  }
}

Tensor knowledge_attention(const Tensor& q, const Tensor& k, const Tensor& v, MeanSource mean,
                           const ForwardContext& ctx, double weight_dropout) {
  if (k.rank() != 2 || k.rows() == 0) {
    throw ConfigError("knowledge attention needs at least one relation indicator");
  }
  if (v.rows() != k.rows()) {
    throw DimensionError("knowledge attention: " + std::to_string(k.rows()) + " keys but " +
                         std::to_string(v.rows()) + " values");
  }
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Tensor weights = softmax_rows(scale(matmul_nt(q, k), inv_sqrt));
  weights = ctx.drop(weights, weight_dropout);
  switch (mean) {
    case MeanSource::ProjectedValues:
      // Rows of the weights sum to one, so centering V first is the same product and
      // cancels exactly when every value row is equal.
      return matmul(weights, sub_row(v, shifted_mean(v)));
    case MeanSource::ProjectedKeys:
      return sub_row(matmul(weights, v), shifted_mean(k));
    case MeanSource::None:
      break;
  }
  return matmul(weights, v);
}

// ---- heads -----------------------------------------------------------------

KnowledgeHeads::KnowledgeHeads(const AttentionOptions& opt, std::mt19937_64& rng)
    : query_key(per_head(opt.heads, opt.dim, opt.head_dim(), rng)),
      value(per_head(opt.heads, opt.dim, opt.head_dim(), rng)) {}

std::vector<Tensor> KnowledgeHeads::forward(const Tensor& x, const RelationIndicatorSet& indicators,
                                            const AttentionOptions& opt,
                                            const ForwardContext& ctx) const {
  std::vector<Tensor> out;
  out.reserve(query_key.size());
  for (std::size_t h = 0; h < query_key.size(); ++h) {
    const Tensor q = matmul(x, query_key[h]);
    const Tensor k = matmul(indicators.keys, query_key[h]);
    const Tensor v = matmul(indicators.keys, value[h]);
    out.push_back(knowledge_attention(q, k, v, opt.mean_source, ctx, opt.attention_weight_dropout));
  }
  return out;
}

void KnowledgeHeads::collect(ParamList& out, const std::string& prefix) const {
  collect_heads(out, prefix + ".query_key", query_key);
  collect_heads(out, prefix + ".value", value);
}

SelfHeads::SelfHeads(const AttentionOptions& opt, std::mt19937_64& rng)
    : query(per_head(opt.heads, opt.dim, opt.head_dim(), rng)),
      key(per_head(opt.heads, opt.dim, opt.head_dim(), rng)),
      value(per_head(opt.heads, opt.dim, opt.head_dim(), rng)),
      relative(xavier(2 * opt.relative_clip + 1, opt.relative_dim, rng)),
      relative_proj(per_head(opt.heads, opt.relative_dim, opt.head_dim(), rng)) {}

std::vector<Tensor> SelfHeads::forward(const Tensor& x, const SequenceLayout& layout,
                                       const std::vector<bool>& pad, const AttentionOptions& opt,
                                       const ForwardContext& ctx) const {
  const std::size_t len = layout.len;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(opt.head_dim()));

  // Key masks per sequence: entry (i, j) hides padded key j from query i.
  std::vector<std::vector<bool>> key_masks;
  if (opt.mask_padding) {
    key_masks.resize(layout.batch);
    for (std::size_t s = 0; s < layout.batch; ++s) {
      auto& m = key_masks[s];
      m.resize(len * len);
      for (std::size_t i = 0; i < len; ++i) {
        for (std::size_t j = 0; j < len; ++j) m[i * len + j] = pad[s * len + j];
      }
    }
  }

  std::vector<Tensor> out;
  out.reserve(query.size());
  for (std::size_t h = 0; h < query.size(); ++h) {
    const Tensor q_all = matmul(x, query[h]);
    const Tensor k_all = matmul(x, key[h]);
    const Tensor v_all = matmul(x, value[h]);
    Tensor rel_keys;
    if (opt.relative_positions) rel_keys = matmul(relative, relative_proj[h]);
    std::vector<Tensor> blocks;
    blocks.reserve(layout.batch);
    for (std::size_t s = 0; s < layout.batch; ++s) {
      const Tensor q = slice_rows(q_all, s * len, len);
      const Tensor k = slice_rows(k_all, s * len, len);
      const Tensor v = slice_rows(v_all, s * len, len);
      Tensor scores = matmul_nt(q, k);
      if (opt.relative_positions) {
        scores = add(scores, relative_gather(matmul_nt(q, rel_keys), opt.relative_clip));
      }
      scores = scale(scores, inv_sqrt);
      Tensor weights = opt.mask_padding ? softmax_rows(scores, key_masks[s]) : softmax_rows(scores);
      weights = ctx.drop(weights, opt.attention_weight_dropout);
      blocks.push_back(matmul(weights, v));
    }
    out.push_back(blocks.size() == 1 ? blocks.front() : concat_rows(blocks));
  }
  return out;
}

void SelfHeads::collect(ParamList& out, const std::string& prefix) const {
  collect_heads(out, prefix + ".query", query);
  collect_heads(out, prefix + ".key", key);
  collect_heads(out, prefix + ".value", value);
  out.push_back({prefix + ".relative", relative});
  collect_heads(out, prefix + ".relative_proj", relative_proj);
}

OutputBlock::OutputBlock(const AttentionOptions& opt, std::mt19937_64& rng)
    : output(xavier(opt.dim, opt.dim, rng)), ffn(opt.dim, opt.ffn_dim, rng) {}

Tensor OutputBlock::forward(const std::vector<Tensor>& heads, const Tensor& x,
                            const std::vector<bool>& pad, const AttentionOptions& opt,
                            const ForwardContext& ctx) const {
  const Tensor joined = heads.size() == 1 ? heads.front() : concat_cols(heads);
  const Tensor attended = ctx.drop(matmul(joined, output), opt.attention_output_dropout);
  const Tensor fed = ctx.drop(ffn.forward(attended), opt.ffn_dropout);
  const Tensor y = add(fed, x);
  return opt.mask_padding ? mask_rows(y, pad) : y;
}

void OutputBlock::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".output", output});
  ffn.collect(out, prefix + ".ffn");
}

// ---- layers ----------------------------------------------------------------

KnowledgeAttentionLayer::KnowledgeAttentionLayer(const AttentionOptions& options,
                                                 std::mt19937_64& rng)
    : opt(options), heads(validated(options), rng), block(options, rng) {}

Tensor KnowledgeAttentionLayer::forward(const Tensor& x, const RelationIndicatorSet* indicators,
                                        const SequenceLayout& layout, const std::vector<bool>& pad,
                                        const ForwardContext& ctx) const {
  check_input(x, layout, pad, opt);
  if (indicators == nullptr) throw ConfigError("knowledge-attention needs relation indicators");
  return block.forward(heads.forward(x, *indicators, opt, ctx), x, pad, opt, ctx);
}

void KnowledgeAttentionLayer::collect(ParamList& out, const std::string& prefix) const {
  heads.collect(out, prefix + ".knowledge");
  block.collect(out, prefix + ".block");
}

SelfAttentionLayer::SelfAttentionLayer(const AttentionOptions& options, std::mt19937_64& rng)
    : opt(options), heads(validated(options), rng), block(options, rng) {}

Tensor SelfAttentionLayer::forward(const Tensor& x, const RelationIndicatorSet*,
                                   const SequenceLayout& layout, const std::vector<bool>& pad,
                                   const ForwardContext& ctx) const {
  check_input(x, layout, pad, opt);
  return block.forward(heads.forward(x, layout, pad, opt, ctx), x, pad, opt, ctx);
}

void SelfAttentionLayer::collect(ParamList& out, const std::string& prefix) const {
  heads.collect(out, prefix + ".self");
  block.collect(out, prefix + ".block");
}

KisaLayer::KisaLayer(const AttentionOptions& options, std::mt19937_64& rng)
    : opt(options),
      knowledge(validated(options), rng),
      self(options, rng),
      block(options, rng) {}

Tensor KisaLayer::forward(const Tensor& x, const RelationIndicatorSet* indicators,
                          const SequenceLayout& layout, const std::vector<bool>& pad,
                          const ForwardContext& ctx) const {
  check_input(x, layout, pad, opt);
  if (indicators == nullptr) throw ConfigError("knowledge-informed self-attention needs indicators");
  const std::vector<Tensor> k = knowledge.forward(x, *indicators, opt, ctx);
  const std::vector<Tensor> s = self.forward(x, layout, pad, opt, ctx);
  std::vector<Tensor> joined;
  joined.reserve(k.size());
  for (std::size_t h = 0; h < k.size(); ++h) joined.push_back(add(k[h], s[h]));
  return block.forward(joined, x, pad, opt, ctx);
}

void KisaLayer::collect(ParamList& out, const std::string& prefix) const {
  knowledge.collect(out, prefix + ".knowledge");
  self.collect(out, prefix + ".self");
  block.collect(out, prefix + ".block");
}

Tensor multi_head_knowledge(const Tensor& x, const RelationIndicatorSet& indicators,
                            const KnowledgeAttentionLayer& layer, const std::vector<bool>& pad,
                            const ForwardContext& ctx) {
  return layer.forward(x, &indicators, SequenceLayout::single(x.rows()), pad, ctx);
}

Tensor multi_head_self(const Tensor& x, const SelfAttentionLayer& layer,
                       const std::vector<bool>& pad, const ForwardContext& ctx) {
  return layer.forward(x, nullptr, SequenceLayout::single(x.rows()), pad, ctx);
}

Tensor kisa_forward(const Tensor& x, const RelationIndicatorSet& indicators,
                    const KisaLayer& layer, const std::vector<bool>& pad,
                    const ForwardContext& ctx) {
  return layer.forward(x, &indicators, SequenceLayout::single(x.rows()), pad, ctx);
}

std::unique_ptr<SequenceEncoder> make_encoder(EncoderKind kind, const AttentionOptions& opt,
                                              std::mt19937_64& rng) {
  switch (kind) {
    case EncoderKind::Knowledge:
      return std::make_unique<KnowledgeAttentionLayer>(opt, rng);
    case EncoderKind::Self:
      return std::make_unique<SelfAttentionLayer>(opt, rng);
    case EncoderKind::Kisa:
      return std::make_unique<KisaLayer>(opt, rng);
  }
  throw ConfigError("unknown encoder kind");
}

}  // namespace kattn
