#pragma once

// Sequence encoders mapping n x d input embeddings to n x d outputs:
// knowledge-attention over relation indicators, self-attention with clipped
// relative positions, and their per-head sum (knowledge-informed
// self-attention). All three share one output block: concatenated heads go
// through W^O and a ReLU feed-forward network, a single residual connection
// adds the input embeddings back, and padded rows are zeroed.
//
// Inputs may stack several padded sequences (SequenceLayout); knowledge
// attention is row-local, self-attention runs per sequence block.

#include <cstddef>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "kattn/layers.hpp"
#include "kattn/lexicon.hpp"
#include "kattn/tensor.hpp"

namespace kattn {

/// What knowledge-attention subtracts from its attended output.
enum class MeanSource {
  ProjectedValues,  // mean of K W^V inside each head (default)
  ProjectedKeys,    // mean of K W^Q, the literal key set of the head
  None,             // no subtraction (ablation)
};

struct AttentionOptions {
  std::size_t dim = 330;
  std::size_t heads = 6;
  std::size_t ffn_dim = 130;
  MeanSource mean_source = MeanSource::ProjectedValues;
  /// Zero padded output rows and hide padded keys from self-attention.
  bool mask_padding = true;
  bool relative_positions = true;
  std::size_t relative_clip = 10;
  std::size_t relative_dim = 50;
  double attention_weight_dropout = 0.1;
  double attention_output_dropout = 0.4;
  double ffn_dropout = 0.4;

  std::size_t head_dim() const { return dim / heads; }
  void validate() const;
};

/// `batch` sequences of `len` rows each, stacked row-wise.
struct SequenceLayout {
  std::size_t batch = 1;
  std::size_t len = 0;

  static SequenceLayout single(std::size_t n) { return {1, n}; }
  std::size_t rows() const { return batch * len; }
};

/// softmax(Q K^T / sqrt(d)) V minus the mean selected by `mean`.
/// `weight_dropout` applies to the attention weights during training.
Tensor knowledge_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                           MeanSource mean = MeanSource::ProjectedValues,
                           const ForwardContext& ctx = {}, double weight_dropout = 0.0);

/// Per-head query/key projection (one shared matrix) and value projection.
struct KnowledgeHeads {
  std::vector<Tensor> query_key;  // d x d/h each
  std::vector<Tensor> value;      // d x d/h each

  KnowledgeHeads() = default;
  KnowledgeHeads(const AttentionOptions& opt, std::mt19937_64& rng);

  std::vector<Tensor> forward(const Tensor& x, const RelationIndicatorSet& indicators,
                              const AttentionOptions& opt, const ForwardContext& ctx) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

struct SelfHeads {
  std::vector<Tensor> query;           // d x d/h each
  std::vector<Tensor> key;             // d x d/h each
  std::vector<Tensor> value;           // d x d/h each
  Tensor relative;                     // (2*clip+1) x relative_dim
  std::vector<Tensor> relative_proj;   // relative_dim x d/h each

  SelfHeads() = default;
  SelfHeads(const AttentionOptions& opt, std::mt19937_64& rng);

  std::vector<Tensor> forward(const Tensor& x, const SequenceLayout& layout,
                              const std::vector<bool>& pad, const AttentionOptions& opt,
                              const ForwardContext& ctx) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

/// W^O, feed-forward, residual from the input embeddings, output masking.
struct OutputBlock {
  Tensor output;  // d x d
  FeedForward ffn;

  OutputBlock() = default;
  OutputBlock(const AttentionOptions& opt, std::mt19937_64& rng);

  Tensor forward(const std::vector<Tensor>& heads, const Tensor& x, const std::vector<bool>& pad,
                 const AttentionOptions& opt, const ForwardContext& ctx) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

enum class EncoderKind { Knowledge, Self, Kisa };

class SequenceEncoder {
 public:
  virtual ~SequenceEncoder() = default;
  virtual EncoderKind kind() const = 0;
  virtual const AttentionOptions& options() const = 0;
  /// `indicators` may be null for encoders that do not use them.
  virtual Tensor forward(const Tensor& x, const RelationIndicatorSet* indicators,
                         const SequenceLayout& layout, const std::vector<bool>& pad,
                         const ForwardContext& ctx) const = 0;
  virtual void collect(ParamList& out, const std::string& prefix) const = 0;
};

struct KnowledgeAttentionLayer final : SequenceEncoder {
  AttentionOptions opt;
  KnowledgeHeads heads;
  OutputBlock block;

  KnowledgeAttentionLayer(const AttentionOptions& options, std::mt19937_64& rng);

  EncoderKind kind() const override { return EncoderKind::Knowledge; }
  const AttentionOptions& options() const override { return opt; }
  Tensor forward(const Tensor& x, const RelationIndicatorSet* indicators,
                 const SequenceLayout& layout, const std::vector<bool>& pad,
                 const ForwardContext& ctx) const override;
  void collect(ParamList& out, const std::string& prefix) const override;
};

struct SelfAttentionLayer final : SequenceEncoder {
  AttentionOptions opt;
  SelfHeads heads;
  OutputBlock block;

  SelfAttentionLayer(const AttentionOptions& options, std::mt19937_64& rng);

  EncoderKind kind() const override { return EncoderKind::Self; }
  const AttentionOptions& options() const override { return opt; }
  Tensor forward(const Tensor& x, const RelationIndicatorSet* indicators,
                 const SequenceLayout& layout, const std::vector<bool>& pad,
                 const ForwardContext& ctx) const override;
  void collect(ParamList& out, const std::string& prefix) const override;
};

struct KisaLayer final : SequenceEncoder {
  AttentionOptions opt;
  KnowledgeHeads knowledge;
  SelfHeads self;
  OutputBlock block;

  KisaLayer(const AttentionOptions& options, std::mt19937_64& rng);

  EncoderKind kind() const override { return EncoderKind::Kisa; }
  const AttentionOptions& options() const override { return opt; }
  Tensor forward(const Tensor& x, const RelationIndicatorSet* indicators,
                 const SequenceLayout& layout, const std::vector<bool>& pad,
                 const ForwardContext& ctx) const override;
  void collect(ParamList& out, const std::string& prefix) const override;
};

Tensor multi_head_knowledge(const Tensor& x, const RelationIndicatorSet& indicators,
                            const KnowledgeAttentionLayer& layer, const std::vector<bool>& pad,
                            const ForwardContext& ctx = {});
Tensor multi_head_self(const Tensor& x, const SelfAttentionLayer& layer,
                       const std::vector<bool>& pad, const ForwardContext& ctx = {});
Tensor kisa_forward(const Tensor& x, const RelationIndicatorSet& indicators,
                    const KisaLayer& layer, const std::vector<bool>& pad,
                    const ForwardContext& ctx = {});

std::unique_ptr<SequenceEncoder> make_encoder(EncoderKind kind, const AttentionOptions& opt,
                                              std::mt19937_64& rng);

}  // namespace kattn
