#pragma once

// Full relation classifiers assembled from embeddings, encoders, pooling and
// heads. One RelationModel covers every model kind:
//   knwl  knowledge-attention channel + classifier
//   self  self-attention channel + classifier
//   kisa  knowledge-informed self-attention channel + classifier
//   mca   knowledge and self channels combined by multi-channel attention
//   si    independent self (p1) and knowledge (p2) classifiers, interpolated

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "kattn/config.hpp"
#include "kattn/encoders.hpp"
#include "kattn/heads.hpp"
#include "kattn/lexicon.hpp"
#include "kattn/pooling.hpp"
#include "kattn/vocab.hpp"

namespace kattn {

/// Pooled feature vector and token attention weights of one channel.
struct ChannelOutput {
  std::string name;
  Tensor features;  // batch x d
  Tensor weights;   // batch x len
};

struct ModelOutput {
  /// Scalar training loss (sum over SI channels); empty unless requested.
  Tensor loss;
  /// Final class distribution, batch x C, detached.
  Tensor probs;
  std::vector<ChannelOutput> channels;
  /// SI only: per-channel distributions {p_self, p_knowledge}, detached.
  std::vector<Tensor> channel_probs;
  /// MCA only: batch x channels.
  Tensor channel_weights;
};

EncodeOptions encode_options(const ModelConfig& config);

class RelationModel {
 public:
  RelationModel(ModelConfig config, Vocab vocab, std::vector<LexiconEntry> lexicon);

  ModelOutput forward(const Batch& batch, const ForwardContext& ctx, bool with_loss = true) const;

  /// Trainable tensors with stable names, in a fixed order.
  ParamList parameters() const;
  /// Non-trainable state saved in checkpoints (frozen indicator matrix).
  ParamList buffers() const;

  /// Copies pretrained word vectors into every word table. Returns rows copied.
  std::size_t load_pretrained(const std::filesystem::path& path);
  /// Rebuilds the frozen indicator matrix from the current tables; no-op when
  /// indicators are recomputed every forward pass.
  void refresh_indicators();
  /// Indicator matrix the knowledge branch would use right now.
  RelationIndicatorSet indicators() const;

  const ModelConfig& config() const { return config_; }
  const Vocab& vocab() const { return vocab_; }
  const std::vector<LexiconEntry>& lexicon() const { return lexicon_; }
  std::size_t num_classes() const { return vocab_.num_relations(); }
  std::vector<std::string> channel_names() const;

 private:
  struct Channel {
    std::string name;
    std::unique_ptr<SequenceEncoder> encoder;
    PositionAwareAttention pool;
    Classifier classifier;
    bool uses_ner = false;
    bool uses_indicators = false;
    /// Index into tables_ (1 only for the unshared SI knowledge channel).
    std::size_t table = 0;
  };

  const EmbeddingTables& tables_for(const Channel& c) const { return tables_[c.table]; }
  std::size_t indicator_table() const;

  ModelConfig config_;
  Vocab vocab_;
  std::vector<LexiconEntry> lexicon_;
  std::optional<IndicatorBuilder> builder_;
  std::vector<EmbeddingTables> tables_;
  std::vector<Channel> channels_;
  MultiChannelAttention mca_;
  /// Frozen indicator matrix when config.recompute_indicators is false.
  Tensor frozen_keys_;
};

}  // namespace kattn
