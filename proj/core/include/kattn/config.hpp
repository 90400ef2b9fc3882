#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "kattn/encoders.hpp"
#include "kattn/pooling.hpp"

namespace kattn {

enum class ModelKind { Knowledge, Self, Mca, Si, Kisa };

const char* to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

/// How "dev F1 did not improve" is judged by the learning-rate schedule.
enum class PlateauRule { PreviousEpoch, BestSoFar };

/// Component switches; every field true reproduces the full model.
struct Ablations {
  bool multi_head = true;
  bool synonyms = true;
  bool mean_subtraction = true;
  bool output_mask = true;
  bool entity_mask = true;
  bool relative_positions = true;

  friend bool operator==(const Ablations&, const Ablations&) = default;
};

struct ModelConfig {
  ModelKind kind = ModelKind::Knowledge;
  std::size_t heads = 6;
  std::size_t layers = 1;

  std::size_t word_dim = 300;
  std::size_t pos_dim = 30;
  std::size_t position_dim = 30;
  std::size_t ner_dim = 30;
  std::size_t category_dim = 60;
  std::size_t ffn_dim = 130;
  std::size_t relative_dim = 50;
  std::size_t relative_clip = 10;
  std::size_t pool_attention_dim = 200;
  std::size_t mca_attention_dim = 100;
  std::size_t fc_dim = 100;

  double input_dropout = 0.4;
  double attention_output_dropout = 0.4;
  double ffn_dropout = 0.4;
  double attention_weight_dropout = 0.1;

  double lr = 0.1;
  double momentum = 0.9;
  double lr_decay = 0.9;
  std::size_t decay_after = 15;
  PlateauRule plateau = PlateauRule::PreviousEpoch;
  std::size_t batch_size = 100;
  std::size_t epochs = 70;
  /// Global gradient-norm clip; 0 disables it.
  double clip_norm = 0.0;

  double beta = 0.8;
  bool si_share_embeddings = true;
  bool ner_features = false;
  bool category_features = false;

  MeanSource mean_source = MeanSource::ProjectedValues;
  bool recompute_indicators = true;
  bool mean_pooling = false;
  double embedding_init = 0.5;
  std::string negative_class = "no_relation";

  std::uint64_t seed = 1;
  std::size_t seeds = 5;

  Ablations ablate;

  std::size_t input_dim() const { return word_dim + pos_dim; }
  std::size_t attention_heads() const { return ablate.multi_head ? heads : 1; }
  MeanSource effective_mean_source() const {
    return ablate.mean_subtraction ? mean_source : MeanSource::None;
  }
  PoolingMode pooling_mode() const;
  AttentionOptions attention_options(std::size_t dim) const;

  /// Throws ConfigError naming the offending setting.
  void validate() const;

  /// Flat dotted-key JSON document, keys in a fixed order.
  std::string to_json() const;
  /// Starts from defaults and applies every key; unknown keys are ConfigError.
  static ModelConfig from_json(const std::string& text);
  static ModelConfig load(const std::string& path);

  /// Sets one dotted key from its JSON text or a bare string ("knwl", "0.2").
  void set(const std::string& key, const std::string& value);
  /// Applies a named ablation such as "no-mean-subtraction".
  void apply_ablation(const std::string& name);

  static const std::vector<std::string>& keys();
  static const std::vector<std::string>& ablation_names();
};

}  // namespace kattn
