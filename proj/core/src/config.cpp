#include "kattn/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>
#include <type_traits>

#include <nlohmann/json.hpp>

#include "kattn/errors.hpp"

namespace kattn {

using nlohmann::json;
using nlohmann::ordered_json;

const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Knowledge:
      return "knwl";
    case ModelKind::Self:
      return "self";
    case ModelKind::Mca:
      return "mca";
    case ModelKind::Si:
      return "si";
    case ModelKind::Kisa:
      return "kisa";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& name) {
  for (ModelKind k : {ModelKind::Knowledge, ModelKind::Self, ModelKind::Mca, ModelKind::Si,
                      ModelKind::Kisa}) {
    if (name == to_string(k)) return k;
  }
  throw ConfigError("model.kind: unknown model \"" + name + "\" (knwl, self, mca, si, kisa)");
}

namespace {

struct Key {
  std::string name;
  std::function<ordered_json(const ModelConfig&)> get;
  std::function<void(ModelConfig&, const json&)> set;
};

// nlohmann converts -3 to a huge size_t without complaint.
template <typename T>
T checked_get(const json& v) {
  if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
    if (!v.is_number_unsigned()) throw ConfigError("expected a non-negative integer, got " + v.dump());
  }
  return v.get<T>();
}

template <typename T>
Key member(std::string name, T ModelConfig::*field) {
  return {name, [field](const ModelConfig& c) { return ordered_json(c.*field); },
          [field](ModelConfig& c, const json& v) { c.*field = checked_get<T>(v); }};
}

template <typename T>
Key ablation(std::string name, T Ablations::*field) {
  return {name, [field](const ModelConfig& c) { return ordered_json(c.ablate.*field); },
          [field](ModelConfig& c, const json& v) { c.ablate.*field = v.get<T>(); }};
}

const char* mean_source_name(MeanSource m) {
  switch (m) {
    case MeanSource::ProjectedValues:
      return "values";
    case MeanSource::ProjectedKeys:
      return "keys";
    case MeanSource::None:
      return "none";
  }
  return "?";
}

const std::vector<Key>& key_table() {
  static const std::vector<Key> table = [] {
    std::vector<Key> k;
    k.push_back({"model.kind", [](const ModelConfig& c) { return ordered_json(to_string(c.kind)); },
                 [](ModelConfig& c, const json& v) { c.kind = parse_model_kind(v.get<std::string>()); }});
    k.push_back(member("model.heads", &ModelConfig::heads));
    k.push_back(member("model.layers", &ModelConfig::layers));
    k.push_back(member("dims.word", &ModelConfig::word_dim));
    k.push_back(member("dims.pos", &ModelConfig::pos_dim));
    k.push_back(member("dims.position", &ModelConfig::position_dim));
    k.push_back(member("dims.ner", &ModelConfig::ner_dim));
    k.push_back(member("dims.category", &ModelConfig::category_dim));
    k.push_back(member("dims.ffn", &ModelConfig::ffn_dim));
    k.push_back(member("dims.relative", &ModelConfig::relative_dim));
    k.push_back(member("dims.relative_clip", &ModelConfig::relative_clip));
    k.push_back(member("dims.pool_attention", &ModelConfig::pool_attention_dim));
    k.push_back(member("dims.mca_attention", &ModelConfig::mca_attention_dim));
    k.push_back(member("dims.fc", &ModelConfig::fc_dim));
    k.push_back(member("dropout.input", &ModelConfig::input_dropout));
    k.push_back(member("dropout.attention_output", &ModelConfig::attention_output_dropout));
    k.push_back(member("dropout.ffn", &ModelConfig::ffn_dropout));
    k.push_back(member("dropout.attention_weights", &ModelConfig::attention_weight_dropout));
    k.push_back(member("train.lr", &ModelConfig::lr));
    k.push_back(member("train.momentum", &ModelConfig::momentum));
    k.push_back(member("train.lr_decay", &ModelConfig::lr_decay));
    k.push_back(member("train.decay_after", &ModelConfig::decay_after));
    k.push_back({"train.plateau",
                 [](const ModelConfig& c) {
                   return ordered_json(c.plateau == PlateauRule::PreviousEpoch ? "previous" : "best");
                 },
                 [](ModelConfig& c, const json& v) {
                   const auto s = v.get<std::string>();
                   if (s == "previous") {
                     c.plateau = PlateauRule::PreviousEpoch;
                   } else if (s == "best") {
                     c.plateau = PlateauRule::BestSoFar;
                   } else {
                     throw ConfigError("train.plateau: expected \"previous\" or \"best\"");
                   }
                 }});
    k.push_back(member("train.batch_size", &ModelConfig::batch_size));
    k.push_back(member("train.epochs", &ModelConfig::epochs));
    k.push_back(member("train.clip_norm", &ModelConfig::clip_norm));
    k.push_back(member("train.seed", &ModelConfig::seed));
    k.push_back(member("train.seeds", &ModelConfig::seeds));
    k.push_back(member("si.beta", &ModelConfig::beta));
    k.push_back(member("si.share_embeddings", &ModelConfig::si_share_embeddings));
    k.push_back(member("features.ner", &ModelConfig::ner_features));
    k.push_back(member("features.entity_category", &ModelConfig::category_features));
    k.push_back({"knowledge.mean_source",
                 [](const ModelConfig& c) { return ordered_json(mean_source_name(c.mean_source)); },
                 [](ModelConfig& c, const json& v) {
                   const auto s = v.get<std::string>();
                   if (s == "values") {
                     c.mean_source = MeanSource::ProjectedValues;
                   } else if (s == "keys") {
                     c.mean_source = MeanSource::ProjectedKeys;
                   } else if (s == "none") {
                     c.mean_source = MeanSource::None;
                   } else {
                     throw ConfigError("knowledge.mean_source: expected values, keys or none");
                   }
                 }});
    k.push_back(member("lexicon.recompute", &ModelConfig::recompute_indicators));
    k.push_back(member("pooling.mean", &ModelConfig::mean_pooling));
    k.push_back(member("embeddings.init_range", &ModelConfig::embedding_init));
    k.push_back(member("data.negative_class", &ModelConfig::negative_class));
    k.push_back(ablation("ablation.multi_head", &Ablations::multi_head));
    k.push_back(ablation("ablation.synonyms", &Ablations::synonyms));
    k.push_back(ablation("ablation.mean_subtraction", &Ablations::mean_subtraction));
    k.push_back(ablation("ablation.output_mask", &Ablations::output_mask));
    k.push_back(ablation("ablation.entity_mask", &Ablations::entity_mask));
    k.push_back(ablation("ablation.relative_positions", &Ablations::relative_positions));
    return k;
  }();
  return table;
}

const Key* find_key(const std::string& name) {
  for (const Key& k : key_table()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

void apply_key(ModelConfig& c, const std::string& name, const json& value) {
  const Key* key = find_key(name);
  if (key == nullptr) throw ConfigError("unknown config key \"" + name + "\"");
  try {
    key->set(c, value);
  } catch (const json::exception& e) {
    throw ConfigError("config key \"" + name + "\": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError("config key \"" + name + "\": " + e.what());
  }
}

}  // namespace

PoolingMode ModelConfig::pooling_mode() const {
  if (mean_pooling) return PoolingMode::Mean;
  return ablate.relative_positions ? PoolingMode::PositionAware : PoolingMode::ContentOnly;
}

AttentionOptions ModelConfig::attention_options(std::size_t dim) const {
  AttentionOptions o;
  o.dim = dim;
  o.heads = attention_heads();
  o.ffn_dim = ffn_dim;
  o.mean_source = effective_mean_source();
  o.mask_padding = ablate.output_mask;
  o.relative_positions = ablate.relative_positions;
  o.relative_clip = relative_clip;
  o.relative_dim = relative_dim;
  o.attention_weight_dropout = attention_weight_dropout;
  o.attention_output_dropout = attention_output_dropout;
  o.ffn_dropout = ffn_dropout;
  return o;
}

void ModelConfig::validate() const {
  if (heads == 0) throw ConfigError("model.heads must be positive");
  if (input_dim() % attention_heads() != 0) {
    throw ConfigError("model.heads: d_w + d_t = " + std::to_string(input_dim()) +
                      " is not divisible by " + std::to_string(attention_heads()));
  }
  if (ner_features && (input_dim() + ner_dim) % attention_heads() != 0) {
    throw ConfigError("dims.ner: self-attention width " + std::to_string(input_dim() + ner_dim) +
                      " is not divisible by the head count");
  }
  if (layers != 1) throw ConfigError("model.layers: only single-layer encoders are supported");
  const std::pair<const char*, double> rates[] = {
      {"dropout.input", input_dropout},
      {"dropout.attention_output", attention_output_dropout},
      {"dropout.ffn", ffn_dropout},
      {"dropout.attention_weights", attention_weight_dropout}};
  for (const auto& [name, r] : rates) {
    if (!(r >= 0.0 && r < 1.0)) throw ConfigError(std::string(name) + " must lie in [0, 1)");
  }
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw ConfigError("train.momentum must lie in [0, 1]");
  if (!(lr_decay >= 0.0 && lr_decay <= 1.0)) throw ConfigError("train.lr_decay must lie in [0, 1]");
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("si.beta must lie in [0, 1]");
  if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (epochs == 0) throw ConfigError("train.epochs must be positive");
  if (seeds == 0) throw ConfigError("train.seeds must be at least 1");
  if (word_dim == 0 || pos_dim == 0) throw ConfigError("dims.word and dims.pos must be positive");
}

std::string ModelConfig::to_json() const {
  ordered_json j = ordered_json::object();
  for (const Key& k : key_table()) j[k.name] = k.get(*this);
  return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ModelConfig c;
  for (const auto& [name, value] : j.items()) apply_key(c, name, value);
  c.validate();
  return c;
}

ModelConfig ModelConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

void ModelConfig::set(const std::string& key, const std::string& value) {
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::parse_error&) {
    parsed = value;  // bare string
  }
  apply_key(*this, key, parsed);
}

void ModelConfig::apply_ablation(const std::string& name) {
  if (name == "no-multi-head") {
    ablate.multi_head = false;
  } else if (name == "no-synonyms") {
    ablate.synonyms = false;
  } else if (name == "no-mean-subtraction") {
    ablate.mean_subtraction = false;
  } else if (name == "no-output-mask") {
    ablate.output_mask = false;
  } else if (name == "no-entity-mask") {
    ablate.entity_mask = false;
  } else if (name == "no-relative-positions") {
    ablate.relative_positions = false;
  } else {
    throw ConfigError("unknown ablation \"" + name + "\"");
  }
}

const std::vector<std::string>& ModelConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const Key& k : key_table()) out.push_back(k.name);
    return out;
  }();
  return names;
}

const std::vector<std::string>& ModelConfig::ablation_names() {
  static const std::vector<std::string> names = {
      "no-multi-head",  "no-synonyms",      "no-mean-subtraction",
      "no-output-mask", "no-entity-mask",   "no-relative-positions"};
  return names;
}

}  // namespace kattn
