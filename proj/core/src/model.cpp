#include "kattn/model.hpp"

#include "kattn/errors.hpp"

namespace kattn {

EncodeOptions encode_options(const ModelConfig& config) {
  EncodeOptions o;
  o.mask_entities = config.ablate.entity_mask;
  return o;
}

namespace {

EmbeddingDims embedding_dims(const ModelConfig& c) {
  EmbeddingDims d;
  d.word = c.word_dim;
  d.pos = c.pos_dim;
  d.position = c.position_dim;
  d.ner = c.ner_dim;
  d.category = c.category_dim;
  d.with_ner = c.ner_features;
  d.with_category = c.category_features;
  return d;
}

bool has_self_channel(ModelKind k) {
  return k == ModelKind::Self || k == ModelKind::Mca || k == ModelKind::Si;
}

bool needs_indicators(ModelKind k) { return k != ModelKind::Self; }

}  // namespace

RelationModel::RelationModel(ModelConfig config, Vocab vocab, std::vector<LexiconEntry> lexicon)
    : config_(std::move(config)), vocab_(std::move(vocab)), lexicon_(std::move(lexicon)) {
  config_.validate();
  if (config_.ner_features && !has_self_channel(config_.kind)) {
    throw ConfigError("features.ner requires a model with a self-attention channel (self, mca, si)");
  }
  if (vocab_.num_relations() < 2) throw ConfigError("need at least two relation classes");

  std::mt19937_64 rng(config_.seed);
  const EmbeddingDims dims = embedding_dims(config_);
  tables_.push_back(EmbeddingTables::init(vocab_, dims, rng, config_.embedding_init));
  if (config_.kind == ModelKind::Si && !config_.si_share_embeddings) {
    tables_.push_back(EmbeddingTables::init(vocab_, dims, rng, config_.embedding_init));
  }
  if (needs_indicators(config_.kind)) {
    builder_.emplace(lexicon_, vocab_, config_.ablate.synonyms);
    if (builder_->size() == 0) throw ConfigError("lexicon yields no relation indicators");
  }

  const std::size_t classes = vocab_.num_relations();
  const std::size_t extra = config_.category_features && config_.kind != ModelKind::Mca
                                ? config_.category_dim
                                : 0;
  auto add_channel = [&](std::string name, EncoderKind kind, bool ner, std::size_t table) {
    Channel c;
    c.name = std::move(name);
    c.uses_ner = ner;
    c.uses_indicators = kind != EncoderKind::Self;
    c.table = table;
    const std::size_t dim = config_.input_dim() + (ner ? config_.ner_dim : 0);
    c.encoder = make_encoder(kind, config_.attention_options(dim), rng);
    c.pool = PositionAwareAttention(dim, 2 * config_.position_dim, config_.pool_attention_dim, rng);
    if (config_.kind != ModelKind::Mca) c.classifier = Classifier(dim + extra, config_.fc_dim, classes, rng);
    channels_.push_back(std::move(c));
  };

  const bool ner = config_.ner_features;
  switch (config_.kind) {
    case ModelKind::Knowledge:
      add_channel("knowledge", EncoderKind::Knowledge, false, 0);
      break;
    case ModelKind::Self:
      add_channel("self", EncoderKind::Self, ner, 0);
      break;
    case ModelKind::Kisa:
      add_channel("kisa", EncoderKind::Kisa, false, 0);
      break;
    case ModelKind::Mca: {
      add_channel("knowledge", EncoderKind::Knowledge, false, 0);
      add_channel("self", EncoderKind::Self, ner, 0);
      std::vector<std::size_t> channel_dims;
      for (const Channel& c : channels_) channel_dims.push_back(c.pool.content.rows());
      if (config_.category_features) channel_dims.push_back(config_.category_dim);
      mca_ = MultiChannelAttention(channel_dims, config_.mca_attention_dim, classes, rng);
      break;
    }
    case ModelKind::Si:
      // p1 is the self-attention channel, p2 the knowledge channel.
      add_channel("self", EncoderKind::Self, ner, 0);
      add_channel("knowledge", EncoderKind::Knowledge, false, tables_.size() - 1);
      break;
  }
  refresh_indicators();
}

std::size_t RelationModel::indicator_table() const { return tables_.size() - 1; }

void RelationModel::refresh_indicators() {
  if (!builder_ || config_.recompute_indicators) return;
  NoGradGuard no_grad;
  frozen_keys_ = builder_->build(tables_[indicator_table()]).keys.detach();
}

RelationIndicatorSet RelationModel::indicators() const {
  if (!builder_) throw ConfigError("model kind " + std::string(to_string(config_.kind)) +
                                   " has no knowledge channel");
  if (config_.recompute_indicators) return builder_->build(tables_[indicator_table()]);
  RelationIndicatorSet set;
  set.keys = frozen_keys_;
  {
    NoGradGuard no_grad;
    set.mean = mean_rows(frozen_keys_);
  }
  set.provenance = builder_->entries();
  return set;
}

std::size_t RelationModel::load_pretrained(const std::filesystem::path& path) {
  std::size_t copied = 0;
  for (std::size_t i = 0; i < tables_.size(); ++i) {
    const std::size_t n = load_word_embeddings(path, vocab_, tables_[i]);
    if (i == 0) copied = n;
  }
  refresh_indicators();
  return copied;
}

std::vector<std::string> RelationModel::channel_names() const {
  std::vector<std::string> names;
  for (const Channel& c : channels_) names.push_back(c.name);
  return names;
}

ModelOutput RelationModel::forward(const Batch& batch, const ForwardContext& ctx,
                                   bool with_loss) const {
  const SequenceLayout layout{batch.size, batch.len};
  // Without output masking the model is blind to padding end to end.
  const std::vector<bool> pool_pad =
      config_.ablate.output_mask ? batch.pad : std::vector<bool>(batch.pad.size(), false);
  const PoolingMode mode = config_.pooling_mode();

  std::optional<RelationIndicatorSet> indicators_now;
  if (builder_) indicators_now = indicators();

  ModelOutput result;
  for (const Channel& c : channels_) {
    const EmbeddingTables& t = tables_for(c);
    Tensor x = embed_batch(batch, t);
    if (c.uses_ner) x = concat_cols({x, mask_rows(gather_rows(t.ner, batch.ner_ids), batch.pad)});
    x = ctx.drop(x, config_.input_dropout);
    Tensor out = c.encoder->forward(x, c.uses_indicators ? &*indicators_now : nullptr, layout,
                                    batch.pad, ctx);
    Tensor positions = mode == PoolingMode::PositionAware ? position_features(batch, t) : Tensor();
    PooledOutput pooled = c.pool.forward(out, positions, layout, pool_pad, mode);
    Tensor f = pooled.features;
    if (config_.category_features && config_.kind != ModelKind::Mca) {
      f = concat_cols({f, gather_rows(t.category, batch.category)});
    }
    result.channels.push_back({c.name, f, pooled.weights});
  }

  auto probabilities = [](const Tensor& logits) {
    NoGradGuard no_grad;
    return softmax_rows(logits.detach());
  };

  if (config_.kind == ModelKind::Si) {
    Tensor self_logits = channels_[0].classifier.forward(result.channels[0].features);
    Tensor knwl_logits = channels_[1].classifier.forward(result.channels[1].features);
    Tensor p1 = probabilities(self_logits);
    Tensor p2 = probabilities(knwl_logits);
    const std::size_t classes = p1.cols();
    std::vector<double> mixed(p1.size());
    for (std::size_t r = 0; r < p1.rows(); ++r) {
      const auto row = interpolate(p1.data().subspan(r * classes, classes),
                                   p2.data().subspan(r * classes, classes), config_.beta);
      std::copy(row.begin(), row.end(), mixed.begin() + static_cast<std::ptrdiff_t>(r * classes));
    }
    result.probs = Tensor::from(p1.shape(), std::move(mixed));
    result.channel_probs = {p1, p2};
    if (with_loss) {
      result.loss = add(cross_entropy(self_logits, batch.gold), cross_entropy(knwl_logits, batch.gold));
    }
    return result;
  }

  Tensor logits;
  if (config_.kind == ModelKind::Mca) {
    std::vector<Tensor> features;
    for (const ChannelOutput& c : result.channels) features.push_back(c.features);
    if (config_.category_features) features.push_back(gather_rows(tables_[0].category, batch.category));
    ChannelMix mix = mca_combine(features, mca_);
    logits = mca_.logits.forward(mix.combined);
    result.channel_weights = mix.weights.detach();
  } else {
    logits = channels_[0].classifier.forward(result.channels[0].features);
  }
  result.probs = probabilities(logits);
  if (with_loss) result.loss = cross_entropy(logits, batch.gold);
  return result;
}

ParamList RelationModel::parameters() const {
  ParamList out;
  for (std::size_t i = 0; i < tables_.size(); ++i) {
    const std::string prefix = i == 0 ? "embed" : "embed_knowledge";
    const EmbeddingTables& t = tables_[i];
    out.push_back({prefix + ".word", t.word});
    out.push_back({prefix + ".pos", t.pos});
    out.push_back({prefix + ".position", t.position});
    if (t.has_ner()) out.push_back({prefix + ".ner", t.ner});
    if (t.has_category()) out.push_back({prefix + ".category", t.category});
  }
  for (const Channel& c : channels_) {
    c.encoder->collect(out, c.name + ".encoder");
    c.pool.collect(out, c.name + ".pool");
    if (config_.kind != ModelKind::Mca) c.classifier.collect(out, c.name + ".classifier");
  }
  if (config_.kind == ModelKind::Mca) mca_.collect(out, "mca");
  return out;
}

ParamList RelationModel::buffers() const {
  ParamList out;
  if (builder_ && !config_.recompute_indicators) out.push_back({"buffer.indicators", frozen_keys_});
  return out;
}

}  // namespace kattn
