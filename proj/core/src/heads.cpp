#include "kattn/heads.hpp"

#include "kattn/errors.hpp"

namespace kattn {

Classifier::Classifier(std::size_t in, std::size_t hidden_dim, std::size_t classes,
                       std::mt19937_64& rng)
    : hidden(in, hidden_dim, rng), logits(hidden_dim, classes, rng) {}

Tensor Classifier::forward(const Tensor& features, const ForwardContext& ctx,
                           double dropout_rate) const {
  return classify(ctx.drop(relu(hidden.forward(features)), dropout_rate), logits);
}

void Classifier::collect(ParamList& out, const std::string& prefix) const {
  hidden.collect(out, prefix + ".hidden");
  logits.collect(out, prefix + ".logits");
}

Tensor classify(const Tensor& features, const Linear& layer) {
  if (features.cols() != layer.in_dim()) {
    throw DimensionError("classifier expects " + std::to_string(layer.in_dim()) +
                         " features, got " + shape_str(features.shape()));
  }
  return layer.forward(features);
}

MultiChannelAttention::MultiChannelAttention(std::span<const std::size_t> channel_dims,
                                             std::size_t hidden, std::size_t classes,
                                             std::mt19937_64& rng)
    : context(xavier(hidden, 1, rng)), logits(hidden, classes, rng) {
  for (std::size_t d : channel_dims) channels.emplace_back(d, hidden, rng);
}

void MultiChannelAttention::collect(ParamList& out, const std::string& prefix) const {
  for (std::size_t j = 0; j < channels.size(); ++j) {
    channels[j].collect(out, prefix + ".channel." + std::to_string(j));
  }
  out.push_back({prefix + ".context", context});
  logits.collect(out, prefix + ".logits");
}

ChannelMix mca_combine(const std::vector<Tensor>& features, const MultiChannelAttention& params) {
  if (features.empty()) throw ConfigError("multi-channel attention needs at least one channel");
  if (features.size() != params.channels.size()) {
    throw ConfigError("multi-channel attention configured for " +
                      std::to_string(params.channels.size()) + " channels, got " +
                      std::to_string(features.size()));
  }
  std::vector<Tensor> hidden;
  std::vector<Tensor> scores;
  for (std::size_t j = 0; j < features.size(); ++j) {
    hidden.push_back(relu(params.channels[j].forward(features[j])));
    scores.push_back(matmul(hidden.back(), params.context));
  }
  ChannelMix mix;
  mix.weights = softmax_rows(concat_cols(scores));
  Tensor combined = scale_rows(hidden[0], select_col(mix.weights, 0));
  for (std::size_t j = 1; j < hidden.size(); ++j) {
    combined = add(combined, scale_rows(hidden[j], select_col(mix.weights, j)));
  }
  mix.combined = combined;
  return mix;
}

std::vector<double> interpolate(std::span<const double> p1, std::span<const double> p2,
                                double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) {
    throw ConfigError("interpolation weight beta must lie in [0, 1], got " + std::to_string(beta));
  }
  if (p1.size() != p2.size()) throw DimensionError("interpolate: distributions differ in size");
  std::vector<double> out(p1.size());
  // Endpoints return the selected channel bit-for-bit.
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = beta == 1.0   ? p1[i]
             : beta == 0.0 ? p2[i]
                           : beta * p1[i] + (1.0 - beta) * p2[i];
  }
  return out;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace kattn
