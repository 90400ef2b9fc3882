#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kattn/layers.hpp"
#include "kattn/tensor.hpp"

namespace kattn {

/// f -> ReLU(fully connected) -> affine logits.
struct Classifier {
  Linear hidden;
  Linear logits;

  Classifier() = default;
  Classifier(std::size_t in, std::size_t hidden_dim, std::size_t classes, std::mt19937_64& rng);

  Tensor forward(const Tensor& features, const ForwardContext& ctx = {},
                 double dropout_rate = 0.0) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

/// Affine map to class logits (the softmax classifier on top of a feature vector).
Tensor classify(const Tensor& features, const Linear& layer);

struct ChannelMix {
  Tensor combined;  // batch x hidden
  Tensor weights;   // batch x channels
};

/// Per-channel ReLU projection to a shared hidden size, softmax over channels
/// of h_j . c, and the weighted sum of the h_j.
struct MultiChannelAttention {
  std::vector<Linear> channels;
  Tensor context;  // hidden x 1
  Linear logits;

  MultiChannelAttention() = default;
  MultiChannelAttention(std::span<const std::size_t> channel_dims, std::size_t hidden,
                        std::size_t classes, std::mt19937_64& rng);

  void collect(ParamList& out, const std::string& prefix) const;
};

ChannelMix mca_combine(const std::vector<Tensor>& features, const MultiChannelAttention& params);

/// beta * p1 + (1 - beta) * p2 for two distributions (or rows of them).
std::vector<double> interpolate(std::span<const double> p1, std::span<const double> p2,
                                double beta);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

}  // namespace kattn
