#pragma once

#include <random>
#include <string>
#include <vector>

#include "kattn/encoders.hpp"
#include "kattn/layers.hpp"
#include "kattn/positions.hpp"
#include "kattn/tensor.hpp"

namespace kattn {

enum class PoolingMode {
  PositionAware,  // tanh(O W_o + P W_p) c scores
  ContentOnly,    // position term dropped (relative-position ablation)
  Mean,           // uniform average over non-padded tokens (diagnostic)
};

struct PooledOutput {
  Tensor features;  // batch x d
  Tensor weights;   // batch x len, zero at padding
};

/// Scores every token from its encoder output and its binned
/// subject/object position embeddings, then averages outputs by the
/// softmax of those scores.
struct PositionAwareAttention {
  Tensor content;   // d x d_a   (W_o)
  Tensor position;  // d_p x d_a (W_p)
  Tensor context;   // d_a x 1   (c)

  PositionAwareAttention() = default;
  PositionAwareAttention(std::size_t dim, std::size_t position_dim, std::size_t attention_dim,
                         std::mt19937_64& rng);

  /// `pad` hides tokens from the softmax; every sequence needs one visible token.
  PooledOutput forward(const Tensor& outputs, const Tensor& positions,
                       const SequenceLayout& layout, const std::vector<bool>& pad,
                       PoolingMode mode = PoolingMode::PositionAware) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

/// Single-sequence pooling: returns f (1 x d) and the attention weights.
PooledOutput position_aware_pool(const Tensor& outputs, const Tensor& positions,
                                 const PositionAwareAttention& params,
                                 const std::vector<bool>& pad);

}  // namespace kattn
