#include "kattn/pooling.hpp"

#include <algorithm>

#include "kattn/errors.hpp"

namespace kattn {

PositionAwareAttention::PositionAwareAttention(std::size_t dim, std::size_t position_dim,
                                               std::size_t attention_dim, std::mt19937_64& rng)
    : content(xavier(dim, attention_dim, rng)),
      position(xavier(position_dim, attention_dim, rng)),
      context(xavier(attention_dim, 1, rng)) {}

PooledOutput PositionAwareAttention::forward(const Tensor& outputs, const Tensor& positions,
                                             const SequenceLayout& layout,
                                             const std::vector<bool>& pad,
                                             PoolingMode mode) const {
  if (outputs.rows() != layout.rows() || pad.size() != layout.rows()) {
    throw DimensionError("pooling: layout covers " + std::to_string(layout.rows()) +
                         " rows, outputs " + shape_str(outputs.shape()) + ", pad mask " +
                         std::to_string(pad.size()));
  }
  for (std::size_t s = 0; s < layout.batch; ++s) {
    const auto first = pad.begin() + static_cast<std::ptrdiff_t>(s * layout.len);
    if (std::all_of(first, first + static_cast<std::ptrdiff_t>(layout.len),
                    [](bool p) { return p; })) {
      throw DataError("pooling: sequence " + std::to_string(s) + " is entirely padding");
    }
  }
  Tensor scores;
  if (mode == PoolingMode::Mean) {
    scores = Tensor::zeros({layout.batch, layout.len});
  } else {
    Tensor hidden = matmul(outputs, content);
    if (mode == PoolingMode::PositionAware) {
      if (positions.rows() != outputs.rows()) {
        throw DimensionError("pooling: position features " + shape_str(positions.shape()) +
                             " do not match outputs " + shape_str(outputs.shape()));
      }
      hidden = add(hidden, matmul(positions, position));
    }
    scores = reshape(matmul(tanh(hidden), context), {layout.batch, layout.len});
  }
  PooledOutput out;
  out.weights = softmax_rows(scores, pad);
  out.features = segment_weighted_sum(out.weights, outputs);
  return out;
}

void PositionAwareAttention::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".content", content});
  out.push_back({prefix + ".position", position});
  out.push_back({prefix + ".context", context});
}

PooledOutput position_aware_pool(const Tensor& outputs, const Tensor& positions,
                                 const PositionAwareAttention& params,
                                 const std::vector<bool>& pad) {
  return params.forward(outputs, positions, SequenceLayout::single(outputs.rows()), pad);
}

}  // namespace kattn
