#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "kattn/tensor.hpp"

namespace kattn {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

using ParamList = std::vector<NamedParam>;

/// Training flag plus the dropout RNG stream for one forward pass.
struct ForwardContext {
  bool train = false;
  std::mt19937_64* rng = nullptr;

  Tensor drop(const Tensor& x, double rate) const;
};

/// Glorot-uniform matrix parameter.
Tensor xavier(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);
Tensor uniform_param(Shape shape, double bound, std::mt19937_64& rng);

/// y = x W + b.
struct Linear {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out

  Linear() = default;
  Linear(std::size_t in, std::size_t out, std::mt19937_64& rng);

  Tensor forward(const Tensor& x) const { return add_row(matmul(x, weight), bias); }
  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }
  void collect(ParamList& out, const std::string& prefix) const;
};

/// Position-wise two-layer ReLU network d -> inner -> d.
struct FeedForward {
  Linear inner;
  Linear outer;

  FeedForward() = default;
  FeedForward(std::size_t dim, std::size_t hidden, std::mt19937_64& rng);

  Tensor forward(const Tensor& x) const { return outer.forward(relu(inner.forward(x))); }
  void collect(ParamList& out, const std::string& prefix) const;
};

}  // namespace kattn
