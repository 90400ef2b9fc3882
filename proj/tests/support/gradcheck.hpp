#pragma once

// Central finite-difference gradient checking and the catalogue of gradient
// cases shared by the unit tests and the acceptance binary.

#include <cstddef>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "kattn/layers.hpp"
#include "kattn/tensor.hpp"

namespace kattn::testkit {

/// Parameter tensor with entries uniform in [lo, hi].
Tensor random_param(const Shape& shape, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0);
/// Constant (non-parameter) tensor with entries uniform in [lo, hi].
Tensor random_const(const Shape& shape, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0);

/// sum(x * w) for a fixed random w, turning any output into a scalar whose
/// gradient exercises every output entry differently.
Tensor probe(const Tensor& x, std::uint64_t seed = 99);

struct GradResult {
  /// max over parameters of ||analytic - numeric|| / max(||analytic||, ||numeric||).
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t entries = 0;
};

/// Compares tape gradients of `loss` against central differences with the
/// given step on every entry of every listed parameter.
GradResult check_gradients(const std::function<Tensor()>& loss, const ParamList& params,
                           double step = 1e-4);

struct GradCase {
  std::string name;
  std::function<GradResult()> run;
};

/// Every differentiable tensor op, each encoder at tiny dims (d=6, h=2, n=3,
/// m=4), pooling, the heads, the SI total loss and a composed chain.
std::vector<GradCase> gradient_cases();

}  // namespace kattn::testkit
