#include "kattn/layers.hpp"

#include <cmath>

#include "kattn/errors.hpp"

namespace kattn {

Tensor ForwardContext::drop(const Tensor& x, double rate) const {
  if (!train || rate == 0.0) return x;
  if (rng == nullptr) throw ConfigError("training forward pass without an RNG stream");
  return dropout(x, rate, true, *rng);
}

Tensor uniform_param(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(shape_size(shape));
  for (double& v : values) v = dist(rng);
  return Tensor::parameter(std::move(shape), std::move(values));
}

Tensor xavier(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return uniform_param({fan_in, fan_out}, bound, rng);
}

Linear::Linear(std::size_t in, std::size_t out, std::mt19937_64& rng)
    : weight(xavier(in, out, rng)), bias(Tensor::parameter({1, out}, std::vector<double>(out))) {}

void Linear::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

FeedForward::FeedForward(std::size_t dim, std::size_t hidden, std::mt19937_64& rng)
    : inner(dim, hidden, rng), outer(hidden, dim, rng) {}

void FeedForward::collect(ParamList& out, const std::string& prefix) const {
  inner.collect(out, prefix + ".inner");
  outer.collect(out, prefix + ".outer");
}

}  // namespace kattn
