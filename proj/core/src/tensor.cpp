#include "kattn/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "kattn/errors.hpp"

namespace kattn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

thread_local Tape* g_active_tape = nullptr;

ConstMatMap view(const TensorImpl& t) {
  return ConstMatMap(t.data.data(), static_cast<Eigen::Index>(t.shape[0]),
                     static_cast<Eigen::Index>(t.shape[1]));
}

MatMap view_mut(std::vector<double>& buf, std::size_t r, std::size_t c) {
  return MatMap(buf.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " +
                         shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

[[noreturn]] void throw_dims(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) +
                       " and " + shape_str(b.shape()));
}

Tensor make_output(Shape shape, std::vector<double> values) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  return Tensor(std::move(impl));
}

// Records `backward` when a tape is active and any input needs a gradient.
// The rule receives the output impl; inputs are captured by the caller.
void record(const char* op, std::initializer_list<const Tensor*> inputs, Tensor& out,
            std::function<void(TensorImpl&)> backward) {
  Tape* tape = g_active_tape;
  if (tape == nullptr) return;
  bool any = false;
  for (const Tensor* in : inputs) any = any || in->requires_grad();
  if (!any) return;
  out.set_requires_grad(true);
  Tape::Node node;
  node.op = op;
  for (const Tensor* in : inputs) node.inputs.push_back(in->impl());
  node.output = out.impl();
  std::weak_ptr<TensorImpl> weak_out = out.impl();
  node.backward = [weak_out, fn = std::move(backward)]() {
    auto o = weak_out.lock();
    if (o && !o->grad.empty()) fn(*o);
  };
  tape->record(std::move(node));
}

// Gradient buffer of an input, allocated on first use; nullptr when the input
// does not take part in differentiation.
double* grad_of(const std::shared_ptr<TensorImpl>& t) {
  if (!t->requires_grad) return nullptr;
  t->ensure_grad();
  return t->grad.data();
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void TensorImpl::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
}

// ---- Tensor ----------------------------------------------------------------

Tensor::Tensor() : impl_(std::make_shared<TensorImpl>()) {}

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
  const std::size_t n = shape_size(shape);
  return make_output(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  if (shape_size(shape) != values.size()) {
    throw DimensionError("Tensor::from: shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_size(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  return make_output(std::move(shape), std::move(values));
}

Tensor Tensor::scalar(double value) { return make_output({}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t = from(std::move(shape), std::move(values));
  t.set_requires_grad(true);
  return t;
}

std::size_t Tensor::rows() const { return rank() >= 1 ? impl_->shape[0] : 1; }

std::size_t Tensor::cols() const { return rank() >= 2 ? impl_->shape[1] : 1; }

double Tensor::at(std::size_t r, std::size_t c) const {
  if (rank() != 2 || r >= rows() || c >= cols()) {
    throw IndexError("Tensor::at(" + std::to_string(r) + ", " + std::to_string(c) +
                     ") out of range for shape " + shape_str(shape()));
  }
  return impl_->data[r * cols() + c];
}

double Tensor::item() const {
  if (size() != 1) {
    throw DimensionError("Tensor::item on shape " + shape_str(shape()));
  }
  return impl_->data[0];
}

std::vector<double> Tensor::grad() const {
  if (impl_->grad.empty()) return std::vector<double>(size(), 0.0);
  return impl_->grad;
}

std::span<double> Tensor::mutable_grad() {
  impl_->ensure_grad();
  return impl_->grad;
}

void Tensor::zero_grad() { std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0); }

Tensor Tensor::detach() const { return make_output(impl_->shape, impl_->data); }

Tensor Tensor::clone() const {
  Tensor t = detach();
  t.set_requires_grad(requires_grad());
  return t;
}

// ---- Tape ------------------------------------------------------------------

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw DimensionError("Tape::backward needs a scalar loss, got " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;
  loss.impl()->ensure_grad();
  loss.impl()->grad[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward();
}

Tape* active_tape() { return g_active_tape; }

TapeGuard::TapeGuard(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeGuard::~TapeGuard() { g_active_tape = previous_; }

NoGradGuard::NoGradGuard() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradGuard::~NoGradGuard() { g_active_tape = previous_; }

// ---- matrix products -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.cols() != b.rows()) throw_dims("matmul", a, b);
  const std::size_t n = a.rows(), p = b.cols();
  std::vector<double> out(n * p);
  view_mut(out, n, p).noalias() = view(*a.impl()) * view(*b.impl());
  Tensor c = make_output({n, p}, std::move(out));
  auto ai = a.impl(), bi = b.impl();
  record("matmul", {&a, &b}, c, [ai, bi](TensorImpl& o) {
    ConstMatMap dc(o.grad.data(), o.shape[0], o.shape[1]);
    if (double* ga = grad_of(ai)) {
      MatMap(ga, ai->shape[0], ai->shape[1]).noalias() += dc * view(*bi).transpose();
    }
    if (double* gb = grad_of(bi)) {
      MatMap(gb, bi->shape[0], bi->shape[1]).noalias() += view(*ai).transpose() * dc;
    }
  });
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  if (a.cols() != b.cols()) throw_dims("matmul_nt", a, b);
  const std::size_t n = a.rows(), p = b.rows();
  std::vector<double> out(n * p);
  view_mut(out, n, p).noalias() = view(*a.impl()) * view(*b.impl()).transpose();
  Tensor c = make_output({n, p}, std::move(out));
  auto ai = a.impl(), bi = b.impl();
  record("matmul_nt", {&a, &b}, c, [ai, bi](TensorImpl& o) {
    ConstMatMap dc(o.grad.data(), o.shape[0], o.shape[1]);
    if (double* ga = grad_of(ai)) {
      MatMap(ga, ai->shape[0], ai->shape[1]).noalias() += dc * view(*bi);
    }
    if (double* gb = grad_of(bi)) {
      MatMap(gb, bi->shape[0], bi->shape[1]).noalias() += dc.transpose() * view(*ai);
    }
  });
  return c;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t n = a.rows(), m = a.cols();
  std::vector<double> out(n * m);
  view_mut(out, m, n) = view(*a.impl()).transpose();
  Tensor c = make_output({m, n}, std::move(out));
  auto ai = a.impl();
  record("transpose", {&a}, c, [ai](TensorImpl& o) {
    if (double* ga = grad_of(ai)) {
      MatMap(ga, ai->shape[0], ai->shape[1]) +=
          ConstMatMap(o.grad.data(), o.shape[0], o.shape[1]).transpose();
    }
  });
  return c;
}

// ---- elementwise -----------------------------------------------------------

namespace {

template <typename Fwd, typename Da, typename Db>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, Da da, Db db) {
  require_same_shape(a, b, op);
  const auto& x = a.impl()->data;
  const auto& y = b.impl()->data;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i], y[i]);
  Tensor c = make_output(a.shape(), std::move(out));
  auto ai = a.impl(), bi = b.impl();
  record(op, {&a, &b}, c, [ai, bi, da, db](TensorImpl& o) {
    double* ga = grad_of(ai);
    double* gb = grad_of(bi);
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      if (ga) ga[i] += da(ai->data[i], bi->data[i]) * o.grad[i];
      if (gb) gb[i] += db(ai->data[i], bi->data[i]) * o.grad[i];
    }
  });
  return c;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= factor;
  Tensor c = make_output(a.shape(), std::move(out));
  auto ai = a.impl();
  record("scale", {&a}, c, [ai, factor](TensorImpl& o) {
    if (double* ga = grad_of(ai)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += factor * o.grad[i];
    }
  });
  return c;
}

namespace {

Tensor row_broadcast(const char* op, const Tensor& x, const Tensor& row, double sign) {
  require_rank2(x, op);
  if (row.size() != x.cols() || (row.rank() == 2 && row.rows() != 1)) throw_dims(op, x, row);
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto& r = row.impl()->data;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] += sign * r[j];
  }
  Tensor c = make_output(x.shape(), std::move(out));
  auto xi = x.impl(), ri = row.impl();
  record(op, {&x, &row}, c, [xi, ri, sign, n, d](TensorImpl& o) {
    if (double* gx = grad_of(xi)) {
      for (std::size_t i = 0; i < n * d; ++i) gx[i] += o.grad[i];
    }
    if (double* gr = grad_of(ri)) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) gr[j] += sign * o.grad[i * d + j];
      }
    }
  });
  return c;
}

}  // namespace

Tensor add_row(const Tensor& x, const Tensor& row) { return row_broadcast("add_row", x, row, 1.0); }

Tensor sub_row(const Tensor& x, const Tensor& row) {
  return row_broadcast("sub_row", x, row, -1.0);
}

Tensor scale_rows(const Tensor& x, const Tensor& w) {
  require_rank2(x, "scale_rows");
  if (w.size() != x.rows()) throw_dims("scale_rows", x, w);
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] *= w[i];
  }
  Tensor c = make_output(x.shape(), std::move(out));
  auto xi = x.impl(), wi = w.impl();
  record("scale_rows", {&x, &w}, c, [xi, wi, n, d](TensorImpl& o) {
    double* gx = grad_of(xi);
    double* gw = grad_of(wi);
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double g = o.grad[i * d + j];
        if (gx) gx[i * d + j] += wi->data[i] * g;
        acc += xi->data[i * d + j] * g;
      }
      if (gw) gw[i] += acc;
    }
  });
  return c;
}

Tensor tanh(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x[i]);
  Tensor c = make_output(x.shape(), std::move(out));
  auto xi = x.impl();
  record("tanh", {&x}, c, [xi](TensorImpl& o) {
    if (double* gx = grad_of(xi)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) {
        const double y = o.data[i];
        gx[i] += (1.0 - y * y) * o.grad[i];
      }
    }
  });
  return c;
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  Tensor c = make_output(x.shape(), std::move(out));
  auto xi = x.impl();
  record("relu", {&x}, c, [xi](TensorImpl& o) {
    if (double* gx = grad_of(xi)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) {
        if (xi->data[i] > 0.0) gx[i] += o.grad[i];
      }
    }
  });
  return c;
}

Tensor dropout(const Tensor& x, double rate, bool train, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!train || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::bernoulli_distribution drop(rate);
  std::vector<double> factor(x.size());
  for (double& f : factor) f = drop(rng) ? 0.0 : keep_scale;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor[i];
  Tensor c = make_output(x.shape(), std::move(out));
  auto xi = x.impl();
  record("dropout", {&x}, c, [xi, factor = std::move(factor)](TensorImpl& o) {
    if (double* gx = grad_of(xi)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += factor[i] * o.grad[i];
    }
  });
  return c;
}

// ---- shape manipulation ----------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
  }
  Tensor c = make_output(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  auto xi = x.impl();
  record("reshape", {&x}, c, [xi](TensorImpl& o) {
    if (double* gx = grad_of(xi)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i];
    }
  });
  return c;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t n = parts.front().rows();
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.rows() != n) throw_dims("concat_cols", parts.front(), p);
    total += p.cols();
  }
  std::vector<double> out(n * total);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(p.data().begin() + i * w, w, out.begin() + i * total + offset);
    }
    offset += w;
  }
  Tensor c = make_output({n, total}, std::move(out));
  Tape* tape = active_tape();
  bool any = std::any_of(parts.begin(), parts.end(), [](const Tensor& p) { return p.requires_grad(); });
  if (tape && any) {
    c.set_requires_grad(true);
    Tape::Node node;
    node.op = "concat_cols";
    std::vector<std::shared_ptr<TensorImpl>> ins;
    for (const Tensor& p : parts) ins.push_back(p.impl());
    node.inputs = ins;
    node.output = c.impl();
    std::weak_ptr<TensorImpl> weak = c.impl();
    node.backward = [weak, ins, n, total]() {
      auto o = weak.lock();
      if (!o || o->grad.empty()) return;
      std::size_t off = 0;
      for (const auto& p : ins) {
        const std::size_t w = p->shape[1];
        if (double* g = grad_of(p)) {
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < w; ++j) g[i * w + j] += o->grad[i * total + off + j];
          }
        }
        off += w;
      }
    };
    tape->record(std::move(node));
  }
  return c;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t d = parts.front().cols();
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.cols() != d) throw_dims("concat_rows", parts.front(), p);
    total += p.rows();
  }
  std::vector<double> out;
  out.reserve(total * d);
  for (const Tensor& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  Tensor c = make_output({total, d}, std::move(out));
  Tape* tape = active_tape();
  bool any = std::any_of(parts.begin(), parts.end(), [](const Tensor& p) { return p.requires_grad(); });
  if (tape && any) {
    c.set_requires_grad(true);
    Tape::Node node;
    node.op = "concat_rows";
    std::vector<std::shared_ptr<TensorImpl>> ins;
    for (const Tensor& p : parts) ins.push_back(p.impl());
    node.inputs = ins;
    node.output = c.impl();
    std::weak_ptr<TensorImpl> weak = c.impl();
    node.backward = [weak, ins]() {
      auto o = weak.lock();
      if (!o || o->grad.empty()) return;
      std::size_t off = 0;
      for (const auto& p : ins) {
        const std::size_t len = p->data.size();
        if (double* g = grad_of(p)) {
          for (std::size_t i = 0; i < len; ++i) g[i] += o->grad[off + i];
        }
        off += len;
      }
    };
    tape->record(std::move(node));
  }
  return c;
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  require_rank2(x, "slice_rows");
  if (begin + count > x.rows()) {
    throw IndexError("slice_rows: rows [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " + shape_str(x.shape()));
  }
  const std::size_t d = x.cols();
  std::vector<double> out(x.data().begin() + begin * d, x.data().begin() + (begin + count) * d);
  Tensor c = make_output({count, d}, std::move(out));
  auto xi = x.impl();
  record("slice_rows", {&x}, c, [xi, begin, d](TensorImpl& o) {
    if (double* gx = grad_of(xi)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) gx[begin * d + i] += o.grad[i];
    }
  });
  return c;
}

Tensor select_col(const Tensor& x, std::size_t col) {
  require_rank2(x, "select_col");
  if (col >= x.cols()) throw IndexError("select_col: column out of range");
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i * d + col];
  Tensor c = make_output({n, 1}, std::move(out));
  auto xi = x.impl();
  record("select_col", {&x}, c, [xi, col, n, d](TensorImpl& o) {
    if (double* gx = grad_of(xi)) {
      for (std::size_t i = 0; i < n; ++i) gx[i * d + col] += o.grad[i];
    }
  });
  return c;
}

Tensor mask_rows(const Tensor& x, const std::vector<bool>& zero_row) {
  require_rank2(x, "mask_rows");
  if (zero_row.size() != x.rows()) {
    throw DimensionError("mask_rows: mask length " + std::to_string(zero_row.size()) +
                         " does not match " + shape_str(x.shape()));
  }
  const std::size_t d = x.cols();
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < zero_row.size(); ++i) {
    if (zero_row[i]) std::fill_n(out.begin() + i * d, d, 0.0);
  }
  Tensor c = make_output(x.shape(), std::move(out));
  auto xi = x.impl();
  record("mask_rows", {&x}, c, [xi, zero_row, d](TensorImpl& o) {
    if (double* gx = grad_of(xi)) {
      for (std::size_t i = 0; i < zero_row.size(); ++i) {
        if (zero_row[i]) continue;
        for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += o.grad[i * d + j];
      }
    }
  });
  return c;
}

// ---- reductions ------------------------------------------------------------

Tensor mean_rows(const Tensor& x) {
  require_rank2(x, "mean_rows");
  const std::size_t n = x.rows(), d = x.cols();
  if (n == 0) throw DimensionError("mean_rows: no rows");
  std::vector<double> out(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[j] += x[i * d + j];
  }
  for (double& v : out) v /= static_cast<double>(n);
  Tensor c = make_output({1, d}, std::move(out));
  auto xi = x.impl();
  record("mean_rows", {&x}, c, [xi, n, d](TensorImpl& o) {
    if (double* gx = grad_of(xi)) {
      const double inv = 1.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += o.grad[j] * inv;
      }
    }
  });
  return c;
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor c = Tensor::scalar(s);
  auto xi = x.impl();
  record("sum", {&x}, c, [xi](TensorImpl& o) {
    if (double* gx = grad_of(xi)) {
      for (std::size_t i = 0; i < xi->data.size(); ++i) gx[i] += o.grad[0];
    }
  });
  return c;
}

namespace {

Tensor softmax_impl(const Tensor& x, const std::vector<bool>* masked) {
  require_rank2(x, "softmax_rows");
  const std::size_t n = x.rows(), m = x.cols();
  if (m == 0) throw DimensionError("softmax_rows: rows must be nonempty");
  if (masked && masked->size() != n * m) {
    throw DimensionError("softmax_rows: mask size does not match " + shape_str(x.shape()));
  }
  std::vector<double> out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      if (masked && (*masked)[i * m + j]) continue;
      mx = std::max(mx, x[i * m + j]);
    }
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw DataError("softmax_rows: row " + std::to_string(i) + " is fully masked");
    }
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (masked && (*masked)[i * m + j]) continue;
      const double e = std::exp(x[i * m + j] - mx);
      out[i * m + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] /= z;
  }
  Tensor c = make_output(x.shape(), std::move(out));
  auto xi = x.impl();
  record("softmax_rows", {&x}, c, [xi, n, m](TensorImpl& o) {
    if (double* gx = grad_of(xi)) {
      for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < m; ++j) dot += o.grad[i * m + j] * o.data[i * m + j];
        for (std::size_t j = 0; j < m; ++j) {
          gx[i * m + j] += o.data[i * m + j] * (o.grad[i * m + j] - dot);
        }
      }
    }
  });
  return c;
}

}  // namespace

Tensor softmax_rows(const Tensor& x) { return softmax_impl(x, nullptr); }

Tensor softmax_rows(const Tensor& x, const std::vector<bool>& masked) {
  return softmax_impl(x, &masked);
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> gold) {
  require_rank2(logits, "cross_entropy");
  const std::size_t b = logits.rows(), classes = logits.cols();
  if (gold.size() != b) {
    throw DimensionError("cross_entropy: " + std::to_string(gold.size()) + " labels for " +
                         std::to_string(b) + " rows");
  }
  for (std::size_t g : gold) {
    if (g >= classes) {
      throw LabelError("cross_entropy: gold id " + std::to_string(g) + " outside [0, " +
                       std::to_string(classes) + ")");
    }
  }
  std::vector<double> probs(b * classes);
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double* row = logits.data().data() + i * classes;
    const std::size_t top = static_cast<std::size_t>(std::max_element(row, row + classes) - row);
    const double mx = row[top];
    // log z = mx + log1p(rest) keeps small losses accurate.
    double rest = 0.0;
    for (std::size_t j = 0; j < classes; ++j) {
      if (j != top) rest += std::exp(row[j] - mx);
    }
    const double log_rest = std::log1p(rest);
    const double log_z = mx + log_rest;
    for (std::size_t j = 0; j < classes; ++j) probs[i * classes + j] = std::exp(row[j] - log_z);
    loss += (mx - row[gold[i]]) + log_rest;
  }
  loss /= static_cast<double>(b);
  Tensor c = Tensor::scalar(loss);
  auto li = logits.impl();
  std::vector<std::size_t> labels(gold.begin(), gold.end());
  record("cross_entropy", {&logits}, c,
         [li, probs = std::move(probs), labels = std::move(labels), b, classes](TensorImpl& o) {
           if (double* gl = grad_of(li)) {
             const double s = o.grad[0] / static_cast<double>(b);
             for (std::size_t i = 0; i < b; ++i) {
               for (std::size_t j = 0; j < classes; ++j) {
                 const double onehot = j == labels[i] ? 1.0 : 0.0;
                 gl[i * classes + j] += s * (probs[i * classes + j] - onehot);
               }
             }
           }
         });
  return c;
}

// ---- lookups ---------------------------------------------------------------

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  require_rank2(table, "gather_rows");
  const std::size_t v = table.rows(), d = table.cols();
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= v) {
      throw IndexError("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                       std::to_string(v) + " rows");
    }
    std::copy_n(table.data().begin() + ids[i] * d, d, out.begin() + i * d);
  }
  Tensor c = make_output({ids.size(), d}, std::move(out));
  auto ti = table.impl();
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  record("gather_rows", {&table}, c, [ti, idx = std::move(idx), d](TensorImpl& o) {
    if (double* gt = grad_of(ti)) {
      for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < d; ++j) gt[idx[i] * d + j] += o.grad[i * d + j];
      }
    }
  });
  return c;
}

Tensor mean_gather_rows(const Tensor& table, const std::vector<std::vector<std::size_t>>& groups) {
  require_rank2(table, "mean_gather_rows");
  const std::size_t v = table.rows(), d = table.cols();
  std::vector<double> out(groups.size() * d, 0.0);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (groups[i].empty()) throw DimensionError("mean_gather_rows: empty group");
    const double inv = 1.0 / static_cast<double>(groups[i].size());
    for (std::size_t id : groups[i]) {
      if (id >= v) throw IndexError("mean_gather_rows: id out of range");
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] += table[id * d + j];
    }
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] *= inv;
  }
  Tensor c = make_output({groups.size(), d}, std::move(out));
  auto ti = table.impl();
  record("mean_gather_rows", {&table}, c, [ti, groups, d](TensorImpl& o) {
    if (double* gt = grad_of(ti)) {
      for (std::size_t i = 0; i < groups.size(); ++i) {
        const double inv = 1.0 / static_cast<double>(groups[i].size());
        for (std::size_t id : groups[i]) {
          for (std::size_t j = 0; j < d; ++j) gt[id * d + j] += inv * o.grad[i * d + j];
        }
      }
    }
  });
  return c;
}

Tensor relative_gather(const Tensor& qa, std::size_t clip) {
  require_rank2(qa, "relative_gather");
  const std::size_t width = 2 * clip + 1;
  if (qa.cols() != width) {
    throw DimensionError("relative_gather: expected " + std::to_string(width) +
                         " offset columns, got " + shape_str(qa.shape()));
  }
  const std::size_t n = qa.rows();
  const auto offset_col = [clip](std::size_t i, std::size_t j) {
    const long rel = static_cast<long>(j) - static_cast<long>(i);
    const long c = std::clamp(rel, -static_cast<long>(clip), static_cast<long>(clip));
    return static_cast<std::size_t>(c + static_cast<long>(clip));
  };
  std::vector<double> out(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = qa[i * width + offset_col(i, j)];
  }
  Tensor c = make_output({n, n}, std::move(out));
  auto qi = qa.impl();
  record("relative_gather", {&qa}, c, [qi, n, width, offset_col](TensorImpl& o) {
    if (double* gq = grad_of(qi)) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) gq[i * width + offset_col(i, j)] += o.grad[i * n + j];
      }
    }
  });
  return c;
}

Tensor segment_weighted_sum(const Tensor& weights, const Tensor& values) {
  require_rank2(weights, "segment_weighted_sum");
  require_rank2(values, "segment_weighted_sum");
  const std::size_t b = weights.rows(), len = weights.cols(), d = values.cols();
  if (values.rows() != b * len) throw_dims("segment_weighted_sum", weights, values);
  std::vector<double> out(b * d, 0.0);
  for (std::size_t s = 0; s < b; ++s) {
    for (std::size_t t = 0; t < len; ++t) {
      const double w = weights[s * len + t];
      if (w == 0.0) continue;
      const double* row = values.data().data() + (s * len + t) * d;
      for (std::size_t j = 0; j < d; ++j) out[s * d + j] += w * row[j];
    }
  }
  Tensor c = make_output({b, d}, std::move(out));
  auto wi = weights.impl(), vi = values.impl();
  record("segment_weighted_sum", {&weights, &values}, c, [wi, vi, b, len, d](TensorImpl& o) {
    double* gw = grad_of(wi);
    double* gv = grad_of(vi);
    for (std::size_t s = 0; s < b; ++s) {
      const double* go = o.grad.data() + s * d;
      for (std::size_t t = 0; t < len; ++t) {
        const std::size_t r = s * len + t;
        if (gw) {
          double acc = 0.0;
          for (std::size_t j = 0; j < d; ++j) acc += go[j] * vi->data[r * d + j];
          gw[s * len + t] += acc;
        }
        if (gv) {
          const double w = wi->data[s * len + t];
          for (std::size_t j = 0; j < d; ++j) gv[r * d + j] += w * go[j];
        }
      }
    }
  });
  return c;
}

}  // namespace kattn
