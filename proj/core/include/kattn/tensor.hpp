#pragma once

// Dense row-major float64 tensors with a reverse-mode gradient tape.
//
// Tensors are cheap handles onto shared storage. Operations record a backward
// rule on the thread's active Tape (see TapeGuard) whenever at least one input
// requires a gradient; with no active tape every op is a plain forward
// computation. Vectors are represented as 1 x d rows and scalars have an empty
// shape.

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace kattn {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient reaches this tensor
  bool requires_grad = false;

  void ensure_grad();
};

class Tensor {
 public:
  Tensor();
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);
  /// Leaf parameter that accumulates gradients.
  static Tensor parameter(Shape shape, std::vector<double> values);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->data.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return impl_->data; }
  std::span<double> mutable_data() { return impl_->data; }
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double at(std::size_t r, std::size_t c) const;
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }
  bool has_grad() const { return !impl_->grad.empty(); }
  /// Gradient buffer; zeros if nothing has been accumulated yet.
  std::vector<double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Copy of the values that never participates in the tape.
  Tensor detach() const;
  Tensor clone() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Ordered record of differentiable operations. Nodes are appended in
/// execution order, so inputs always precede the node that consumes them.
class Tape {
 public:
  struct Node {
    std::string op;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::shared_ptr<TensorImpl> output;
    std::function<void()> backward;
  };

  void record(Node node) { nodes_.push_back(std::move(node)); }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  void clear() { nodes_.clear(); }

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded rule once in reverse.
  void backward(const Tensor& loss);

 private:
  std::vector<Node> nodes_;
};

Tape* active_tape();

/// Makes `tape` the recording target for the current thread while alive.
class TapeGuard {
 public:
  explicit TapeGuard(Tape& tape);
  ~TapeGuard();
  TapeGuard(const TapeGuard&) = delete;
  TapeGuard& operator=(const TapeGuard&) = delete;

 private:
  Tape* previous_;
};

/// Temporarily stops recording (evaluation passes).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape* previous_;
};

// ---- matrix products -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// x[n x d] + row[1 x d] broadcast over rows.
Tensor add_row(const Tensor& x, const Tensor& row);
/// x[n x d] - row[1 x d] broadcast over rows.
Tensor sub_row(const Tensor& x, const Tensor& row);
/// Multiplies row i of x[n x d] by w[n x 1].
Tensor scale_rows(const Tensor& x, const Tensor& w);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);

/// Inverted dropout: identity when !train, otherwise zeroes entries with
/// probability `rate` and scales survivors by 1/(1-rate).
Tensor dropout(const Tensor& x, double rate, bool train, std::mt19937_64& rng);

// ---- shape manipulation ----------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
Tensor select_col(const Tensor& x, std::size_t col);
/// Zeroes the rows where `zero_row[i]` is true.
Tensor mask_rows(const Tensor& x, const std::vector<bool>& zero_row);

// ---- reductions ------------------------------------------------------------

/// Column means of x[n x d] as a 1 x d row.
Tensor mean_rows(const Tensor& x);
Tensor sum(const Tensor& x);

/// Row-wise softmax, stabilized by subtracting each row's max.
Tensor softmax_rows(const Tensor& x);
/// Row-wise softmax where entries with `masked[r * cols + c]` get weight 0.
/// A fully-masked row is a DataError.
Tensor softmax_rows(const Tensor& x, const std::vector<bool>& masked);

/// Mean over the batch of -log softmax(logits)[gold].
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> gold);

// ---- lookups ---------------------------------------------------------------

/// Rows table[ids[i]] stacked into an ids.size() x d matrix.
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);
/// Row i is the mean of table rows groups[i].
Tensor mean_gather_rows(const Tensor& table,
                        const std::vector<std::vector<std::size_t>>& groups);

/// Expands per-offset scores qa[n x (2*clip+1)] into an n x n matrix with
/// out[i][j] = qa[i][clamp(j - i, -clip, clip) + clip].
Tensor relative_gather(const Tensor& qa, std::size_t clip);

/// Per-segment weighted sum: rows of values[(b*len) x d] grouped into b
/// blocks of `len`; out[s] = sum_t weights[s][t] * values[s*len + t].
Tensor segment_weighted_sum(const Tensor& weights, const Tensor& values);

}  // namespace kattn
