#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rmix {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something flows into it
  bool requires_grad = false;
  bool leaf = true;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};
}  // namespace detail

// Dense row-major tensor handle. Copies share storage (like a framework
// tensor); use clone() for a value copy. Rank is arbitrary but every op
// below works on rank-1/rank-2 data, scalars are shape {1}.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor parameter(Shape shape, std::vector<double> data);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  // Rank-2 accessors; a rank-1 tensor reads as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return node_->value; }
  std::span<double> mutable_data() { return node_->value; }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  // Same values, cut from the tape: never receives gradient.
  Tensor detach() const;
  // Deep copy preserving requires_grad (a fresh leaf).
  Tensor clone() const;
  Tensor reshape(Shape shape) const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_result(Shape, std::vector<double>, std::initializer_list<Tensor>);
};

// Define-by-run tape. Ops record a backward closure here whenever an operand
// requires grad and a tape is active on the current thread.
class Tape {
 public:
  void record(std::function<void()> backward_fn) { entries_.push_back(std::move(backward_fn)); }
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and replays entries newest-first, each once.
  // The tape is cleared afterwards.
  void backward(const Tensor& loss);

 private:
  std::vector<std::function<void()>> entries_;
};

Tape* active_tape();

class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Suspends recording, e.g. for target-network and rollout forwards.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

// Builds a result node; marks it differentiable when recording is on and any
// input requires grad.
Tensor make_result(Shape shape, std::vector<double> value, std::initializer_list<Tensor> inputs);

namespace ops {

// Elementwise, same shape. add() also accepts a (1, cols) row broadcast on b.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor square(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_rows(const Tensor& a);  // (m, n) -> (m, 1)
// Row max, (m, n) -> (m, 1); ties go to the lowest column.
Tensor max_cols(const Tensor& a);

Tensor abs(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor elu(const Tensor& a);
Tensor softmax_rows(const Tensor& a);

// 1.0 where a < b else 0.0; never differentiable.
Tensor less_mask(const Tensor& a, const Tensor& b);

// Row-wise pick: out[r] = a[r, index[r]]. (m, n) -> (m, 1)
Tensor gather_cols(const Tensor& a, std::span<const std::size_t> index);
// Row-wise block pick: a is (m, blocks*width); out[r] = a[r, index[r]*width ...]
Tensor gather_blocks(const Tensor& a, std::span<const std::size_t> index, std::size_t width);
// Mean of the k[r] smallest entries of each row, (m, n) -> (m, 1). Ordering
// is a stable ascending sort, so ties keep column order.
Tensor tail_mean(const Tensor& a, std::span<const std::size_t> k);
// Batched vector-matrix product: x is (m, n), w is (m, n*h) holding one
// row-major n x h matrix per row. Returns (m, h).
Tensor batched_vecmat(const Tensor& x, const Tensor& w, std::size_t h);
// (m, n) . (m, n) -> (m, 1)
Tensor row_dot(const Tensor& a, const Tensor& b);

}  // namespace ops

}  // namespace rmix
