#include "rmix/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace rmix {

namespace {

thread_local Tape* g_active_tape = nullptr;

using NodePtr = std::shared_ptr<detail::Node>;

void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) throw Error(std::string("non-finite value produced by ") + op);
  }
}

void require(bool cond, const std::string& what) {
  if (!cond) throw Error(what);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw Error(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                shape_string(b.shape()));
  }
}

// Accumulate into an input node if it participates in differentiation.
inline bool wants(const NodePtr& n) { return n->requires_grad; }

}  // namespace

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ')';
  return os.str();
}

Tensor::Tensor() : Tensor(Shape{0}, {}) {}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  if (shape_size(shape) != data.size()) {
    throw Error("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                shape_string(shape));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
  const std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> data) {
  return Tensor(std::move(shape), std::move(data), true);
}

std::size_t Tensor::rows() const {
  const auto& s = node_->shape;
  if (s.size() == 1) return 1;
  if (s.size() == 2) return s[0];
  throw Error("rows() on tensor of rank " + std::to_string(s.size()));
}

std::size_t Tensor::cols() const {
  const auto& s = node_->shape;
  if (s.size() == 1) return s[0];
  if (s.size() == 2) return s[1];
  throw Error("cols() on tensor of rank " + std::to_string(s.size()));
}

double Tensor::item() const {
  if (size() != 1) throw Error("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->value, false); }

Tensor Tensor::clone() const { return Tensor(node_->shape, node_->value, node_->requires_grad); }

Tensor Tensor::reshape(Shape shape) const {
  if (shape_size(shape) != size()) {
    throw Error("reshape " + shape_string(node_->shape) + " -> " + shape_string(shape));
  }
  Tensor out = make_result(std::move(shape), node_->value, {*this});
  if (out.requires_grad()) {
    NodePtr o = out.node_, a = node_;
    active_tape()->record([o, a] {
      a->ensure_grad();
      for (std::size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i];
    });
  }
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw Error("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  if (loss.requires_grad()) {
    auto node = loss.node();
    node->ensure_grad();
    node->grad[0] += 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  }
  entries_.clear();
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

Tensor make_result(Shape shape, std::vector<double> value, std::initializer_list<Tensor> inputs) {
  bool grad = false;
  if (g_active_tape != nullptr) {
    for (const auto& in : inputs) grad = grad || in.requires_grad();
  }
  Tensor out(std::move(shape), std::move(value), grad);
  out.node_->leaf = false;
  // Backward closures read the output gradient unconditionally, even for
  // results that never reach the loss.
  if (grad) out.node_->ensure_grad();
  return out;
}

namespace ops {

namespace {

template <class Fwd, class Deriv>
Tensor unary(const Tensor& a, const char* name, Fwd fwd, Deriv deriv) {
  std::vector<double> v(a.size());
  const auto x = a.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = fwd(x[i]);
  check_finite(v, name);
  Tensor out = make_result(a.shape(), std::move(v), {a});
  if (out.requires_grad()) {
    NodePtr o = out.node(), in = a.node();
    active_tape()->record([o, in, deriv] {
      if (!wants(in)) return;
      in->ensure_grad();
      for (std::size_t i = 0; i < o->grad.size(); ++i) {
        in->grad[i] += o->grad[i] * deriv(in->value[i], o->value[i]);
      }
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const bool broadcast = a.shape() != b.shape() && b.rank() <= 2 && b.rows() == 1 &&
                         a.rank() == 2 && b.cols() == a.cols();
  if (!broadcast) require_same_shape(a, b, "add");
  const std::size_t n = a.size(), c = broadcast ? b.size() : n;
  std::vector<double> v(n);
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < n; ++i) v[i] = x[i] + y[i % c];
  check_finite(v, "add");
  Tensor out = make_result(a.shape(), std::move(v), {a, b});
  if (out.requires_grad()) {
    NodePtr o = out.node(), pa = a.node(), pb = b.node();
    active_tape()->record([o, pa, pb, c] {
      if (wants(pa)) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < o->grad.size(); ++i) pa->grad[i] += o->grad[i];
      }
      if (wants(pb)) {
        pb->ensure_grad();
        for (std::size_t i = 0; i < o->grad.size(); ++i) pb->grad[i % c] += o->grad[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> v(a.size());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = x[i] - y[i];
  check_finite(v, "sub");
  Tensor out = make_result(a.shape(), std::move(v), {a, b});
  if (out.requires_grad()) {
    NodePtr o = out.node(), pa = a.node(), pb = b.node();
    active_tape()->record([o, pa, pb] {
      if (wants(pa)) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < o->grad.size(); ++i) pa->grad[i] += o->grad[i];
      }
      if (wants(pb)) {
        pb->ensure_grad();
        for (std::size_t i = 0; i < o->grad.size(); ++i) pb->grad[i] -= o->grad[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> v(a.size());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = x[i] * y[i];
  check_finite(v, "mul");
  Tensor out = make_result(a.shape(), std::move(v), {a, b});
  if (out.requires_grad()) {
    NodePtr o = out.node(), pa = a.node(), pb = b.node();
    active_tape()->record([o, pa, pb] {
      if (wants(pa)) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < o->grad.size(); ++i) pa->grad[i] += o->grad[i] * pb->value[i];
      }
      if (wants(pb)) {
        pb->ensure_grad();
        for (std::size_t i = 0; i < o->grad.size(); ++i) pb->grad[i] += o->grad[i] * pa->value[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, "scale", [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, "add_scalar", [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor square(const Tensor& a) {
  return unary(a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2, "matmul: operands must be rank 2");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw Error("matmul: shape mismatch " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  std::vector<double> v(m * n, 0.0);
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double xip = x[i * k + p];
      if (xip == 0.0) continue;
      const double* yrow = &y[p * n];
      double* vrow = &v[i * n];
      for (std::size_t j = 0; j < n; ++j) vrow[j] += xip * yrow[j];
    }
  }
  check_finite(v, "matmul");
  Tensor out = make_result({m, n}, std::move(v), {a, b});
  if (out.requires_grad()) {
    NodePtr o = out.node(), pa = a.node(), pb = b.node();
    active_tape()->record([o, pa, pb, m, k, n] {
      const auto& g = o->grad;
      if (wants(pa)) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * pb->value[p * n + j];
            pa->grad[i * k + p] += acc;
          }
        }
      }
      if (wants(pb)) {
        pb->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            const double xip = pa->value[i * k + p];
            if (xip == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) pb->grad[p * n + j] += xip * g[i * n + j];
          }
        }
      }
    });
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t m = parts.front().rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require(p.rank() == 2 && p.rows() == m, "concat_cols: row count mismatch");
    total += p.cols();
  }
  std::vector<double> v(m * total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t c = p.cols();
    const auto x = p.data();
    for (std::size_t i = 0; i < m; ++i) std::copy_n(&x[i * c], c, &v[i * total + offset]);
    offset += c;
  }
  bool grad = false;
  if (active_tape() != nullptr) {
    for (const auto& p : parts) grad = grad || p.requires_grad();
  }
  Tensor out(Shape{m, total}, std::move(v), grad);
  if (grad) {
    std::vector<NodePtr> ins;
    for (const auto& p : parts) ins.push_back(p.node());
    NodePtr o = out.node();
    o->leaf = false;
    active_tape()->record([o, ins, m, total] {
      std::size_t off = 0;
      for (const auto& in : ins) {
        const std::size_t c = in->shape.back();
        if (wants(in)) {
          in->ensure_grad();
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < c; ++j) in->grad[i * c + j] += o->grad[i * total + off + j];
          }
        }
        off += c;
      }
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require(a.rank() == 2 && begin <= end && end <= a.cols(), "slice_cols: bad range");
  const std::size_t m = a.rows(), n = a.cols(), w = end - begin;
  std::vector<double> v(m * w);
  const auto x = a.data();
  for (std::size_t i = 0; i < m; ++i) std::copy_n(&x[i * n + begin], w, &v[i * w]);
  Tensor out = make_result({m, w}, std::move(v), {a});
  if (out.requires_grad()) {
    NodePtr o = out.node(), pa = a.node();
    active_tape()->record([o, pa, m, n, w, begin] {
      if (!wants(pa)) return;
      pa->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < w; ++j) pa->grad[i * n + begin + j] += o->grad[i * w + j];
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  check_finite({s}, "sum");
  Tensor out = make_result({1}, {s}, {a});
  if (out.requires_grad()) {
    NodePtr o = out.node(), pa = a.node();
    active_tape()->record([o, pa] {
      if (!wants(pa)) return;
      pa->ensure_grad();
      for (double& g : pa->grad) g += o->grad[0];
    });
  }
  return out;
}

Tensor mean(const Tensor& a) {
  require(a.size() > 0, "mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor sum_rows(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> v(m, 0.0);
  const auto x = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) v[i] += x[i * n + j];
  }
  check_finite(v, "sum_rows");
  Tensor out = make_result({m, 1}, std::move(v), {a});
  if (out.requires_grad()) {
    NodePtr o = out.node(), pa = a.node();
    active_tape()->record([o, pa, m, n] {
      if (!wants(pa)) return;
      pa->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) pa->grad[i * n + j] += o->grad[i];
      }
    });
  }
  return out;
}

Tensor max_cols(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  require(n > 0, "max_cols: empty rows");
  std::vector<double> v(m);
  std::vector<std::size_t> arg(m);
  const auto x = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < n; ++j) {
      if (x[i * n + j] > x[i * n + best]) best = j;
    }
    arg[i] = best;
    v[i] = x[i * n + best];
  }
  Tensor out = make_result({m, 1}, std::move(v), {a});
  if (out.requires_grad()) {
    NodePtr o = out.node(), pa = a.node();
    active_tape()->record([o, pa, arg, n] {
      if (!wants(pa)) return;
      pa->ensure_grad();
      for (std::size_t i = 0; i < arg.size(); ++i) pa->grad[i * n + arg[i]] += o->grad[i];
    });
  }
  return out;
}

Tensor abs(const Tensor& a) {
  return unary(
      a, "abs", [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor exp(const Tensor& a) {
  return unary(a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary(a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor elu(const Tensor& a) {
  return unary(
      a, "elu", [](double x) { return x > 0.0 ? x : std::expm1(x); },
      [](double x, double y) { return x > 0.0 ? 1.0 : y + 1.0; });
}

Tensor softmax_rows(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> v(m * n);
  const auto x = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    double mx = x[i * n];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[i * n + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (v[i * n + j] = std::exp(x[i * n + j] - mx));
    for (std::size_t j = 0; j < n; ++j) v[i * n + j] /= z;
  }
  check_finite(v, "softmax_rows");
  Tensor out = make_result(a.shape(), std::move(v), {a});
  if (out.requires_grad()) {
    NodePtr o = out.node(), pa = a.node();
    active_tape()->record([o, pa, m, n] {
      if (!wants(pa)) return;
      pa->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += o->grad[i * n + j] * o->value[i * n + j];
        for (std::size_t j = 0; j < n; ++j) {
          pa->grad[i * n + j] += o->value[i * n + j] * (o->grad[i * n + j] - dot);
        }
      }
    });
  }
  return out;
}

Tensor less_mask(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "less_mask");
  std::vector<double> v(a.size());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = x[i] < y[i] ? 1.0 : 0.0;
  return Tensor(a.shape(), std::move(v));
}

Tensor gather_cols(const Tensor& a, std::span<const std::size_t> index) {
  const std::size_t m = a.rows(), n = a.cols();
  require(index.size() == m, "gather_cols: index length mismatch");
  std::vector<double> v(m);
  std::vector<std::size_t> idx(index.begin(), index.end());
  for (std::size_t i = 0; i < m; ++i) {
    require(idx[i] < n, "gather_cols: index out of range");
    v[i] = a.data()[i * n + idx[i]];
  }
  Tensor out = make_result({m, 1}, std::move(v), {a});
  if (out.requires_grad()) {
    NodePtr o = out.node(), pa = a.node();
    active_tape()->record([o, pa, idx, n] {
      if (!wants(pa)) return;
      pa->ensure_grad();
      for (std::size_t i = 0; i < idx.size(); ++i) pa->grad[i * n + idx[i]] += o->grad[i];
    });
  }
  return out;
}

Tensor gather_blocks(const Tensor& a, std::span<const std::size_t> index, std::size_t width) {
  const std::size_t m = a.rows(), n = a.cols();
  require(index.size() == m, "gather_blocks: index length mismatch");
  require(width > 0 && n % width == 0, "gather_blocks: width does not divide columns");
  std::vector<double> v(m * width);
  std::vector<std::size_t> idx(index.begin(), index.end());
  for (std::size_t i = 0; i < m; ++i) {
    require(idx[i] < n / width, "gather_blocks: index out of range");
    std::copy_n(&a.data()[i * n + idx[i] * width], width, &v[i * width]);
  }
  Tensor out = make_result({m, width}, std::move(v), {a});
  if (out.requires_grad()) {
    NodePtr o = out.node(), pa = a.node();
    active_tape()->record([o, pa, idx, n, width] {
      if (!wants(pa)) return;
      pa->ensure_grad();
      for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < width; ++j) pa->grad[i * n + idx[i] * width + j] += o->grad[i * width + j];
      }
    });
  }
  return out;
}

Tensor tail_mean(const Tensor& a, std::span<const std::size_t> k) {
  const std::size_t m = a.rows(), n = a.cols();
  require(k.size() == m, "tail_mean: k length mismatch");
  std::vector<double> v(m);
  // selected[i*n .. i*n+k[i]) hold the chosen column indices of row i
  std::vector<std::size_t> selected(m * n);
  std::vector<std::size_t> counts(k.begin(), k.end());
  const auto x = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    require(counts[i] >= 1 && counts[i] <= n, "tail_mean: k out of range");
    auto first = selected.begin() + static_cast<std::ptrdiff_t>(i * n);
    std::iota(first, first + static_cast<std::ptrdiff_t>(n), std::size_t{0});
    std::stable_sort(first, first + static_cast<std::ptrdiff_t>(n),
                     [&](std::size_t p, std::size_t q) { return x[i * n + p] < x[i * n + q]; });
    double s = 0.0;
    for (std::size_t j = 0; j < counts[i]; ++j) s += x[i * n + selected[i * n + j]];
    v[i] = s / static_cast<double>(counts[i]);
  }
  check_finite(v, "tail_mean");
  Tensor out = make_result({m, 1}, std::move(v), {a});
  if (out.requires_grad()) {
    NodePtr o = out.node(), pa = a.node();
    active_tape()->record([o, pa, selected = std::move(selected), counts = std::move(counts), n] {
      if (!wants(pa)) return;
      pa->ensure_grad();
      for (std::size_t i = 0; i < counts.size(); ++i) {
        const double g = o->grad[i] / static_cast<double>(counts[i]);
        for (std::size_t j = 0; j < counts[i]; ++j) pa->grad[i * n + selected[i * n + j]] += g;
      }
    });
  }
  return out;
}

Tensor batched_vecmat(const Tensor& x, const Tensor& w, std::size_t h) {
  const std::size_t m = x.rows(), n = x.cols();
  require(w.rows() == m && w.cols() == n * h, "batched_vecmat: shape mismatch " + shape_string(x.shape()) +
                                                  " vs " + shape_string(w.shape()));
  std::vector<double> v(m * h, 0.0);
  const auto xd = x.data(), wd = w.data();
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      const double xi = xd[r * n + i];
      for (std::size_t j = 0; j < h; ++j) v[r * h + j] += xi * wd[r * n * h + i * h + j];
    }
  }
  check_finite(v, "batched_vecmat");
  Tensor out = make_result({m, h}, std::move(v), {x, w});
  if (out.requires_grad()) {
    NodePtr o = out.node(), px = x.node(), pw = w.node();
    active_tape()->record([o, px, pw, m, n, h] {
      if (wants(px)) {
        px->ensure_grad();
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < h; ++j) acc += o->grad[r * h + j] * pw->value[r * n * h + i * h + j];
            px->grad[r * n + i] += acc;
          }
        }
      }
      if (wants(pw)) {
        pw->ensure_grad();
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t i = 0; i < n; ++i) {
            const double xi = px->value[r * n + i];
            for (std::size_t j = 0; j < h; ++j) pw->grad[r * n * h + i * h + j] += xi * o->grad[r * h + j];
          }
        }
      }
    });
  }
  return out;
}

Tensor row_dot(const Tensor& a, const Tensor& b) { return sum_rows(mul(a, b)); }

}  // namespace ops

}  // namespace rmix
