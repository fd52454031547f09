#include "rmix/nn.hpp"

#include <cmath>

namespace rmix {

namespace {

Tensor uniform_param(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = dist(rng);
  return Tensor::parameter(std::move(shape), std::move(v));
}

Tensor zero_param(Shape shape) {
  const std::size_t n = shape_size(shape);
  return Tensor::parameter(std::move(shape), std::vector<double>(n, 0.0));
}

}  // namespace

std::vector<Tensor> tensors_of(const NamedTensors& named) {
  std::vector<Tensor> out;
  out.reserve(named.size());
  for (const auto& [name, t] : named) out.push_back(t);
  return out;
}

void copy_values(const NamedTensors& src, const NamedTensors& dst) {
  if (src.size() != dst.size()) throw Error("copy_values: parameter count mismatch");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].first != dst[i].first || src[i].second.shape() != dst[i].second.shape()) {
      throw Error("copy_values: mismatch at " + src[i].first);
    }
    Tensor d = dst[i].second;
    const auto s = src[i].second.data();
    std::copy(s.begin(), s.end(), d.mutable_data().begin());
  }
}

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear l;
  l.weight = uniform_param({in, out}, bound, rng);
  l.bias = uniform_param({1, out}, bound, rng);
  return l;
}

Linear Linear::zeros(std::size_t in, std::size_t out) {
  return Linear{zero_param({in, out}), zero_param({1, out})};
}

Tensor Linear::forward(const Tensor& x) const {
  if (x.cols() != in_dim()) {
    throw Error("Linear: expected " + std::to_string(in_dim()) + " input features, got " +
                std::to_string(x.cols()));
  }
  return ops::add(ops::matmul(x, weight), bias);
}

void Linear::collect(const std::string& prefix, NamedTensors& out) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

Linear Linear::clone() const { return Linear{weight.clone(), bias.clone()}; }

GruCell GruCell::init(std::size_t in, std::size_t hidden, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  GruCell g;
  g.w_ih = uniform_param({in, 3 * hidden}, bound, rng);
  g.w_hh = uniform_param({hidden, 3 * hidden}, bound, rng);
  g.b_ih = uniform_param({1, 3 * hidden}, bound, rng);
  g.b_hh = uniform_param({1, 3 * hidden}, bound, rng);
  return g;
}

GruCell GruCell::zeros(std::size_t in, std::size_t hidden) {
  return GruCell{zero_param({in, 3 * hidden}), zero_param({hidden, 3 * hidden}), zero_param({1, 3 * hidden}),
                 zero_param({1, 3 * hidden})};
}

Tensor GruCell::forward(const Tensor& x, const Tensor& h) const {
  const std::size_t hd = hidden_dim();
  if (x.rank() != 2 || h.rank() != 2 || x.cols() != in_dim() || h.cols() != hd || x.rows() != h.rows()) {
    throw Error("GruCell: shape mismatch, x " + shape_string(x.shape()) + " h " + shape_string(h.shape()));
  }
  using namespace ops;
  const Tensor gi = add(matmul(x, w_ih), b_ih);
  const Tensor gh = add(matmul(h, w_hh), b_hh);
  const Tensor r = sigmoid(add(slice_cols(gi, 0, hd), slice_cols(gh, 0, hd)));
  const Tensor z = sigmoid(add(slice_cols(gi, hd, 2 * hd), slice_cols(gh, hd, 2 * hd)));
  const Tensor n = tanh(add(slice_cols(gi, 2 * hd, 3 * hd), mul(r, slice_cols(gh, 2 * hd, 3 * hd))));
  return add(n, mul(z, sub(h, n)));
}

void GruCell::collect(const std::string& prefix, NamedTensors& out) const {
  out.emplace_back(prefix + ".w_ih", w_ih);
  out.emplace_back(prefix + ".w_hh", w_hh);
  out.emplace_back(prefix + ".b_ih", b_ih);
  out.emplace_back(prefix + ".b_hh", b_hh);
}

GruCell GruCell::clone() const { return GruCell{w_ih.clone(), w_hh.clone(), b_ih.clone(), b_hh.clone()}; }

}  // namespace rmix
