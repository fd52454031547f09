#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "rmix/tensor.hpp"

namespace rmix {

using Rng = std::mt19937_64;
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

std::vector<Tensor> tensors_of(const NamedTensors& named);

// Copies values (not handles) from src into dst; names and shapes must match.
void copy_values(const NamedTensors& src, const NamedTensors& dst);

// y = x W + b with W stored (in, out). PyTorch-style U(-1/sqrt(in), 1/sqrt(in)) init.
struct Linear {
  Tensor weight;
  Tensor bias;

  static Linear init(std::size_t in, std::size_t out, Rng& rng);
  static Linear zeros(std::size_t in, std::size_t out);

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, NamedTensors& out) const;
  Linear clone() const;
};

// Gated recurrent unit, gates ordered (reset, update, candidate):
//   r  = sigmoid(x W_ir + b_ir + h W_hr + b_hr)
//   z  = sigmoid(x W_iz + b_iz + h W_hz + b_hz)
//   n  = tanh(x W_in + b_in + r * (h W_hn + b_hn))
//   h' = (1 - z) * n + z * h
struct GruCell {
  Tensor w_ih;  // (in, 3H)
  Tensor w_hh;  // (H, 3H)
  Tensor b_ih;  // (1, 3H)
  Tensor b_hh;  // (1, 3H)

  static GruCell init(std::size_t in, std::size_t hidden, Rng& rng);
  static GruCell zeros(std::size_t in, std::size_t hidden);

  std::size_t in_dim() const { return w_ih.rows(); }
  std::size_t hidden_dim() const { return w_hh.rows(); }
  Tensor forward(const Tensor& x, const Tensor& h) const;
  void collect(const std::string& prefix, NamedTensors& out) const;
  GruCell clone() const;
};

}  // namespace rmix
