#pragma once

#include <cstdint>
#include <vector>

#include "rmix/tensor.hpp"

namespace rmix {

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config = {});

  // One bias-corrected Adam update from the gradients currently held by the
  // parameters. Parameters without a gradient buffer are treated as g = 0.
  void step();
  void zero_grad();

  const std::vector<Tensor>& params() const { return params_; }
  const AdamState& state() const { return state_; }
  void load_state(AdamState state);

 private:
  std::vector<Tensor> params_;
  AdamState state_;
};

// Global L2 norm over every parameter gradient.
double global_grad_norm(const std::vector<Tensor>& params);

// Scales all gradients jointly so their global norm is at most max_norm.
// Returns the norm measured before clipping.
double clip_grad_norm(std::vector<Tensor>& params, double max_norm);

}  // namespace rmix
