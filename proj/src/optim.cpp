#include "rmix/optim.hpp"

#include <cmath>
#include <string>

namespace rmix {

Adam::Adam(std::vector<Tensor> params, AdamConfig config) : params_(std::move(params)) {
  state_.config = config;
  for (const auto& p : params_) {
    state_.first_moment.emplace_back(p.size(), 0.0);
    state_.second_moment.emplace_back(p.size(), 0.0);
  }
}

void Adam::step() {
  const auto& c = state_.config;
  for (const auto& p : params_) {
    for (double g : p.grad()) {
      if (!std::isfinite(g)) throw Error("Adam: non-finite gradient");
    }
  }
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    auto& m = state_.first_moment[k];
    auto& v = state_.second_moment[k];
    auto value = p.mutable_data();
    const auto grad = p.grad();
    const bool has = !grad.empty();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = has ? grad[i] : 0.0;
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      value[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::load_state(AdamState state) {
  if (state.first_moment.size() != params_.size() || state.second_moment.size() != params_.size()) {
    throw Error("Adam: state does not match parameter count");
  }
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (state.first_moment[k].size() != params_[k].size() || state.second_moment[k].size() != params_[k].size()) {
      throw Error("Adam: moment buffer " + std::to_string(k) + " does not match its parameter");
    }
  }
  state_ = std::move(state);
}

double global_grad_norm(const std::vector<Tensor>& params) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : p.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

double clip_grad_norm(std::vector<Tensor>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (double& g : p.mutable_grad()) g *= s;
    }
  }
  return norm;
}

}  // namespace rmix
