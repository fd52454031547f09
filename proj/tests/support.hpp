#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "rmix/tensor.hpp"

namespace rmix::testing {

// Worst relative disagreement between tape gradients and central differences
// of f with respect to every entry of every tensor in wrt. Relative error is
// |analytic - numeric| / max(|analytic|, |numeric|, floor).
inline double gradient_error(const std::function<Tensor()>& f, std::vector<Tensor> wrt, double h = 1e-5,
                             double floor = 1e-4) {
  for (auto& t : wrt) {
    t.zero_grad();
    t.set_requires_grad(true);
  }
  {
    Tape tape;
    TapeScope scope(tape);
    const Tensor loss = f();
    tape.backward(loss);
  }
  double worst = 0.0;
  NoGradScope no_grad;
  for (auto& t : wrt) {
    const std::vector<double> analytic = t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                                      : std::vector<double>(t.size(), 0.0);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double keep = t.data()[i];
      t.mutable_data()[i] = keep + h;
      const double up = f().item();
      t.mutable_data()[i] = keep - h;
      const double down = f().item();
      t.mutable_data()[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double scale = std::max({std::fabs(analytic[i]), std::fabs(numeric), floor});
      worst = std::max(worst, std::fabs(analytic[i] - numeric) / scale);
    }
  }
  return worst;
}

}  // namespace rmix::testing
