#include "rmix/mixer.hpp"

#include <string>

namespace rmix {

Mixer Mixer::init(const MixerConfig& cfg, Rng& rng) {
  Mixer m;
  m.cfg = cfg;
  if (cfg.kind == MixerKind::kAdditive) return m;
  const std::size_t s = cfg.state_dim, h = cfg.hidden_dim;
  m.hyper_w1 = Linear::init(s, cfg.n_agents * h, rng);
  m.hyper_b1 = Linear::init(s, h, rng);
  m.hyper_w2 = Linear::init(s, h, rng);
  m.hyper_b2_in = Linear::init(s, h, rng);
  m.hyper_b2_out = Linear::init(h, 1, rng);
  return m;
}

Mixer Mixer::zeros(const MixerConfig& cfg) {
  Mixer m;
  m.cfg = cfg;
  if (cfg.kind == MixerKind::kAdditive) return m;
  const std::size_t s = cfg.state_dim, h = cfg.hidden_dim;
  m.hyper_w1 = Linear::zeros(s, cfg.n_agents * h);
  m.hyper_b1 = Linear::zeros(s, h);
  m.hyper_w2 = Linear::zeros(s, h);
  m.hyper_b2_in = Linear::zeros(s, h);
  m.hyper_b2_out = Linear::zeros(h, 1);
  return m;
}

Tensor Mixer::forward(const Tensor& cvars, const Tensor& states) const {
  if (cvars.rank() != 2 || cvars.cols() != cfg.n_agents) {
    throw Error("Mixer: expected (B, " + std::to_string(cfg.n_agents) + ") agent values, got " +
                shape_string(cvars.shape()));
  }
  if (cfg.kind == MixerKind::kAdditive) return ops::sum_rows(cvars);
  if (states.rank() != 2 || states.cols() != cfg.state_dim || states.rows() != cvars.rows()) {
    throw Error("Mixer: state shape " + shape_string(states.shape()) + " does not match");
  }
  using namespace ops;
  const std::size_t h = cfg.hidden_dim;
  const Tensor w1 = abs(hyper_w1.forward(states));
  const Tensor b1 = hyper_b1.forward(states);
  Tensor hidden = add(batched_vecmat(cvars, w1, h), b1);
  if (cfg.activation == MixerActivation::kElu) hidden = elu(hidden);
  const Tensor w2 = abs(hyper_w2.forward(states));
  const Tensor b2 = hyper_b2_out.forward(relu(hyper_b2_in.forward(states)));
  return add(row_dot(hidden, w2), b2);
}

NamedTensors Mixer::parameters() const {
  NamedTensors out;
  if (cfg.kind == MixerKind::kAdditive) return out;
  hyper_w1.collect("mixer.hyper_w1", out);
  hyper_b1.collect("mixer.hyper_b1", out);
  hyper_w2.collect("mixer.hyper_w2", out);
  hyper_b2_in.collect("mixer.hyper_b2_in", out);
  hyper_b2_out.collect("mixer.hyper_b2_out", out);
  return out;
}

Mixer Mixer::clone() const {
  Mixer m;
  m.cfg = cfg;
  if (cfg.kind == MixerKind::kAdditive) return m;
  m.hyper_w1 = hyper_w1.clone();
  m.hyper_b1 = hyper_b1.clone();
  m.hyper_w2 = hyper_w2.clone();
  m.hyper_b2_in = hyper_b2_in.clone();
  m.hyper_b2_out = hyper_b2_out.clone();
  return m;
}

double monotonic_mix(std::span<const double> cvars, std::span<const double> state, const Mixer& mixer) {
  NoGradScope no_grad;
  const Tensor c({1, cvars.size()}, {cvars.begin(), cvars.end()});
  const Tensor s({1, state.size()}, {state.begin(), state.end()});
  return mixer.forward(c, s).item();
}

double rdn_mix(std::span<const double> cvars) {
  if (cvars.empty()) throw Error("rdn_mix: no agents");
  double s = 0.0;
  for (double c : cvars) s += c;
  return s;
}

Tensor rdn_mix(const Tensor& cvars) { return ops::sum_rows(cvars); }

NamedTensors NetworkBundle::parameters() const {
  NamedTensors out = agent.parameters();
  for (auto& p : predictor.parameters()) out.push_back(std::move(p));
  for (auto& p : mixer.parameters()) out.push_back(std::move(p));
  return out;
}

NetworkBundle NetworkBundle::clone() const { return {agent.clone(), predictor.clone(), mixer.clone()}; }

TargetBundle sync_target(const NetworkBundle& live) {
  TargetBundle target = live.clone();
  for (auto& [name, t] : target.parameters()) {
    Tensor handle = t;
    handle.set_requires_grad(false);
  }
  return target;
}

}  // namespace rmix
