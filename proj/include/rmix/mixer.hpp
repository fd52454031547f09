#pragma once

#include <span>

#include "rmix/agent_net.hpp"
#include "rmix/nn.hpp"
#include "rmix/risk_predictor.hpp"
#include "rmix/tensor.hpp"

namespace rmix {

enum class MixerKind { kMonotonic, kAdditive };

enum class MixerActivation { kElu, kIdentity };

struct MixerConfig {
  MixerKind kind = MixerKind::kMonotonic;
  std::size_t n_agents = 0;
  std::size_t state_dim = 0;
  std::size_t hidden_dim = 32;
  MixerActivation activation = MixerActivation::kElu;
};

// State-conditioned two-layer mixer. Every mixing weight is the absolute
// value of a hypernetwork output, so dC_tot/dC_i >= 0 for all i.
//
//   W1 = |hyper_w1(s)|          (N x h)
//   b1 = hyper_b1(s)            (h)
//   W2 = |hyper_w2(s)|          (h x 1)
//   b2 = hyper_b2_out(relu(hyper_b2_in(s)))
//   C_tot = act(C W1 + b1) W2 + b2
//
// The additive kind has no parameters and returns sum_i C_i.
struct Mixer {
  MixerConfig cfg;
  Linear hyper_w1;
  Linear hyper_b1;
  Linear hyper_w2;
  Linear hyper_b2_in;
  Linear hyper_b2_out;

  static Mixer init(const MixerConfig& cfg, Rng& rng);
  static Mixer zeros(const MixerConfig& cfg);

  // cvars (B, N), states (B, S) -> (B, 1)
  Tensor forward(const Tensor& cvars, const Tensor& states) const;
  NamedTensors parameters() const;
  Mixer clone() const;
};

// Scalar conveniences over a single row.
double monotonic_mix(std::span<const double> cvars, std::span<const double> state, const Mixer& mixer);
double rdn_mix(std::span<const double> cvars);
Tensor rdn_mix(const Tensor& cvars);

// Agent net, risk predictor and mixer travelling together; the live copy on
// the learner and a frozen value copy as the target.
struct NetworkBundle {
  AgentNet agent;
  RiskPredictor predictor;
  Mixer mixer;

  NamedTensors parameters() const;
  NetworkBundle clone() const;
};

using TargetBundle = NetworkBundle;

// Deep value copy with gradients switched off. Later updates to live never
// reach the returned bundle.
TargetBundle sync_target(const NetworkBundle& live);

}  // namespace rmix
