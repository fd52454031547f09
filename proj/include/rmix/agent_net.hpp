#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rmix/nn.hpp"
#include "rmix/tensor.hpp"

namespace rmix {

struct AgentNetConfig {
  std::size_t obs_dim = 0;
  std::size_t n_actions = 0;
  std::size_t n_agents = 0;
  std::size_t atoms = 35;
  std::size_t hidden_dim = 64;

  // observation ++ one-hot last action ++ one-hot agent id
  std::size_t input_dim() const { return obs_dim + n_actions + n_agents; }
};

// Writes one agent's network input into out (length cfg.input_dim()).
// last_action < 0 means "no previous action" (episode start).
void build_agent_input(const AgentNetConfig& cfg, std::span<const double> obs, int last_action,
                       std::size_t agent_id, std::span<double> out);

// Shared recurrent agent: fc -> relu -> GRU -> linear head emitting
// n_actions * atoms raw atom values (action-major).
class AgentNet {
 public:
  struct Output {
    Tensor atoms;   // (rows, n_actions * atoms)
    Tensor hidden;  // (rows, hidden_dim)
  };

  static AgentNet init(const AgentNetConfig& cfg, Rng& rng);
  static AgentNet zeros(const AgentNetConfig& cfg);

  const AgentNetConfig& config() const { return cfg_; }
  Tensor initial_hidden(std::size_t rows) const;
  Output forward(const Tensor& inputs, const Tensor& hidden) const;

  NamedTensors parameters() const;
  AgentNet clone() const;

 private:
  AgentNetConfig cfg_;
  Linear fc_in_;
  GruCell rnn_;
  Linear head_;
};

struct EpsilonSchedule {
  double start = 1.0;
  double finish = 0.05;
  std::int64_t anneal_steps = 50000;

  double at(std::int64_t step) const;
};

// Greedy over values with probability 1 - epsilon (lowest index on ties),
// otherwise uniform over available actions.
std::size_t select_action(std::span<const double> values, std::span<const bool> available, double epsilon,
                          Rng& rng);

// Greedy only; lowest index on ties among available actions.
std::size_t greedy_action(std::span<const double> values, std::span<const bool> available);

}  // namespace rmix
