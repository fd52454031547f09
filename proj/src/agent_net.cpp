#include "rmix/agent_net.hpp"

#include <algorithm>
#include <string>

namespace rmix {

void build_agent_input(const AgentNetConfig& cfg, std::span<const double> obs, int last_action,
                       std::size_t agent_id, std::span<double> out) {
  if (obs.size() != cfg.obs_dim || out.size() != cfg.input_dim()) {
    throw Error("agent input: expected obs dim " + std::to_string(cfg.obs_dim) + ", got " +
                std::to_string(obs.size()));
  }
  if (agent_id >= cfg.n_agents) throw Error("agent input: agent id out of range");
  if (last_action >= static_cast<int>(cfg.n_actions)) throw Error("agent input: last action out of range");
  std::fill(out.begin(), out.end(), 0.0);
  std::copy(obs.begin(), obs.end(), out.begin());
  if (last_action >= 0) out[cfg.obs_dim + static_cast<std::size_t>(last_action)] = 1.0;
  out[cfg.obs_dim + cfg.n_actions + agent_id] = 1.0;
}

AgentNet AgentNet::init(const AgentNetConfig& cfg, Rng& rng) {
  AgentNet net;
  net.cfg_ = cfg;
  net.fc_in_ = Linear::init(cfg.input_dim(), cfg.hidden_dim, rng);
  net.rnn_ = GruCell::init(cfg.hidden_dim, cfg.hidden_dim, rng);
  net.head_ = Linear::init(cfg.hidden_dim, cfg.n_actions * cfg.atoms, rng);
  return net;
}

AgentNet AgentNet::zeros(const AgentNetConfig& cfg) {
  AgentNet net;
  net.cfg_ = cfg;
  net.fc_in_ = Linear::zeros(cfg.input_dim(), cfg.hidden_dim);
  net.rnn_ = GruCell::zeros(cfg.hidden_dim, cfg.hidden_dim);
  net.head_ = Linear::zeros(cfg.hidden_dim, cfg.n_actions * cfg.atoms);
  return net;
}

Tensor AgentNet::initial_hidden(std::size_t rows) const { return Tensor::zeros({rows, cfg_.hidden_dim}); }

AgentNet::Output AgentNet::forward(const Tensor& inputs, const Tensor& hidden) const {
  if (inputs.rank() != 2 || inputs.cols() != cfg_.input_dim()) {
    throw Error("AgentNet: expected input width " + std::to_string(cfg_.input_dim()) + ", got " +
                shape_string(inputs.shape()));
  }
  const Tensor x = ops::relu(fc_in_.forward(inputs));
  Tensor h = rnn_.forward(x, hidden);
  Tensor atoms = head_.forward(h);
  return {std::move(atoms), std::move(h)};
}

NamedTensors AgentNet::parameters() const {
  NamedTensors out;
  fc_in_.collect("agent.fc_in", out);
  rnn_.collect("agent.rnn", out);
  head_.collect("agent.head", out);
  return out;
}

AgentNet AgentNet::clone() const {
  AgentNet net;
  net.cfg_ = cfg_;
  net.fc_in_ = fc_in_.clone();
  net.rnn_ = rnn_.clone();
  net.head_ = head_.clone();
  return net;
}

double EpsilonSchedule::at(std::int64_t step) const {
  if (step < 0) throw Error("epsilon schedule: negative step");
  if (anneal_steps <= 0 || step >= anneal_steps) return finish;
  const double frac = static_cast<double>(step) / static_cast<double>(anneal_steps);
  return start + (finish - start) * frac;
}

std::size_t greedy_action(std::span<const double> values, std::span<const bool> available) {
  if (values.size() != available.size()) throw Error("greedy_action: availability length mismatch");
  std::size_t best = values.size();
  for (std::size_t a = 0; a < values.size(); ++a) {
    if (!available[a]) continue;
    if (best == values.size() || values[a] > values[best]) best = a;
  }
  if (best == values.size()) throw Error("greedy_action: no available action");
  return best;
}

std::size_t select_action(std::span<const double> values, std::span<const bool> available, double epsilon,
                          Rng& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw Error("select_action: epsilon outside [0, 1]");
  const std::size_t greedy = greedy_action(values, available);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) >= epsilon) return greedy;
  std::vector<std::size_t> avail;
  for (std::size_t a = 0; a < available.size(); ++a) {
    if (available[a]) avail.push_back(a);
  }
  std::uniform_int_distribution<std::size_t> pick(0, avail.size() - 1);
  return avail[pick(rng)];
}

}  // namespace rmix
