#include "rmix/envs.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rmix/distributional.hpp"
#include "rmix/tensor.hpp"

namespace rmix {

namespace {

void check_actions(std::span<const std::size_t> actions, const std::vector<std::vector<bool>>& avail) {
  if (actions.size() != avail.size()) throw Error("step: expected one action per agent");
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (actions[i] >= avail[i].size() || !avail[i][actions[i]]) {
      throw Error("step: agent " + std::to_string(i) + " chose unavailable action " + std::to_string(actions[i]));
    }
  }
}

}  // namespace

// ---------------------------------------------------------------- matrix game

RiskyMatrixGame::RiskyMatrixGame(MatrixGameParams params) : params_(params) {
  if (!(params_.risky_prob > 0.0 && params_.risky_prob < 1.0)) throw Error("matrix game: risky_prob must be in (0, 1)");
  spec_.n_agents = 2;
  spec_.n_actions = 2;
  spec_.obs_dim = 2;
  spec_.state_dim = 1;
  spec_.horizon = 1;
  spec_.r_max = std::max({std::fabs(params_.safe_payoff), std::fabs(params_.risky_high), std::fabs(params_.risky_low)});
  optimal_ = cvar_optimal_joint(params_.success_alpha);
}

std::pair<std::vector<double>, std::vector<double>> RiskyMatrixGame::outcomes(std::size_t a0, std::size_t a1) const {
  if (a0 > 1 || a1 > 1) throw Error("matrix game: action out of range");
  if (a0 == kSafe && a1 == kSafe) return {{params_.safe_payoff}, {1.0}};
  if (a0 == kRisky && a1 == kRisky) {
    return {{params_.risky_low, params_.risky_high}, {1.0 - params_.risky_prob, params_.risky_prob}};
  }
  return {{0.0}, {1.0}};
}

std::array<std::size_t, 2> RiskyMatrixGame::cvar_optimal_joint(double alpha) const {
  const auto table = oracle_policy_values(*this, alpha);
  auto best = table.begin();
  for (auto it = table.begin(); it != table.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  return best->first;
}

TimeStep RiskyMatrixGame::observe(double reward, bool terminal) const {
  TimeStep ts;
  ts.obs = {{1.0, 0.0}, {0.0, 1.0}};
  ts.state = {1.0};
  ts.avail = {{true, true}, {true, true}};
  ts.reward = reward;
  ts.terminated = terminal;
  ts.done = terminal;
  return ts;
}

TimeStep RiskyMatrixGame::reset(std::uint64_t seed) {
  rng_.seed(seed);
  over_ = false;
  success_ = false;
  return observe(0.0, false);
}

TimeStep RiskyMatrixGame::step(std::span<const std::size_t> actions) {
  if (over_) throw Error("matrix game: step after episode end");
  check_actions(actions, {{true, true}, {true, true}});
  double reward = 0.0;
  if (actions[0] == kSafe && actions[1] == kSafe) {
    reward = params_.safe_payoff;
  } else if (actions[0] == kRisky && actions[1] == kRisky) {
    std::bernoulli_distribution high(params_.risky_prob);
    reward = high(rng_) ? params_.risky_high : params_.risky_low;
  }
  over_ = true;
  success_ = actions[0] == optimal_[0] && actions[1] == optimal_[1];
  return observe(reward, true);
}

std::map<std::array<std::size_t, 2>, double> oracle_policy_values(const RiskyMatrixGame& game, double alpha) {
  std::map<std::array<std::size_t, 2>, double> table;
  for (std::size_t a0 = 0; a0 < 2; ++a0) {
    for (std::size_t a1 = 0; a1 < 2; ++a1) {
      auto [values, probs] = game.outcomes(a0, a1);
      table[{a0, a1}] = cvar(DiracMixture(std::move(values), std::move(probs)), alpha);
    }
  }
  return table;
}

// ------------------------------------------------------------------ gridworld

RiskyGridworld::RiskyGridworld(GridworldParams params) : params_(params) {
  const auto& p = params_;
  if (p.width < 3 || p.height < 2) throw Error("gridworld: need width >= 3 and height >= 2");
  if (p.n_agents < 1) throw Error("gridworld: need at least one agent");
  if (p.horizon < p.width + 1) throw Error("gridworld: horizon too short for the safe detour");
  if (!(p.cliff_prob >= 0.0 && p.cliff_prob <= 1.0)) throw Error("gridworld: cliff_prob outside [0, 1]");
  const std::size_t window = 2 * p.view_radius + 1;
  spec_.n_agents = p.n_agents;
  spec_.n_actions = 5;
  spec_.obs_dim = 4 * window * window + 3;
  spec_.state_dim = 3 * p.n_agents;
  spec_.horizon = p.horizon;
  spec_.r_max = p.step_cost + std::max(p.goal_reward, p.cliff_penalty);

  const ScriptedValue risky = scripted_value(true);
  const ScriptedValue safe = scripted_value(false);
  if (!(risky.expectation > safe.expectation && risky.cvar < safe.cvar)) {
    throw Error("gridworld: cliff route must win in expectation (" + std::to_string(risky.expectation) + " vs " +
                std::to_string(safe.expectation) + ") and lose in CVaR (" + std::to_string(risky.cvar) + " vs " +
                std::to_string(safe.cvar) + ")");
  }
}

bool RiskyGridworld::is_cliff(std::size_t row, std::size_t col) const {
  return row == 0 && col >= 1 && col + 1 < params_.width;
}

std::pair<std::vector<double>, std::vector<double>> RiskyGridworld::scripted_returns(bool cliff_route) const {
  const auto& p = params_;
  std::vector<std::size_t> route;
  if (!cliff_route) route.push_back(kDown);
  for (std::size_t c = 0; c + 1 < p.width; ++c) route.push_back(kRight);
  if (!cliff_route) route.push_back(kUp);

  std::vector<double> values, probs;
  double survive = 1.0;
  double ret = 0.0;
  std::size_t row = 0, col = 0;
  for (std::size_t t = 0; t < route.size(); ++t) {
    if (route[t] == kDown) ++row;
    if (route[t] == kUp) --row;
    if (route[t] == kRight) ++col;
    const bool on_cliff = is_cliff(row, col);
    const double event = on_cliff ? 1.0 - std::pow(1.0 - p.cliff_prob, static_cast<double>(p.n_agents)) : 0.0;
    if (event > 0.0) {
      values.push_back(ret - p.step_cost - p.cliff_penalty);
      probs.push_back(survive * event);
    }
    survive *= 1.0 - event;
    ret -= p.step_cost;
  }
  values.push_back(ret + p.goal_reward);
  probs.push_back(survive);
  return {values, probs};
}

ScriptedValue RiskyGridworld::scripted_value(bool cliff_route) const {
  auto [values, probs] = scripted_returns(cliff_route);
  const DiracMixture z(std::move(values), std::move(probs));
  return {expectation(z), cvar(z, params_.check_alpha)};
}

std::vector<double> RiskyGridworld::observation(std::size_t agent) const {
  const auto& p = params_;
  const auto r = static_cast<long>(p.view_radius);
  std::vector<double> obs;
  obs.reserve(spec_.obs_dim);
  const auto [row, col] = pos_[agent];
  for (long dr = -r; dr <= r; ++dr) {
    for (long dc = -r; dc <= r; ++dc) {
      const long rr = static_cast<long>(row) + dr, cc = static_cast<long>(col) + dc;
      const bool outside = rr < 0 || cc < 0 || rr >= static_cast<long>(p.height) || cc >= static_cast<long>(p.width);
      bool cliff = false, goal = false, other = false;
      if (!outside) {
        const auto ur = static_cast<std::size_t>(rr), uc = static_cast<std::size_t>(cc);
        cliff = is_cliff(ur, uc);
        goal = ur == 0 && uc + 1 == p.width;
        for (std::size_t j = 0; j < pos_.size(); ++j) {
          if (j != agent && pos_[j].first == ur && pos_[j].second == uc) other = true;
        }
      }
      obs.push_back(outside ? 1.0 : 0.0);
      obs.push_back(cliff ? 1.0 : 0.0);
      obs.push_back(goal ? 1.0 : 0.0);
      obs.push_back(other ? 1.0 : 0.0);
    }
  }
  obs.push_back(static_cast<double>(row) / static_cast<double>(p.height - 1));
  obs.push_back(static_cast<double>(col) / static_cast<double>(p.width - 1));
  obs.push_back(arrived_[agent] ? 1.0 : 0.0);
  return obs;
}

TimeStep RiskyGridworld::observe(double reward, bool terminal, bool done) const {
  TimeStep ts;
  for (std::size_t i = 0; i < params_.n_agents; ++i) {
    ts.obs.push_back(observation(i));
    std::vector<bool> avail(spec_.n_actions, true);
    if (arrived_[i]) std::fill(avail.begin() + 1, avail.end(), false);
    ts.avail.push_back(std::move(avail));
    ts.state.push_back(static_cast<double>(pos_[i].first) / static_cast<double>(params_.height - 1));
    ts.state.push_back(static_cast<double>(pos_[i].second) / static_cast<double>(params_.width - 1));
    ts.state.push_back(arrived_[i] ? 1.0 : 0.0);
  }
  ts.reward = reward;
  ts.terminated = terminal;
  ts.done = done;
  return ts;
}

TimeStep RiskyGridworld::reset(std::uint64_t seed) {
  rng_.seed(seed);
  pos_.assign(params_.n_agents, {0, 0});
  arrived_.assign(params_.n_agents, false);
  t_ = 0;
  over_ = false;
  success_ = false;
  return observe(0.0, false, false);
}

TimeStep RiskyGridworld::step(std::span<const std::size_t> actions) {
  if (over_) throw Error("gridworld: step after episode end");
  const auto& p = params_;
  std::vector<std::vector<bool>> avail;
  for (std::size_t i = 0; i < p.n_agents; ++i) {
    std::vector<bool> a(spec_.n_actions, true);
    if (arrived_[i]) std::fill(a.begin() + 1, a.end(), false);
    avail.push_back(std::move(a));
  }
  check_actions(actions, avail);

  for (std::size_t i = 0; i < p.n_agents; ++i) {
    if (arrived_[i]) continue;
    auto& [row, col] = pos_[i];
    // Moves off the grid leave the agent in place.
    switch (actions[i]) {
      case kUp: row = row > 0 ? row - 1 : row; break;
      case kDown: row = row + 1 < p.height ? row + 1 : row; break;
      case kLeft: col = col > 0 ? col - 1 : col; break;
      case kRight: col = col + 1 < p.width ? col + 1 : col; break;
      default: break;
    }
  }
  ++t_;

  bool fell = false;
  std::bernoulli_distribution slip(p.cliff_prob);
  for (std::size_t i = 0; i < p.n_agents; ++i) {
    if (!arrived_[i] && is_cliff(pos_[i].first, pos_[i].second) && slip(rng_)) fell = true;
  }
  for (std::size_t i = 0; i < p.n_agents; ++i) {
    if (pos_[i].first == 0 && pos_[i].second + 1 == p.width) arrived_[i] = true;
  }

  double reward = -p.step_cost;
  bool terminal = false;
  if (fell) {
    reward -= p.cliff_penalty;
    terminal = true;
  } else if (std::all_of(arrived_.begin(), arrived_.end(), [](bool b) { return b; })) {
    reward += p.goal_reward;
    terminal = true;
    success_ = true;
  }
  const bool done = terminal || t_ >= p.horizon;
  over_ = done;
  return observe(reward, terminal, done);
}

// --------------------------------------------------------- enumerable MDPs

TabularMdp TabularMdp::random(std::size_t n_states, std::size_t n_agents, std::size_t n_actions, double r_max,
                              Rng& rng) {
  TabularMdp mdp;
  mdp.n_states = n_states;
  mdp.n_joint = 1;
  for (std::size_t i = 0; i < n_agents; ++i) mdp.n_joint *= n_actions;
  std::uniform_real_distribution<double> reward(-r_max, r_max);
  std::uniform_real_distribution<double> weight(0.0, 1.0);
  mdp.reward.resize(n_states * mdp.n_joint);
  for (double& r : mdp.reward) r = reward(rng);
  mdp.transition.resize(n_states * mdp.n_joint * n_states);
  for (std::size_t su = 0; su < n_states * mdp.n_joint; ++su) {
    double total = 0.0;
    for (std::size_t s2 = 0; s2 < n_states; ++s2) total += (mdp.transition[su * n_states + s2] = weight(rng));
    for (std::size_t s2 = 0; s2 < n_states; ++s2) mdp.transition[su * n_states + s2] /= total;
  }
  return mdp;
}

ProbeMdp ProbeMdp::random(std::size_t n_states, std::size_t n_agents, std::size_t n_actions, std::size_t atoms,
                          double noise, double gamma, Rng& rng) {
  ProbeMdp probe;
  probe.n_states = n_states;
  probe.n_agents = n_agents;
  probe.n_actions = n_actions;
  probe.atoms = atoms;
  probe.noise = noise;
  probe.gamma = gamma;
  std::uniform_real_distribution<double> value(-1.0, 1.0);
  probe.q.resize(n_states * n_agents * n_actions);
  for (double& q : probe.q) q = value(rng);
  return probe;
}

}  // namespace rmix
