#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rmix/nn.hpp"

namespace rmix {

struct EnvSpec {
  std::size_t n_agents = 0;
  std::size_t n_actions = 0;
  std::size_t obs_dim = 0;
  std::size_t state_dim = 0;
  std::size_t horizon = 0;
  double r_max = 0.0;  // |per-step reward| <= r_max
};

struct TimeStep {
  std::vector<std::vector<double>> obs;   // per agent
  std::vector<double> state;
  std::vector<std::vector<bool>> avail;   // per agent, per action
  double reward = 0.0;
  bool terminated = false;  // true terminal: no bootstrap past this step
  bool done = false;        // episode over (terminal or horizon reached)
};

class Env {
 public:
  virtual ~Env() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual std::string name() const = 0;
  virtual TimeStep reset(std::uint64_t seed) = 0;
  // Throws when an agent picks an unavailable action or the episode is over.
  virtual TimeStep step(std::span<const std::size_t> actions) = 0;
  // Evaluation success of the episode that just finished.
  virtual bool success() const = 0;
  virtual std::unique_ptr<Env> clone() const = 0;
};

// Two agents, two levers (0 = safe, 1 = risky), one step.
//   (safe, safe)   -> safe_payoff
//   (risky, risky) -> risky_high w.p. risky_prob, else risky_low
//   mixed          -> 0
struct MatrixGameParams {
  double safe_payoff = 2.5;
  double risky_high = 11.0;
  double risky_low = -5.0;
  double risky_prob = 0.5;
  // Success means playing the CVaR-optimal joint action at this level.
  double success_alpha = 0.5;
};

class RiskyMatrixGame final : public Env {
 public:
  static constexpr std::size_t kSafe = 0;
  static constexpr std::size_t kRisky = 1;

  explicit RiskyMatrixGame(MatrixGameParams params = {});

  const EnvSpec& spec() const override { return spec_; }
  std::string name() const override { return "matrix"; }
  TimeStep reset(std::uint64_t seed) override;
  TimeStep step(std::span<const std::size_t> actions) override;
  bool success() const override { return success_; }
  std::unique_ptr<Env> clone() const override { return std::make_unique<RiskyMatrixGame>(*this); }

  const MatrixGameParams& params() const { return params_; }
  // Exact payoff distribution of a joint action: (values, probabilities).
  std::pair<std::vector<double>, std::vector<double>> outcomes(std::size_t a0, std::size_t a1) const;
  std::array<std::size_t, 2> cvar_optimal_joint(double alpha) const;

 private:
  TimeStep observe(double reward, bool terminal) const;

  MatrixGameParams params_;
  EnvSpec spec_;
  Rng rng_;
  bool over_ = true;
  bool success_ = false;
  std::array<std::size_t, 2> optimal_{};
};

// Exact CVaR of every joint action by enumerating the payoff table.
std::map<std::array<std::size_t, 2>, double> oracle_policy_values(const RiskyMatrixGame& game, double alpha);

// Agents walk from the top-left corner to the top-right goal. The direct top
// row is a cliff: each step an agent spends on it triggers, with probability
// cliff_prob, a team penalty that ends the episode. The detour one row down
// is safe but two steps longer.
struct GridworldParams {
  std::size_t width = 6;
  std::size_t height = 3;
  std::size_t n_agents = 2;
  std::size_t view_radius = 1;
  std::size_t horizon = 20;
  double cliff_prob = 0.01;
  double cliff_penalty = 1.0;
  double goal_reward = 1.0;
  double step_cost = 0.1;
  // Level at which the safe detour must beat the cliff path in CVaR.
  double check_alpha = 0.25;
};

struct ScriptedValue {
  double expectation = 0.0;
  double cvar = 0.0;
};

class RiskyGridworld final : public Env {
 public:
  enum Action : std::size_t { kStay = 0, kUp = 1, kDown = 2, kLeft = 3, kRight = 4 };

  // Throws unless the cliff path wins in expectation while the detour wins
  // in CVaR at check_alpha (both evaluated exactly).
  explicit RiskyGridworld(GridworldParams params = {});

  const EnvSpec& spec() const override { return spec_; }
  std::string name() const override { return "gridworld"; }
  TimeStep reset(std::uint64_t seed) override;
  TimeStep step(std::span<const std::size_t> actions) override;
  bool success() const override { return success_; }
  std::unique_ptr<Env> clone() const override { return std::make_unique<RiskyGridworld>(*this); }

  const GridworldParams& params() const { return params_; }
  bool is_cliff(std::size_t row, std::size_t col) const;
  // Exact return distribution of every agent following one scripted route.
  std::pair<std::vector<double>, std::vector<double>> scripted_returns(bool cliff_route) const;
  ScriptedValue scripted_value(bool cliff_route) const;
  std::pair<std::size_t, std::size_t> position(std::size_t agent) const { return pos_[agent]; }

 private:
  TimeStep observe(double reward, bool terminal, bool done) const;
  std::vector<double> observation(std::size_t agent) const;

  GridworldParams params_;
  EnvSpec spec_;
  Rng rng_;
  std::vector<std::pair<std::size_t, std::size_t>> pos_;
  std::vector<bool> arrived_;
  std::size_t t_ = 0;
  bool over_ = true;
  bool success_ = false;
};

// Fully enumerable cooperative MDP: n_states states, joint actions indexed
// 0 .. n_actions^n_agents - 1, expected reward R(s, u), transitions P(s'|s, u).
struct TabularMdp {
  std::size_t n_states = 0;
  std::size_t n_joint = 0;
  std::vector<double> reward;      // [s * n_joint + u]
  std::vector<double> transition;  // [(s * n_joint + u) * n_states + s']

  static TabularMdp random(std::size_t n_states, std::size_t n_agents, std::size_t n_actions, double r_max,
                           Rng& rng);
};

// Noisy-reward probe for the post-update bias. Each agent owns a true value
// table Q_i(s, u_i); its return distribution at (s, u_i) is M draws of
// Q_i(s, u_i) + noise * N(0, 1). Joint value is additive across agents.
struct ProbeMdp {
  std::size_t n_states = 4;
  std::size_t n_agents = 2;
  std::size_t n_actions = 4;
  std::size_t atoms = 35;
  double noise = 1.0;
  double gamma = 0.99;
  std::vector<double> q;  // [(s * n_agents + i) * n_actions + u]

  static ProbeMdp random(std::size_t n_states, std::size_t n_agents, std::size_t n_actions, std::size_t atoms,
                         double noise, double gamma, Rng& rng);
  double true_q(std::size_t s, std::size_t agent, std::size_t action) const {
    return q[(s * n_agents + agent) * n_actions + action];
  }
};

}  // namespace rmix
