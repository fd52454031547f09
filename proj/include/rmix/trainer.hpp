#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rmix/agent_net.hpp"
#include "rmix/envs.hpp"
#include "rmix/mixer.hpp"
#include "rmix/optim.hpp"
#include "rmix/risk_predictor.hpp"

namespace rmix {

enum class RiskMode { kDynamic, kStatic };

struct TrainerConfig {
  MixerKind mixer = MixerKind::kMonotonic;
  MixerActivation mixer_activation = MixerActivation::kElu;
  RiskMode risk_mode = RiskMode::kDynamic;
  double static_alpha = 1.0;  // used when risk_mode is kStatic; must lie on the k/K grid
  bool qr_enabled = true;

  std::size_t atoms = 35;       // M
  std::size_t risk_levels = 10; // K
  std::size_t chunk_dim = 4;
  std::size_t agent_hidden = 64;
  std::size_t predictor_hidden = 64;
  std::size_t mixer_hidden = 32;

  double gamma = 0.99;
  double lr = 5e-4;
  double grad_clip = 10.0;
  std::size_t batch_size = 32;
  std::size_t buffer_capacity = 5000;
  std::size_t target_interval = 200;  // train steps between target syncs
  EpsilonSchedule epsilon;
  std::size_t qr_period = 50;
  double qr_threshold = 0.35;
  double qr_kappa = 1.0;

  RiskLevel static_level() const {
    return RiskLevel::from_alpha(static_alpha, static_cast<int>(risk_levels));
  }
};

// One complete episode of T transitions. obs/state/avail carry T + 1 entries
// (the last one is the state reached by the final transition).
struct Episode {
  std::vector<std::vector<std::vector<double>>> obs;  // [t][agent]
  std::vector<std::vector<double>> state;             // [t]
  std::vector<std::vector<std::vector<bool>>> avail;  // [t][agent]
  std::vector<std::vector<std::size_t>> actions;      // [t][agent], t < T
  std::vector<double> reward;                         // [t], t < T
  std::vector<bool> terminated;                       // [t], t < T
  std::vector<std::vector<double>> alpha;             // [t][agent], level used when acting
  bool success = false;

  std::size_t length() const { return actions.size(); }
  double total_return() const;
};

// B episodes padded to the longest one. Rows inside a time slice are
// episode-major: row = b * N + agent.
struct EpisodeBatch {
  std::size_t batch = 0;
  std::size_t n_agents = 0;
  std::size_t n_actions = 0;
  std::size_t steps = 0;  // max T over the batch

  std::vector<Tensor> inputs;                    // [t], t <= steps: (B*N, input_dim)
  std::vector<Tensor> states;                    // [t], t <= steps: (B, S)
  std::vector<std::vector<bool>> avail;          // [t], t <= steps: B*N*A
  std::vector<std::vector<std::size_t>> actions; // [t], t < steps: B*N
  std::vector<std::vector<double>> reward;       // [t], t < steps: B
  std::vector<std::vector<double>> terminated;   // [t], t < steps: B (1.0 = no bootstrap)
  std::vector<std::vector<double>> mask;         // [t], t < steps: B (0.0 on padding)

  // pad_to > longest episode appends extra padded steps.
  static EpisodeBatch from_episodes(std::span<const Episode* const> episodes, const AgentNetConfig& cfg,
                                    std::size_t state_dim, std::size_t pad_to = 0);
  double filled() const;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Episode episode);
  std::size_t size() const { return episodes_.size(); }
  std::size_t capacity() const { return capacity_; }
  // Distinct episodes drawn uniformly. Throws when fewer than n are stored.
  std::vector<const Episode*> sample(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Episode> episodes_;
};

double td_target(double reward, bool terminated, double target_max_cvar_tot, double gamma);

// L_kappa(nu) |tau - 1{nu < 0}| with the quadratic branch inside |nu| <= kappa.
double quantile_huber(double nu, double tau, double kappa);

// Midpoint quantile fractions (2j - 1) / (2M), j = 1..M.
std::vector<double> quantile_midpoints(std::size_t atoms);

// Per-row quantile Huber loss. The predicted atoms are ranked per row and the
// atom of rank j is assigned fraction tau_j; each is scored against every
// target atom (the expectation over the target distribution):
//   out[r] = (1/M) sum_j (1/M') sum_j' rho_tau_j(target[r, j'] - pred[r, (j)])
// target is a constant. (m, M) x (m, M') -> (m, 1)
Tensor quantile_huber_loss(const Tensor& pred, const Tensor& target, double kappa);

// Forward of a bundle over a padded batch.
struct Unrolled {
  std::vector<Tensor> atoms;                   // [t], t <= steps: (B*N, A*M)
  std::vector<std::vector<std::size_t>> tail;  // [t]: per-row CVaR tail length
  std::vector<std::vector<int>> level;         // [t]: per-row risk level k
};

// include_final also runs the slice at t = steps, which only bootstrapping needs.
Unrolled unroll(const NetworkBundle& net, const EpisodeBatch& batch, const TrainerConfig& cfg,
                bool include_final = true);

// Per-agent greedy CVaR under the target bundle at each t <= steps, mixed into
// max_u C_tot(s_t, u). Returns [t][b].
std::vector<std::vector<double>> target_max_cvar_tot(const TargetBundle& target, const EpisodeBatch& batch,
                                                     const TrainerConfig& cfg);

// Masked mean squared CVaR TD error; recorded on the active tape.
Tensor td_loss(const NetworkBundle& live, const TargetBundle& target, const EpisodeBatch& batch,
               const TrainerConfig& cfg);

// Quantile regression of the chosen-action atoms towards
// detach(C_i) + gamma (1 - terminated) Z_i'(next, greedy), the next-step
// distribution coming from the target bundle. Recorded on the active tape.
Tensor qr_loss(const NetworkBundle& live, const TargetBundle& target, const EpisodeBatch& batch,
               const TrainerConfig& cfg);

struct QrGate {
  std::size_t period = 50;
  double threshold = 0.35;
  bool armed = false;

  // Arms permanently once an evaluation meets the threshold.
  void observe(double eval_success) {
    if (eval_success >= threshold) armed = true;
  }
  bool open(std::int64_t train_step) const {
    return armed && period > 0 && train_step % static_cast<std::int64_t>(period) == 0;
  }
};

struct TrainMetrics {
  std::int64_t train_step = 0;
  double td_loss = 0.0;
  double grad_norm = 0.0;  // after clipping
  std::optional<double> qr_loss;
  bool synced = false;
};

struct RolloutOptions {
  double epsilon = 0.0;
  std::uint64_t env_seed = 0;
};

// Live bundle, optimizers, target and gate: everything a training worker owns.
class Learner {
 public:
  Learner(const TrainerConfig& cfg, const EnvSpec& spec, std::uint64_t seed);

  const TrainerConfig& config() const { return cfg_; }
  const EnvSpec& spec() const { return spec_; }
  const AgentNetConfig& agent_config() const { return agent_cfg_; }
  const NetworkBundle& live() const { return live_; }
  const TargetBundle& target() const { return target_; }
  QrGate& gate() { return gate_; }
  const QrGate& gate() const { return gate_; }
  std::int64_t train_steps() const { return train_steps_; }

  // One episode with epsilon-greedy CVaR actions; no parameter changes.
  Episode rollout(Env& env, const RolloutOptions& options, Rng& rng) const;

  // One TD step (clip + Adam), a QR step when the gate opens, and a target
  // sync every target_interval steps.
  TrainMetrics train_step(const EpisodeBatch& batch);

  // Checkpoint plumbing.
  const Adam& optimizer() const { return adam_; }
  const Adam& qr_optimizer() const { return qr_adam_; }
  void restore(const NamedTensors& live, const NamedTensors& target, AdamState adam, AdamState qr_adam,
               std::int64_t train_steps, bool gate_armed);

 private:
  TrainerConfig cfg_;
  EnvSpec spec_;
  AgentNetConfig agent_cfg_;
  NetworkBundle live_;
  TargetBundle target_;
  Adam adam_;
  Adam qr_adam_;
  QrGate gate_;
  std::int64_t train_steps_ = 0;
};

NetworkBundle make_bundle(const TrainerConfig& cfg, const EnvSpec& spec, Rng& rng);
AgentNetConfig agent_config_for(const TrainerConfig& cfg, const EnvSpec& spec);

// Risk-sensitive Bellman operator on a tabular joint-action value table:
//   (T C)(s, u) = R(s, u) + gamma sum_s' P(s'|s, u) max_u' C(s', u')
std::vector<double> bellman_operator(const TabularMdp& mdp, std::span<const double> c, double gamma);
double sup_distance(std::span<const double> a, std::span<const double> b);

struct BiasEstimate {
  double alpha = 0.0;
  double mean = 0.0;
  double std_error = 0.0;
};

// Monte-Carlo E[Psi_alpha] = gamma E[sum_i max_u CVaR_alpha(Z_i(s', u)) - sum_i max_u Q_i(s', u)]
// with additive mixing. Every alpha sees the same sampled atoms.
std::vector<BiasEstimate> bias_probe(const ProbeMdp& probe, std::span<const double> alphas, std::size_t samples,
                                     Rng& rng);

}  // namespace rmix
