#include "rmix/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <string>

namespace rmix {

namespace {

// std::vector<bool> has no contiguous storage, so spans need a copy.
class BoolRow {
 public:
  BoolRow(const std::vector<bool>& src, std::size_t begin, std::size_t n) : data_(new bool[n]), n_(n) {
    for (std::size_t i = 0; i < n; ++i) data_[i] = src[begin + i];
  }
  std::span<const bool> view() const { return {data_.get(), n_}; }

 private:
  std::unique_ptr<bool[]> data_;
  std::size_t n_;
};

std::vector<int> decide_rows(const Tensor& probs, std::size_t atoms) {
  std::vector<int> k(probs.rows());
  const std::size_t levels = probs.cols();
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    k[r] = decide(probs.data().subspan(r * levels, levels), atoms).level.k();
  }
  return k;
}

// Risk level per row for one time slice; advances the predictor hidden state.
// The argmax makes the choice piecewise constant, so the predictor is run
// off the tape: no loss term can send it gradient through this path.
std::vector<int> risk_levels(const NetworkBundle& net, const TrainerConfig& cfg, const Tensor& inputs,
                             const Tensor& atoms, Tensor& predictor_hidden) {
  if (cfg.risk_mode == RiskMode::kStatic) {
    return std::vector<int>(inputs.rows(), cfg.static_level().k());
  }
  NoGradScope no_grad;
  const Tensor dist = net.predictor.embed_distribution(atoms);
  auto traj = net.predictor.embed_trajectory(inputs, predictor_hidden);
  predictor_hidden = traj.hidden;
  return decide_rows(net.predictor.alpha_probs(dist, traj.chunks), cfg.atoms);
}

double tail_value(std::span<const double> atoms, std::size_t tail) {
  std::vector<double> s(atoms.begin(), atoms.end());
  std::stable_sort(s.begin(), s.end());
  return std::accumulate(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(tail), 0.0) /
         static_cast<double>(tail);
}

// Greedy action and its CVaR for one row of flattened (A*M) atoms.
std::pair<std::size_t, double> greedy_cvar(std::span<const double> atoms, std::size_t n_actions, std::size_t m,
                                           std::size_t tail, std::span<const bool> avail) {
  std::vector<double> values(n_actions);
  for (std::size_t a = 0; a < n_actions; ++a) values[a] = tail_value(atoms.subspan(a * m, m), tail);
  const std::size_t best = greedy_action(values, avail);
  return {best, values[best]};
}

}  // namespace

double Episode::total_return() const { return std::accumulate(reward.begin(), reward.end(), 0.0); }

// ------------------------------------------------------------------ batching

EpisodeBatch EpisodeBatch::from_episodes(std::span<const Episode* const> episodes, const AgentNetConfig& cfg,
                                         std::size_t state_dim, std::size_t pad_to) {
  if (episodes.empty()) throw Error("EpisodeBatch: no episodes");
  EpisodeBatch b;
  b.batch = episodes.size();
  b.n_agents = cfg.n_agents;
  b.n_actions = cfg.n_actions;
  for (const Episode* e : episodes) b.steps = std::max(b.steps, e->length());
  b.steps = std::max(b.steps, pad_to);
  if (b.steps == 0) throw Error("EpisodeBatch: empty episodes");

  const std::size_t rows = b.batch * b.n_agents, width = cfg.input_dim(), na = b.n_actions;
  for (std::size_t t = 0; t <= b.steps; ++t) {
    std::vector<double> in(rows * width, 0.0), st(b.batch * state_dim, 0.0);
    std::vector<bool> av(rows * na, true);
    for (std::size_t e = 0; e < b.batch; ++e) {
      const Episode& ep = *episodes[e];
      if (t > ep.length()) continue;
      if (ep.state[t].size() != state_dim) throw Error("EpisodeBatch: state width mismatch");
      std::copy(ep.state[t].begin(), ep.state[t].end(), st.begin() + static_cast<std::ptrdiff_t>(e * state_dim));
      for (std::size_t i = 0; i < b.n_agents; ++i) {
        const int last = t == 0 ? -1 : static_cast<int>(ep.actions[t - 1][i]);
        const std::size_t row = e * b.n_agents + i;
        build_agent_input(cfg, ep.obs[t][i], last, i, std::span<double>(in).subspan(row * width, width));
        for (std::size_t a = 0; a < na; ++a) av[row * na + a] = ep.avail[t][i][a];
      }
    }
    b.inputs.emplace_back(Shape{rows, width}, std::move(in));
    b.states.emplace_back(Shape{b.batch, state_dim}, std::move(st));
    b.avail.push_back(std::move(av));
  }
  for (std::size_t t = 0; t < b.steps; ++t) {
    std::vector<std::size_t> act(rows, 0);
    std::vector<double> rew(b.batch, 0.0), term(b.batch, 1.0), mask(b.batch, 0.0);
    for (std::size_t e = 0; e < b.batch; ++e) {
      const Episode& ep = *episodes[e];
      if (t >= ep.length()) continue;
      for (std::size_t i = 0; i < b.n_agents; ++i) act[e * b.n_agents + i] = ep.actions[t][i];
      rew[e] = ep.reward[t];
      term[e] = ep.terminated[t] ? 1.0 : 0.0;
      mask[e] = 1.0;
    }
    b.actions.push_back(std::move(act));
    b.reward.push_back(std::move(rew));
    b.terminated.push_back(std::move(term));
    b.mask.push_back(std::move(mask));
  }
  return b;
}

double EpisodeBatch::filled() const {
  double n = 0.0;
  for (const auto& m : mask) n += std::accumulate(m.begin(), m.end(), 0.0);
  return n;
}

// -------------------------------------------------------------------- replay

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw Error("ReplayBuffer: capacity must be positive");
  episodes_.reserve(std::min<std::size_t>(capacity, 1024));
}

void ReplayBuffer::push(Episode episode) {
  if (episode.length() == 0) throw Error("ReplayBuffer: empty episode");
  if (episodes_.size() < capacity_) {
    episodes_.push_back(std::move(episode));
  } else {
    episodes_[next_] = std::move(episode);
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<const Episode*> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  if (n > episodes_.size()) {
    throw Error("ReplayBuffer: need " + std::to_string(n) + " episodes, have " + std::to_string(episodes_.size()));
  }
  std::vector<std::size_t> idx(episodes_.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<const Episode*> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
    out.push_back(&episodes_[idx[i]]);
  }
  return out;
}

// -------------------------------------------------------------------- losses

double td_target(double reward, bool terminated, double target_max_cvar_tot, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw Error("td_target: gamma outside [0, 1)");
  return reward + (terminated ? 0.0 : gamma * target_max_cvar_tot);
}

double quantile_huber(double nu, double tau, double kappa) {
  if (!(tau > 0.0 && tau < 1.0)) throw Error("quantile_huber: tau outside (0, 1)");
  if (!(kappa > 0.0)) throw Error("quantile_huber: kappa must be positive");
  const double a = std::fabs(nu);
  const double huber = a <= kappa ? 0.5 * nu * nu : kappa * (a - 0.5 * kappa);
  return huber * std::fabs(tau - (nu < 0.0 ? 1.0 : 0.0));
}

std::vector<double> quantile_midpoints(std::size_t atoms) {
  std::vector<double> tau(atoms);
  for (std::size_t j = 0; j < atoms; ++j) {
    tau[j] = (2.0 * static_cast<double>(j) + 1.0) / (2.0 * static_cast<double>(atoms));
  }
  return tau;
}

Tensor quantile_huber_loss(const Tensor& pred, const Tensor& target, double kappa) {
  if (pred.rank() != 2 || target.rank() != 2 || pred.rows() != target.rows()) {
    throw Error("quantile_huber_loss: shape mismatch " + shape_string(pred.shape()) + " vs " +
                shape_string(target.shape()));
  }
  if (!(kappa > 0.0)) throw Error("quantile_huber_loss: kappa must be positive");
  const std::size_t m = pred.rows(), n = pred.cols(), n_t = target.cols();
  const std::vector<double> tau = quantile_midpoints(n);
  const auto x = pred.data(), y = target.data();
  const double norm = 1.0 / static_cast<double>(n * n_t);

  std::vector<double> v(m, 0.0), dx(m * n, 0.0);
  std::vector<std::size_t> order(n);
  for (std::size_t r = 0; r < m; ++r) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t p, std::size_t q) { return x[r * n + p] < x[r * n + q]; });
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t col = order[j];
      const double theta = x[r * n + col];
      for (std::size_t q = 0; q < n_t; ++q) {
        const double nu = y[r * n_t + q] - theta;
        const double w = std::fabs(tau[j] - (nu < 0.0 ? 1.0 : 0.0));
        v[r] += quantile_huber(nu, tau[j], kappa) * norm;
        // d/dtheta of L_kappa(nu) * w, with nu = y - theta
        const double dl = std::fabs(nu) <= kappa ? nu : kappa * (nu > 0.0 ? 1.0 : -1.0);
        dx[r * n + col] -= w * dl * norm;
      }
    }
  }
  Tensor out = make_result({m, 1}, std::move(v), {pred});
  if (out.requires_grad()) {
    auto o = out.node(), p = pred.node();
    active_tape()->record([o, p, dx = std::move(dx), n] {
      if (!p->requires_grad) return;
      p->ensure_grad();
      for (std::size_t i = 0; i < dx.size(); ++i) p->grad[i] += o->grad[i / n] * dx[i];
    });
  }
  return out;
}

// ------------------------------------------------------------------- unrolls

Unrolled unroll(const NetworkBundle& net, const EpisodeBatch& batch, const TrainerConfig& cfg, bool include_final) {
  Unrolled u;
  const std::size_t rows = batch.batch * batch.n_agents;
  Tensor h = net.agent.initial_hidden(rows);
  Tensor hp = net.predictor.initial_hidden(rows);
  const std::size_t last = include_final ? batch.steps : batch.steps - 1;
  for (std::size_t t = 0; t <= last; ++t) {
    auto out = net.agent.forward(batch.inputs[t], h);
    h = out.hidden;
    std::vector<int> k = risk_levels(net, cfg, batch.inputs[t], out.atoms, hp);
    std::vector<std::size_t> tail(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      tail[r] = RiskLevel(k[r], static_cast<int>(cfg.risk_levels)).tail_count(cfg.atoms);
    }
    u.atoms.push_back(out.atoms);
    u.tail.push_back(std::move(tail));
    u.level.push_back(std::move(k));
  }
  return u;
}

namespace {

struct TargetSide {
  std::vector<std::vector<double>> max_tot;             // [t][b]
  std::vector<std::vector<std::size_t>> greedy;         // [t][row]
  Unrolled unrolled;
};

TargetSide target_side(const TargetBundle& target, const EpisodeBatch& batch, const TrainerConfig& cfg) {
  NoGradScope no_grad;
  TargetSide ts;
  ts.unrolled = unroll(target, batch, cfg);
  const std::size_t n = batch.n_agents, na = batch.n_actions, m = cfg.atoms, rows = batch.batch * n;
  for (std::size_t t = 0; t <= batch.steps; ++t) {
    std::vector<double> best(rows);
    std::vector<std::size_t> greedy(rows);
    const auto atoms = ts.unrolled.atoms[t].data();
    for (std::size_t r = 0; r < rows; ++r) {
      const BoolRow avail(batch.avail[t], r * na, na);
      auto [a, c] = greedy_cvar(atoms.subspan(r * na * m, na * m), na, m, ts.unrolled.tail[t][r], avail.view());
      greedy[r] = a;
      best[r] = c;
    }
    // Monotone mixing: per-agent maxima give the joint maximum.
    const Tensor mixed = target.mixer.forward(Tensor({batch.batch, n}, std::move(best)), batch.states[t]);
    ts.max_tot.emplace_back(mixed.data().begin(), mixed.data().end());
    ts.greedy.push_back(std::move(greedy));
  }
  return ts;
}

}  // namespace

std::vector<std::vector<double>> target_max_cvar_tot(const TargetBundle& target, const EpisodeBatch& batch,
                                                     const TrainerConfig& cfg) {
  return target_side(target, batch, cfg).max_tot;
}

Tensor td_loss(const NetworkBundle& live, const TargetBundle& target, const EpisodeBatch& batch,
               const TrainerConfig& cfg) {
  const double filled = batch.filled();
  if (filled <= 0.0) throw Error("td_loss: batch has no filled steps");
  const auto next = target_max_cvar_tot(target, batch, cfg);
  const Unrolled u = unroll(live, batch, cfg, false);
  const std::size_t b = batch.batch, n = batch.n_agents;

  std::vector<Tensor> c_tot;
  std::vector<double> y(b * batch.steps), mask(b * batch.steps);
  for (std::size_t t = 0; t < batch.steps; ++t) {
    const Tensor chosen = ops::gather_blocks(u.atoms[t], batch.actions[t], cfg.atoms);
    const Tensor cvars = ops::tail_mean(chosen, u.tail[t]).reshape({b, n});
    c_tot.push_back(live.mixer.forward(cvars, batch.states[t]));
    for (std::size_t e = 0; e < b; ++e) {
      y[e * batch.steps + t] = td_target(batch.reward[t][e], batch.terminated[t][e] > 0.5, next[t + 1][e], cfg.gamma);
      mask[e * batch.steps + t] = batch.mask[t][e];
    }
  }
  const Tensor pred = ops::concat_cols(c_tot);
  const Tensor err = ops::sub(pred, Tensor({b, batch.steps}, std::move(y)));
  const Tensor masked = ops::mul(ops::square(err), Tensor({b, batch.steps}, std::move(mask)));
  return ops::scale(ops::sum(masked), 1.0 / filled);
}

Tensor qr_loss(const NetworkBundle& live, const TargetBundle& target, const EpisodeBatch& batch,
               const TrainerConfig& cfg) {
  const double filled = batch.filled();
  if (filled <= 0.0) throw Error("qr_loss: batch has no filled steps");
  const TargetSide next = target_side(target, batch, cfg);
  const Unrolled u = unroll(live, batch, cfg, false);
  const std::size_t n = batch.n_agents, na = batch.n_actions, m = cfg.atoms, rows = batch.batch * n;

  Tensor total = Tensor::scalar(0.0);
  for (std::size_t t = 0; t < batch.steps; ++t) {
    const Tensor chosen = ops::gather_blocks(u.atoms[t], batch.actions[t], m);
    std::vector<double> tgt(rows * m), row_mask(rows);
    const auto next_atoms = next.unrolled.atoms[t + 1].data();
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t e = r / n;
      row_mask[r] = batch.mask[t][e];
      // Dummy reward: the agent's own CVaR, as a constant.
      const double c = tail_value(chosen.data().subspan(r * m, m), u.tail[t][r]);
      const double bootstrap = batch.terminated[t][e] > 0.5 ? 0.0 : cfg.gamma;
      const std::size_t a = next.greedy[t + 1][r];
      for (std::size_t j = 0; j < m; ++j) tgt[r * m + j] = c + bootstrap * next_atoms[r * na * m + a * m + j];
    }
    const Tensor per_row = quantile_huber_loss(chosen, Tensor({rows, m}, std::move(tgt)), cfg.qr_kappa);
    total = ops::add(total, ops::sum(ops::mul(per_row, Tensor({rows, 1}, std::move(row_mask)))));
  }
  return ops::scale(total, 1.0 / (filled * static_cast<double>(n)));
}

// ------------------------------------------------------------------- learner

AgentNetConfig agent_config_for(const TrainerConfig& cfg, const EnvSpec& spec) {
  AgentNetConfig a;
  a.obs_dim = spec.obs_dim;
  a.n_actions = spec.n_actions;
  a.n_agents = spec.n_agents;
  a.atoms = cfg.atoms;
  a.hidden_dim = cfg.agent_hidden;
  return a;
}

NetworkBundle make_bundle(const TrainerConfig& cfg, const EnvSpec& spec, Rng& rng) {
  if (cfg.atoms == 0) throw Error("atoms must be positive");
  if (cfg.risk_levels == 0) throw Error("risk_levels must be positive");
  const AgentNetConfig a = agent_config_for(cfg, spec);
  RiskPredictorConfig p;
  p.dist_dim = spec.n_actions * cfg.atoms;
  p.input_dim = a.input_dim();
  p.levels = cfg.risk_levels;
  p.chunk_dim = cfg.chunk_dim;
  p.hidden_dim = cfg.predictor_hidden;
  MixerConfig mc;
  mc.kind = cfg.mixer;
  mc.n_agents = spec.n_agents;
  mc.state_dim = spec.state_dim;
  mc.hidden_dim = cfg.mixer_hidden;
  mc.activation = cfg.mixer_activation;
  NetworkBundle bundle{AgentNet::init(a, rng), RiskPredictor::init(p, rng), Mixer::init(mc, rng)};
  return bundle;
}

namespace {

Adam adam_for(const NamedTensors& params, double lr) {
  AdamConfig c;
  c.lr = lr;
  return Adam(tensors_of(params), c);
}

}  // namespace

Learner::Learner(const TrainerConfig& cfg, const EnvSpec& spec, std::uint64_t seed)
    : cfg_(cfg),
      spec_(spec),
      agent_cfg_(agent_config_for(cfg, spec)),
      live_([&] {
        Rng rng(seed);
        return make_bundle(cfg, spec, rng);
      }()),
      target_(sync_target(live_)),
      adam_(adam_for(live_.parameters(), cfg.lr)),
      qr_adam_(adam_for(live_.agent.parameters(), cfg.lr)) {
  if (cfg.risk_mode == RiskMode::kStatic) (void)cfg.static_level();
  gate_.period = cfg.qr_period;
  gate_.threshold = cfg.qr_threshold;
}

Episode Learner::rollout(Env& env, const RolloutOptions& options, Rng& rng) const {
  NoGradScope no_grad;
  const std::size_t n = spec_.n_agents, na = spec_.n_actions, m = cfg_.atoms, width = agent_cfg_.input_dim();
  Episode ep;
  TimeStep ts = env.reset(options.env_seed);
  Tensor h = live_.agent.initial_hidden(n);
  Tensor hp = live_.predictor.initial_hidden(n);
  std::vector<int> last(n, -1);
  for (std::size_t t = 0;; ++t) {
    ep.obs.push_back(ts.obs);
    ep.state.push_back(ts.state);
    ep.avail.push_back(ts.avail);
    if (ts.done) break;
    if (t >= spec_.horizon) throw Error("rollout: " + env.name() + " ran past its horizon");

    std::vector<double> in(n * width);
    for (std::size_t i = 0; i < n; ++i) {
      build_agent_input(agent_cfg_, ts.obs[i], last[i], i, std::span<double>(in).subspan(i * width, width));
    }
    const Tensor inputs({n, width}, std::move(in));
    auto out = live_.agent.forward(inputs, h);
    h = out.hidden;
    const std::vector<int> k = risk_levels(live_, cfg_, inputs, out.atoms, hp);

    std::vector<std::size_t> actions(n);
    std::vector<double> alphas(n);
    for (std::size_t i = 0; i < n; ++i) {
      const RiskLevel level(k[i], static_cast<int>(cfg_.risk_levels));
      const std::size_t tail = level.tail_count(m);
      std::vector<double> values(na);
      for (std::size_t a = 0; a < na; ++a) values[a] = tail_value(out.atoms.data().subspan(i * na * m + a * m, m), tail);
      const BoolRow avail(ts.avail[i], 0, na);
      actions[i] = select_action(values, avail.view(), options.epsilon, rng);
      alphas[i] = level.alpha();
      last[i] = static_cast<int>(actions[i]);
    }
    ts = env.step(actions);
    ep.actions.push_back(actions);
    ep.alpha.push_back(alphas);
    ep.reward.push_back(ts.reward);
    ep.terminated.push_back(ts.terminated);
  }
  ep.success = env.success();
  return ep;
}

TrainMetrics Learner::train_step(const EpisodeBatch& batch) {
  TrainMetrics metrics;
  {
    Tape tape;
    TapeScope scope(tape);
    const Tensor loss = td_loss(live_, target_, batch, cfg_);
    metrics.td_loss = loss.item();
    tape.backward(loss);
  }
  std::vector<Tensor> params = adam_.params();
  clip_grad_norm(params, cfg_.grad_clip);
  metrics.grad_norm = global_grad_norm(params);
  adam_.step();
  adam_.zero_grad();
  ++train_steps_;
  metrics.train_step = train_steps_;

  if (cfg_.qr_enabled && gate_.open(train_steps_)) {
    Tape tape;
    TapeScope scope(tape);
    const Tensor loss = qr_loss(live_, target_, batch, cfg_);
    metrics.qr_loss = loss.item();
    tape.backward(loss);
    std::vector<Tensor> agent_params = qr_adam_.params();
    clip_grad_norm(agent_params, cfg_.grad_clip);
    qr_adam_.step();
    qr_adam_.zero_grad();
  }

  if (cfg_.target_interval > 0 && train_steps_ % static_cast<std::int64_t>(cfg_.target_interval) == 0) {
    target_ = sync_target(live_);
    metrics.synced = true;
  }
  return metrics;
}

void Learner::restore(const NamedTensors& live, const NamedTensors& target, AdamState adam, AdamState qr_adam,
                      std::int64_t train_steps, bool gate_armed) {
  copy_values(live, live_.parameters());
  copy_values(target, target_.parameters());
  adam_.load_state(std::move(adam));
  qr_adam_.load_state(std::move(qr_adam));
  train_steps_ = train_steps;
  gate_.armed = gate_armed;
}

// ----------------------------------------------------------- tabular checks

std::vector<double> bellman_operator(const TabularMdp& mdp, std::span<const double> c, double gamma) {
  const std::size_t s_n = mdp.n_states, j_n = mdp.n_joint;
  if (c.size() != s_n * j_n) throw Error("bellman_operator: table size mismatch");
  std::vector<double> best(s_n, -std::numeric_limits<double>::infinity());
  for (std::size_t s = 0; s < s_n; ++s) {
    for (std::size_t u = 0; u < j_n; ++u) best[s] = std::max(best[s], c[s * j_n + u]);
  }
  std::vector<double> out(s_n * j_n);
  for (std::size_t su = 0; su < s_n * j_n; ++su) {
    double expect = 0.0;
    for (std::size_t s2 = 0; s2 < s_n; ++s2) expect += mdp.transition[su * s_n + s2] * best[s2];
    out[su] = mdp.reward[su] + gamma * expect;
  }
  return out;
}

double sup_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("sup_distance: length mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::fabs(a[i] - b[i]));
  return d;
}

std::vector<BiasEstimate> bias_probe(const ProbeMdp& probe, std::span<const double> alphas, std::size_t samples,
                                     Rng& rng) {
  if (samples < 2) throw Error("bias_probe: need at least two samples");
  const std::size_t na = probe.n_actions, m = probe.atoms;
  std::vector<std::size_t> tails;
  for (double a : alphas) {
    if (!(a > 0.0 && a <= 1.0)) throw Error("bias_probe: alpha outside (0, 1]");
    tails.push_back(std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(a * static_cast<double>(m) + 1e-9))));
  }
  std::vector<double> sum(alphas.size(), 0.0), sum_sq(alphas.size(), 0.0);
  std::uniform_int_distribution<std::size_t> state(0, probe.n_states - 1);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> z(m), prefix(m + 1);
  std::vector<double> best_c(alphas.size());
  for (std::size_t n = 0; n < samples; ++n) {
    const std::size_t s = state(rng);
    std::vector<double> psi(alphas.size(), 0.0);
    for (std::size_t i = 0; i < probe.n_agents; ++i) {
      double best_q = -std::numeric_limits<double>::infinity();
      std::fill(best_c.begin(), best_c.end(), -std::numeric_limits<double>::infinity());
      for (std::size_t u = 0; u < na; ++u) {
        const double q = probe.true_q(s, i, u);
        best_q = std::max(best_q, q);
        for (double& x : z) x = q + probe.noise * noise(rng);
        std::sort(z.begin(), z.end());
        prefix[0] = 0.0;
        for (std::size_t j = 0; j < m; ++j) prefix[j + 1] = prefix[j] + z[j];
        for (std::size_t a = 0; a < alphas.size(); ++a) {
          best_c[a] = std::max(best_c[a], prefix[tails[a]] / static_cast<double>(tails[a]));
        }
      }
      for (std::size_t a = 0; a < alphas.size(); ++a) psi[a] += best_c[a] - best_q;
    }
    for (std::size_t a = 0; a < alphas.size(); ++a) {
      const double v = probe.gamma * psi[a];
      sum[a] += v;
      sum_sq[a] += v * v;
    }
  }
  std::vector<BiasEstimate> out;
  const double count = static_cast<double>(samples);
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    const double mean = sum[a] / count;
    const double var = std::max(0.0, (sum_sq[a] - count * mean * mean) / (count - 1.0));
    out.push_back({alphas[a], mean, std::sqrt(var / count)});
  }
  return out;
}

}  // namespace rmix
