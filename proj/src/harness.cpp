#include "rmix/harness.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace rmix {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

Rng stream(std::uint64_t seed, std::uint64_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id)};
  return Rng(seq);
}

void write_atomically(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + tmp.string());
    f << text;
    if (!f.flush()) throw Error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string csv_header(std::size_t levels) {
  std::string h = "step,episode,train_steps,td_loss,qr_loss,grad_norm,eval_success,eval_return";
  for (std::size_t k = 1; k <= levels; ++k) h += ",alpha_k" + std::to_string(k);
  return h;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_row(const MetricsRecord& r) {
  std::string s = std::to_string(r.step) + "," + std::to_string(r.episode) + "," + std::to_string(r.train_steps) +
                  "," + num(r.td_loss) + "," + (r.qr_loss ? num(*r.qr_loss) : "") + "," + num(r.grad_norm) + "," +
                  num(r.eval_success) + "," + num(r.eval_return);
  for (auto c : r.alpha_histogram) s += "," + std::to_string(c);
  return s;
}

Json tensors_json(const NamedTensors& named) {
  Json out = Json::object();
  for (const auto& [name, t] : named) {
    out[name] = {{"shape", t.shape()}, {"data", std::vector<double>(t.data().begin(), t.data().end())}};
  }
  return out;
}

NamedTensors tensors_from_json(const Json& j) {
  NamedTensors out;
  for (const auto& [name, value] : j.items()) {
    out.emplace_back(name, Tensor(value.at("shape").get<Shape>(), value.at("data").get<std::vector<double>>()));
  }
  return out;
}

Json adam_json(const AdamState& s) {
  return {{"lr", s.config.lr},     {"beta1", s.config.beta1},    {"beta2", s.config.beta2},
          {"eps", s.config.eps},   {"step", s.step},             {"first_moment", s.first_moment},
          {"second_moment", s.second_moment}};
}

AdamState adam_from_json(const Json& j) {
  AdamState s;
  s.config.lr = j.at("lr").get<double>();
  s.config.beta1 = j.at("beta1").get<double>();
  s.config.beta2 = j.at("beta2").get<double>();
  s.config.eps = j.at("eps").get<double>();
  s.step = j.at("step").get<std::int64_t>();
  s.first_moment = j.at("first_moment").get<std::vector<std::vector<double>>>();
  s.second_moment = j.at("second_moment").get<std::vector<std::vector<double>>>();
  return s;
}

constexpr int kCheckpointVersion = 1;

}  // namespace

// ---------------------------------------------------------------- evaluation

EvalResult evaluate(const Learner& learner, const Env& env, std::size_t episodes, std::uint64_t seed_base) {
  if (episodes == 0) throw Error("evaluate: need at least one episode");
  auto copy = env.clone();
  Rng rng = stream(seed_base, 0);
  EvalResult r;
  for (std::size_t e = 0; e < episodes; ++e) {
    const Episode ep = learner.rollout(*copy, {0.0, seed_base + e}, rng);
    r.success_rate += ep.success ? 1.0 : 0.0;
    r.mean_return += ep.total_return();
  }
  r.success_rate /= static_cast<double>(episodes);
  r.mean_return /= static_cast<double>(episodes);
  return r;
}

// ------------------------------------------------------------------- metrics

std::string metrics_json_line(const MetricsRecord& r) {
  Json j;
  j["step"] = r.step;
  j["episode"] = r.episode;
  j["train_steps"] = r.train_steps;
  j["td_loss"] = r.td_loss;
  j["qr_loss"] = r.qr_loss ? Json(*r.qr_loss) : Json(nullptr);
  j["grad_norm"] = r.grad_norm;
  j["eval_success"] = r.eval_success;
  j["eval_return"] = r.eval_return;
  j["alpha_histogram"] = r.alpha_histogram;
  return j.dump();
}

MetricsRecord parse_metrics_line(const std::string& line) try {
  const Json j = Json::parse(line);
  MetricsRecord r;
  r.step = j.at("step").get<std::int64_t>();
  r.episode = j.at("episode").get<std::int64_t>();
  r.train_steps = j.at("train_steps").get<std::int64_t>();
  r.td_loss = j.at("td_loss").get<double>();
  if (!j.at("qr_loss").is_null()) r.qr_loss = j.at("qr_loss").get<double>();
  r.grad_norm = j.at("grad_norm").get<double>();
  r.eval_success = j.at("eval_success").get<double>();
  r.eval_return = j.at("eval_return").get<double>();
  r.alpha_histogram = j.at("alpha_histogram").get<std::vector<std::int64_t>>();
  return r;
} catch (const Json::exception& e) {
  throw Error(std::string("metrics record: ") + e.what());
}

std::vector<MetricsRecord> read_metrics(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open metrics file " + path.string());
  std::vector<MetricsRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(f, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(parse_metrics_line(line));
    } catch (const std::exception& e) {
      throw Error(path.string() + " line " + std::to_string(n) + ": malformed record (" + e.what() + ")");
    }
  }
  if (out.empty()) throw Error(path.string() + ": no metrics records");
  return out;
}

// ------------------------------------------------------------------ training

RunResult run_training(const RunConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  RunResult result;
  result.metrics_path = out_dir / "metrics.jsonl";
  result.checkpoint_path = out_dir / "checkpoint.json";
  std::ofstream metrics(result.metrics_path, std::ios::binary | std::ios::trunc);
  std::ofstream table(out_dir / "metrics.csv", std::ios::binary | std::ios::trunc);
  std::ofstream timing(out_dir / "timing.jsonl", std::ios::binary | std::ios::trunc);
  if (!metrics || !table || !timing) throw Error("cannot create metrics files in " + out_dir.string());
  write_atomically(out_dir / "config.ini", config_text(cfg));

  const auto env = make_env(cfg.env);
  Learner learner(cfg.trainer, env->spec(), cfg.seed);
  ReplayBuffer buffer(cfg.trainer.buffer_capacity);
  Rng explore = stream(cfg.seed, 1);
  Rng sampler = stream(cfg.seed, 2);
  Rng env_seeds = stream(cfg.seed, 3);
  const std::uint64_t eval_seed = stream(cfg.seed, 4)();
  const auto started = std::chrono::steady_clock::now();
  const std::size_t levels = cfg.trainer.risk_levels;
  table << csv_header(levels) << "\n";

  std::int64_t env_steps = 0, episodes = 0, next_eval = 0;
  double td_sum = 0.0, qr_sum = 0.0, norm_sum = 0.0;
  std::int64_t td_n = 0, qr_n = 0;
  std::vector<std::int64_t> hist(levels, 0);

  auto record = [&] {
    const EvalResult ev = evaluate(learner, *env, cfg.eval_episodes, eval_seed);
    // The untrained network's score says nothing about learned strategies.
    if (learner.train_steps() > 0) learner.gate().observe(ev.success_rate);
    MetricsRecord r;
    r.step = env_steps;
    r.episode = episodes;
    r.train_steps = learner.train_steps();
    r.td_loss = td_n > 0 ? td_sum / static_cast<double>(td_n) : 0.0;
    if (qr_n > 0) r.qr_loss = qr_sum / static_cast<double>(qr_n);
    r.grad_norm = td_n > 0 ? norm_sum / static_cast<double>(td_n) : 0.0;
    r.eval_success = ev.success_rate;
    r.eval_return = ev.mean_return;
    r.alpha_histogram = hist;
    metrics << metrics_json_line(r) << "\n" << std::flush;
    table << csv_row(r) << "\n" << std::flush;
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    timing << Json{{"step", r.step}, {"wall_seconds", wall}}.dump() << "\n" << std::flush;
    save_checkpoint(result.checkpoint_path, cfg, learner, env_steps, episodes);
    result.records.push_back(r);
    td_sum = qr_sum = norm_sum = 0.0;
    td_n = qr_n = 0;
    std::fill(hist.begin(), hist.end(), 0);
  };

  try {
    while (env_steps < cfg.total_steps) {
      if (env_steps >= next_eval) {
        record();
        next_eval += cfg.eval_interval;
      }
      const double eps = cfg.trainer.epsilon.at(env_steps);
      Episode ep = learner.rollout(*env, {eps, env_seeds()}, explore);
      env_steps += static_cast<std::int64_t>(ep.length());
      ++episodes;
      for (const auto& step : ep.alpha) {
        for (double a : step) {
          const auto k = static_cast<std::size_t>(std::lround(a * static_cast<double>(levels)));
          ++hist[k - 1];
        }
      }
      buffer.push(std::move(ep));
      if (buffer.size() >= cfg.trainer.batch_size) {
        const auto picked = buffer.sample(cfg.trainer.batch_size, sampler);
        const EpisodeBatch batch = EpisodeBatch::from_episodes(picked, learner.agent_config(), env->spec().state_dim);
        const TrainMetrics m = learner.train_step(batch);
        td_sum += m.td_loss;
        norm_sum += m.grad_norm;
        ++td_n;
        if (m.qr_loss) {
          qr_sum += *m.qr_loss;
          ++qr_n;
        }
      }
    }
    record();
  } catch (const std::exception& e) {
    metrics.flush();
    table.flush();
    throw Error("training failed at env step " + std::to_string(env_steps) + " (episode " +
                std::to_string(episodes) + "): " + e.what());
  }
  return result;
}

// --------------------------------------------------------------- checkpoints

void save_checkpoint(const fs::path& path, const RunConfig& cfg, const Learner& learner, std::int64_t env_steps,
                     std::int64_t episodes) {
  Json j;
  j["format"] = "rmix-checkpoint";
  j["version"] = kCheckpointVersion;
  j["config"] = config_text(cfg);
  j["env_steps"] = env_steps;
  j["episodes"] = episodes;
  j["train_steps"] = learner.train_steps();
  j["qr_gate_armed"] = learner.gate().armed;
  j["live"] = tensors_json(learner.live().parameters());
  j["target"] = tensors_json(learner.target().parameters());
  j["adam"] = adam_json(learner.optimizer().state());
  j["qr_adam"] = adam_json(learner.qr_optimizer().state());
  write_atomically(path, j.dump() + "\n");
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open checkpoint " + path.string());
  Json j;
  try {
    j = Json::parse(f);
    if (j.at("format") != "rmix-checkpoint") throw Error("not an rmix checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion) throw Error("unsupported checkpoint version");
    Checkpoint c;
    c.config = parse_config(j.at("config").get<std::string>());
    c.env_steps = j.at("env_steps").get<std::int64_t>();
    c.episodes = j.at("episodes").get<std::int64_t>();
    const auto env = make_env(c.config.env);
    c.learner = std::make_unique<Learner>(c.config.trainer, env->spec(), c.config.seed);
    c.learner->restore(tensors_from_json(j.at("live")), tensors_from_json(j.at("target")),
                       adam_from_json(j.at("adam")), adam_from_json(j.at("qr_adam")),
                       j.at("train_steps").get<std::int64_t>(), j.at("qr_gate_armed").get<bool>());
    return c;
  } catch (const std::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------- alpha trace

std::string AlphaTrace::csv() const {
  std::ostringstream out;
  out << "step";
  for (std::size_t i = 0; i < n_agents; ++i) out << ",alpha_" << i;
  out << ",reward\n";
  for (std::size_t t = 0; t < reward.size(); ++t) {
    out << t;
    for (double a : alpha[t]) out << "," << num(a);
    out << "," << num(reward[t]) << "\n";
  }
  return out.str();
}

AlphaTrace dump_alpha_trace(const Learner& learner, Env& env, std::uint64_t seed) {
  const EnvSpec& a = learner.spec();
  const EnvSpec& b = env.spec();
  if (a.n_agents != b.n_agents || a.n_actions != b.n_actions || a.obs_dim != b.obs_dim ||
      a.state_dim != b.state_dim) {
    throw Error("trace: environment " + env.name() + " does not match the checkpoint's networks");
  }
  Rng rng = stream(seed, 5);
  const Episode ep = learner.rollout(env, {0.0, seed}, rng);
  return {a.n_agents, ep.alpha, ep.reward};
}

}  // namespace rmix
