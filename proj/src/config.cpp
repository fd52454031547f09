#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "rmix/harness.hpp"

extern char** environ;

namespace rmix {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end || !std::isfinite(out)) throw Error("expected a number, got '" + v + "'");
  return out;
}

std::int64_t to_int(const std::string& v) {
  std::int64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw Error("expected an integer, got '" + v + "'");
  return out;
}

std::size_t to_count(const std::string& v) {
  const std::int64_t n = to_int(v);
  if (n < 0) throw Error("expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(n);
}

std::vector<double> to_list(const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(trim(item)));
  if (out.empty()) throw Error("expected a comma-separated list");
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct Key {
  std::string name;
  Setter set;
  Getter get;
};

// Every recognised key, per section, in canonical output order.
const std::map<std::string, std::vector<Key>>& schema() {
  static const std::map<std::string, std::vector<Key>> keys = [] {
    std::map<std::string, std::vector<Key>> k;
    auto& top = k[""];
    top.push_back({"algorithm", [](RunConfig& c, const std::string& v) { c.algorithm = lower(v); },
                   [](const RunConfig& c) { return c.algorithm; }});
    top.push_back({"seed", [](RunConfig& c, const std::string& v) { c.seed = static_cast<std::uint64_t>(to_count(v)); },
                   [](const RunConfig& c) { return std::to_string(c.seed); }});
    top.push_back({"total_steps", [](RunConfig& c, const std::string& v) { c.total_steps = to_int(v); },
                   [](const RunConfig& c) { return std::to_string(c.total_steps); }});
    top.push_back({"eval_interval", [](RunConfig& c, const std::string& v) { c.eval_interval = to_int(v); },
                   [](const RunConfig& c) { return std::to_string(c.eval_interval); }});
    top.push_back({"eval_episodes", [](RunConfig& c, const std::string& v) { c.eval_episodes = to_count(v); },
                   [](const RunConfig& c) { return std::to_string(c.eval_episodes); }});
#define RMIX_COUNT(key, field)                                                                  \
  top.push_back({key, [](RunConfig& c, const std::string& v) { c.trainer.field = to_count(v); }, \
                 [](const RunConfig& c) { return std::to_string(c.trainer.field); }})
#define RMIX_REAL(key, field)                                                                    \
  top.push_back({key, [](RunConfig& c, const std::string& v) { c.trainer.field = to_double(v); }, \
                 [](const RunConfig& c) { return fmt(c.trainer.field); }})
    RMIX_COUNT("atoms", atoms);
    RMIX_COUNT("risk_levels", risk_levels);
    RMIX_REAL("alpha", static_alpha);
    RMIX_COUNT("chunk_dim", chunk_dim);
    RMIX_COUNT("agent_hidden", agent_hidden);
    RMIX_COUNT("predictor_hidden", predictor_hidden);
    RMIX_COUNT("mixer_hidden", mixer_hidden);
    RMIX_REAL("gamma", gamma);
    RMIX_REAL("lr", lr);
    RMIX_REAL("grad_clip", grad_clip);
    RMIX_COUNT("batch_size", batch_size);
    RMIX_COUNT("buffer_capacity", buffer_capacity);
    RMIX_COUNT("target_interval", target_interval);
    RMIX_REAL("epsilon_start", epsilon.start);
    RMIX_REAL("epsilon_finish", epsilon.finish);
    top.push_back({"epsilon_anneal",
                   [](RunConfig& c, const std::string& v) { c.trainer.epsilon.anneal_steps = to_int(v); },
                   [](const RunConfig& c) { return std::to_string(c.trainer.epsilon.anneal_steps); }});
    RMIX_COUNT("qr_period", qr_period);
    RMIX_REAL("qr_threshold", qr_threshold);
    RMIX_REAL("qr_kappa", qr_kappa);
#undef RMIX_COUNT
#undef RMIX_REAL
    top.push_back({"mixer_activation",
                   [](RunConfig& c, const std::string& v) {
                     const std::string a = lower(v);
                     if (a == "elu") {
                       c.trainer.mixer_activation = MixerActivation::kElu;
                     } else if (a == "identity") {
                       c.trainer.mixer_activation = MixerActivation::kIdentity;
                     } else {
                       throw Error("mixer_activation must be elu or identity");
                     }
                   },
                   [](const RunConfig& c) {
                     return std::string(c.trainer.mixer_activation == MixerActivation::kElu ? "elu" : "identity");
                   }});

    auto& env = k["env"];
    env.push_back({"name",
                   [](RunConfig& c, const std::string& v) {
                     const std::string n = lower(v);
                     if (n == "matrix") {
                       c.env.kind = EnvKind::kMatrix;
                     } else if (n == "gridworld") {
                       c.env.kind = EnvKind::kGridworld;
                     } else {
                       throw Error("env name must be matrix or gridworld");
                     }
                   },
                   [](const RunConfig& c) { return std::string(c.env.kind == EnvKind::kMatrix ? "matrix" : "gridworld"); }});
#define RMIX_ENV_REAL(key, group, field)                                                         \
  env.push_back({key, [](RunConfig& c, const std::string& v) { c.env.group.field = to_double(v); }, \
                 [](const RunConfig& c) { return fmt(c.env.group.field); }})
#define RMIX_ENV_COUNT(key, group, field)                                                       \
  env.push_back({key, [](RunConfig& c, const std::string& v) { c.env.group.field = to_count(v); }, \
                 [](const RunConfig& c) { return std::to_string(c.env.group.field); }})
    RMIX_ENV_REAL("safe_payoff", matrix, safe_payoff);
    RMIX_ENV_REAL("risky_high", matrix, risky_high);
    RMIX_ENV_REAL("risky_low", matrix, risky_low);
    RMIX_ENV_REAL("risky_prob", matrix, risky_prob);
    RMIX_ENV_REAL("success_alpha", matrix, success_alpha);
    RMIX_ENV_COUNT("width", grid, width);
    RMIX_ENV_COUNT("height", grid, height);
    RMIX_ENV_COUNT("agents", grid, n_agents);
    RMIX_ENV_COUNT("view_radius", grid, view_radius);
    RMIX_ENV_COUNT("horizon", grid, horizon);
    RMIX_ENV_REAL("cliff_prob", grid, cliff_prob);
    RMIX_ENV_REAL("cliff_penalty", grid, cliff_penalty);
    RMIX_ENV_REAL("goal_reward", grid, goal_reward);
    RMIX_ENV_REAL("step_cost", grid, step_cost);
    RMIX_ENV_REAL("check_alpha", grid, check_alpha);
#undef RMIX_ENV_REAL
#undef RMIX_ENV_COUNT

    auto& probe = k["probe"];
#define RMIX_PROBE(key, field, conv, out)                                                       \
  probe.push_back({key, [](RunConfig& c, const std::string& v) { c.probe.field = conv(v); }, \
                   [](const RunConfig& c) { return out(c.probe.field); }})
    RMIX_PROBE("states", states, to_count, std::to_string);
    RMIX_PROBE("agents", agents, to_count, std::to_string);
    RMIX_PROBE("actions", actions, to_count, std::to_string);
    RMIX_PROBE("atoms", atoms, to_count, std::to_string);
    RMIX_PROBE("noise", noise, to_double, fmt);
    RMIX_PROBE("gamma", gamma, to_double, fmt);
    RMIX_PROBE("samples", samples, to_count, std::to_string);
#undef RMIX_PROBE
    probe.push_back({"alphas", [](RunConfig& c, const std::string& v) { c.probe.alphas = to_list(v); },
                     [](const RunConfig& c) {
                       std::string s;
                       for (double a : c.probe.alphas) s += (s.empty() ? "" : ",") + fmt(a);
                       return s;
                     }});
    return k;
  }();
  return keys;
}

std::string canonical_key(const std::string& section, const std::string& key) {
  const std::string k = lower(key);
  if (section.empty() && k == "m") return "atoms";
  if (section.empty() && k == "k") return "risk_levels";
  return k;
}

const Key* find_key(const std::string& section, const std::string& key) {
  const auto& s = schema();
  auto it = s.find(section);
  if (it == s.end()) return nullptr;
  for (const auto& k : it->second) {
    if (k.name == key) return &k;
  }
  return nullptr;
}

struct Entry {
  std::string value;
  std::string where;
};

void finalize(RunConfig& c, bool alpha_given) {
  TrainerConfig& t = c.trainer;
  const std::string& a = c.algorithm;
  const std::string static_prefix = "rmix-static";
  if (a == "rmix" || a == "rdn") {
    if (alpha_given) throw Error("alpha applies only to rmix-static");
    t.mixer = a == "rmix" ? MixerKind::kMonotonic : MixerKind::kAdditive;
    t.risk_mode = RiskMode::kDynamic;
    t.qr_enabled = true;
  } else if (a.rfind(static_prefix, 0) == 0) {
    std::string suffix = a.substr(static_prefix.size());
    if (suffix.rfind("-alpha", 0) == 0) suffix = suffix.substr(6);
    if (!suffix.empty()) {
      if (suffix[0] != '-') throw Error("unknown algorithm '" + a + "'");
      const double named = to_double(suffix.substr(1));
      if (alpha_given && named != t.static_alpha) throw Error("algorithm name and alpha disagree");
      t.static_alpha = named;
    } else if (!alpha_given) {
      throw Error("rmix-static needs alpha");
    }
    t.mixer = MixerKind::kMonotonic;
    t.risk_mode = RiskMode::kStatic;
    t.qr_enabled = true;
  } else if (a == "qmix-baseline" || a == "vdn-baseline") {
    if (alpha_given) throw Error("alpha applies only to rmix-static");
    t.mixer = a == "qmix-baseline" ? MixerKind::kMonotonic : MixerKind::kAdditive;
    t.risk_mode = RiskMode::kStatic;
    t.static_alpha = 1.0;
    t.qr_enabled = false;
  } else {
    throw Error("unknown algorithm '" + a + "' (rmix, rdn, rmix-static, qmix-baseline, vdn-baseline)");
  }

  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw Error("invalid config: " + what);
  };
  need(t.risk_levels >= 1, "K (risk_levels) must be at least 1");
  need(t.atoms >= 1, "M (atoms) must be at least 1");
  need(t.chunk_dim >= 1 && t.agent_hidden >= 1 && t.predictor_hidden >= 1 && t.mixer_hidden >= 1,
       "network widths must be positive");
  need(t.gamma >= 0.0 && t.gamma < 1.0, "gamma must lie in [0, 1)");
  need(t.lr > 0.0, "lr must be positive");
  need(t.grad_clip > 0.0, "grad_clip must be positive");
  need(t.batch_size >= 1, "batch_size must be positive");
  need(t.buffer_capacity >= t.batch_size, "buffer_capacity must hold a batch");
  need(t.target_interval >= 1, "target_interval must be positive");
  need(t.epsilon.start >= 0.0 && t.epsilon.start <= 1.0 && t.epsilon.finish >= 0.0 && t.epsilon.finish <= 1.0,
       "epsilon values must lie in [0, 1]");
  need(t.epsilon.anneal_steps >= 0, "epsilon_anneal must be non-negative");
  need(t.qr_period >= 1, "qr_period must be positive");
  need(t.qr_kappa > 0.0, "qr_kappa must be positive");
  need(c.total_steps >= 1, "total_steps must be positive");
  need(c.eval_interval >= 1, "eval_interval must be positive");
  need(c.eval_episodes >= 1, "eval_episodes must be positive");
  need(c.probe.samples >= 2 && c.probe.states >= 1 && c.probe.agents >= 1 && c.probe.actions >= 1 &&
           c.probe.atoms >= 1,
       "probe sizes must be positive");
  for (double x : c.probe.alphas) need(x > 0.0 && x <= 1.0, "probe alphas must lie in (0, 1]");
  if (t.risk_mode == RiskMode::kStatic) (void)t.static_level();
}

}  // namespace

Overrides overrides_from_environment() {
  Overrides out;
  for (char** e = environ; e != nullptr && *e != nullptr; ++e) {
    const std::string entry(*e);
    if (entry.rfind("RMIX_", 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    out[entry.substr(5, eq - 5)] = entry.substr(eq + 1);
  }
  return out;
}

RunConfig parse_config(const std::string& text, const Overrides& overrides) {
  std::map<std::pair<std::string, std::string>, Entry> entries;
  std::istringstream in(text);
  std::string raw, section;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string where = "line " + std::to_string(line_no);
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw Error(where + ": malformed section header");
      section = lower(trim(line.substr(1, line.size() - 2)));
      if (section != "env" && section != "probe") throw Error(where + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(where + ": expected key = value");
    const std::string key = canonical_key(section, trim(line.substr(0, eq)));
    if (find_key(section, key) == nullptr) {
      throw Error(where + ": unknown key '" + key + "'" + (section.empty() ? "" : " in [" + section + "]"));
    }
    if (entries.count({section, key}) != 0) throw Error(where + ": duplicate key '" + key + "'");
    entries[{section, key}] = {trim(line.substr(eq + 1)), where};
  }
  for (const auto& [name, value] : overrides) {
    std::string section, key = lower(name);
    for (const std::string s : {"env", "probe"}) {
      if (key.rfind(s + "_", 0) == 0 && find_key(s, key.substr(s.size() + 1)) != nullptr) {
        section = s;
        key = key.substr(s.size() + 1);
        break;
      }
    }
    key = canonical_key(section, key);
    if (find_key(section, key) == nullptr) throw Error("environment RMIX_" + name + ": unknown key");
    entries[{section, key}] = {trim(value), "environment RMIX_" + name};
  }

  RunConfig cfg;
  // Apply in schema order so results never depend on file order.
  for (const auto& [section, keys] : schema()) {
    for (const auto& k : keys) {
      auto it = entries.find({section, k.name});
      if (it == entries.end()) continue;
      try {
        k.set(cfg, it->second.value);
      } catch (const Error& e) {
        throw Error(it->second.where + ": " + k.name + ": " + e.what());
      }
    }
  }
  finalize(cfg, entries.count({"", "alpha"}) != 0);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path, bool use_environment) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return parse_config(ss.str(), use_environment ? overrides_from_environment() : Overrides{});
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

std::string config_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& [section, keys] : schema()) {
    if (!section.empty()) out += "\n[" + section + "]\n";
    for (const auto& k : keys) {
      // alpha is derived for the other algorithms and rejected if spelled out.
      if (section.empty() && k.name == "alpha" && cfg.algorithm.rfind("rmix-static", 0) != 0) continue;
      out += k.name + " = " + k.get(cfg) + "\n";
    }
  }
  return out;
}

std::unique_ptr<Env> make_env(const EnvConfig& cfg) {
  if (cfg.kind == EnvKind::kMatrix) return std::make_unique<RiskyMatrixGame>(cfg.matrix);
  return std::make_unique<RiskyGridworld>(cfg.grid);
}

}  // namespace rmix
