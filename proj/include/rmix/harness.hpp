#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rmix/envs.hpp"
#include "rmix/trainer.hpp"

namespace rmix {

enum class EnvKind { kMatrix, kGridworld };

struct EnvConfig {
  EnvKind kind = EnvKind::kMatrix;
  MatrixGameParams matrix;
  GridworldParams grid;
};

std::unique_ptr<Env> make_env(const EnvConfig& cfg);

struct ProbeConfig {
  std::size_t states = 4;
  std::size_t agents = 2;
  std::size_t actions = 4;
  std::size_t atoms = 35;
  double noise = 1.0;
  double gamma = 0.99;
  std::size_t samples = 100000;
  std::vector<double> alphas{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
};

struct RunConfig {
  std::string algorithm = "rmix";
  std::uint64_t seed = 0;
  std::int64_t total_steps = 2000000;   // environment steps
  std::int64_t eval_interval = 10000;   // environment steps between evaluations
  std::size_t eval_episodes = 32;
  TrainerConfig trainer;
  EnvConfig env;
  ProbeConfig probe;
};

// Variables of the form RMIX_<KEY>, RMIX_ENV_<KEY> and RMIX_PROBE_<KEY>
// override the file; keys are matched case-insensitively.
using Overrides = std::map<std::string, std::string>;
Overrides overrides_from_environment();

// Flat key = value text with optional [env] and [probe] sections. '#' starts a
// comment. Unknown keys and malformed values throw with the offending line.
RunConfig parse_config(const std::string& text, const Overrides& overrides = {});
RunConfig load_config(const std::filesystem::path& path, bool use_environment = true);
// Canonical text form; parse_config(config_text(c)) reproduces c.
std::string config_text(const RunConfig& cfg);

struct EvalResult {
  double success_rate = 0.0;
  double mean_return = 0.0;
};

// Greedy (epsilon = 0) episodes on a copy of env; parameters are read only.
EvalResult evaluate(const Learner& learner, const Env& env, std::size_t episodes, std::uint64_t seed_base);

struct MetricsRecord {
  std::int64_t step = 0;          // environment steps so far
  std::int64_t episode = 0;       // training episodes so far
  std::int64_t train_steps = 0;
  double td_loss = 0.0;           // mean over the train steps since the previous record
  std::optional<double> qr_loss;  // mean over QR updates since the previous record
  double grad_norm = 0.0;         // mean post-clip norm since the previous record
  double eval_success = 0.0;
  double eval_return = 0.0;
  std::vector<std::int64_t> alpha_histogram;  // counts per level k = 1..K over acting steps
};

std::string metrics_json_line(const MetricsRecord& r);
MetricsRecord parse_metrics_line(const std::string& line);
std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path);

struct RunResult {
  std::vector<MetricsRecord> records;
  std::filesystem::path metrics_path;
  std::filesystem::path checkpoint_path;
};

// Whole training loop. Writes into out_dir:
//   metrics.jsonl  one record per evaluation
//   metrics.csv    the same records as a table
//   timing.jsonl   wall-clock seconds per record (kept apart so metrics stay reproducible)
//   checkpoint.json refreshed at every evaluation
RunResult run_training(const RunConfig& cfg, const std::filesystem::path& out_dir);

struct Checkpoint {
  RunConfig config;
  std::int64_t env_steps = 0;
  std::int64_t episodes = 0;
  std::unique_ptr<Learner> learner;
};

void save_checkpoint(const std::filesystem::path& path, const RunConfig& cfg, const Learner& learner,
                     std::int64_t env_steps, std::int64_t episodes);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct AlphaTrace {
  std::size_t n_agents = 0;
  std::vector<std::vector<double>> alpha;  // [t][agent]
  std::vector<double> reward;              // [t]

  std::string csv() const;  // step, alpha_0 .. alpha_{N-1}, reward
};

// Replays one greedy episode.
AlphaTrace dump_alpha_trace(const Learner& learner, Env& env, std::uint64_t seed);

// Two panels (evaluation success and return against steps). Each file's
// series is smoothed with a trailing moving window before the across-file
// mean and one-standard-deviation band are drawn.
std::string render_plot_svg(const std::vector<std::vector<MetricsRecord>>& runs, std::size_t window = 5);
void emit_plots(const std::vector<std::filesystem::path>& metrics_files, const std::filesystem::path& out,
                std::size_t window = 5);

}  // namespace rmix
