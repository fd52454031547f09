#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "rmix/harness.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App app{"Risk-sensitive cooperative multi-agent trainer"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Train from a config file");
  std::string config_path, out_dir = "runs/latest";
  std::optional<std::uint64_t> seed;
  train->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", seed, "Override the config seed");
  train->add_option("--out", out_dir, "Output directory");

  auto* eval = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
  std::string checkpoint;
  std::size_t episodes = 32;
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--episodes", episodes, "Number of episodes");

  auto* trace = app.add_subcommand("trace", "Per-step alpha of one greedy episode as CSV");
  std::uint64_t trace_seed = 0;
  trace->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  trace->add_option("--seed", trace_seed, "Environment seed");

  auto* plot = app.add_subcommand("plot", "SVG learning curves from metrics files");
  std::vector<std::string> metric_files;
  std::string plot_out = "curves.svg";
  std::size_t window = 5;
  plot->add_option("metrics", metric_files, "metrics.jsonl files")->required()->check(CLI::ExistingFile);
  plot->add_option("--out", plot_out, "Output SVG");
  plot->add_option("--window", window, "Moving-average window");

  auto* probe = app.add_subcommand("probe-bias", "Monte-Carlo post-update bias per alpha");
  probe->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      rmix::RunConfig cfg = rmix::load_config(config_path);
      if (seed) cfg.seed = *seed;
      const auto result = rmix::run_training(cfg, out_dir);
      const auto& last = result.records.back();
      std::printf("step %lld  success %.3f  return %.4f\nmetrics: %s\ncheckpoint: %s\n",
                  static_cast<long long>(last.step), last.eval_success, last.eval_return,
                  result.metrics_path.string().c_str(), result.checkpoint_path.string().c_str());
    } else if (*eval) {
      const auto ckpt = rmix::load_checkpoint(checkpoint);
      const auto env = rmix::make_env(ckpt.config.env);
      const auto r = rmix::evaluate(*ckpt.learner, *env, episodes, ckpt.config.seed + 1000003);
      std::printf("episodes %zu  success %.4f  mean_return %.6f\n", episodes, r.success_rate, r.mean_return);
    } else if (*trace) {
      const auto ckpt = rmix::load_checkpoint(checkpoint);
      const auto env = rmix::make_env(ckpt.config.env);
      std::cout << rmix::dump_alpha_trace(*ckpt.learner, *env, trace_seed).csv();
    } else if (*plot) {
      std::vector<fs::path> files(metric_files.begin(), metric_files.end());
      rmix::emit_plots(files, plot_out, window);
      std::printf("wrote %s\n", plot_out.c_str());
    } else if (*probe) {
      const rmix::RunConfig cfg = rmix::load_config(config_path);
      const auto& p = cfg.probe;
      rmix::Rng rng(cfg.seed);
      const auto mdp = rmix::ProbeMdp::random(p.states, p.agents, p.actions, p.atoms, p.noise, p.gamma, rng);
      std::printf("alpha,mean,std_error\n");
      for (const auto& e : rmix::bias_probe(mdp, p.alphas, p.samples, rng)) {
        std::printf("%.4g,%.9g,%.9g\n", e.alpha, e.mean, e.std_error);
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
