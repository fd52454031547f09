#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "rmix/harness.hpp"

using namespace rmix;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("rmix_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RunConfig tiny(const std::string& algorithm, std::int64_t steps) {
  RunConfig c = parse_config("algorithm = " + algorithm +
                             "\n"
                             "total_steps = " +
                             std::to_string(steps) +
                             "\n"
                             "eval_interval = 250\n"
                             "eval_episodes = 8\n"
                             "agent_hidden = 16\n"
                             "predictor_hidden = 16\n"
                             "mixer_hidden = 8\n"
                             "batch_size = 8\n"
                             "epsilon_anneal = 500\n");
  return c;
}

std::vector<double> flat(const NamedTensors& params) {
  std::vector<double> out;
  for (const auto& [name, t] : params) out.insert(out.end(), t.data().begin(), t.data().end());
  return out;
}

}  // namespace

TEST(Config, EmptyTextGivesDefaults) {
  const RunConfig c = parse_config("");
  EXPECT_EQ(c.algorithm, "rmix");
  EXPECT_EQ(c.trainer.atoms, 35u);
  EXPECT_EQ(c.trainer.risk_levels, 10u);
  EXPECT_DOUBLE_EQ(c.trainer.gamma, 0.99);
  EXPECT_DOUBLE_EQ(c.trainer.lr, 5e-4);
  EXPECT_EQ(c.trainer.batch_size, 32u);
  EXPECT_EQ(c.trainer.buffer_capacity, 5000u);
  EXPECT_EQ(c.trainer.target_interval, 200u);
  EXPECT_DOUBLE_EQ(c.trainer.epsilon.start, 1.0);
  EXPECT_DOUBLE_EQ(c.trainer.epsilon.finish, 0.05);
  EXPECT_EQ(c.trainer.epsilon.anneal_steps, 50000);
  EXPECT_EQ(c.eval_interval, 10000);
  EXPECT_EQ(c.eval_episodes, 32u);
  EXPECT_EQ(c.trainer.qr_period, 50u);
  EXPECT_DOUBLE_EQ(c.trainer.qr_threshold, 0.35);
  EXPECT_EQ(c.trainer.risk_mode, RiskMode::kDynamic);
  EXPECT_EQ(c.trainer.mixer, MixerKind::kMonotonic);
  EXPECT_TRUE(c.trainer.qr_enabled);
  EXPECT_EQ(c.env.kind, EnvKind::kMatrix);
}

TEST(Config, StaticAlphaSpellings) {
  const RunConfig a = parse_config("algorithm = rmix-static\nalpha = 0.3\n");
  EXPECT_EQ(a.trainer.risk_mode, RiskMode::kStatic);
  EXPECT_DOUBLE_EQ(a.trainer.static_alpha, 0.3);
  const RunConfig b = parse_config("algorithm = rmix-static-0.7\n");
  EXPECT_DOUBLE_EQ(b.trainer.static_alpha, 0.7);
  EXPECT_THROW(parse_config("algorithm = rmix-static\n"), Error);
  EXPECT_THROW(parse_config("algorithm = rmix\nalpha = 0.3\n"), Error);
  EXPECT_THROW(parse_config("algorithm = rmix-static\nalpha = 0.25\n"), Error);
}

TEST(Config, BaselinesPinNeutralLevel) {
  const RunConfig q = parse_config("algorithm = qmix-baseline\n");
  EXPECT_EQ(q.trainer.risk_mode, RiskMode::kStatic);
  EXPECT_DOUBLE_EQ(q.trainer.static_alpha, 1.0);
  EXPECT_FALSE(q.trainer.qr_enabled);
  EXPECT_EQ(q.trainer.mixer, MixerKind::kMonotonic);
  EXPECT_EQ(parse_config("algorithm = vdn-baseline\n").trainer.mixer, MixerKind::kAdditive);
  EXPECT_EQ(parse_config("algorithm = rdn\n").trainer.mixer, MixerKind::kAdditive);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(parse_config("risk_levels = 0\n"), Error);
  EXPECT_THROW(parse_config("K = 0\n"), Error);
  EXPECT_THROW(parse_config("algorithm = coma\n"), Error);
  EXPECT_THROW(parse_config("gamma = 1.5\n"), Error);
  EXPECT_THROW(parse_config("lr = fast\n"), Error);
  EXPECT_THROW(parse_config("seed = 1\nseed = 2\n"), Error);
  EXPECT_THROW(parse_config("[nowhere]\nx = 1\n"), Error);
  try {
    parse_config("seed = 1\n\nbogus = 3\n");
    FAIL() << "unknown key accepted";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Config, SectionsAliasesAndComments) {
  const RunConfig c = parse_config(
      "# a comment\n"
      "M = 21   # trailing comment\n"
      "K = 5\n"
      "[env]\n"
      "name = gridworld\n"
      "width = 7\n"
      "horizon = 30\n"
      "[probe]\n"
      "samples = 500\n"
      "alphas = 0.2, 0.6, 1.0\n");
  EXPECT_EQ(c.trainer.atoms, 21u);
  EXPECT_EQ(c.trainer.risk_levels, 5u);
  EXPECT_EQ(c.env.kind, EnvKind::kGridworld);
  EXPECT_EQ(c.env.grid.width, 7u);
  EXPECT_EQ(c.probe.samples, 500u);
  EXPECT_EQ(c.probe.alphas, (std::vector<double>{0.2, 0.6, 1.0}));
}

TEST(Config, OverridesWinOverFile) {
  const Overrides o{{"SEED", "9"}, {"ENV_RISKY_PROB", "0.25"}, {"probe_samples", "77"}};
  const RunConfig c = parse_config("seed = 1\n", o);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_DOUBLE_EQ(c.env.matrix.risky_prob, 0.25);
  EXPECT_EQ(c.probe.samples, 77u);
  EXPECT_THROW(parse_config("", Overrides{{"NOPE", "1"}}), Error);
}

TEST(Config, TextRoundTrip) {
  for (const char* text : {"", "algorithm = rmix-static-0.3\nseed = 4\n[env]\nname = gridworld\n",
                           "algorithm = vdn-baseline\nlr = 0.001\n[probe]\nalphas = 0.5, 1\n"}) {
    const RunConfig a = parse_config(text);
    const std::string once = config_text(a);
    EXPECT_EQ(config_text(parse_config(once)), once);
  }
}

TEST(Metrics, LineRoundTrip) {
  MetricsRecord r;
  r.step = 1200;
  r.episode = 1200;
  r.train_steps = 1100;
  r.td_loss = 0.125;
  r.qr_loss = 0.5;
  r.grad_norm = 3.25;
  r.eval_success = 0.75;
  r.eval_return = -1.5;
  r.alpha_histogram = {1, 0, 4};
  const MetricsRecord back = parse_metrics_line(metrics_json_line(r));
  EXPECT_EQ(back.step, r.step);
  EXPECT_EQ(back.train_steps, r.train_steps);
  EXPECT_EQ(back.td_loss, r.td_loss);
  EXPECT_EQ(back.qr_loss, r.qr_loss);
  EXPECT_EQ(back.eval_return, r.eval_return);
  EXPECT_EQ(back.alpha_histogram, r.alpha_histogram);
  r.qr_loss.reset();
  EXPECT_FALSE(parse_metrics_line(metrics_json_line(r)).qr_loss.has_value());
  EXPECT_THROW(parse_metrics_line("{not json"), Error);
  EXPECT_THROW(parse_metrics_line("{\"step\": 1}"), Error);
}

TEST(Run, SmokeRunFinishesQuickly) {
  const fs::path dir = scratch("smoke");
  const RunConfig c = parse_config("total_steps = 2000\neval_interval = 500\neval_episodes = 8\n");
  const auto t0 = std::chrono::steady_clock::now();
  const RunResult r = run_training(c, dir);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(secs, 60.0);
  ASSERT_GE(r.records.size(), 5u);
  EXPECT_EQ(r.records.front().step, 0);
  EXPECT_EQ(r.records.back().step, 2000);
  for (std::size_t i = 1; i < r.records.size(); ++i) EXPECT_GT(r.records[i].step, r.records[i - 1].step);
  for (const auto& rec : r.records) {
    EXPECT_TRUE(std::isfinite(rec.td_loss) && std::isfinite(rec.grad_norm) && std::isfinite(rec.eval_return));
    EXPECT_EQ(rec.alpha_histogram.size(), 10u);
  }
  EXPECT_TRUE(fs::exists(dir / "metrics.csv"));
  EXPECT_TRUE(fs::exists(dir / "timing.jsonl"));
  EXPECT_EQ(read_metrics(r.metrics_path).size(), r.records.size());
}

TEST(Run, SameSeedByteIdenticalMetrics) {
  const RunConfig c = tiny("rmix", 600);
  const RunResult a = run_training(c, scratch("det_a"));
  const RunResult b = run_training(c, scratch("det_b"));
  EXPECT_EQ(slurp(a.metrics_path), slurp(b.metrics_path));
  EXPECT_EQ(slurp(a.metrics_path.parent_path() / "metrics.csv"), slurp(b.metrics_path.parent_path() / "metrics.csv"));
  RunConfig other = c;
  other.seed = 1;
  const RunResult d = run_training(other, scratch("det_c"));
  EXPECT_NE(slurp(a.metrics_path), slurp(d.metrics_path));
}

TEST(Run, CheckpointReloadsIdentically) {
  const RunConfig c = tiny("rmix", 500);
  const RunResult r = run_training(c, scratch("ckpt"));
  const Checkpoint ck = load_checkpoint(r.checkpoint_path);
  EXPECT_EQ(config_text(ck.config), config_text(c));
  EXPECT_EQ(ck.env_steps, 500);
  ASSERT_TRUE(ck.learner);
  EXPECT_EQ(ck.learner->train_steps(), r.records.back().train_steps);

  const auto env = make_env(c.env);
  const EvalResult e1 = evaluate(*ck.learner, *env, 8, 77);
  const Checkpoint again = load_checkpoint(r.checkpoint_path);
  const EvalResult e2 = evaluate(*again.learner, *env, 8, 77);
  EXPECT_EQ(e1.success_rate, e2.success_rate);
  EXPECT_EQ(e1.mean_return, e2.mean_return);
  EXPECT_EQ(flat(ck.learner->live().parameters()), flat(again.learner->live().parameters()));
  EXPECT_EQ(flat(ck.learner->target().parameters()), flat(again.learner->target().parameters()));

  // Round trip through save keeps every byte.
  const fs::path copy = r.checkpoint_path.parent_path() / "copy.json";
  save_checkpoint(copy, ck.config, *ck.learner, ck.env_steps, ck.episodes);
  EXPECT_EQ(slurp(copy), slurp(r.checkpoint_path));
  EXPECT_THROW(load_checkpoint(r.checkpoint_path.parent_path() / "missing.json"), Error);
}

TEST(Run, EvaluationLeavesParametersAlone) {
  const RunConfig c = tiny("rmix", 10);
  const auto env = make_env(c.env);
  Learner learner(c.trainer, env->spec(), 3);
  const auto before = flat(learner.live().parameters());
  evaluate(learner, *env, 16, 5);
  EXPECT_EQ(flat(learner.live().parameters()), before);
  EXPECT_EQ(learner.train_steps(), 0);
}

TEST(Trace, StaticLevelGivesConstantColumn) {
  RunConfig c = tiny("rmix-static-0.3", 10);
  c.env.kind = EnvKind::kGridworld;
  const auto env = make_env(c.env);
  Learner learner(c.trainer, env->spec(), 4);
  const AlphaTrace t = dump_alpha_trace(learner, *env, 11);
  ASSERT_FALSE(t.alpha.empty());
  for (const auto& row : t.alpha) {
    for (double a : row) EXPECT_EQ(a, 0.3);
  }
  std::istringstream csv(t.csv());
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "step,alpha_0,alpha_1,reward");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 3);
    ++rows;
  }
  EXPECT_EQ(rows, t.alpha.size());
}

TEST(Trace, DynamicLevelsStayOnGrid) {
  RunConfig c = tiny("rmix", 10);
  c.env.kind = EnvKind::kGridworld;
  const auto env = make_env(c.env);
  Learner learner(c.trainer, env->spec(), 5);
  const AlphaTrace t = dump_alpha_trace(learner, *env, 12);
  for (const auto& row : t.alpha) {
    for (double a : row) {
      const double k = a * 10.0;
      EXPECT_NEAR(k, std::round(k), 1e-9);
      EXPECT_GE(k, 1.0 - 1e-9);
      EXPECT_LE(k, 10.0 + 1e-9);
    }
  }
}

TEST(Plots, SingleRunHasNoBandAndBytesAreStable) {
  std::vector<MetricsRecord> run;
  for (int i = 0; i < 8; ++i) {
    MetricsRecord r;
    r.step = i * 100;
    r.eval_success = i / 8.0;
    r.eval_return = std::sin(i);
    run.push_back(r);
  }
  const std::string one = render_plot_svg({run});
  EXPECT_EQ(one.find("<polygon"), std::string::npos);
  EXPECT_NE(one.find("<polyline"), std::string::npos);
  EXPECT_EQ(one, render_plot_svg({run}));

  std::vector<std::vector<MetricsRecord>> five(5, run);
  for (std::size_t s = 0; s < 5; ++s) {
    for (auto& r : five[s]) r.eval_success += 0.01 * static_cast<double>(s);
  }
  const std::string band = render_plot_svg(five);
  std::size_t polygons = 0;
  for (auto pos = band.find("<polygon"); pos != std::string::npos; pos = band.find("<polygon", pos + 1)) ++polygons;
  EXPECT_EQ(polygons, 2u);
  EXPECT_THROW(render_plot_svg({}), Error);
  EXPECT_THROW(render_plot_svg({run}, 0), Error);
}

TEST(Plots, WritesFileFromMetrics) {
  const fs::path dir = scratch("plot");
  const RunResult r = run_training(tiny("qmix-baseline", 500), dir);
  emit_plots({r.metrics_path, r.metrics_path}, dir / "curves.svg");
  const std::string svg = slurp(dir / "curves.svg");
  EXPECT_EQ(svg.rfind("<?xml", 0), 0u);
  EXPECT_THROW(emit_plots({}, dir / "none.svg"), Error);
  std::ofstream(dir / "bad.jsonl") << "garbage\n";
  EXPECT_THROW(emit_plots({dir / "bad.jsonl"}, dir / "bad.svg"), Error);
}
