#include <gtest/gtest.h>

#include <cmath>

#include "rmix/distributional.hpp"
#include "rmix/envs.hpp"

using namespace rmix;

namespace {

using Joint = std::array<std::size_t, 2>;

// Plays a fixed per-step joint action list until the episode ends.
double play(RiskyGridworld& env, std::uint64_t seed, const std::vector<std::size_t>& route, bool* success) {
  env.reset(seed);
  double ret = 0.0;
  for (std::size_t t = 0;; ++t) {
    const std::size_t a = t < route.size() ? route[t] : RiskyGridworld::kStay;
    const std::vector<std::size_t> joint(env.spec().n_agents, a);
    const TimeStep ts = env.step(joint);
    ret += ts.reward;
    if (ts.done) break;
  }
  *success = env.success();
  return ret;
}

std::vector<std::size_t> route(const GridworldParams& p, bool cliff) {
  std::vector<std::size_t> r;
  if (!cliff) r.push_back(RiskyGridworld::kDown);
  for (std::size_t c = 0; c + 1 < p.width; ++c) r.push_back(RiskyGridworld::kRight);
  if (!cliff) r.push_back(RiskyGridworld::kUp);
  return r;
}

}  // namespace

TEST(MatrixGame, SpecAndObservations) {
  RiskyMatrixGame game;
  const auto& s = game.spec();
  EXPECT_EQ(s.n_agents, 2u);
  EXPECT_EQ(s.n_actions, 2u);
  EXPECT_EQ(s.horizon, 1u);
  EXPECT_DOUBLE_EQ(s.r_max, 11.0);
  const TimeStep ts = game.reset(3);
  EXPECT_EQ(ts.obs[0], (std::vector<double>{1, 0}));
  EXPECT_EQ(ts.obs[1], (std::vector<double>{0, 1}));
  for (const auto& a : ts.avail) EXPECT_EQ(a, (std::vector<bool>{true, true}));
}

TEST(MatrixGame, PayoffTable) {
  RiskyMatrixGame game;
  game.reset(0);
  const Joint safe{0, 0};
  TimeStep ts = game.step(safe);
  EXPECT_DOUBLE_EQ(ts.reward, 2.5);
  EXPECT_TRUE(ts.terminated);
  EXPECT_TRUE(ts.done);
  EXPECT_TRUE(game.success());
  EXPECT_THROW(game.step(safe), Error);

  game.reset(1);
  ts = game.step(Joint{0, 1});
  EXPECT_DOUBLE_EQ(ts.reward, 0.0);
  EXPECT_FALSE(game.success());
  game.reset(2);
  EXPECT_THROW(game.step(Joint{0, 2}), Error);
}

TEST(MatrixGame, RiskyMeanWithinBinomialBand) {
  RiskyMatrixGame game;
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    game.reset(static_cast<std::uint64_t>(i));
    const double r = game.step(Joint{1, 1}).reward;
    ASSERT_TRUE(r == 11.0 || r == -5.0);
    sum += r;
  }
  // Payoff spread 16, std of one draw 8.
  EXPECT_NEAR(sum / n, 3.0, 3.0 * 8.0 / std::sqrt(static_cast<double>(n)));
}

TEST(MatrixGame, SameSeedSameDraw) {
  RiskyMatrixGame a, b;
  for (std::uint64_t s = 0; s < 50; ++s) {
    a.reset(s);
    b.reset(s);
    EXPECT_EQ(a.step(Joint{1, 1}).reward, b.step(Joint{1, 1}).reward);
  }
}

TEST(MatrixGame, OracleValues) {
  RiskyMatrixGame game;
  const auto neutral = oracle_policy_values(game, 1.0);
  EXPECT_DOUBLE_EQ(neutral.at(Joint{0, 0}), 2.5);
  EXPECT_DOUBLE_EQ(neutral.at(Joint{1, 1}), 3.0);
  EXPECT_DOUBLE_EQ(neutral.at(Joint{0, 1}), 0.0);
  EXPECT_DOUBLE_EQ(neutral.at(Joint{1, 0}), 0.0);
  const auto averse = oracle_policy_values(game, 0.5);
  EXPECT_DOUBLE_EQ(averse.at(Joint{0, 0}), 2.5);
  EXPECT_DOUBLE_EQ(averse.at(Joint{1, 1}), -5.0);
  EXPECT_DOUBLE_EQ(averse.at(Joint{0, 1}), 0.0);
  for (double a : {0.1, 0.3, 0.7, 0.9}) EXPECT_DOUBLE_EQ(oracle_policy_values(game, a).at(Joint{0, 0}), 2.5);
  EXPECT_EQ(game.cvar_optimal_joint(0.5), (Joint{0, 0}));
  EXPECT_EQ(game.cvar_optimal_joint(1.0), (Joint{1, 1}));
}

TEST(MatrixGame, SuccessTracksConfiguredLevel) {
  MatrixGameParams p;
  p.success_alpha = 1.0;
  RiskyMatrixGame game(p);
  game.reset(0);
  game.step(Joint{1, 1});
  EXPECT_TRUE(game.success());
}

TEST(Gridworld, SpecMatchesObservation) {
  RiskyGridworld env;
  const auto& s = env.spec();
  const TimeStep ts = env.reset(0);
  ASSERT_EQ(ts.obs.size(), s.n_agents);
  for (const auto& o : ts.obs) EXPECT_EQ(o.size(), s.obs_dim);
  EXPECT_EQ(ts.state.size(), s.state_dim);
  EXPECT_EQ(s.n_actions, 5u);
  for (const auto& a : ts.avail) EXPECT_EQ(a.size(), s.n_actions);
}

TEST(Gridworld, ClampAtEdgeKeepsReward) {
  RiskyGridworld env;
  env.reset(0);
  const std::vector<std::size_t> up(2, RiskyGridworld::kUp);
  const TimeStep ts = env.step(up);
  EXPECT_EQ(env.position(0), (std::pair<std::size_t, std::size_t>{0, 0}));
  EXPECT_DOUBLE_EQ(ts.reward, -env.params().step_cost);
  EXPECT_FALSE(ts.done);
  const std::vector<std::size_t> left(2, RiskyGridworld::kLeft);
  env.step(left);
  EXPECT_EQ(env.position(1), (std::pair<std::size_t, std::size_t>{0, 0}));
}

TEST(Gridworld, HorizonEndsEpisodeWithoutTermination) {
  GridworldParams p;
  p.horizon = 8;
  RiskyGridworld env(p);
  env.reset(0);
  const std::vector<std::size_t> stay(2, RiskyGridworld::kStay);
  TimeStep ts;
  for (int i = 0; i < 8; ++i) ts = env.step(stay);
  EXPECT_TRUE(ts.done);
  EXPECT_FALSE(ts.terminated);
  EXPECT_FALSE(env.success());
  EXPECT_THROW(env.step(stay), Error);
}

TEST(Gridworld, RejectsParametersWithoutTradeoff) {
  GridworldParams p;
  p.cliff_prob = 0.0;
  p.check_alpha = 1.0;
  p.cliff_penalty = 0.0;
  EXPECT_THROW(RiskyGridworld{p}, Error);  // no risk left to separate the routes
  GridworldParams short_horizon;
  short_horizon.horizon = 3;
  EXPECT_THROW(RiskyGridworld{short_horizon}, Error);
}

TEST(Gridworld, ArrivedAgentsMayOnlyStay) {
  RiskyGridworld env;
  const std::size_t w = env.params().width;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    env.reset(seed);
    TimeStep ts;
    const std::vector<std::size_t> joint{RiskyGridworld::kRight, RiskyGridworld::kStay};
    for (std::size_t c = 0; c + 1 < w && !ts.done; ++c) ts = env.step(joint);
    if (ts.done) continue;  // fell off the cliff
    EXPECT_EQ(env.position(0), (std::pair<std::size_t, std::size_t>{0, w - 1}));
    EXPECT_EQ(ts.avail[0], (std::vector<bool>{true, false, false, false, false}));
    EXPECT_EQ(ts.avail[1], std::vector<bool>(5, true));
    EXPECT_THROW(env.step(joint), Error);
    return;
  }
  FAIL() << "every seed fell";
}

TEST(Gridworld, SafeDetourReachesGoal) {
  RiskyGridworld env;
  bool success = false;
  const double ret = play(env, 4, route(env.params(), false), &success);
  EXPECT_TRUE(success);
  const auto& p = env.params();
  EXPECT_NEAR(ret, p.goal_reward - p.step_cost * static_cast<double>(p.width + 1), 1e-12);
}

TEST(Gridworld, ExactRouteValuesDisagreeAcrossCriteria) {
  RiskyGridworld env;
  const auto cliff = env.scripted_value(true), safe = env.scripted_value(false);
  EXPECT_GT(cliff.expectation, safe.expectation);
  EXPECT_LT(cliff.cvar, safe.cvar);
}

TEST(Gridworld, MonteCarloMatchesExactCliffDistribution) {
  const GridworldParams p;
  RiskyGridworld env(p);
  const auto exact = env.scripted_value(true);
  const auto [values, probs] = env.scripted_returns(true);
  double var = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) var += probs[i] * std::pow(values[i] - exact.expectation, 2);
  const int n = 20000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    bool success = false;
    sum += play(env, static_cast<std::uint64_t>(i), route(p, true), &success);
  }
  EXPECT_NEAR(sum / n, exact.expectation, 3.0 * std::sqrt(var / n));
}

TEST(Gridworld, SeedDeterminesEverything) {
  const GridworldParams p;
  RiskyGridworld a(p), b(p);
  for (std::uint64_t s = 0; s < 200; ++s) {
    bool sa = false, sb = false;
    EXPECT_EQ(play(a, s, route(p, true), &sa), play(b, s, route(p, true), &sb));
    EXPECT_EQ(sa, sb);
  }
}

TEST(Tabular, RandomMdpIsNormalised) {
  Rng rng(0);
  const TabularMdp mdp = TabularMdp::random(4, 2, 3, 2.0, rng);
  EXPECT_EQ(mdp.n_joint, 9u);
  for (double r : mdp.reward) EXPECT_LE(std::fabs(r), 2.0);
  for (std::size_t su = 0; su < mdp.n_states * mdp.n_joint; ++su) {
    double total = 0.0;
    for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2) total += mdp.transition[su * mdp.n_states + s2];
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}
