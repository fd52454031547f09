#include <gtest/gtest.h>

#include <array>
#include <cmath>

#include "rmix/agent_net.hpp"
#include "support.hpp"

using namespace rmix;
using rmix::testing::gradient_error;

namespace {

AgentNetConfig small_config() {
  AgentNetConfig c;
  c.obs_dim = 5;
  c.n_actions = 3;
  c.n_agents = 2;
  c.atoms = 7;
  c.hidden_dim = 8;
  return c;
}

Tensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(rows * cols);
  for (double& x : v) x = n(rng);
  return Tensor({rows, cols}, std::move(v));
}

Tensor random_inputs(const AgentNetConfig& c, std::size_t rows, Rng& rng) {
  return random_matrix(rows, c.input_dim(), rng);
}

}  // namespace

TEST(AgentInput, LayoutIsObsThenActionThenId) {
  const auto c = small_config();
  std::vector<double> out(c.input_dim());
  const std::vector<double> obs{1, 2, 3, 4, 5};
  build_agent_input(c, obs, 2, 1, out);
  EXPECT_EQ(out, (std::vector<double>{1, 2, 3, 4, 5, 0, 0, 1, 0, 1}));
  build_agent_input(c, obs, -1, 0, out);
  EXPECT_EQ(out, (std::vector<double>{1, 2, 3, 4, 5, 0, 0, 0, 1, 0}));
  EXPECT_THROW(build_agent_input(c, obs, 3, 0, out), Error);
  EXPECT_THROW(build_agent_input(c, obs, 0, 2, out), Error);
}

TEST(AgentNet, ZeroParametersEmitZeroAtoms) {
  const auto c = small_config();
  const AgentNet net = AgentNet::zeros(c);
  Rng rng(1);
  const auto out = net.forward(random_inputs(c, 4, rng), net.initial_hidden(4));
  EXPECT_EQ(out.atoms.shape(), (Shape{4, c.n_actions * c.atoms}));
  EXPECT_EQ(out.hidden.shape(), (Shape{4, c.hidden_dim}));
  for (double v : out.atoms.data()) EXPECT_EQ(v, 0.0);
  for (double v : out.hidden.data()) EXPECT_EQ(v, 0.0);
}

TEST(AgentNet, SameSeedSameWeightsAndOutputs) {
  const auto c = small_config();
  Rng r1(42), r2(42), r3(43);
  const AgentNet a = AgentNet::init(c, r1), b = AgentNet::init(c, r2), d = AgentNet::init(c, r3);
  Rng in(0);
  const Tensor x = random_inputs(c, 3, in);
  const auto oa = a.forward(x, a.initial_hidden(3));
  const auto ob = b.forward(x, b.initial_hidden(3));
  const auto od = d.forward(x, d.initial_hidden(3));
  EXPECT_TRUE(std::equal(oa.atoms.data().begin(), oa.atoms.data().end(), ob.atoms.data().begin()));
  EXPECT_FALSE(std::equal(oa.atoms.data().begin(), oa.atoms.data().end(), od.atoms.data().begin()));
}

TEST(AgentNet, GradientWrtInputsAndParameters) {
  const auto c = small_config();
  Rng rng(5);
  const AgentNet net = AgentNet::init(c, rng);
  Tensor x = random_inputs(c, 3, rng);
  Tensor h = random_matrix(3, c.hidden_dim, rng);
  auto f = [&] { return ops::mean(ops::square(net.forward(x, h).atoms)); };
  EXPECT_LT(gradient_error(f, {x, h}), 1e-4);
  EXPECT_LT(gradient_error(f, tensors_of(net.parameters())), 1e-4);
}

TEST(AgentNet, HiddenStateCarriesHistory) {
  const auto c = small_config();
  Rng rng(9);
  const AgentNet net = AgentNet::init(c, rng);
  const Tensor x1 = random_inputs(c, 1, rng), x2 = random_inputs(c, 1, rng), x3 = random_inputs(c, 1, rng);
  // Same current input, different history.
  const auto h_a = net.forward(x1, net.initial_hidden(1)).hidden;
  const auto h_b = net.forward(x2, net.initial_hidden(1)).hidden;
  const auto out_a = net.forward(x3, h_a).atoms;
  const auto out_b = net.forward(x3, h_b).atoms;
  double diff = 0.0;
  for (std::size_t i = 0; i < out_a.size(); ++i) diff = std::max(diff, std::fabs(out_a[i] - out_b[i]));
  EXPECT_GT(diff, 1e-6);
}

TEST(AgentNet, SharedWeightsActRowWise) {
  const auto c = small_config();
  Rng rng(10);
  const AgentNet net = AgentNet::init(c, rng);
  const Tensor batch = random_inputs(c, 2, rng);
  const auto both = net.forward(batch, net.initial_hidden(2)).atoms;
  const std::size_t w = c.n_actions * c.atoms;
  for (std::size_t r = 0; r < 2; ++r) {
    const Tensor row({1, c.input_dim()},
                     std::vector<double>(batch.data().begin() + r * c.input_dim(),
                                         batch.data().begin() + (r + 1) * c.input_dim()));
    const auto one = net.forward(row, net.initial_hidden(1)).atoms;
    for (std::size_t j = 0; j < w; ++j) EXPECT_NEAR(one[j], both[r * w + j], 1e-14);
  }
}

TEST(AgentNet, AgentIdChangesOutput) {
  const auto c = small_config();
  Rng rng(12);
  const AgentNet net = AgentNet::init(c, rng);
  std::vector<double> in0(c.input_dim()), in1(c.input_dim());
  const std::vector<double> obs{0.1, 0.2, 0.3, 0.4, 0.5};
  build_agent_input(c, obs, -1, 0, in0);
  build_agent_input(c, obs, -1, 1, in1);
  const auto a = net.forward(Tensor({1, c.input_dim()}, in0), net.initial_hidden(1)).atoms;
  const auto b = net.forward(Tensor({1, c.input_dim()}, in1), net.initial_hidden(1)).atoms;
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::fabs(a[i] - b[i]));
  EXPECT_GT(diff, 1e-6);
}

TEST(AgentNet, RejectsBadShapes) {
  const auto c = small_config();
  const AgentNet net = AgentNet::zeros(c);
  EXPECT_THROW(net.forward(Tensor::zeros({2, c.input_dim() + 1}), net.initial_hidden(2)), Error);
  EXPECT_THROW(net.forward(Tensor::zeros({2, c.input_dim()}), net.initial_hidden(3)), Error);
}

TEST(AgentNet, CloneIsIndependent) {
  const auto c = small_config();
  Rng rng(2);
  const AgentNet net = AgentNet::init(c, rng);
  const AgentNet copy = net.clone();
  const double before = copy.parameters().front().second[0];
  net.parameters().front().second.mutable_data()[0] += 1.0;
  EXPECT_EQ(copy.parameters().front().second[0], before);
}

TEST(Actions, GreedyPicksLowestIndexOnTies) {
  const std::vector<double> v{1.0, 3.0, 3.0, 2.0};
  const bool all[] = {true, true, true, true};
  EXPECT_EQ(greedy_action(v, all), 1u);
  const bool no_one[] = {true, false, true, true};
  EXPECT_EQ(greedy_action(v, no_one), 2u);
  const bool none[] = {false, false, false, false};
  EXPECT_THROW(greedy_action(v, none), Error);
}

TEST(Actions, ZeroEpsilonIsGreedy) {
  const std::vector<double> v{1.0, 3.0, 2.0};
  const bool all[] = {true, true, true};
  Rng rng(0);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(select_action(v, all, 0.0, rng), 1u);
}

TEST(Actions, FullEpsilonIsUniformOverAvailable) {
  const std::vector<double> v{5.0, 1.0, 2.0, 0.0};
  const bool avail[] = {true, true, false, true};
  Rng rng(123);
  const int n = 30000;
  std::array<int, 4> counts{};
  for (int i = 0; i < n; ++i) ++counts[select_action(v, avail, 1.0, rng)];
  EXPECT_EQ(counts[2], 0);
  const double p = 1.0 / 3.0, sd = std::sqrt(n * p * (1 - p));
  for (int a : {0, 1, 3}) EXPECT_NEAR(counts[a], n * p, 3.0 * sd);
}

TEST(Actions, EpsilonOutsideRangeThrows) {
  const std::vector<double> v{1.0};
  const bool all[] = {true};
  Rng rng(0);
  EXPECT_THROW(select_action(v, all, 1.5, rng), Error);
  EXPECT_THROW(select_action(v, all, -0.1, rng), Error);
}

TEST(Epsilon, LinearAnnealThenFlat) {
  const EpsilonSchedule s{1.0, 0.05, 100};
  EXPECT_DOUBLE_EQ(s.at(0), 1.0);
  EXPECT_DOUBLE_EQ(s.at(50), 0.525);
  EXPECT_DOUBLE_EQ(s.at(100), 0.05);
  EXPECT_DOUBLE_EQ(s.at(1000000), 0.05);
  EXPECT_THROW(s.at(-1), Error);
}
