#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "rmix/distributional.hpp"
#include "rmix/tensor.hpp"

using namespace rmix;

namespace {

// Smallest mean over every k-subset of the atoms, by brute force.
double min_subset_mean(const std::vector<double>& atoms, std::size_t k) {
  const std::size_t m = atoms.size();
  std::vector<bool> pick(m, false);
  std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(k), true);
  double best = std::numeric_limits<double>::infinity();
  std::sort(pick.begin(), pick.end());
  do {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (pick[j]) s += atoms[j];
    }
    best = std::min(best, s / static_cast<double>(k));
  } while (std::next_permutation(pick.begin(), pick.end()));
  return best;
}

std::vector<double> draw(std::size_t m, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 3.0);
  std::vector<double> v(m);
  for (double& x : v) x = n(rng);
  return v;
}

}  // namespace

TEST(Cvar, WorkedExampleOnFourAtoms) {
  const auto z = DiracMixture::uniform({-2, 0, 1, 5});
  EXPECT_DOUBLE_EQ(cvar(z, RiskLevel(1, 4)), -2.0);
  EXPECT_DOUBLE_EQ(cvar(z, RiskLevel(2, 4)), -1.0);
  EXPECT_DOUBLE_EQ(cvar(z, RiskLevel(4, 4)), 1.0);
  EXPECT_DOUBLE_EQ(expectation(z), 1.0);
}

TEST(Cvar, TailCountUsesFloorWithAtLeastOneAtom) {
  EXPECT_EQ(RiskLevel(1, 10).tail_count(35), 3u);
  EXPECT_EQ(RiskLevel(3, 10).tail_count(35), 10u);
  EXPECT_EQ(RiskLevel(1, 10).tail_count(5), 1u);
  EXPECT_EQ(RiskLevel(10, 10).tail_count(35), 35u);
  // alpha * M just below an integer in floating point still rounds correctly
  EXPECT_EQ(RiskLevel(7, 10).tail_count(10), 7u);
}

TEST(Cvar, AgreesWithSubsetEnumeration) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + trial % 10;
    const auto atoms = draw(m, rng);
    const auto z = DiracMixture::uniform(atoms);
    for (int k = 1; k <= 10; ++k) {
      const RiskLevel a(k, 10);
      EXPECT_NEAR(cvar(z, a), min_subset_mean(atoms, a.tail_count(m)), 1e-12);
    }
  }
}

TEST(Cvar, WeightedAtomsAgreeWithExpandedMultiset) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> wdist(0, 5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + trial % 7;
    const auto atoms = draw(m, rng);
    std::vector<int> w(m);
    for (int& x : w) x = wdist(rng);
    w[0] += 1;
    const int total = std::accumulate(w.begin(), w.end(), 0);
    std::vector<double> probs(m);
    for (std::size_t j = 0; j < m; ++j) probs[j] = static_cast<double>(w[j]) / total;
    const DiracMixture z(atoms, probs);
    // Equal weights fall under the atom-count rule tested above.
    if (z.is_uniform()) continue;
    // Ten copies per unit of weight make every k/10 tail an exact atom count.
    std::vector<double> expanded;
    for (std::size_t j = 0; j < m; ++j) expanded.insert(expanded.end(), static_cast<std::size_t>(10 * w[j]), atoms[j]);
    std::sort(expanded.begin(), expanded.end());
    for (int k = 1; k <= 10; ++k) {
      const std::size_t n = static_cast<std::size_t>(k * total);
      const double oracle = std::accumulate(expanded.begin(), expanded.begin() + static_cast<std::ptrdiff_t>(n), 0.0) /
                            static_cast<double>(n);
      EXPECT_NEAR(cvar(z, RiskLevel(k, 10)), oracle, 1e-9);
    }
  }
}

TEST(Cvar, MonotoneInAlphaAndBoundedByMean) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const auto z = DiracMixture::uniform(draw(35, rng));
    double prev = -std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 10; ++k) {
      const double c = cvar(z, RiskLevel(k, 10));
      EXPECT_GE(c, prev - 1e-12);
      EXPECT_LE(c, expectation(z) + 1e-12);
      prev = c;
    }
    EXPECT_NEAR(prev, expectation(z), 1e-12);
  }
}

TEST(Cvar, TranslationAndPositiveScaling) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const auto z = DiracMixture::uniform(draw(12, rng));
    for (int k = 1; k <= 10; ++k) {
      const RiskLevel a(k, 10);
      EXPECT_NEAR(cvar(z.shifted(2.5), a), cvar(z, a) + 2.5, 1e-12);
      EXPECT_NEAR(cvar(z.scaled(3.0), a), 3.0 * cvar(z, a), 1e-12);
    }
  }
}

TEST(Cvar, EmissionOrderDoesNotMatter) {
  std::vector<double> atoms{3, -1, 4, 1, -5, 9, 2, 6};
  const double ref = cvar(DiracMixture::uniform(atoms), RiskLevel(3, 10));
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    std::shuffle(atoms.begin(), atoms.end(), rng);
    EXPECT_EQ(cvar(DiracMixture::uniform(atoms), RiskLevel(3, 10)), ref);
  }
}

TEST(Cvar, RealValuedLevelMatchesGrid) {
  const auto z = DiracMixture::uniform({-2, 0, 1, 5});
  EXPECT_DOUBLE_EQ(cvar(z, 0.5), cvar(z, RiskLevel(5, 10)));
  EXPECT_THROW(cvar(z, 0.0), Error);
  EXPECT_THROW(cvar(z, 1.5), Error);
}

TEST(Cvar, VarThresholdIsLastTailAtom) {
  const auto z = DiracMixture::uniform({5, -2, 1, 0});
  EXPECT_DOUBLE_EQ(var_threshold(z, RiskLevel(2, 4)), 0.0);
  EXPECT_DOUBLE_EQ(var_threshold(z, RiskLevel(1, 4)), -2.0);
}

TEST(RiskLevels, ConstructionRules) {
  EXPECT_THROW(RiskLevel(0, 10), Error);
  EXPECT_THROW(RiskLevel(11, 10), Error);
  EXPECT_THROW(RiskLevel(1, 0), Error);
  EXPECT_EQ(RiskLevel::from_alpha(0.3, 10), RiskLevel(3, 10));
  EXPECT_THROW(RiskLevel::from_alpha(0.25, 10), Error);
  EXPECT_EQ(RiskLevel::neutral(10).alpha(), 1.0);
}

TEST(Masks, PrefixOfTailCount) {
  const TailMask m = mask_from_alpha(RiskLevel(3, 10), 10);
  EXPECT_EQ(m.popcount(), 3u);
  for (std::size_t j = 0; j < 10; ++j) EXPECT_EQ(m.bits[j], j < 3);
}

TEST(Mixture, Validation) {
  EXPECT_THROW(DiracMixture({}, {}), Error);
  EXPECT_THROW(DiracMixture({1, 2}, {0.5}), Error);
  EXPECT_THROW(DiracMixture({1, 2}, {0.7, 0.7}), Error);
  EXPECT_THROW(DiracMixture({1, 2}, {1.5, -0.5}), Error);
  EXPECT_THROW(DiracMixture::uniform({1.0, std::numeric_limits<double>::infinity()}), Error);
  EXPECT_TRUE(DiracMixture::uniform({1, 2, 3}).is_uniform());
  EXPECT_TRUE(DiracMixture::uniform({-1, 2}).within(2.0));
  EXPECT_FALSE(DiracMixture::uniform({-3, 2}).within(2.0));
}

TEST(AllActions, UnavailableActionsAreMinusInfinity) {
  const std::vector<DiracMixture> d{DiracMixture::uniform({1, 3}), DiracMixture::uniform({10, 20}),
                                    DiracMixture::uniform({-1, 5})};
  const bool avail[] = {true, false, true};
  const auto v = cvar_all_actions(d, RiskLevel(5, 10), avail);
  EXPECT_DOUBLE_EQ(v[0], 1.0);
  EXPECT_EQ(v[1], -std::numeric_limits<double>::infinity());
  EXPECT_DOUBLE_EQ(v[2], -1.0);
  const bool none[] = {false, false, false};
  EXPECT_THROW(cvar_all_actions(d, RiskLevel(5, 10), none), Error);
}

TEST(Sorting, StableAscendingCopy) {
  const std::vector<double> a{3, 1, 2};
  EXPECT_EQ(sorted_atoms(a), (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(a, (std::vector<double>{3, 1, 2}));
}
