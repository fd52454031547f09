#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace rmix {

// M weighted point masses. Atoms are kept in emission order; operators that
// need the order statistics sort a copy.
class DiracMixture {
 public:
  DiracMixture(std::vector<double> atoms, std::vector<double> probs);
  static DiracMixture uniform(std::vector<double> atoms);

  std::size_t size() const { return atoms_.size(); }
  std::span<const double> atoms() const { return atoms_; }
  std::span<const double> probs() const { return probs_; }
  // True when every probability equals 1/M.
  bool is_uniform() const { return uniform_; }
  // All atoms within [-bound, bound] (bound = R_max * horizon for a task).
  bool within(double bound) const;

  DiracMixture shifted(double c) const;
  DiracMixture scaled(double lambda) const;

 private:
  std::vector<double> atoms_;
  std::vector<double> probs_;
  bool uniform_ = false;
};

// Discretised risk level alpha = k / K, k in [1, K].
class RiskLevel {
 public:
  RiskLevel(int k, int levels);
  // alpha must sit on the k/K grid (to 1e-9).
  static RiskLevel from_alpha(double alpha, int levels);
  static RiskLevel neutral(int levels) { return RiskLevel(levels, levels); }

  int k() const { return k_; }
  int levels() const { return levels_; }
  double alpha() const { return static_cast<double>(k_) / static_cast<double>(levels_); }
  // max(1, floor(alpha * atoms)), computed in integers.
  std::size_t tail_count(std::size_t atoms) const;

  bool operator==(const RiskLevel&) const = default;

 private:
  int k_;
  int levels_;
};

struct TailMask {
  std::vector<bool> bits;
  std::size_t popcount() const;
};

double expectation(const DiracMixture& z);

// Atom at the ascending order statistic where the effective tail ends.
double var_threshold(const DiracMixture& z, const RiskLevel& alpha);

// Lower-tail mean. Uniform probabilities: mean of the tail_count(M) smallest
// atoms. Otherwise the exact discrete CVaR at level alpha, splitting the
// atom that straddles the alpha-quantile. cvar(z, 1) is expectation(z).
double cvar(const DiracMixture& z, const RiskLevel& alpha);

// Same operator for a real level in (0, 1].
double cvar(const DiracMixture& z, double alpha);

// Prefix mask over ascending-sorted atoms selecting the CVaR tail.
TailMask mask_from_alpha(const RiskLevel& alpha, std::size_t atoms);

// Per-action CVaR; unavailable actions map to -infinity. Throws when no
// action is available.
std::vector<double> cvar_all_actions(std::span<const DiracMixture> dists, const RiskLevel& alpha,
                                     std::span<const bool> available);

// Ascending stable sort of a copy.
std::vector<double> sorted_atoms(std::span<const double> atoms);

}  // namespace rmix
