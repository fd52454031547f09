#include "rmix/distributional.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "rmix/tensor.hpp"

namespace rmix {

namespace {

constexpr double kMassTolerance = 1e-9;

std::vector<std::size_t> ascending_order(std::span<const double> atoms) {
  std::vector<std::size_t> idx(atoms.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return atoms[a] < atoms[b]; });
  return idx;
}

std::size_t uniform_tail_count(double alpha, std::size_t m) {
  const auto k = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(m) + 1e-9));
  return std::clamp<std::size_t>(k, 1, m);
}

double uniform_tail_mean(const DiracMixture& z, std::size_t k) {
  const auto sorted = sorted_atoms(z.atoms());
  double s = 0.0;
  for (std::size_t j = 0; j < k; ++j) s += sorted[j];
  return s / static_cast<double>(k);
}

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error("risk level must lie in (0, 1], got " + std::to_string(alpha));
}

}  // namespace

DiracMixture::DiracMixture(std::vector<double> atoms, std::vector<double> probs)
    : atoms_(std::move(atoms)), probs_(std::move(probs)) {
  if (atoms_.empty()) throw Error("DiracMixture needs at least one atom");
  if (atoms_.size() != probs_.size()) throw Error("DiracMixture: atoms and probs differ in length");
  double total = 0.0;
  for (std::size_t j = 0; j < atoms_.size(); ++j) {
    if (!std::isfinite(atoms_[j])) throw Error("DiracMixture: non-finite atom");
    if (!(probs_[j] >= 0.0)) throw Error("DiracMixture: negative probability");
    total += probs_[j];
  }
  if (std::fabs(total - 1.0) > kMassTolerance) throw Error("DiracMixture: probabilities sum to " + std::to_string(total));
  const double u = 1.0 / static_cast<double>(atoms_.size());
  uniform_ = std::all_of(probs_.begin(), probs_.end(), [u](double p) { return std::fabs(p - u) <= 1e-12; });
}

DiracMixture DiracMixture::uniform(std::vector<double> atoms) {
  const std::size_t m = atoms.size();
  if (m == 0) throw Error("DiracMixture needs at least one atom");
  return DiracMixture(std::move(atoms), std::vector<double>(m, 1.0 / static_cast<double>(m)));
}

bool DiracMixture::within(double bound) const {
  return std::all_of(atoms_.begin(), atoms_.end(), [bound](double a) { return std::fabs(a) <= bound; });
}

DiracMixture DiracMixture::shifted(double c) const {
  auto a = atoms_;
  for (double& x : a) x += c;
  return DiracMixture(std::move(a), probs_);
}

DiracMixture DiracMixture::scaled(double lambda) const {
  auto a = atoms_;
  for (double& x : a) x *= lambda;
  return DiracMixture(std::move(a), probs_);
}

RiskLevel::RiskLevel(int k, int levels) : k_(k), levels_(levels) {
  if (levels < 1) throw Error("risk level count K must be >= 1");
  if (k < 1 || k > levels) {
    throw Error("risk level index " + std::to_string(k) + " outside [1, " + std::to_string(levels) + "]");
  }
}

RiskLevel RiskLevel::from_alpha(double alpha, int levels) {
  check_alpha(alpha);
  if (levels < 1) throw Error("risk level count K must be >= 1");
  const double scaled = alpha * levels;
  const double k = std::round(scaled);
  if (std::fabs(scaled - k) > 1e-9) {
    throw Error("alpha " + std::to_string(alpha) + " is not a multiple of 1/" + std::to_string(levels));
  }
  return RiskLevel(static_cast<int>(k), levels);
}

std::size_t RiskLevel::tail_count(std::size_t atoms) const {
  const std::size_t k = static_cast<std::size_t>(k_) * atoms / static_cast<std::size_t>(levels_);
  return std::max<std::size_t>(1, k);
}

std::size_t TailMask::popcount() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), true)); }

double expectation(const DiracMixture& z) {
  double s = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) s += z.probs()[j] * z.atoms()[j];
  return s;
}

double var_threshold(const DiracMixture& z, const RiskLevel& alpha) {
  const auto order = ascending_order(z.atoms());
  if (z.is_uniform()) return z.atoms()[order[alpha.tail_count(z.size()) - 1]];
  double cum = 0.0;
  for (std::size_t idx : order) {
    cum += z.probs()[idx];
    if (cum >= alpha.alpha() - 1e-12) return z.atoms()[idx];
  }
  return z.atoms()[order.back()];
}

double cvar(const DiracMixture& z, const RiskLevel& alpha) {
  if (alpha.k() == alpha.levels()) return expectation(z);
  if (z.is_uniform()) {
    const std::size_t k = alpha.tail_count(z.size());
    return k == z.size() ? expectation(z) : uniform_tail_mean(z, k);
  }
  return cvar(z, alpha.alpha());
}

double cvar(const DiracMixture& z, double alpha) {
  check_alpha(alpha);
  if (alpha == 1.0) return expectation(z);
  if (z.is_uniform()) {
    const std::size_t k = uniform_tail_count(alpha, z.size());
    return k == z.size() ? expectation(z) : uniform_tail_mean(z, k);
  }
  const auto order = ascending_order(z.atoms());
  double remaining = alpha;
  double acc = 0.0;
  for (std::size_t idx : order) {
    const double take = std::min(z.probs()[idx], remaining);
    acc += take * z.atoms()[idx];
    remaining -= take;
    if (remaining <= 0.0) break;
  }
  return acc / alpha;
}

TailMask mask_from_alpha(const RiskLevel& alpha, std::size_t atoms) {
  if (atoms == 0) throw Error("mask_from_alpha: need at least one atom");
  TailMask mask;
  mask.bits.assign(atoms, false);
  std::fill_n(mask.bits.begin(), static_cast<std::ptrdiff_t>(alpha.tail_count(atoms)), true);
  return mask;
}

std::vector<double> cvar_all_actions(std::span<const DiracMixture> dists, const RiskLevel& alpha,
                                     std::span<const bool> available) {
  if (dists.size() != available.size()) throw Error("cvar_all_actions: availability length mismatch");
  if (std::none_of(available.begin(), available.end(), [](bool b) { return b; })) {
    throw Error("cvar_all_actions: no available action");
  }
  std::vector<double> out(dists.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t a = 0; a < dists.size(); ++a) {
    if (available[a]) out[a] = cvar(dists[a], alpha);
  }
  return out;
}

std::vector<double> sorted_atoms(std::span<const double> atoms) {
  std::vector<double> s(atoms.begin(), atoms.end());
  std::stable_sort(s.begin(), s.end());
  return s;
}

}  // namespace rmix
