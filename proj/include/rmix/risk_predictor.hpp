#pragma once

#include <span>
#include <vector>

#include "rmix/distributional.hpp"
#include "rmix/nn.hpp"
#include "rmix/tensor.hpp"

namespace rmix {

struct RiskPredictorConfig {
  std::size_t dist_dim = 0;   // flattened atoms of every action: n_actions * M
  std::size_t input_dim = 0;  // per-step trajectory features (previous obs, last action, agent id)
  std::size_t levels = 10;    // K
  std::size_t chunk_dim = 4;  // width of each of the K chunks
  std::size_t hidden_dim = 64;

  std::size_t embed_dim() const { return levels * chunk_dim; }
};

struct RiskDecision {
  std::vector<double> probs;
  RiskLevel level;
  TailMask mask;
};

// Dynamic risk-level predictor. Scores each of the K levels by the inner
// product between the k-th chunk of an embedding of the current return
// distribution and the k-th chunk of a recurrent trajectory encoding, then
// softmaxes the K scores. No key/query/value projections are involved.
//
// The distribution embedding consumes the atoms detached: nothing computed
// here sends gradient back into the agent network.
class RiskPredictor {
 public:
  struct Trajectory {
    Tensor chunks;  // (rows, K * chunk_dim)
    Tensor hidden;  // (rows, hidden_dim)
  };

  static RiskPredictor init(const RiskPredictorConfig& cfg, Rng& rng);
  static RiskPredictor zeros(const RiskPredictorConfig& cfg);

  const RiskPredictorConfig& config() const { return cfg_; }
  Tensor initial_hidden(std::size_t rows) const;

  Tensor embed_distribution(const Tensor& atoms) const;
  Trajectory embed_trajectory(const Tensor& inputs, const Tensor& hidden) const;
  // (rows, K * chunk_dim) x2 -> (rows, K)
  Tensor alpha_probs(const Tensor& dist_chunks, const Tensor& traj_chunks) const;

  NamedTensors parameters() const;
  RiskPredictor clone() const;

 private:
  RiskPredictorConfig cfg_;
  Linear embed_;
  Linear traj_in_;
  GruCell traj_rnn_;
  Linear traj_out_;
};

// argmax (lowest index on ties) -> alpha = k / K and its tail mask over M atoms.
RiskDecision decide(std::span<const double> probs, std::size_t atoms);

}  // namespace rmix
