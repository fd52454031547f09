#include "rmix/risk_predictor.hpp"

#include <cmath>
#include <string>

namespace rmix {

RiskPredictor RiskPredictor::init(const RiskPredictorConfig& cfg, Rng& rng) {
  RiskPredictor p;
  p.cfg_ = cfg;
  p.embed_ = Linear::init(cfg.dist_dim, cfg.embed_dim(), rng);
  p.traj_in_ = Linear::init(cfg.input_dim, cfg.hidden_dim, rng);
  p.traj_rnn_ = GruCell::init(cfg.hidden_dim, cfg.hidden_dim, rng);
  p.traj_out_ = Linear::init(cfg.hidden_dim, cfg.embed_dim(), rng);
  return p;
}

RiskPredictor RiskPredictor::zeros(const RiskPredictorConfig& cfg) {
  RiskPredictor p;
  p.cfg_ = cfg;
  p.embed_ = Linear::zeros(cfg.dist_dim, cfg.embed_dim());
  p.traj_in_ = Linear::zeros(cfg.input_dim, cfg.hidden_dim);
  p.traj_rnn_ = GruCell::zeros(cfg.hidden_dim, cfg.hidden_dim);
  p.traj_out_ = Linear::zeros(cfg.hidden_dim, cfg.embed_dim());
  return p;
}

Tensor RiskPredictor::initial_hidden(std::size_t rows) const { return Tensor::zeros({rows, cfg_.hidden_dim}); }

Tensor RiskPredictor::embed_distribution(const Tensor& atoms) const {
  if (atoms.rank() != 2 || atoms.cols() != cfg_.dist_dim) {
    throw Error("embed_distribution: expected width " + std::to_string(cfg_.dist_dim) + ", got " +
                shape_string(atoms.shape()));
  }
  return embed_.forward(atoms.detach());
}

RiskPredictor::Trajectory RiskPredictor::embed_trajectory(const Tensor& inputs, const Tensor& hidden) const {
  if (inputs.rank() != 2 || inputs.cols() != cfg_.input_dim) {
    throw Error("embed_trajectory: expected width " + std::to_string(cfg_.input_dim) + ", got " +
                shape_string(inputs.shape()));
  }
  Tensor h = traj_rnn_.forward(ops::relu(traj_in_.forward(inputs)), hidden);
  Tensor chunks = traj_out_.forward(h);
  return {std::move(chunks), std::move(h)};
}

Tensor RiskPredictor::alpha_probs(const Tensor& dist_chunks, const Tensor& traj_chunks) const {
  const std::size_t k = cfg_.levels, d = cfg_.chunk_dim;
  if (dist_chunks.shape() != traj_chunks.shape() || dist_chunks.cols() != k * d) {
    throw Error("alpha_probs: chunk shape mismatch");
  }
  const std::size_t rows = dist_chunks.rows();
  const Tensor products = ops::mul(dist_chunks, traj_chunks).reshape({rows * k, d});
  const Tensor scores = ops::sum_rows(products).reshape({rows, k});
  return ops::softmax_rows(scores);
}

NamedTensors RiskPredictor::parameters() const {
  NamedTensors out;
  embed_.collect("risk.embed", out);
  traj_in_.collect("risk.traj_in", out);
  traj_rnn_.collect("risk.traj_rnn", out);
  traj_out_.collect("risk.traj_out", out);
  return out;
}

RiskPredictor RiskPredictor::clone() const {
  RiskPredictor p;
  p.cfg_ = cfg_;
  p.embed_ = embed_.clone();
  p.traj_in_ = traj_in_.clone();
  p.traj_rnn_ = traj_rnn_.clone();
  p.traj_out_ = traj_out_.clone();
  return p;
}

RiskDecision decide(std::span<const double> probs, std::size_t atoms) {
  if (probs.empty()) throw Error("decide: empty probability vector");
  std::size_t best = 0;
  for (std::size_t k = 1; k < probs.size(); ++k) {
    if (probs[k] > probs[best]) best = k;
  }
  RiskLevel level(static_cast<int>(best) + 1, static_cast<int>(probs.size()));
  TailMask mask = mask_from_alpha(level, atoms);
  return {std::vector<double>(probs.begin(), probs.end()), level, std::move(mask)};
}

}  // namespace rmix
