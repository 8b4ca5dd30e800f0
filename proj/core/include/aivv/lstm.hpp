#pragma once

#include <vector>

#include <Eigen/Dense>

#include "aivv/rng.hpp"

namespace aivv {

// Stacked LSTM with a scalar dense head, stored as one flat parameter vector
// so optimizer state, cloning, hashing and finite-difference probing all
// operate on a single contiguous buffer.
//
// Per-layer layout (column-major blocks, gate row order [i; f; g; o]):
//   W_ih (4h x in), W_hh (4h x h), b (4h)
// followed by the dense head: w (h), b (1).
//
// Dropout is variational: one mask per layer per sequence, shared across all
// timesteps, applied to the layer output (so the last mask also gates the
// dense head input), with inverted 1/keep scaling.
class LstmNetwork {
 public:
  LstmNetwork(int input_dim, int hidden, int layers);

  static int param_count(int input_dim, int hidden, int layers);
  int param_count() const { return static_cast<int>(params_.size()); }
  int input_dim() const { return input_dim_; }
  int hidden() const { return hidden_; }
  int layers() const { return layers_; }

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  // Uniform init scaled by each tensor's fan-in.
  void init_params(Rng& rng);

  // One (hidden x batch) mask per layer; entries are 0 or 1/(1-p).
  using Masks = std::vector<Eigen::MatrixXd>;
  Masks sample_masks(int batch, double dropout_p, Rng& rng) const;
  Masks ones_masks(int batch) const;

  // xs: one (input_dim x batch) matrix per timestep. Returns (1 x batch)
  // predictions from the final timestep's hidden state.
  Eigen::RowVectorXd forward(const std::vector<Eigen::MatrixXd>& xs,
                             const Masks& masks) const;

  // Mean squared error over the batch; if grad is non-null it receives the
  // full BPTT gradient in the flat layout.
  double loss_and_grad(const std::vector<Eigen::MatrixXd>& xs,
                       const Eigen::RowVectorXd& targets, const Masks& masks,
                       Eigen::VectorXd* grad) const;

 private:
  struct LayerOffsets {
    int w_ih, w_hh, b, in;
  };
  struct LayerCache {
    std::vector<Eigen::MatrixXd> x, i, f, g, o, c, tanhc;
  };

  Eigen::Map<const Eigen::MatrixXd> mat(int off, int rows, int cols) const {
    return {params_.data() + off, rows, cols};
  }
  Eigen::Map<Eigen::MatrixXd> mat(int off, int rows, int cols) {
    return {params_.data() + off, rows, cols};
  }

  // Shared forward pass; fills caches when requested and returns y (1 x B).
  Eigen::RowVectorXd run_forward(const std::vector<Eigen::MatrixXd>& xs,
                                 const Masks& masks,
                                 std::vector<LayerCache>* caches) const;

  int input_dim_, hidden_, layers_;
  std::vector<LayerOffsets> off_;
  int head_w_off_ = 0, head_b_off_ = 0;
  Eigen::VectorXd params_;
};

}  // namespace aivv
