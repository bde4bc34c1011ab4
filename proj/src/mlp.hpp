#pragma once

// Residual multilayer perceptron trained with hand-derived gradients; no
// autodiff anywhere. The net lifts its input to `width`, applies `blocks`
// identity-skip blocks z <- z + act(W z + b), and reads out a scalar affine
// score. The latent vector is the concatenation of every rectifier output
// (the lifted activation plus one slab per block).

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "common.hpp"

namespace litd {

enum class Activation { relu, identity };
enum class LossKind { logistic, squared };
enum class Optimizer { sgd, adam };

struct MLPConfig {
  uint32_t input_dim = 0;
  uint32_t blocks = 2;
  uint32_t width = 128;
  Activation activation = Activation::relu;
  LossKind loss = LossKind::logistic;
  Optimizer optimizer = Optimizer::sgd;
  double lr = 0.1;
  double lr_decay = 0.0;  // lr_t = lr / (1 + lr_decay * t / steps)
  uint32_t batch = 32;
  uint64_t steps = 50000;
  uint64_t seed = 1;
};

struct ResidualNet {
  uint32_t input_dim = 0;
  uint32_t blocks = 0;
  uint32_t width = 0;
  Activation activation = Activation::relu;
  LossKind loss = LossKind::logistic;

  Eigen::MatrixXd w_in;
  Eigen::VectorXd b_in;
  std::vector<Eigen::MatrixXd> w_blk;
  std::vector<Eigen::VectorXd> b_blk;
  Eigen::VectorXd w_out;
  double b_out = 0.0;

  static ResidualNet init(const MLPConfig& cfg, std::mt19937_64& rng);
  static ResidualNet zeros(const MLPConfig& cfg);

  uint32_t latent_dim() const { return width * (blocks + 1); }

  // Raw affine output before any loss nonlinearity.
  double raw(const Eigen::VectorXd& x) const;
  // Score in [0,1]: sigmoid of raw for logistic nets, clamped raw otherwise.
  double score(const Eigen::VectorXd& x) const;
  Eigen::VectorXd latent(const Eigen::VectorXd& x) const;
};

struct NetGradients {
  Eigen::MatrixXd w_in;
  Eigen::VectorXd b_in;
  std::vector<Eigen::MatrixXd> w_blk;
  std::vector<Eigen::VectorXd> b_blk;
  Eigen::VectorXd w_out;
  double b_out = 0.0;
};

// Mean loss over the batch (columns of X against entries of y); fills *grads
// with the gradient of that mean when grads is non-null.
double net_loss_and_gradients(const ResidualNet& net, const Eigen::MatrixXd& X,
                              const Eigen::VectorXd& y, NetGradients* grads);

// Adam-style moment state; one slot per tensor, laid out like NetGradients.
struct AdamState {
  NetGradients m, v;
  uint64_t t = 0;
  static AdamState zeros_like(const ResidualNet& net);
};

void apply_sgd(ResidualNet& net, const NetGradients& g, double lr);
void apply_adam(ResidualNet& net, const NetGradients& g, AdamState& st, double lr,
                double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// Checks every gradient entry against central finite differences (step 1e-4)
// at `points` random inputs and returns the worst discrepancy, measured as
// |analytic - numeric| / max(1, |analytic|, |numeric|). Keep width small.
double gradient_check(const MLPConfig& cfg, int points, uint64_t seed);

}  // namespace litd
