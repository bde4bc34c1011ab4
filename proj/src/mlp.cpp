#include "mlp.hpp"

#include <cmath>

namespace litd {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd activate(const MatrixXd& p, Activation a) {
  if (a == Activation::identity) return p;
  return p.cwiseMax(0.0);
}

// Derivative evaluated at the pre-activation; the kink at 0 takes slope 0.
MatrixXd activate_grad(const MatrixXd& p, Activation a) {
  if (a == Activation::identity) return MatrixXd::Ones(p.rows(), p.cols());
  return (p.array() > 0.0).cast<double>();
}

double sigmoid(double s) { return 1.0 / (1.0 + std::exp(-s)); }

// Numerically stable binary cross-entropy on the raw score.
double bce(double s, double y) {
  return std::max(s, 0.0) - s * y + std::log1p(std::exp(-std::abs(s)));
}

void shape_like(NetGradients& g, const ResidualNet& net, bool zero) {
  auto mat = [&](Eigen::Index r, Eigen::Index c) {
    return zero ? MatrixXd::Zero(r, c).eval() : MatrixXd(r, c);
  };
  g.w_in = mat(net.w_in.rows(), net.w_in.cols());
  g.b_in = zero ? VectorXd::Zero(net.b_in.size()).eval() : VectorXd(net.b_in.size());
  g.w_blk.resize(net.blocks);
  g.b_blk.resize(net.blocks);
  for (uint32_t k = 0; k < net.blocks; ++k) {
    g.w_blk[k] = mat(net.width, net.width);
    g.b_blk[k] = zero ? VectorXd::Zero(net.width).eval() : VectorXd(net.width);
  }
  g.w_out = zero ? VectorXd::Zero(net.width).eval() : VectorXd(net.width);
  g.b_out = 0.0;
}

}  // namespace

ResidualNet ResidualNet::init(const MLPConfig& cfg, std::mt19937_64& rng) {
  if (cfg.input_dim == 0 || cfg.width == 0)
    fail(errc::invalid_argument, "net init: input_dim and width must be positive");
  ResidualNet net = zeros(cfg);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto fill = [&](MatrixXd& m, double scale) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = scale * gauss(rng);
  };
  fill(net.w_in, std::sqrt(2.0 / cfg.input_dim));
  for (uint32_t k = 0; k < cfg.blocks; ++k) fill(net.w_blk[k], std::sqrt(2.0 / cfg.width));
  for (uint32_t i = 0; i < cfg.width; ++i) net.w_out(i) = gauss(rng) / std::sqrt(double(cfg.width));
  return net;
}

ResidualNet ResidualNet::zeros(const MLPConfig& cfg) {
  ResidualNet net;
  net.input_dim = cfg.input_dim;
  net.blocks = cfg.blocks;
  net.width = cfg.width;
  net.activation = cfg.activation;
  net.loss = cfg.loss;
  net.w_in = MatrixXd::Zero(cfg.width, cfg.input_dim);
  net.b_in = VectorXd::Zero(cfg.width);
  net.w_blk.assign(cfg.blocks, MatrixXd::Zero(cfg.width, cfg.width));
  net.b_blk.assign(cfg.blocks, VectorXd::Zero(cfg.width));
  net.w_out = VectorXd::Zero(cfg.width);
  net.b_out = 0.0;
  return net;
}

double ResidualNet::raw(const VectorXd& x) const {
  VectorXd z = activate(w_in * x + b_in, activation);
  for (uint32_t k = 0; k < blocks; ++k) z += activate(w_blk[k] * z + b_blk[k], activation);
  return w_out.dot(z) + b_out;
}

double ResidualNet::score(const VectorXd& x) const {
  double s = raw(x);
  return loss == LossKind::logistic ? sigmoid(s) : std::clamp(s, 0.0, 1.0);
}

VectorXd ResidualNet::latent(const VectorXd& x) const {
  VectorXd out(latent_dim());
  VectorXd z = activate(w_in * x + b_in, activation);
  out.segment(0, width) = z;
  for (uint32_t k = 0; k < blocks; ++k) {
    VectorXd a = activate(w_blk[k] * z + b_blk[k], activation);
    out.segment((k + 1) * width, width) = a;
    z += a;
  }
  return out;
}

double net_loss_and_gradients(const ResidualNet& net, const MatrixXd& X,
                              const VectorXd& y, NetGradients* grads) {
  const Eigen::Index B = X.cols();
  if (X.rows() != net.w_in.cols() || y.size() != B)
    fail(errc::invalid_argument, "net gradients: batch shapes disagree");
  if (B == 0) fail(errc::invalid_argument, "net gradients: empty batch");

  // Forward, keeping pre-activations and block inputs for the backward pass.
  MatrixXd ones = MatrixXd::Ones(1, B);
  std::vector<MatrixXd> pre(net.blocks + 1), zin(net.blocks + 1);
  pre[0] = net.w_in * X + net.b_in * ones;
  MatrixXd z = activate(pre[0], net.activation);
  for (uint32_t k = 0; k < net.blocks; ++k) {
    zin[k] = z;
    pre[k + 1] = net.w_blk[k] * z + net.b_blk[k] * ones;
    z += activate(pre[k + 1], net.activation);
  }
  Eigen::RowVectorXd s = net.w_out.transpose() * z;
  s.array() += net.b_out;

  double loss = 0.0;
  Eigen::RowVectorXd ds(B);
  for (Eigen::Index i = 0; i < B; ++i) {
    if (net.loss == LossKind::logistic) {
      loss += bce(s(i), y(i));
      ds(i) = (sigmoid(s(i)) - y(i)) / double(B);
    } else {
      double r = s(i) - y(i);
      loss += r * r;
      ds(i) = 2.0 * r / double(B);
    }
  }
  loss /= double(B);
  if (!std::isfinite(loss)) fail(errc::train, "net gradients: non-finite loss");
  if (!grads) return loss;

  shape_like(*grads, net, false);
  grads->w_out = z * ds.transpose();
  grads->b_out = ds.sum();
  MatrixXd dz = net.w_out * ds;
  for (int k = int(net.blocks) - 1; k >= 0; --k) {
    MatrixXd dp = dz.cwiseProduct(activate_grad(pre[k + 1], net.activation));
    grads->w_blk[k] = dp * zin[k].transpose();
    grads->b_blk[k] = dp.rowwise().sum();
    dz += net.w_blk[k].transpose() * dp;
  }
  MatrixXd dp0 = dz.cwiseProduct(activate_grad(pre[0], net.activation));
  grads->w_in = dp0 * X.transpose();
  grads->b_in = dp0.rowwise().sum();
  return loss;
}

AdamState AdamState::zeros_like(const ResidualNet& net) {
  AdamState st;
  shape_like(st.m, net, true);
  shape_like(st.v, net, true);
  return st;
}

void apply_sgd(ResidualNet& net, const NetGradients& g, double lr) {
  net.w_in -= lr * g.w_in;
  net.b_in -= lr * g.b_in;
  for (uint32_t k = 0; k < net.blocks; ++k) {
    net.w_blk[k] -= lr * g.w_blk[k];
    net.b_blk[k] -= lr * g.b_blk[k];
  }
  net.w_out -= lr * g.w_out;
  net.b_out -= lr * g.b_out;
}

void apply_adam(ResidualNet& net, const NetGradients& g, AdamState& st, double lr,
                double beta1, double beta2, double eps) {
  st.t += 1;
  double c1 = 1.0 - std::pow(beta1, double(st.t));
  double c2 = 1.0 - std::pow(beta2, double(st.t));
  auto step_mat = [&](MatrixXd& p, const MatrixXd& grad, MatrixXd& m, MatrixXd& v) {
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  auto step_vec = [&](VectorXd& p, const VectorXd& grad, VectorXd& m, VectorXd& v) {
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  step_mat(net.w_in, g.w_in, st.m.w_in, st.v.w_in);
  step_vec(net.b_in, g.b_in, st.m.b_in, st.v.b_in);
  for (uint32_t k = 0; k < net.blocks; ++k) {
    step_mat(net.w_blk[k], g.w_blk[k], st.m.w_blk[k], st.v.w_blk[k]);
    step_vec(net.b_blk[k], g.b_blk[k], st.m.b_blk[k], st.v.b_blk[k]);
  }
  step_vec(net.w_out, g.w_out, st.m.w_out, st.v.w_out);
  double mg = st.m.b_out = beta1 * st.m.b_out + (1.0 - beta1) * g.b_out;
  double vg = st.v.b_out = beta2 * st.v.b_out + (1.0 - beta2) * g.b_out * g.b_out;
  net.b_out -= lr * (mg / c1) / (std::sqrt(vg / c2) + eps);
}

double gradient_check(const MLPConfig& cfg, int points, uint64_t seed) {
  std::mt19937_64 rng = fork_rng(seed, "gradcheck");
  ResidualNet net = ResidualNet::init(cfg, rng);
  MatrixXd X(cfg.input_dim, points);
  VectorXd y(points);
  for (int j = 0; j < points; ++j) {
    for (uint32_t i = 0; i < cfg.input_dim; ++i) X(i, j) = draw_bit(rng) ? 1.0 : -1.0;
    y(j) = draw_bit(rng) ? 1.0 : 0.0;
  }

  NetGradients g;
  net_loss_and_gradients(net, X, y, &g);

  const double h = 1e-4;
  double worst = 0.0;
  auto probe = [&](double* p, double analytic) {
    double keep = *p;
    *p = keep + h;
    double up = net_loss_and_gradients(net, X, y, nullptr);
    *p = keep - h;
    double down = net_loss_and_gradients(net, X, y, nullptr);
    *p = keep;
    double numeric = (up - down) / (2.0 * h);
    double rel = std::abs(analytic - numeric) /
                 std::max({1.0, std::abs(analytic), std::abs(numeric)});
    worst = std::max(worst, rel);
  };
  auto probe_mat = [&](MatrixXd& p, const MatrixXd& a) {
    for (Eigen::Index i = 0; i < p.size(); ++i) probe(p.data() + i, a(i));
  };
  auto probe_vec = [&](VectorXd& p, const VectorXd& a) {
    for (Eigen::Index i = 0; i < p.size(); ++i) probe(p.data() + i, a(i));
  };
  probe_mat(net.w_in, g.w_in);
  probe_vec(net.b_in, g.b_in);
  for (uint32_t k = 0; k < cfg.blocks; ++k) {
    probe_mat(net.w_blk[k], g.w_blk[k]);
    probe_vec(net.b_blk[k], g.b_blk[k]);
  }
  probe_vec(net.w_out, g.w_out);
  probe(&net.b_out, g.b_out);
  return worst;
}

}  // namespace litd
