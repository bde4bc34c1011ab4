#include "probe.hpp"

#include <cmath>

namespace litd {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void validate_probe_config(const ProbeConfig& cfg) {
  if (!(cfg.tau > 0.0)) fail(errc::invalid_argument, "probe config: tau must be positive");
  if (!(cfg.epsilon > 0.0) || !std::isfinite(cfg.epsilon))
    fail(errc::invalid_argument, "probe config: epsilon must be positive");
  if (!(cfg.delta > 0.0) || !(cfg.delta < 1.0))
    fail(errc::invalid_argument, "probe config: delta must lie in (0,1)");
  if (!(cfg.accept_factor > 1.0) || !(cfg.accept_factor < 2.0))
    fail(errc::invalid_argument, "probe config: accept factor must lie strictly in (1,2)");
  if (cfg.pgd_steps == 0) fail(errc::invalid_argument, "probe config: needs optimizer steps");
  if (cfg.step_size < 0.0) fail(errc::invalid_argument, "probe config: negative step size");
  if (cfg.sample_cap != 0 && cfg.sample_cap < 4)
    fail(errc::invalid_argument, "probe config: sample cap below the minimal split");
}

uint64_t probe_sample_count(const ProbeConfig& cfg, double norm_bound) {
  validate_probe_config(cfg);
  if (norm_bound < 0.0) fail(errc::invalid_argument, "probe samples: negative norm bound");
  double amp = std::isfinite(cfg.tau) ? cfg.tau * norm_bound + 1.0
                                      : std::numeric_limits<double>::infinity();
  double need = kProbeSampleConstant * amp * amp * amp * amp /
                (cfg.epsilon * cfg.epsilon) * std::log(2.0 / cfg.delta);
  constexpr double kHardLimit = 1e8;
  if (cfg.sample_cap == 0 && !(need <= kHardLimit))
    fail(errc::resource, "probe samples: sample budget overflow");
  uint64_t n = cfg.sample_cap == 0 ? uint64_t(std::ceil(need))
                                   : uint64_t(std::ceil(std::min(need, double(cfg.sample_cap))));
  if (n & 1) ++n;
  if (cfg.sample_cap != 0 && n > cfg.sample_cap) n -= 2;
  return std::max<uint64_t>(n, 4);
}

// ---------------------------------------------------------------------------

namespace {

// Largest eigenvalue of (2/N) Phi Phi^T by matrix-free power iteration; the
// PGD objective's curvature bound.
double curvature_estimate(const MatrixXd& phi) {
  const double scale = 2.0 / double(phi.cols());
  VectorXd v = VectorXd::Ones(phi.rows()).normalized();
  double lambda = 0.0;
  for (int it = 0; it < 50; ++it) {
    VectorXd hv = scale * (phi * (phi.transpose() * v));
    lambda = hv.norm();
    if (lambda <= 0.0) return 0.0;
    v = hv / lambda;
  }
  return lambda;
}

void check_fit_inputs(const MatrixXd& latents, const MatrixXd& targets, double tau) {
  if (latents.cols() == 0) fail(errc::invalid_argument, "linear fit: empty data");
  if (targets.rows() != latents.cols())
    fail(errc::invalid_argument, "linear fit: one target row per sample required");
  if (!latents.allFinite() || !targets.allFinite())
    fail(errc::invalid_argument, "linear fit: non-finite values in data");
  if (std::isnan(tau) || tau < 0.0) fail(errc::invalid_argument, "linear fit: bad tau");
}

}  // namespace

MatrixXd fit_constrained_linear_multi(const MatrixXd& latents, const MatrixXd& targets,
                                      double tau, uint32_t steps, double step_size) {
  check_fit_inputs(latents, targets, tau);
  const Eigen::Index m = latents.rows(), count = latents.cols(), t = targets.cols();
  if (tau == 0.0) return MatrixXd::Zero(m, t);

  if (!std::isfinite(tau))
    return latents.transpose().completeOrthogonalDecomposition().solve(targets);

  double eta = step_size;
  if (eta == 0.0) {
    double lambda = curvature_estimate(latents);
    if (lambda <= 0.0) return MatrixXd::Zero(m, t);  // all-zero latents: flat objective
    eta = 1.0 / lambda;
  }
  MatrixXd w = MatrixXd::Zero(m, t);
  for (uint32_t it = 0; it < steps; ++it) {
    MatrixXd resid = latents.transpose() * w - targets;
    w -= (eta * 2.0 / double(count)) * (latents * resid);
    for (Eigen::Index j = 0; j < t; ++j) {
      double norm = w.col(j).norm();
      if (norm > tau) w.col(j) *= tau / norm;
    }
  }
  return w;
}

VectorXd fit_constrained_linear(const MatrixXd& latents, const VectorXd& targets, double tau,
                                uint32_t steps, double step_size) {
  return fit_constrained_linear_multi(latents, targets, tau, steps, step_size);
}

double mean_squared_risk(const MatrixXd& latents, const VectorXd& weights,
                         const VectorXd& targets) {
  if (latents.cols() != targets.size() || latents.rows() != weights.size())
    fail(errc::invalid_argument, "risk: dimension mismatch");
  if (targets.size() == 0) fail(errc::invalid_argument, "risk: empty data");
  return (latents.transpose() * weights - targets).squaredNorm() / double(targets.size());
}

BatchFit fit_probe_batch(const MatrixXd& train_latents, const MatrixXd& train_targets,
                         const MatrixXd& test_latents, const MatrixXd& test_targets,
                         double tau, uint32_t steps, double step_size) {
  if (test_latents.rows() != train_latents.rows() ||
      test_targets.cols() != train_targets.cols() || test_targets.rows() != test_latents.cols())
    fail(errc::invalid_argument, "probe batch: split shapes disagree");
  BatchFit out;
  out.weights = fit_constrained_linear_multi(train_latents, train_targets, tau, steps, step_size);
  auto risks = [](const MatrixXd& phi, const MatrixXd& w, const MatrixXd& y) {
    return ((phi.transpose() * w - y).colwise().squaredNorm() / double(y.rows()))
        .transpose()
        .eval();
  };
  out.train_risk = risks(train_latents, out.weights, train_targets);
  out.test_risk = risks(test_latents, out.weights, test_targets);
  return out;
}

// ---------------------------------------------------------------------------

LatentCache::LatentCache(const SourceModel& src, uint32_t max_bits)
    : src_(src), enabled_(instance_bit_count(InputEncoding::make(src.n())) <= max_bits) {}

VectorXd LatentCache::latent(const GraphInstance& g) {
  if (!enabled_) return src_.latent(g);
  uint64_t key = g.init | (g.adj << g.n);
  auto it = map_.find(key);
  if (it == map_.end()) it = map_.emplace(key, src_.latent(g)).first;
  return it->second;
}

// ---------------------------------------------------------------------------

ProbeOutcome linear_probe(const std::function<bool(const GraphInstance&)>& target,
                          const SourceModel& src, const ProbeConfig& cfg, uint64_t seed,
                          LatentCache* cache) {
  const uint64_t total = probe_sample_count(cfg, src.norm_bound());
  const Eigen::Index half = Eigen::Index(total / 2);
  auto rng = fork_rng(seed, "probe");

  MatrixXd train(src.latent_dim(), half), test(src.latent_dim(), half);
  VectorXd train_y(half), test_y(half);
  for (Eigen::Index i = 0; i < 2 * half; ++i) {
    GraphInstance g = random_instance(src.n(), rng);
    VectorXd a = cache ? cache->latent(g) : src.latent(g);
    if (i < half) {
      train.col(i) = a;
      train_y[i] = target(g) ? 1.0 : 0.0;
    } else {
      test.col(i - half) = a;
      test_y[i - half] = target(g) ? 1.0 : 0.0;
    }
  }

  ProbeOutcome out;
  out.samples = total;
  VectorXd w = fit_constrained_linear(train, train_y, cfg.tau, cfg.pgd_steps, cfg.step_size);
  out.weight_norm = w.norm();
  out.train_risk = mean_squared_risk(train, w, train_y);
  out.risk = mean_squared_risk(test, w, test_y);
  out.accepted = out.risk <= cfg.accept_factor * cfg.epsilon;
  return out;
}

ProbeOutcome probe_clause(const Clause& s, const SourceModel& src, int l,
                          const ProbeConfig& cfg, uint64_t seed, LatentCache* cache) {
  const InputEncoding enc = InputEncoding::make(src.n());
  return linear_probe([&](const GraphInstance& g) { return feature_value(s, g, l, enc); },
                      src, cfg, seed, cache);
}

double probe_error(const Clause& s, const SourceModel& src, int l, const ProbeConfig& cfg,
                   uint64_t seed, LatentCache* cache) {
  return probe_clause(s, src, l, cfg, seed, cache).risk;
}

}  // namespace litd
