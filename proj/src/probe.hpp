#pragma once

// Norm-constrained linear regression on a source's latent vectors, and the
// accept/reject probe built on it. A probe asks: can target bit g(x) be read
// off the latent by some w with ||w|| <= tau, to mean squared error eps? It
// draws samples, fits on one half, measures risk on the other, and accepts
// iff the held-out risk is at most theta * eps.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <unordered_map>

#include "common.hpp"
#include "source.hpp"

namespace litd {

// Constant c in the sample-count formula N = ceil(c (tau B + 1)^4 eps^-2
// log(2/delta)); recorded in reports.
inline constexpr double kProbeSampleConstant = 64.0;

struct ProbeConfig {
  double tau = std::numeric_limits<double>::infinity();  // weight-norm bound
  double epsilon = 0.05;
  double delta = 0.1;
  uint64_t sample_cap = 4096;  // clamp on the formula's N; 0 honors it as-is
  uint32_t pgd_steps = 100;
  double step_size = 0.0;      // 0: 1/lambda_max via power iteration
  double accept_factor = 1.5;  // theta; accept iff risk <= theta * epsilon
};

void validate_probe_config(const ProbeConfig& cfg);

// Samples a probe will draw: the formula clamped to the cap and evened for
// the 50/50 split. With no cap, an infinite or absurd requirement (tau
// unconstrained, tiny eps) is a resource error.
uint64_t probe_sample_count(const ProbeConfig& cfg, double norm_bound);

struct ProbeOutcome {
  bool accepted = false;
  double risk = 0.0;        // held-out mean squared error; drives the decision
  double train_risk = 0.0;
  double weight_norm = 0.0;
  uint64_t samples = 0;
};

// ---------------------------------------------------------------------------
// Fitting. Latents are columns of a (dim x N) matrix; targets are 0/1 (any
// real works). Finite tau: projected gradient descent from zero, renormalizing
// onto the tau-ball after every step. Infinite tau: the exact least-squares
// minimizer (complete orthogonal decomposition), so unconstrained risks carry
// no optimization slack.

Eigen::VectorXd fit_constrained_linear(const Eigen::MatrixXd& latents,
                                       const Eigen::VectorXd& targets, double tau,
                                       uint32_t steps, double step_size = 0.0);

// Same, for many targets (columns of `targets`, one weight column each) over
// one shared sample set; the gradient steps batch into matrix products.
Eigen::MatrixXd fit_constrained_linear_multi(const Eigen::MatrixXd& latents,
                                             const Eigen::MatrixXd& targets, double tau,
                                             uint32_t steps, double step_size = 0.0);

double mean_squared_risk(const Eigen::MatrixXd& latents, const Eigen::VectorXd& weights,
                         const Eigen::VectorXd& targets);

// Per-target train and test risks for a batch fit on shared splits.
struct BatchFit {
  Eigen::MatrixXd weights;  // one column per target
  Eigen::VectorXd train_risk;
  Eigen::VectorXd test_risk;
};
BatchFit fit_probe_batch(const Eigen::MatrixXd& train_latents,
                         const Eigen::MatrixXd& train_targets,
                         const Eigen::MatrixXd& test_latents,
                         const Eigen::MatrixXd& test_targets, double tau, uint32_t steps,
                         double step_size = 0.0);

// ---------------------------------------------------------------------------
// Latent memoization. Distinct probes draw their own sample streams, so the
// same instance recurs across probes; when the instance space fits in
// max_bits the cache keeps every latent it sees. Not for concurrent use.

class LatentCache {
 public:
  explicit LatentCache(const SourceModel& src, uint32_t max_bits = 16);

  bool enabled() const { return enabled_; }
  Eigen::VectorXd latent(const GraphInstance& g);

 private:
  const SourceModel& src_;
  bool enabled_;
  std::unordered_map<uint64_t, Eigen::VectorXd> map_;
};

// ---------------------------------------------------------------------------

// The sampled decision procedure: targets eps-readable within norm tau are
// accepted, targets no w reads to risk 2 eps are rejected, each with
// probability 1 - delta; between the two thresholds either answer may come
// back. Pure given the seed.
ProbeOutcome linear_probe(const std::function<bool(const GraphInstance&)>& target,
                          const SourceModel& src, const ProbeConfig& cfg, uint64_t seed,
                          LatentCache* cache = nullptr);

// Held-out risk of reading the clause's l-iteration feature; the ranking key
// for top-k search and the per-clause report number.
ProbeOutcome probe_clause(const Clause& s, const SourceModel& src, int l,
                          const ProbeConfig& cfg, uint64_t seed,
                          LatentCache* cache = nullptr);
double probe_error(const Clause& s, const SourceModel& src, int l, const ProbeConfig& cfg,
                   uint64_t seed, LatentCache* cache = nullptr);

}  // namespace litd
