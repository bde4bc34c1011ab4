#pragma once

// Teachers to distill from. Both backends answer the same three queries:
// a hard 0/1 prediction, a real score, and a latent feature vector with a
// recorded norm bound B.
//
//   oracle  — wraps a known model; the latent lists the run outputs of every
//             root-prefix clause of its composed tree, padded with decoy
//             parities over untouched instance bits. Predictions are exact.
//   mlp     — residual net fit to the model's labels on uniform instances;
//             the latent is the net's rectifier stack.

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "common.hpp"
#include "iterate.hpp"
#include "mlp.hpp"

namespace litd {

class SourceModel {
 public:
  virtual ~SourceModel() = default;
  virtual uint32_t n() const = 0;
  virtual bool predict(const GraphInstance& g) const = 0;
  virtual double score(const GraphInstance& g) const = 0;
  virtual Eigen::VectorXd latent(const GraphInstance& g) const = 0;
  virtual uint32_t latent_dim() const = 0;
  virtual double norm_bound() const = 0;
  virtual std::string checkpoint() const = 0;
};

// Maps an instance to the +-1 vector the trained backend consumes: init bits
// first, then the adjacency slots.
Eigen::VectorXd instance_features(const GraphInstance& g);

// ---------------------------------------------------------------------------

struct OracleSpec {
  LocalIterationModel truth;
  uint32_t distractors = 4;
  uint64_t seed = 1;
  double noise = 0.0;  // amplitude of per-coordinate jitter on the latent
};

class OracleSource final : public SourceModel {
 public:
  explicit OracleSource(OracleSpec spec);

  uint32_t n() const override { return spec_.truth.n; }
  bool predict(const GraphInstance& g) const override;
  double score(const GraphInstance& g) const override { return predict(g) ? 1.0 : 0.0; }
  Eigen::VectorXd latent(const GraphInstance& g) const override;
  uint32_t latent_dim() const override;
  double norm_bound() const override;
  std::string checkpoint() const override;

  const LocalIterationModel& truth() const { return spec_.truth; }
  const std::vector<Clause>& planted() const { return planted_; }
  // Instance-bit positions each decoy parity reads; disjoint from every
  // planted clause's dependency set by construction.
  const std::vector<std::vector<uint32_t>>& distractor_supports() const { return supports_; }

 private:
  OracleSpec spec_;
  InputEncoding enc_;
  std::vector<Clause> planted_;
  std::vector<std::vector<uint32_t>> supports_;
};

std::unique_ptr<OracleSource> build_oracle_source(OracleSpec spec);

// ---------------------------------------------------------------------------

struct TrainReport {
  double final_loss = 0.0;
  double heldout_accuracy = 0.0;
  uint64_t steps = 0;
};

class TrainedSource final : public SourceModel {
 public:
  TrainedSource(uint32_t n, ResidualNet net, double bound)
      : n_(n), net_(std::move(net)), bound_(bound) {}

  uint32_t n() const override { return n_; }
  bool predict(const GraphInstance& g) const override { return score(g) >= 0.5; }
  double score(const GraphInstance& g) const override { return net_.score(instance_features(g)); }
  Eigen::VectorXd latent(const GraphInstance& g) const override {
    return net_.latent(instance_features(g));
  }
  uint32_t latent_dim() const override { return net_.latent_dim(); }
  double norm_bound() const override { return bound_; }
  std::string checkpoint() const override;

  const ResidualNet& net() const { return net_; }

 private:
  uint32_t n_;
  ResidualNet net_;
  double bound_;
};

// Minibatch training against the model's labels on uniform instances; plain
// SGD or the Adam-style variant per cfg. Deterministic given cfg.seed. The
// norm bound is 1.1 times the largest held-out latent norm.
std::unique_ptr<TrainedSource> train_mlp_source(const LocalIterationModel& truth,
                                                MLPConfig cfg,
                                                TrainReport* report = nullptr);

// Fraction of agreeing predictions on fresh uniform instances.
double source_accuracy(const SourceModel& src, const LocalIterationModel& truth,
                       int samples, uint64_t seed);

// ---------------------------------------------------------------------------

// Checkpoints are versioned text: oracle files carry the spec (the latent is
// rebuilt on load), mlp files carry every parameter at full precision.
std::unique_ptr<SourceModel> load_source(const std::string& text);

}  // namespace litd
