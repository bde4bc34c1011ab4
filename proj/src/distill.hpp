#pragma once

// Two-phase model distillation. Phase 1 walks the selector tree's clause
// space, probing each candidate conjunction's readout from the source latent
// and extending the survivors (or the top-k by probe error) one literal at a
// time. Phase 2 decomposes the collected pool by selector prefix, estimates
// leaf-tuple or per-clause correlation weights by sampling, builds candidate
// per-vertex trees with an exact budgeted DP, and picks the product that
// agrees best with the source, assembling the result behind the selector.

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "common.hpp"
#include "dt.hpp"
#include "iterate.hpp"
#include "probe.hpp"
#include "source.hpp"

namespace litd {

// One pooled clause. Probe fields hold the latest round's outcome; clauses
// regenerated at a later depth are probed again at that depth's tolerance.
struct ClauseRecord {
  Clause clause;  // literals sorted by variable, id bits first
  int first_depth = 0;
  bool probed = false;
  bool accepted = false;
  double probe_err = std::numeric_limits<double>::quiet_NaN();
  double train_err = std::numeric_limits<double>::quiet_NaN();
  double weight_norm = 0.0;
};

struct PathPool {
  std::vector<ClauseRecord> records;            // deduplicated union, generation order
  std::vector<std::vector<uint32_t>> by_depth;  // record indices forming S_0..S_R
  uint64_t probes_issued = 0;
  // Probe count of the same-depth run that branches from every probed clause;
  // absent when materializing that expansion would exceed the dry-run cap.
  std::optional<uint64_t> exhaustive_probes;

  std::vector<uint64_t> depth_sizes() const;
  std::optional<double> probe_fraction() const;
};

struct Phase1Options {
  int rounds = 2;  // R: probing depths; S_R is generated but never probed
  int l = 1;
  uint32_t k = 0;        // 0: branch from accepted clauses; else from the k best
  ProbeConfig probe;     // epsilon and delta are overridden per round
  double delta = 0.1;    // failure budget split across all probes
  uint64_t pool_cap = 200000;
  uint64_t dry_run_cap = 1u << 20;
  uint64_t seed = 1;
};

// Round i probes every member of S_{i-1} at tolerance 2^{-il-3} with budget
// delta/(2|S_{i-1}|R). Each probe's rng is forked from (seed, clause, round),
// so outcomes are independent of which other clauses are pooled. Fills pool
// in place so a resource failure leaves the partial pool with the caller.
void run_phase1(const SourceModel& src, const Phase1Options& opt, PathPool& pool,
                LatentCache* cache = nullptr);

PathPool phase1_exact(const SourceModel& src, int rounds, int l, double delta,
                      const ProbeConfig& probe, uint64_t seed,
                      uint64_t pool_cap = 200000, LatentCache* cache = nullptr);
PathPool phase1_topk(const SourceModel& src, int rounds, int l, uint32_t k,
                     const ProbeConfig& probe, uint64_t seed,
                     uint64_t pool_cap = 200000, uint64_t dry_run_cap = 1u << 20,
                     LatentCache* cache = nullptr);

// Probe count of the branch-from-everything expansion, by materializing the
// per-depth clause sets without probing; nullopt once a depth exceeds cap.
std::optional<uint64_t> exhaustive_probe_count(uint32_t n, int rounds, uint64_t cap);

// Pool split by selector prefix. Clauses whose id literals spell a complete
// live vertex code join that vertex's set with the prefix stripped; internal
// prefixes, partial id assignments, and dead codes stay selector-owned.
struct Decomposition {
  uint32_t n = 0;
  uint64_t pool_size = 0;                    // records in the source pool
  std::vector<Clause> prefixes;              // full selector path per vertex
  std::vector<std::vector<Clause>> bodies;   // per vertex, sorted by clause_less
  std::vector<std::vector<double>> body_err; // aligned probe errors, NaN unprobed
  std::vector<Clause> selector_owned;
};

Decomposition decompose_pool(const PathPool& pool, uint32_t n);

enum class VMode { exact_tuple, marginal };

// Sampled correlation weights between clause conjunctions (evaluated on the
// layer-1 word of their vertex) and the source's +/-1 prediction.
struct ValuationTable {
  VMode mode = VMode::marginal;
  std::vector<uint32_t> dims;                  // |bodies[u]|, exact mode
  std::vector<double> tuple_v;                 // row-major over dims
  std::vector<std::vector<double>> marginal;   // [u][body index]
  uint64_t samples = 0;
  double target_accuracy = 0.0;  // epsilon / |pool|
  double accuracy = 0.0;         // half-width backed by the samples actually used

  size_t tuple_index(const std::vector<uint32_t>& idx) const;
};

struct ValuationOptions {
  double epsilon = 0.05;
  double delta = 0.05;
  uint64_t sample_cap = 200000;
  uint64_t exact_tuple_cap = 4096;
  uint64_t seed = 1;
};

ValuationTable estimate_v(const Decomposition& dec, const SourceModel& src, int l,
                          VMode mode, const ValuationOptions& opt);

// Leaf-tuple score: sum over tuples of leaves (one per vertex) of the tuple
// weight times +/-1 for the candidate's output when layer-1 states are seeded
// from the tuple's leaf labels. Layers past the first are evaluated with
// three-valued logic over the bits the tuple's clauses pin; a tuple whose
// output stays undetermined raises errc::undefined_value (use mc_agreement).
// With exact weights at l=1 this equals the expected +/-1 product between
// source and candidate. Leaf paths must appear in the decomposition's bodies.
double valuation(const std::vector<DecisionTree>& trees, const Decomposition& dec,
                 const ValuationTable& table, int l);

struct DPResult {
  DecisionTree tree;
  double value = 0.0;
};

// Exact budgeted tree construction over a clause pool with one weight per
// clause: best(S, s') is the larger of the leaf value |w_S| (label 1 iff
// w_S >= 0) and the best split whose child clauses both sit in the pool with
// child budgets summing to s'-1. Ties prefer the smaller tree, then the
// lexicographically smallest split variable. Bodies must be sorted and start
// from the empty clause.
DPResult tree_dp_single(const std::vector<Clause>& bodies,
                        const std::vector<double>& weights, int size_bound,
                        int depth_bound);

// All trees whose root-prefix paths lie in bodies, up to the given bounds;
// errc::resource beyond cap.
std::vector<DecisionTree> enumerate_pool_trees(const std::vector<Clause>& bodies,
                                               int size_bound, int depth_bound,
                                               uint64_t cap);

struct Agreement {
  double value = 0.0;
  double half_width = 0.0;  // 95% Hoeffding band for the sampled fraction
  uint64_t samples = 0;
};

// Fraction of sampled instances where the candidate's output equals the
// source prediction; instances come from fork_rng(seed, "agreement") so equal
// seeds score different candidates on identical samples.
Agreement mc_agreement(const LocalIterationModel& m, const SourceModel& src,
                       uint64_t samples, uint64_t seed);

// Agreement over the whole instance space; errc::resource past 2^24 bits.
double exact_agreement(const LocalIterationModel& a, const LocalIterationModel& b);

struct JointOptions {
  bool exact_joint = false;  // requires n <= 3, l = 1, exact-mode weights
  int size_bound = 7;
  int depth_bound = 2;
  uint32_t shortlist = 200;  // clauses kept per vertex, best probe error first
  uint32_t candidates = 6;   // deduplicated DP trees kept per vertex
  uint64_t mc_samples = 4096;
  uint64_t enum_cap = 20000;
  uint64_t seed = 1;
  // Refit passes after the first scan (multi-round models only): trees
  // DP-fit inside the winner's simulated dynamics join the lists until the
  // scan budget (product size x mc samples) would be exceeded.
  int refine_sweeps = 3;
  uint64_t refine_scan_cap = 400'000'000;
};

struct JointResult {
  std::vector<DecisionTree> trees;
  std::vector<std::vector<DecisionTree>> candidates;  // per vertex
  std::vector<uint32_t> shortlist_sizes;
  uint64_t scored_products = 0;
  // Best product's score: valuation when exact-joint, otherwise agreement on
  // the shared sample set (reproducible via mc_agreement with the same seed).
  double score = 0.0;
};

// Exact-joint mode scores every pool-consistent per-vertex tree product by
// valuation. Shortlist mode prunes each vertex's clauses by probe error,
// runs tree_dp_single under marginal weights at every odd budget, and scores
// the candidate product by agreement with the source; a vertex with no
// clauses falls back to the single leaf 1. For multi-round models, refit
// passes then DP new trees from correlations measured in the winner's (and
// its one-coordinate variants') simulated dynamics and rescore the grown
// product, which lets vertex pairs that must move together escape plateaus.
JointResult joint_select(const Decomposition& dec, const ValuationTable& table,
                         const SourceModel& src, int l, const JointOptions& opt);

struct DistillConfig {
  int l = 1;
  int rounds = 2;          // phase-1 depth R
  int depth = 2;           // per-vertex tree depth bound
  int size_bound = 0;      // 0: complete tree of the depth bound, 2^(depth+1)-1
  uint32_t k = 0;          // 0: accept/reject branching; else top-k
  bool exact_joint = false;
  double epsilon = 0.05;   // tuple-weight accuracy target (scaled by 1/|pool|)
  double delta = 0.05;
  double probe_delta = 0.1;
  ProbeConfig probe;
  uint64_t pool_cap = 200000;
  uint64_t dry_run_cap = 1u << 20;
  uint64_t exact_tuple_cap = 4096;
  uint64_t v_sample_cap = 200000;
  uint32_t shortlist = 200;
  uint32_t candidates = 6;
  uint64_t mc_samples = 4096;
  uint64_t enum_cap = 20000;
  uint32_t latent_cache_bits = 16;
  int refine_sweeps = 3;
  uint64_t refine_scan_cap = 400'000'000;
  uint64_t seed = 1;
};

struct DistillReport {
  std::vector<uint64_t> pool_sizes;  // |S_0| .. |S_R|
  uint64_t pool_records = 0;
  uint64_t probes_issued = 0;
  std::optional<uint64_t> exhaustive_probes;
  std::optional<double> probe_fraction;
  std::vector<uint32_t> paths_per_vertex;       // clauses surviving the pruning
  std::vector<uint32_t> candidates_per_vertex;
  uint64_t v_samples = 0;
  double v_accuracy = 0.0;
  double selection_score = 0.0;
  std::optional<Agreement> source_agreement;
  std::optional<double> truth_agreement;  // exact on small spaces, else sampled
};

// Full pipeline: phase 1, decomposition, weight estimation, joint selection,
// selector assembly. The report is filled stage by stage, so on error the
// caller's report holds everything completed before the failing stage.
LocalIterationModel distill(const SourceModel& src, const DistillConfig& cfg,
                            DistillReport* report = nullptr,
                            const LocalIterationModel* truth = nullptr);

}  // namespace litd
