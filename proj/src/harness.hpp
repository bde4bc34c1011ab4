#pragma once

// Experiment drivers over a parsed config: the linear-readability table, the
// end-to-end distillation sweep, and the separation report. Every CSV starts
// with a provenance comment block (version, config hash, master seed) and is
// byte-identical across reruns of the same config and seed. When the config
// names an output directory, finished sweep cells are written under
// <out>/cells and skipped on rerun as long as the config hash matches.

#include <memory>
#include <string>
#include <vector>

#include "config.hpp"
#include "distill.hpp"
#include "separation.hpp"
#include "source.hpp"

namespace litd {

// Shortest-round-trip decimal form; "inf" for infinities.
std::string format_number(double v);

// LITD_OUT_DIR overrides the config's out_dir; empty means no persistence.
std::string effective_out_dir(const ExperimentConfig& cfg);

// "# <version>\n# config <hex>\n# seed <seed>\n".
std::string provenance_header(const ExperimentConfig& cfg);

// Master stream for one sweep cell; independent of k so top-k sweeps stay
// paired on the same truth and source.
uint64_t cell_seed(const ExperimentConfig& cfg, int depth, uint32_t cell);

// Truth of the requested depth plus the configured backend trained on it.
struct PreparedSource {
  LocalIterationModel truth;
  std::unique_ptr<SourceModel> source;
  double source_acc = 0.0;
};
PreparedSource prepare_source(const ExperimentConfig& cfg, int depth, uint32_t cell);

// One row per (depth, norm): linear probes of every root-prefix conjunction
// of the true trees against the source latent.
struct LrhRow {
  int depth = 0;
  double norm = 0.0;  // inf marks the unconstrained fit
  uint32_t n_conj = 0;
  double source_acc = 0.0;
  double avg_train_err = 0.0;
  double avg_test_err = 0.0;
};
struct LrhTable {
  std::vector<LrhRow> rows;
  std::string csv;
};
LrhTable run_lrh_table(const ExperimentConfig& cfg);

// One row per (depth, k, cell). Metrics that a failed or skipped stage never
// produced are -1; status holds "ok" or the failure message.
struct E2ERow {
  int depth = 0;
  uint32_t k = 0;
  uint32_t cell = 0;
  double source_acc = -1.0;
  double distill_acc = -1.0;  // distilled model vs the source
  double truth_acc = -1.0;    // distilled model vs the generating truth
  uint64_t probes = 0;
  double probe_frac = -1.0;
  double paths_per_vertex = -1.0;
  double cand_trees_per_vertex = -1.0;
  std::string status = "ok";
};
struct E2ETable {
  std::vector<E2ERow> rows;
  std::string csv;
};
E2ETable run_e2e_table(const ExperimentConfig& cfg);

struct SeparationTable {
  std::vector<SeparationRow> rows;
  std::string csv;
};
SeparationTable run_separation(const ExperimentConfig& cfg);

// Formatting pass: comment lines become plain text, the first CSV row the
// markdown table header, the rest its body.
std::string csv_to_markdown(const std::string& csv);

}  // namespace litd
