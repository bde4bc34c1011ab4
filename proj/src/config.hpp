#pragma once

// Experiment configuration: a small INI dialect with [experiment], [probe],
// [mlp], [distill], and [separation] sections. Parsing reports precise line
// numbers, rendering is canonical (parse-render round trips are byte
// stable), and the hash of the rendering keys every cached sweep cell.

#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"
#include "distill.hpp"
#include "mlp.hpp"
#include "probe.hpp"

namespace litd {

enum class Backend { oracle, mlp };

struct ExperimentConfig {
  // [experiment]
  uint32_t n = 4;
  int l = 2;
  std::vector<int> depths = {2};
  std::vector<uint32_t> ks = {0};  // 0 selects the exact phase-1 branch rule
  Backend backend = Backend::oracle;
  uint32_t seeds = 1;              // independent runs per sweep cell
  uint32_t distractors = 4;        // oracle latent decoys
  double noise = 0.0;              // oracle latent noise scale
  int accuracy_samples = 20000;    // sampled agreement budget
  uint64_t seed = 1;               // master seed
  std::string out_dir;             // empty: keep results in memory only

  ProbeConfig probe;
  MLPConfig mlp;          // input_dim and seed are filled per run
  DistillConfig distill;  // l, depth, k, probe, and seed are filled per cell

  // [separation]
  uint32_t sep_lo = 3;
  uint32_t sep_hi = 6;
};

// Parse the dialect; unknown sections or keys, malformed values, and cap
// violations fail with errc::parse naming the line.
ExperimentConfig parse_config(const std::string& text);

// Canonical text form: every key in a fixed order, doubles at full
// precision. parse_config(render_config(cfg)) renders identically.
std::string render_config(const ExperimentConfig& cfg);

// Range checks with key names in the message (errc::invalid_argument).
void validate_config(const ExperimentConfig& cfg);

// FNV-1a over the canonical rendering.
uint64_t config_hash(const ExperimentConfig& cfg);

}  // namespace litd
