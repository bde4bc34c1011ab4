#pragma once

// Message-passing over graph instances: an n-vertex model holds one decision
// tree per vertex plus an iteration count l. Each synchronous layer feeds
// every vertex the packed word
//
//   [ id bits | edge bits | state bits ]
//
// where the id bits spell the vertex index (most significant first), the edge
// bits are the upper-triangle adjacency in lexicographic order, and the state
// bits are the previous layer's per-vertex outputs. The run returns the last
// vertex's bit after layer l.

#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"
#include "dt.hpp"

namespace litd {

struct InputEncoding {
  uint32_t n = 0;
  uint32_t id_bits = 0;
  uint32_t edge_bits = 0;
  uint32_t dp_bits = 0;
  uint32_t d = 0;  // total width

  static InputEncoding make(uint32_t n);

  // Lexicographic upper-triangle slot for u < v.
  uint32_t edge_index(uint32_t u, uint32_t v) const;
  uint32_t edge_var(uint32_t u, uint32_t v) const { return id_bits + edge_index(u, v); }
  uint32_t dp_var(uint32_t v) const;

  bool is_id(uint32_t var) const { return var < id_bits; }
  bool is_edge(uint32_t var) const { return var >= id_bits && var < id_bits + edge_bits; }
  bool is_dp(uint32_t var) const { return var >= id_bits + edge_bits && var < d; }
  uint32_t dp_vertex(uint32_t var) const { return var - id_bits - edge_bits; }
  std::pair<uint32_t, uint32_t> edge_endpoints(uint32_t var) const;
};

// init holds one bit per vertex, adj one bit per edge slot.
struct GraphInstance {
  uint32_t n = 0;
  uint64_t init = 0;
  uint64_t adj = 0;

  friend bool operator==(const GraphInstance&, const GraphInstance&) = default;
};

// Text form "n=<n> init=<bits> adj=<bits>"; bit strings run vertex 0 / edge
// slot 0 first, and adj may be omitted for edgeless instances at n <= 1.
std::string format_instance(const GraphInstance& g);
GraphInstance parse_instance(const std::string& text);

GraphInstance random_instance(uint32_t n, std::mt19937_64& rng);

// Instance bits are addressed 0..n-1 for init, then n..n+edge_bits-1 for the
// adjacency slots; used by dependency sets and flip tests.
uint32_t instance_bit_count(const InputEncoding& enc);
GraphInstance flip_instance_bit(const GraphInstance& g, uint32_t pos);

uint64_t encode_input(uint32_t v, const GraphInstance& g, uint64_t h_prev,
                      const InputEncoding& enc);

struct LocalIterationModel {
  uint32_t n = 0;
  int l = 0;
  std::vector<DecisionTree> per_vertex;

  InputEncoding encoding() const { return InputEncoding::make(n); }
  // Selector over the id bits with the per-vertex trees at its live leaves.
  DecisionTree composed() const { return compose_with_selector(per_vertex, n); }
};

// Per-layer vertex states; rows[0] is the instance's init row.
struct Trace {
  std::vector<uint64_t> rows;
};

struct RunResult {
  bool output = false;
  Trace trace;
};

RunResult run_local_iteration(const LocalIterationModel& m, const GraphInstance& g);

// Output of the l-layer run that applies the clause conjunction as every
// vertex's update rule. The fast path only tracks the states named by the
// clause; the naive path simulates all n vertices. They agree everywhere.
bool feature_value(const Clause& s, const GraphInstance& g, int l, const InputEncoding& enc);
bool feature_value_naive(const Clause& s, const GraphInstance& g, int l, const InputEncoding& enc);

// Instance bits the feature can read: the init bits named by the clause's
// state literals and the edge bits named by its edge literals. Requires
// l >= 1; the clause length is capped by junta_bound (errc::resource).
std::vector<uint32_t> dependency_set(const Clause& s, int l, const InputEncoding& enc,
                                     uint32_t junta_bound = 8);

// ---------------------------------------------------------------------------

// 1 iff vertices 0 and n-1 are adjacent or share a common neighbor.
bool two_reachability_truth(const GraphInstance& g);

// Two-layer model whose run on indicator-of-vertex-0 init equals the truth on
// every adjacency setting. Middle vertex v tests its two slots toward the
// endpoints; the last vertex folds its direct edge and the middle states into
// an or-chain, so every per-vertex tree has at most 2n-1 nodes.
LocalIterationModel build_two_reachability_model(uint32_t n);

// ---------------------------------------------------------------------------

// Model files are tree bundles with an "l=<l>" header field.
std::string save_model(const LocalIterationModel& m);
LocalIterationModel load_model(const std::string& text);

}  // namespace litd
