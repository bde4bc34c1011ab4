#pragma once

// Size separation between message passing and monolithic decision trees on
// two-hop reachability. The restricted family keeps only the edges that can
// matter: the direct edge between the endpoints and, per middle vertex, its
// two edges toward them. A single pass over the middle vertices decides
// reachability, while the exact minimal decision tree over the same bits
// grows like (3/2)^(n-2).

#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"
#include "dt.hpp"
#include "iterate.hpp"

namespace litd {

// Packed restricted adjacency. Bit 0 is the direct edge (0, n-1); for each
// middle vertex v in 1..n-2, bit 2(v-1)+1 is edge (0, v) and bit 2(v-1)+2 is
// edge (v, n-1).
struct RestrictedInstance {
  uint32_t n = 0;
  uint32_t bits = 0;

  // Full adjacency with every other slot empty.
  GraphInstance graph() const;
  // Two-hop reachability in one sweep over the middle vertices.
  bool reachable() const;
};

// 2(n-2)+1; errc::invalid_argument below n=3.
uint32_t restricted_bit_count(uint32_t n);

// All 2^(2(n-2)+1) instances, bits counting up. errc::resource past 20 bits.
std::vector<RestrictedInstance> enumerate_restricted_family(uint32_t n);

struct NegativeCount {
  uint64_t negatives = 0;
  uint64_t total = 0;
};

// Instances without a length-<=2 path between the endpoints, judged by the
// general-graph checker. Always 3^(n-2) of 2^(2(n-2)+1).
NegativeCount count_negatives(uint32_t n);

struct RestrictedMinTree {
  int leaves = 0;
  DecisionTree witness;  // reads the restricted bit positions as variables
};

// Exact minimal leaf count of a decision tree computing reachability over
// the restricted bits. errc::resource past 16 bits.
RestrictedMinTree min_leaves_restricted(uint32_t n);

// ceil((3/2)^(n-2)), the leaf lower bound implied by the negative count.
uint64_t separation_lower_bound(uint32_t n);

struct SeparationRow {
  uint32_t n = 0;
  uint64_t total = 0;
  uint64_t negatives = 0;
  int min_leaves = 0;
  uint64_t lower_bound = 0;
  double dp_agreement = 0.0;  // sweep evaluator vs. general checker
  double growth = 0.0;        // min_leaves ratio to the previous row, 0 first
};

// One row per n in [n_lo, n_hi], inclusive.
std::vector<SeparationRow> separation_report(uint32_t n_lo, uint32_t n_hi);

// Header n,total,negatives,min_leaves,lower_bound,dp_agreement then one row
// per entry; growth stays out of the file.
std::string separation_csv(const std::vector<SeparationRow>& rows);

}  // namespace litd
