#pragma once

// Binary decision trees over bit-vector inputs, their root-prefix clauses,
// selector composition, serialization, and exact minimal-tree search.
//
// Inputs are packed into uint64_t words (bit i = variable x_i), so every
// function that evaluates against an input also takes the input width d.
// Trees cache their size, depth and maximum variable; evaluation against a
// narrower input raises errc::invalid_argument.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"

namespace litd {

struct Literal {
  uint32_t var = 0;
  bool neg = false;  // true: literal is !x_var

  friend bool operator==(const Literal&, const Literal&) = default;
};

inline Literal negate(Literal l) { return {l.var, !l.neg}; }

// Evaluates x_var (or its negation) against a packed input.
inline bool eval_literal(Literal l, uint64_t x) { return (((x >> l.var) & 1u) != 0) != l.neg; }

// An ordered conjunction of literals; empty means "always true".
struct Clause {
  std::vector<Literal> lits;

  size_t size() const { return lits.size(); }
  bool empty() const { return lits.empty(); }
  friend bool operator==(const Clause&, const Clause&) = default;
};

// 1 iff every literal holds; literals past width d raise invalid_argument.
bool eval_clause(const Clause& c, uint64_t x, uint32_t d);

// True when no variable index repeats.
bool distinct_vars(const Clause& c);

// "true" for the empty clause, otherwise literals joined by '&' with '!' for
// negation, e.g. "x0&!x7". parse_clause is the inverse.
std::string format_clause(const Clause& c);
Clause parse_clause(const std::string& text);

// Strict total order and hashing so clauses can key maps and be deduplicated.
bool clause_less(const Clause& a, const Clause& b);
uint64_t clause_hash(const Clause& c);

class DecisionTree {
 public:
  struct Node {
    Literal lit;         // internal nodes only
    int32_t kid0 = -1;   // branch when the literal evaluates false
    int32_t kid1 = -1;   // branch when it evaluates true
    bool is_leaf = false;
    bool label = false;
  };

  DecisionTree() = default;  // single 0-leaf

  static DecisionTree leaf(bool label);
  static DecisionTree split(Literal lit, const DecisionTree& when_false,
                            const DecisionTree& when_true);

  bool evaluate(uint64_t x, uint32_t d) const;

  int size() const { return static_cast<int>(nodes_.size()); }
  int depth() const { return depth_; }
  int leaf_count() const;
  // One past the largest variable referenced; 0 for pure leaves.
  uint32_t width() const { return width_; }

  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& root() const { return nodes_.front(); }

  friend bool operator==(const DecisionTree& a, const DecisionTree& b) {
    return a.serialized() == b.serialized();
  }

  std::string serialized() const;

 private:
  std::vector<Node> nodes_{Node{{}, -1, -1, true, false}};  // root at index 0
  int depth_ = 0;
  uint32_t width_ = 0;
};

// One clause per node, in preorder; the root contributes the empty clause.
// The clause into kid1 appends the node's literal, the clause into kid0 its
// negation, so exactly the clauses of leaf ancestors-or-self are satisfied by
// an input and the deepest satisfied clause belongs to the reached leaf.
std::vector<Clause> root_prefix_paths(const DecisionTree& t);

// Complete tree of the given depth; each internal node's variable is drawn
// uniformly from var_domain minus the variables already on its path, leaf
// labels are fair bits. Raises errc::infeasible when |var_domain| < depth.
DecisionTree random_tree(int depth, const std::vector<uint32_t>& var_domain,
                         std::mt19937_64& rng);

// --------------------------------------------------------------------------
// Vertex selector. The first ceil(log2 n) input bits hold the vertex id,
// most significant bit first; the selector is the complete tree over those
// bits, its live leaves replaced by per-vertex trees and dead codes (>= n)
// by constant-0 leaves. For n = 1 the selector vanishes.

uint32_t id_bit_count(uint32_t n);

struct SelectorPaths {
  std::vector<Clause> internal;  // proper prefixes, the empty clause first
  std::vector<Clause> full;      // full[v] routes to vertex v
};
SelectorPaths selector_paths(uint32_t n);

// Vertex selected by the first id_bit_count(n) literals of c, which must be
// exactly the selector literals in offset order; nullopt when they route to a
// dead code. Raises errc::invalid_argument on malformed prefixes.
std::optional<uint32_t> selector_route(const Clause& c, uint32_t n);

// Per-vertex trees may not read the id bits; violations raise errc::alignment.
DecisionTree compose_with_selector(const std::vector<DecisionTree>& per_vertex,
                                   uint32_t n);

// --------------------------------------------------------------------------
// Exact minimal decision trees for small partial functions.

struct PartialFunction {
  uint32_t nvars = 0;
  std::vector<uint8_t> value;  // 2^nvars entries, 0/1
  std::vector<uint8_t> care;   // 0 entries may be matched by either label

  static PartialFunction total(uint32_t nvars, std::vector<uint8_t> value);
};

struct MinTreeResult {
  int leaves = 0;
  DecisionTree witness;
};

// Smallest leaf count of any decision tree computing f on its care set, with
// a witness attaining it. Memoized over reached subfunctions; nvars is capped
// at 16 (errc::resource beyond that).
MinTreeResult min_tree_leaves(const PartialFunction& f);

// --------------------------------------------------------------------------
// Text format: "(leaf 0)", "(leaf 1)", "(x<var> <when-false> <when-true>)".
// Negated node literals are normalized away by swapping children, so the
// grammar never carries polarity on nodes. Whitespace between tokens is free.

std::string serialize_tree(const DecisionTree& t);
DecisionTree parse_tree(const std::string& text);

// Bundle files: a header line "n=<n>" (plus optional "key=value" extras),
// then one serialized tree per line.
struct TreeBundle {
  uint32_t n = 0;
  std::vector<std::pair<std::string, std::string>> extras;
  std::vector<DecisionTree> trees;
};

std::string write_tree_bundle(const TreeBundle& b);
TreeBundle read_tree_bundle(const std::string& text);

}  // namespace litd
