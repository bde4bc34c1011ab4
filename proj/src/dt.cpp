#include "dt.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <climits>
#include <map>
#include <sstream>

namespace litd {

bool eval_clause(const Clause& c, uint64_t x, uint32_t d) {
  bool all = true;
  for (const Literal& l : c.lits) {
    if (l.var >= d) fail(errc::invalid_argument, "clause literal x" + std::to_string(l.var) + " outside input width " + std::to_string(d));
    all = all && eval_literal(l, x);
  }
  return all;
}

bool distinct_vars(const Clause& c) {
  for (size_t i = 0; i < c.lits.size(); ++i)
    for (size_t j = i + 1; j < c.lits.size(); ++j)
      if (c.lits[i].var == c.lits[j].var) return false;
  return true;
}

std::string format_clause(const Clause& c) {
  if (c.empty()) return "true";
  std::string out;
  for (size_t i = 0; i < c.lits.size(); ++i) {
    if (i) out += '&';
    if (c.lits[i].neg) out += '!';
    out += 'x';
    out += std::to_string(c.lits[i].var);
  }
  return out;
}

Clause parse_clause(const std::string& text) {
  if (text == "true") return {};
  Clause c;
  size_t i = 0;
  while (i < text.size()) {
    Literal l;
    if (text[i] == '!') {
      l.neg = true;
      ++i;
    }
    if (i >= text.size() || text[i] != 'x') fail(errc::parse, "clause \"" + text + "\": expected x<var> at offset " + std::to_string(i));
    ++i;
    size_t start = i;
    while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
    if (i == start) fail(errc::parse, "clause \"" + text + "\": missing variable index at offset " + std::to_string(i));
    l.var = static_cast<uint32_t>(std::stoul(text.substr(start, i - start)));
    c.lits.push_back(l);
    if (i < text.size()) {
      if (text[i] != '&') fail(errc::parse, "clause \"" + text + "\": expected '&' at offset " + std::to_string(i));
      ++i;
    }
  }
  return c;
}

bool clause_less(const Clause& a, const Clause& b) {
  for (size_t i = 0; i < a.lits.size() && i < b.lits.size(); ++i) {
    if (a.lits[i].var != b.lits[i].var) return a.lits[i].var < b.lits[i].var;
    if (a.lits[i].neg != b.lits[i].neg) return b.lits[i].neg;
  }
  return a.lits.size() < b.lits.size();
}

uint64_t clause_hash(const Clause& c) {
  uint64_t h = 0x9e3779b97f4a7c15ULL;
  for (const Literal& l : c.lits) h = splitmix64(h ^ (uint64_t(l.var) << 1 | uint64_t(l.neg)));
  return h;
}

// --------------------------------------------------------------------------

DecisionTree DecisionTree::leaf(bool label) {
  DecisionTree t;
  t.nodes_[0].label = label;
  return t;
}

DecisionTree DecisionTree::split(Literal lit, const DecisionTree& when_false,
                                 const DecisionTree& when_true) {
  DecisionTree t;
  t.nodes_.clear();
  t.nodes_.push_back(Node{lit, 1, 1 + when_false.size(), false, false});
  auto append = [&t](const DecisionTree& sub, int32_t base) {
    for (Node n : sub.nodes_) {
      if (!n.is_leaf) {
        n.kid0 += base;
        n.kid1 += base;
      }
      t.nodes_.push_back(n);
    }
  };
  append(when_false, 1);
  append(when_true, 1 + when_false.size());
  t.depth_ = 1 + std::max(when_false.depth_, when_true.depth_);
  t.width_ = std::max({lit.var + 1, when_false.width_, when_true.width_});
  return t;
}

bool DecisionTree::evaluate(uint64_t x, uint32_t d) const {
  if (width_ > d) fail(errc::invalid_argument, "tree reads x" + std::to_string(width_ - 1) + " but input width is " + std::to_string(d));
  int32_t i = 0;
  while (!nodes_[i].is_leaf) i = eval_literal(nodes_[i].lit, x) ? nodes_[i].kid1 : nodes_[i].kid0;
  return nodes_[i].label;
}

int DecisionTree::leaf_count() const {
  int k = 0;
  for (const Node& n : nodes_) k += n.is_leaf;
  return k;
}

std::string DecisionTree::serialized() const { return serialize_tree(*this); }

std::vector<Clause> root_prefix_paths(const DecisionTree& t) {
  std::vector<Clause> out;
  out.reserve(t.size());
  Clause path;
  auto walk = [&](auto&& self, int32_t i) -> void {
    const auto& n = t.nodes()[i];
    out.push_back(path);
    if (n.is_leaf) return;
    path.lits.push_back(negate(n.lit));
    self(self, n.kid0);
    path.lits.back() = n.lit;
    self(self, n.kid1);
    path.lits.pop_back();
  };
  walk(walk, 0);
  return out;
}

DecisionTree random_tree(int depth, const std::vector<uint32_t>& var_domain,
                         std::mt19937_64& rng) {
  if (depth < 0) fail(errc::invalid_argument, "random_tree: negative depth");
  if (static_cast<size_t>(depth) > var_domain.size())
    fail(errc::infeasible, "random_tree: depth " + std::to_string(depth) + " exceeds domain of " + std::to_string(var_domain.size()) + " variables");
  std::vector<uint32_t> avail = var_domain;
  auto build = [&](auto&& self, int left) -> DecisionTree {
    if (left == 0) return DecisionTree::leaf(draw_bit(rng));
    size_t pick = static_cast<size_t>(draw_below(rng, avail.size()));
    uint32_t var = avail[pick];
    std::swap(avail[pick], avail.back());
    avail.pop_back();
    DecisionTree f = self(self, left - 1);
    DecisionTree g = self(self, left - 1);
    avail.push_back(var);
    std::swap(avail[pick], avail.back());
    return DecisionTree::split({var, false}, f, g);
  };
  return build(build, depth);
}

// --------------------------------------------------------------------------

uint32_t id_bit_count(uint32_t n) {
  if (n <= 1) return 0;
  return static_cast<uint32_t>(std::bit_width(n - 1));
}

SelectorPaths selector_paths(uint32_t n) {
  if (n == 0) fail(errc::invalid_argument, "selector_paths: n must be positive");
  uint32_t k = id_bit_count(n);
  SelectorPaths out;
  out.full.resize(n);
  Clause path;
  auto walk = [&](auto&& self, uint32_t level, uint32_t code) -> void {
    if (level == k) {
      if (code < n) out.full[code] = path;
      return;
    }
    out.internal.push_back(path);
    path.lits.push_back({level, true});
    self(self, level + 1, code << 1);
    path.lits.back().neg = false;
    self(self, level + 1, (code << 1) | 1u);
    path.lits.pop_back();
  };
  walk(walk, 0, 0);
  return out;
}

std::optional<uint32_t> selector_route(const Clause& c, uint32_t n) {
  uint32_t k = id_bit_count(n);
  if (c.lits.size() < k) fail(errc::invalid_argument, "selector_route: clause shorter than selector depth");
  uint32_t code = 0;
  for (uint32_t j = 0; j < k; ++j) {
    if (c.lits[j].var != j)
      fail(errc::invalid_argument, "selector_route: literal " + std::to_string(j) + " is x" + std::to_string(c.lits[j].var) + ", expected the selector bit x" + std::to_string(j));
    code = (code << 1) | (c.lits[j].neg ? 0u : 1u);
  }
  if (code >= n) return std::nullopt;
  return code;
}

DecisionTree compose_with_selector(const std::vector<DecisionTree>& per_vertex,
                                   uint32_t n) {
  if (per_vertex.size() != n || n == 0)
    fail(errc::invalid_argument, "compose_with_selector: expected " + std::to_string(n) + " per-vertex trees, got " + std::to_string(per_vertex.size()));
  uint32_t k = id_bit_count(n);
  for (uint32_t v = 0; v < n; ++v)
    for (const auto& node : per_vertex[v].nodes())
      if (!node.is_leaf && node.lit.var < k)
        fail(errc::alignment, "per-vertex tree " + std::to_string(v) + " reads selector bit x" + std::to_string(node.lit.var));
  auto build = [&](auto&& self, uint32_t level, uint32_t code) -> DecisionTree {
    if (level == k) return code < n ? per_vertex[code] : DecisionTree::leaf(false);
    return DecisionTree::split({level, false}, self(self, level + 1, code << 1),
                               self(self, level + 1, (code << 1) | 1u));
  };
  return build(build, 0, 0);
}

// --------------------------------------------------------------------------

PartialFunction PartialFunction::total(uint32_t nvars, std::vector<uint8_t> value) {
  PartialFunction f;
  f.nvars = nvars;
  f.care.assign(size_t{1} << nvars, 1);
  f.value = std::move(value);
  return f;
}

namespace {

struct SubFn {
  std::vector<uint32_t> vars;  // original variable ids of the free positions
  std::vector<uint8_t> value;  // indexed by assignment bits over vars
  std::vector<uint8_t> care;
};

std::string subfn_key(const SubFn& s) {
  std::string k;
  k.reserve(s.vars.size() * 4 + s.value.size() / 4 + 8);
  for (uint32_t v : s.vars) {
    k += char(v & 0xff);
    k += char((v >> 8) & 0xff);
  }
  k += '|';
  uint8_t acc = 0;
  int fill = 0;
  for (size_t i = 0; i < s.value.size(); ++i) {
    acc = uint8_t(acc << 2 | (s.care[i] ? (s.value[i] ? 3 : 2) : 0));
    if (++fill == 4) {
      k += char(acc);
      acc = 0;
      fill = 0;
    }
  }
  if (fill) k += char(acc);
  return k;
}

SubFn restrict_subfn(const SubFn& s, size_t j, int bit) {
  SubFn r;
  r.vars = s.vars;
  r.vars.erase(r.vars.begin() + static_cast<long>(j));
  size_t m = s.value.size() >> 1;
  r.value.resize(m);
  r.care.resize(m);
  size_t low_mask = (size_t{1} << j) - 1;
  for (size_t a = 0; a < m; ++a) {
    size_t idx = (a & low_mask) | (size_t(bit) << j) | ((a & ~low_mask) << 1);
    r.value[a] = s.value[idx];
    r.care[a] = s.care[idx];
  }
  return r;
}

MinTreeResult solve_min_tree(const SubFn& s, std::map<std::string, MinTreeResult>& memo) {
  bool seen = false, seen0 = false, seen1 = false;
  for (size_t i = 0; i < s.value.size(); ++i)
    if (s.care[i]) {
      seen = true;
      (s.value[i] ? seen1 : seen0) = true;
    }
  if (!seen) return {1, DecisionTree::leaf(false)};
  if (!(seen0 && seen1)) return {1, DecisionTree::leaf(seen1)};

  std::string key = subfn_key(s);
  if (auto it = memo.find(key); it != memo.end()) return it->second;

  MinTreeResult best;
  best.leaves = INT_MAX;
  for (size_t j = 0; j < s.vars.size(); ++j) {
    MinTreeResult r0 = solve_min_tree(restrict_subfn(s, j, 0), memo);
    MinTreeResult r1 = solve_min_tree(restrict_subfn(s, j, 1), memo);
    if (r0.leaves + r1.leaves < best.leaves) {
      best.leaves = r0.leaves + r1.leaves;
      best.witness = DecisionTree::split({s.vars[j], false}, r0.witness, r1.witness);
    }
  }
  memo.emplace(std::move(key), best);
  return best;
}

}  // namespace

MinTreeResult min_tree_leaves(const PartialFunction& f) {
  if (f.nvars > 16) fail(errc::resource, "min_tree_leaves: " + std::to_string(f.nvars) + " variables exceeds the 16-variable cap");
  size_t want = size_t{1} << f.nvars;
  if (f.value.size() != want || f.care.size() != want)
    fail(errc::invalid_argument, "min_tree_leaves: tables must have 2^nvars entries");
  SubFn s;
  s.vars.resize(f.nvars);
  for (uint32_t i = 0; i < f.nvars; ++i) s.vars[i] = i;
  s.value = f.value;
  s.care = f.care;
  std::map<std::string, MinTreeResult> memo;
  return solve_min_tree(s, memo);
}

// --------------------------------------------------------------------------

namespace {

void serialize_node(const DecisionTree& t, int32_t i, std::string& out) {
  const auto& n = t.nodes()[i];
  if (n.is_leaf) {
    out += n.label ? "(leaf 1)" : "(leaf 0)";
    return;
  }
  // Polarity folds into branch order: a negated node swaps its children.
  int32_t k0 = n.lit.neg ? n.kid1 : n.kid0;
  int32_t k1 = n.lit.neg ? n.kid0 : n.kid1;
  out += "(x";
  out += std::to_string(n.lit.var);
  out += ' ';
  serialize_node(t, k0, out);
  out += ' ';
  serialize_node(t, k1, out);
  out += ')';
}

struct TreeParser {
  const std::string& text;
  size_t pos = 0;

  [[noreturn]] void die(const std::string& what) const {
    fail(errc::parse, "tree parse error at offset " + std::to_string(pos) + ": " + what);
  }
  void skip_ws() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  }
  void expect(char c) {
    skip_ws();
    if (pos >= text.size() || text[pos] != c) die(std::string("expected '") + c + "'");
    ++pos;
  }
  uint32_t number() {
    skip_ws();
    size_t start = pos;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
    if (pos == start) die("expected a number");
    return static_cast<uint32_t>(std::stoul(text.substr(start, pos - start)));
  }
  DecisionTree node() {
    expect('(');
    skip_ws();
    if (text.compare(pos, 4, "leaf") == 0) {
      pos += 4;
      uint32_t b = number();
      if (b > 1) die("leaf label must be 0 or 1");
      expect(')');
      return DecisionTree::leaf(b != 0);
    }
    if (pos >= text.size() || text[pos] != 'x') die("expected 'leaf' or 'x<var>'");
    ++pos;
    uint32_t var = number();
    DecisionTree f = node();
    DecisionTree g = node();
    expect(')');
    return DecisionTree::split({var, false}, f, g);
  }
};

}  // namespace

std::string serialize_tree(const DecisionTree& t) {
  std::string out;
  serialize_node(t, 0, out);
  return out;
}

DecisionTree parse_tree(const std::string& text) {
  TreeParser p{text};
  DecisionTree t = p.node();
  p.skip_ws();
  if (p.pos != text.size()) p.die("trailing input after tree");
  return t;
}

std::string write_tree_bundle(const TreeBundle& b) {
  std::string out = "n=" + std::to_string(b.n);
  for (const auto& [k, v] : b.extras) out += " " + k + "=" + v;
  out += '\n';
  for (const auto& t : b.trees) out += serialize_tree(t) + "\n";
  return out;
}

TreeBundle read_tree_bundle(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) fail(errc::parse, "bundle: empty input");
  TreeBundle b;
  std::istringstream head(line);
  std::string tok;
  bool have_n = false;
  while (head >> tok) {
    auto eq = tok.find('=');
    if (eq == std::string::npos) fail(errc::parse, "bundle header: token \"" + tok + "\" is not key=value");
    std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
    if (key == "n") {
      b.n = static_cast<uint32_t>(std::stoul(val));
      have_n = true;
    } else {
      b.extras.emplace_back(key, val);
    }
  }
  if (!have_n) fail(errc::parse, "bundle header: missing n=<n>");
  for (uint32_t i = 0; i < b.n; ++i) {
    if (!std::getline(in, line)) fail(errc::parse, "bundle: expected " + std::to_string(b.n) + " trees, found " + std::to_string(i));
    try {
      b.trees.push_back(parse_tree(line));
    } catch (const error& e) {
      fail(errc::parse, "bundle line " + std::to_string(i + 2) + ": " + e.what());
    }
  }
  return b;
}

}  // namespace litd
