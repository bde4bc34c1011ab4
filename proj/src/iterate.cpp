#include "iterate.hpp"

#include <algorithm>
#include <sstream>

namespace litd {

InputEncoding InputEncoding::make(uint32_t n) {
  if (n == 0) fail(errc::invalid_argument, "encoding: n must be positive");
  InputEncoding e;
  e.n = n;
  e.id_bits = id_bit_count(n);
  e.edge_bits = n * (n - 1) / 2;
  e.dp_bits = n;
  e.d = e.id_bits + e.edge_bits + e.dp_bits;
  if (e.d > 64) fail(errc::resource, "encoding: width " + std::to_string(e.d) + " exceeds the 64-bit packing limit");
  return e;
}

uint32_t InputEncoding::edge_index(uint32_t u, uint32_t v) const {
  if (u > v) std::swap(u, v);
  if (u == v || v >= n) fail(errc::invalid_argument, "edge_index: bad pair (" + std::to_string(u) + "," + std::to_string(v) + ") at n=" + std::to_string(n));
  return u * n - u * (u + 1) / 2 + (v - u - 1);
}

uint32_t InputEncoding::dp_var(uint32_t v) const {
  if (v >= n) fail(errc::invalid_argument, "dp_var: vertex " + std::to_string(v) + " out of range");
  return id_bits + edge_bits + v;
}

std::pair<uint32_t, uint32_t> InputEncoding::edge_endpoints(uint32_t var) const {
  if (!is_edge(var)) fail(errc::invalid_argument, "edge_endpoints: x" + std::to_string(var) + " is not an edge bit");
  uint32_t idx = var - id_bits;
  for (uint32_t u = 0; u + 1 < n; ++u) {
    uint32_t row = n - u - 1;
    if (idx < row) return {u, u + 1 + idx};
    idx -= row;
  }
  fail(errc::invalid_argument, "edge_endpoints: unreachable");
}

namespace {

std::string bits_to_string(uint64_t bits, uint32_t count) {
  std::string s(count, '0');
  for (uint32_t i = 0; i < count; ++i)
    if ((bits >> i) & 1u) s[i] = '1';
  return s;
}

uint64_t string_to_bits(const std::string& s, uint32_t count, const char* what) {
  if (s.size() != count)
    fail(errc::parse, std::string("instance: ") + what + " needs " + std::to_string(count) + " bits, got " + std::to_string(s.size()));
  uint64_t bits = 0;
  for (uint32_t i = 0; i < count; ++i) {
    if (s[i] == '1')
      bits |= uint64_t{1} << i;
    else if (s[i] != '0')
      fail(errc::parse, std::string("instance: ") + what + " contains '" + s[i] + "'");
  }
  return bits;
}

}  // namespace

std::string format_instance(const GraphInstance& g) {
  InputEncoding enc = InputEncoding::make(g.n);
  std::string out = "n=" + std::to_string(g.n) + " init=" + bits_to_string(g.init, g.n);
  if (enc.edge_bits) out += " adj=" + bits_to_string(g.adj, enc.edge_bits);
  return out;
}

GraphInstance parse_instance(const std::string& text) {
  std::istringstream in(text);
  std::string tok;
  GraphInstance g;
  bool have_n = false, have_init = false, have_adj = false;
  std::string init_s, adj_s;
  while (in >> tok) {
    auto eq = tok.find('=');
    if (eq == std::string::npos) fail(errc::parse, "instance: token \"" + tok + "\" is not key=value");
    std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
    if (key == "n") {
      g.n = static_cast<uint32_t>(std::stoul(val));
      have_n = true;
    } else if (key == "init") {
      init_s = val;
      have_init = true;
    } else if (key == "adj") {
      adj_s = val;
      have_adj = true;
    } else {
      fail(errc::parse, "instance: unknown key \"" + key + "\"");
    }
  }
  if (!have_n || !have_init) fail(errc::parse, "instance: need n= and init=");
  InputEncoding enc = InputEncoding::make(g.n);
  g.init = string_to_bits(init_s, g.n, "init");
  if (enc.edge_bits && !have_adj) fail(errc::parse, "instance: need adj= when n > 1");
  if (have_adj) g.adj = string_to_bits(adj_s, enc.edge_bits, "adj");
  return g;
}

GraphInstance random_instance(uint32_t n, std::mt19937_64& rng) {
  InputEncoding enc = InputEncoding::make(n);
  GraphInstance g;
  g.n = n;
  for (uint32_t i = 0; i < n; ++i) g.init |= uint64_t{draw_bit(rng)} << i;
  for (uint32_t i = 0; i < enc.edge_bits; ++i) g.adj |= uint64_t{draw_bit(rng)} << i;
  return g;
}

uint32_t instance_bit_count(const InputEncoding& enc) { return enc.n + enc.edge_bits; }

GraphInstance flip_instance_bit(const GraphInstance& g, uint32_t pos) {
  InputEncoding enc = InputEncoding::make(g.n);
  GraphInstance out = g;
  if (pos < g.n)
    out.init ^= uint64_t{1} << pos;
  else if (pos < instance_bit_count(enc))
    out.adj ^= uint64_t{1} << (pos - g.n);
  else
    fail(errc::invalid_argument, "flip_instance_bit: position out of range");
  return out;
}

uint64_t encode_input(uint32_t v, const GraphInstance& g, uint64_t h_prev,
                      const InputEncoding& enc) {
  if (g.n != enc.n) fail(errc::invalid_argument, "encode_input: instance has n=" + std::to_string(g.n) + ", encoding expects " + std::to_string(enc.n));
  if (v >= enc.n) fail(errc::invalid_argument, "encode_input: vertex out of range");
  if (enc.n < 64 && (h_prev >> enc.n) != 0) fail(errc::invalid_argument, "encode_input: state word wider than n");
  uint64_t x = 0;
  for (uint32_t j = 0; j < enc.id_bits; ++j)
    x |= uint64_t{(v >> (enc.id_bits - 1 - j)) & 1u} << j;
  x |= g.adj << enc.id_bits;
  x |= h_prev << (enc.id_bits + enc.edge_bits);
  return x;
}

RunResult run_local_iteration(const LocalIterationModel& m, const GraphInstance& g) {
  if (m.per_vertex.size() != m.n) fail(errc::invalid_argument, "run: model holds " + std::to_string(m.per_vertex.size()) + " trees for n=" + std::to_string(m.n));
  if (m.l < 0) fail(errc::invalid_argument, "run: negative iteration count");
  InputEncoding enc = m.encoding();
  RunResult r;
  uint64_t h = g.init;
  r.trace.rows.push_back(h);
  for (int t = 0; t < m.l; ++t) {
    uint64_t next = 0;
    for (uint32_t v = 0; v < m.n; ++v)
      next |= uint64_t{m.per_vertex[v].evaluate(encode_input(v, g, h, enc), enc.d)} << v;
    h = next;
    r.trace.rows.push_back(h);
  }
  r.output = (h >> (m.n - 1)) & 1u;
  return r;
}

bool feature_value_naive(const Clause& s, const GraphInstance& g, int l,
                         const InputEncoding& enc) {
  if (l < 0) fail(errc::invalid_argument, "feature_value: negative iteration count");
  uint64_t h = g.init;
  for (int t = 0; t < l; ++t) {
    uint64_t next = 0;
    for (uint32_t v = 0; v < enc.n; ++v)
      next |= uint64_t{eval_clause(s, encode_input(v, g, h, enc), enc.d)} << v;
    h = next;
  }
  return (h >> (enc.n - 1)) & 1u;
}

bool feature_value(const Clause& s, const GraphInstance& g, int l,
                   const InputEncoding& enc) {
  if (l < 0) fail(errc::invalid_argument, "feature_value: negative iteration count");
  if (l == 0) return (g.init >> (enc.n - 1)) & 1u;

  // Split the clause once; the id and edge parts are constants of (vertex,
  // instance), so each layer only consults the tracked state bits.
  bool edge_part = true;
  std::vector<std::pair<uint32_t, bool>> state_lits;  // (vertex, negated)
  std::vector<Literal> id_lits;
  for (const Literal& lit : s.lits) {
    if (lit.var >= enc.d) fail(errc::invalid_argument, "feature_value: literal x" + std::to_string(lit.var) + " outside width " + std::to_string(enc.d));
    if (enc.is_id(lit.var))
      id_lits.push_back(lit);
    else if (enc.is_edge(lit.var))
      edge_part = edge_part && (((g.adj >> (lit.var - enc.id_bits)) & 1u) != uint64_t{lit.neg});
    else
      state_lits.emplace_back(enc.dp_vertex(lit.var), lit.neg);
  }

  std::vector<uint32_t> tracked;
  for (auto& [u, neg] : state_lits) tracked.push_back(u);
  tracked.push_back(enc.n - 1);
  std::sort(tracked.begin(), tracked.end());
  tracked.erase(std::unique(tracked.begin(), tracked.end()), tracked.end());

  auto id_part = [&](uint32_t v) {
    for (const Literal& lit : id_lits)
      if ((((v >> (enc.id_bits - 1 - lit.var)) & 1u) != 0) == lit.neg) return false;
    return true;
  };
  std::vector<uint8_t> id_ok(tracked.size());
  for (size_t i = 0; i < tracked.size(); ++i) id_ok[i] = id_part(tracked[i]);

  auto layer_value = [&](size_t tracked_idx, uint64_t h) {
    if (!id_ok[tracked_idx] || !edge_part) return false;
    for (auto& [u, neg] : state_lits)
      if ((((h >> u) & 1u) != 0) == neg) return false;
    return true;
  };

  uint64_t h = g.init;
  for (int t = 0; t < l; ++t) {
    uint64_t next = 0;
    for (size_t i = 0; i < tracked.size(); ++i)
      next |= uint64_t{layer_value(i, h)} << tracked[i];
    h = next;
  }
  return (h >> (enc.n - 1)) & 1u;
}

std::vector<uint32_t> dependency_set(const Clause& s, int l, const InputEncoding& enc,
                                     uint32_t junta_bound) {
  if (l < 1) fail(errc::invalid_argument, "dependency_set: needs at least one iteration");
  if (s.size() > junta_bound)
    fail(errc::resource, "dependency_set: clause of " + std::to_string(s.size()) + " literals exceeds the bound " + std::to_string(junta_bound));
  std::vector<uint32_t> out;
  for (const Literal& lit : s.lits) {
    if (lit.var >= enc.d) fail(errc::invalid_argument, "dependency_set: literal outside encoding");
    if (enc.is_dp(lit.var))
      out.push_back(enc.dp_vertex(lit.var));
    else if (enc.is_edge(lit.var))
      out.push_back(enc.n + (lit.var - enc.id_bits));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// ---------------------------------------------------------------------------

bool two_reachability_truth(const GraphInstance& g) {
  if (g.n < 2) fail(errc::invalid_argument, "two_reachability: needs n >= 2");
  InputEncoding enc = InputEncoding::make(g.n);
  auto adjacent = [&](uint32_t u, uint32_t v) {
    return ((g.adj >> enc.edge_index(u, v)) & 1u) != 0;
  };
  if (adjacent(0, g.n - 1)) return true;
  for (uint32_t v = 1; v + 1 < g.n; ++v)
    if (adjacent(0, v) && adjacent(v, g.n - 1)) return true;
  return false;
}

LocalIterationModel build_two_reachability_model(uint32_t n) {
  if (n < 2) fail(errc::invalid_argument, "two_reachability model: needs n >= 2");
  InputEncoding enc = InputEncoding::make(n);
  LocalIterationModel m;
  m.n = n;
  m.l = 2;
  m.per_vertex.resize(n);
  m.per_vertex[0] = DecisionTree::leaf(false);
  for (uint32_t v = 1; v + 1 < n; ++v)
    m.per_vertex[v] = DecisionTree::split(
        {enc.edge_var(0, v), false}, DecisionTree::leaf(false),
        DecisionTree::split({enc.edge_var(v, n - 1), false}, DecisionTree::leaf(false),
                            DecisionTree::leaf(true)));
  DecisionTree chain = DecisionTree::leaf(false);
  for (uint32_t v = n - 2; v >= 1; --v)
    chain = DecisionTree::split({enc.dp_var(v), false}, chain, DecisionTree::leaf(true));
  m.per_vertex[n - 1] =
      DecisionTree::split({enc.edge_var(0, n - 1), false}, chain, DecisionTree::leaf(true));
  return m;
}

// ---------------------------------------------------------------------------

std::string save_model(const LocalIterationModel& m) {
  TreeBundle b;
  b.n = m.n;
  b.extras.emplace_back("l", std::to_string(m.l));
  b.trees = m.per_vertex;
  return write_tree_bundle(b);
}

LocalIterationModel load_model(const std::string& text) {
  TreeBundle b = read_tree_bundle(text);
  LocalIterationModel m;
  m.n = b.n;
  m.l = -1;
  for (auto& [k, v] : b.extras)
    if (k == "l") m.l = std::stoi(v);
  if (m.l < 0) fail(errc::parse, "model bundle: missing l=<layers> header field");
  m.per_vertex = std::move(b.trees);
  if (m.per_vertex.size() != m.n) fail(errc::parse, "model bundle: tree count does not match n");
  return m;
}

}  // namespace litd
