#include "distill.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>

namespace litd {

namespace {

bool clause_has_var(const Clause& c, uint32_t var) {
  for (const Literal& lit : c.lits)
    if (lit.var == var) return true;
  return false;
}

// Canonical clauses keep literals sorted by variable, so the selector's id
// literals always sit in front and equal sets compare equal.
Clause insert_literal(const Clause& c, Literal lit) {
  Clause out;
  out.lits.reserve(c.lits.size() + 1);
  bool placed = false;
  for (const Literal& have : c.lits) {
    if (!placed && lit.var < have.var) {
      out.lits.push_back(lit);
      placed = true;
    }
    out.lits.push_back(have);
  }
  if (!placed) out.lits.push_back(lit);
  return out;
}

void check_canonical(const Clause& c, uint32_t d) {
  for (size_t i = 0; i < c.lits.size(); ++i) {
    if (c.lits[i].var >= d)
      fail(errc::invalid_argument,
           "pool corruption: variable out of range in " + format_clause(c));
    if (i > 0 && c.lits[i - 1].var >= c.lits[i].var)
      fail(errc::invalid_argument,
           "pool corruption: literals out of order in " + format_clause(c));
  }
}

bool model_output(const LocalIterationModel& m, const InputEncoding& enc,
                  const GraphInstance& g) {
  uint64_t state = g.init;
  for (int t = 0; t < m.l; ++t) {
    uint64_t next = 0;
    for (uint32_t v = 0; v < m.n; ++v)
      if (m.per_vertex[v].evaluate(encode_input(v, g, state, enc), enc.d))
        next |= uint64_t(1) << v;
    state = next;
  }
  return ((state >> (m.n - 1)) & 1u) != 0;
}

}  // namespace

std::vector<uint64_t> PathPool::depth_sizes() const {
  std::vector<uint64_t> out;
  out.reserve(by_depth.size());
  for (const auto& row : by_depth) out.push_back(row.size());
  return out;
}

std::optional<double> PathPool::probe_fraction() const {
  if (!exhaustive_probes || *exhaustive_probes == 0) return std::nullopt;
  return double(probes_issued) / double(*exhaustive_probes);
}

std::optional<uint64_t> exhaustive_probe_count(uint32_t n, int rounds, uint64_t cap) {
  if (n < 1) fail(errc::invalid_argument, "exhaustive_probe_count: n must be positive");
  if (rounds < 1) fail(errc::invalid_argument, "exhaustive_probe_count: rounds must be positive");
  const InputEncoding enc = InputEncoding::make(n);
  const SelectorPaths sp = selector_paths(n);

  std::vector<Clause> cur;
  std::unordered_set<std::string> seen;
  auto push = [&](const Clause& c) {
    if (seen.insert(format_clause(c)).second) cur.push_back(c);
  };
  for (const Clause& c : sp.internal) push(c);
  for (const Clause& c : sp.full) push(c);

  uint64_t probes = 0;
  for (int i = 1; i <= rounds; ++i) {
    probes += cur.size();
    if (i == rounds) break;
    std::vector<Clause> next;
    std::unordered_set<std::string> next_seen;
    for (const Clause& c : cur) {
      for (uint32_t var = 0; var < enc.d; ++var) {
        if (clause_has_var(c, var)) continue;
        for (int neg = 0; neg < 2; ++neg) {
          Clause child = insert_literal(c, {var, neg != 0});
          if (next_seen.insert(format_clause(child)).second) {
            next.push_back(std::move(child));
            if (next.size() > cap) return std::nullopt;
          }
        }
      }
    }
    cur = std::move(next);
    seen = std::move(next_seen);
  }
  return probes;
}

void run_phase1(const SourceModel& src, const Phase1Options& opt, PathPool& pool,
                LatentCache* cache) {
  if (opt.rounds < 1) fail(errc::invalid_argument, "phase 1 needs at least one round");
  if (opt.l < 1) fail(errc::invalid_argument, "phase 1 needs l >= 1");
  if (!(opt.delta > 0.0 && opt.delta < 1.0))
    fail(errc::invalid_argument, "phase-1 delta must lie in (0,1)");
  if (opt.pool_cap < 1) fail(errc::invalid_argument, "pool cap must be positive");
  validate_probe_config(opt.probe);

  const uint32_t n = src.n();
  const InputEncoding enc = InputEncoding::make(n);

  pool = PathPool{};
  pool.by_depth.assign(size_t(opt.rounds) + 1, {});
  pool.exhaustive_probes = exhaustive_probe_count(n, opt.rounds, opt.dry_run_cap);

  std::unordered_map<std::string, uint32_t> index;
  std::unordered_set<uint32_t> row_seen;
  auto add = [&](const Clause& c, int depth) -> uint32_t {
    std::string key = format_clause(c);
    auto it = index.find(key);
    uint32_t id;
    if (it != index.end()) {
      id = it->second;
    } else {
      id = uint32_t(pool.records.size());
      index.emplace(std::move(key), id);
      ClauseRecord rec;
      rec.clause = c;
      rec.first_depth = depth;
      pool.records.push_back(std::move(rec));
    }
    if (row_seen.insert(id).second) pool.by_depth[depth].push_back(id);
    if (pool.records.size() > opt.pool_cap)
      fail(errc::resource, "path pool cap exceeded at depth " + std::to_string(depth));
    return id;
  };

  const SelectorPaths sp = selector_paths(n);
  for (const Clause& c : sp.internal) add(c, 0);
  for (const Clause& c : sp.full) add(c, 0);

  const uint64_t phase_seed = splitmix64(opt.seed ^ hash_tag("phase1"));
  for (int i = 1; i <= opt.rounds; ++i) {
    const std::vector<uint32_t> prev = pool.by_depth[i - 1];
    ProbeConfig pc = opt.probe;
    pc.epsilon = std::ldexp(1.0, -(i * opt.l + 3));
    pc.delta = opt.delta / (2.0 * double(prev.size()) * double(opt.rounds));

    for (uint32_t rid : prev) {
      const Clause clause = pool.records[rid].clause;
      const uint64_t probe_seed =
          splitmix64(phase_seed + splitmix64(clause_hash(clause)) + uint64_t(i));
      ProbeOutcome out = probe_clause(clause, src, opt.l, pc, probe_seed, cache);
      ClauseRecord& rec = pool.records[rid];
      rec.probed = true;
      rec.accepted = out.accepted;
      rec.probe_err = out.risk;
      rec.train_err = out.train_risk;
      rec.weight_norm = out.weight_norm;
    }
    pool.probes_issued += prev.size();

    std::vector<uint32_t> branch;
    if (opt.k == 0) {
      for (uint32_t rid : prev)
        if (pool.records[rid].accepted) branch.push_back(rid);
    } else {
      branch = prev;
      std::sort(branch.begin(), branch.end(), [&](uint32_t a, uint32_t b) {
        const ClauseRecord& ra = pool.records[a];
        const ClauseRecord& rb = pool.records[b];
        if (ra.probe_err != rb.probe_err) return ra.probe_err < rb.probe_err;
        return clause_less(ra.clause, rb.clause);
      });
      if (branch.size() > opt.k) branch.resize(opt.k);
    }

    row_seen.clear();
    for (uint32_t rid : branch) {
      const Clause base = pool.records[rid].clause;
      for (uint32_t var = 0; var < enc.d; ++var) {
        if (clause_has_var(base, var)) continue;
        for (int neg = 0; neg < 2; ++neg) add(insert_literal(base, {var, neg != 0}), i);
      }
    }
  }
}

PathPool phase1_exact(const SourceModel& src, int rounds, int l, double delta,
                      const ProbeConfig& probe, uint64_t seed, uint64_t pool_cap,
                      LatentCache* cache) {
  Phase1Options opt;
  opt.rounds = rounds;
  opt.l = l;
  opt.k = 0;
  opt.probe = probe;
  opt.delta = delta;
  opt.pool_cap = pool_cap;
  opt.seed = seed;
  PathPool pool;
  run_phase1(src, opt, pool, cache);
  return pool;
}

PathPool phase1_topk(const SourceModel& src, int rounds, int l, uint32_t k,
                     const ProbeConfig& probe, uint64_t seed, uint64_t pool_cap,
                     uint64_t dry_run_cap, LatentCache* cache) {
  if (k < 1) fail(errc::invalid_argument, "top-k branching needs k >= 1");
  Phase1Options opt;
  opt.rounds = rounds;
  opt.l = l;
  opt.k = k;
  opt.probe = probe;
  opt.delta = probe.delta;
  opt.pool_cap = pool_cap;
  opt.dry_run_cap = dry_run_cap;
  opt.seed = seed;
  PathPool pool;
  run_phase1(src, opt, pool, cache);
  return pool;
}

Decomposition decompose_pool(const PathPool& pool, uint32_t n) {
  if (n < 1) fail(errc::invalid_argument, "decompose_pool: n must be positive");
  const InputEncoding enc = InputEncoding::make(n);
  const uint32_t idb = enc.id_bits;

  Decomposition dec;
  dec.n = n;
  dec.pool_size = pool.records.size();
  dec.prefixes = selector_paths(n).full;
  dec.bodies.assign(n, {});
  dec.body_err.assign(n, {});

  for (const ClauseRecord& rec : pool.records) {
    check_canonical(rec.clause, enc.d);
    size_t id_len = 0;
    while (id_len < rec.clause.lits.size() && rec.clause.lits[id_len].var < idb) ++id_len;
    bool routed = false;
    if (id_len == idb) {
      uint32_t code = 0;
      for (size_t j = 0; j < id_len; ++j)
        if (!rec.clause.lits[j].neg) code |= 1u << (idb - 1 - uint32_t(j));
      if (code < n) {
        Clause body;
        body.lits.assign(rec.clause.lits.begin() + long(id_len), rec.clause.lits.end());
        dec.bodies[code].push_back(std::move(body));
        dec.body_err[code].push_back(rec.probe_err);
        routed = true;
      }
    }
    if (!routed) dec.selector_owned.push_back(rec.clause);
  }

  for (uint32_t u = 0; u < n; ++u) {
    std::vector<size_t> order(dec.bodies[u].size());
    for (size_t j = 0; j < order.size(); ++j) order[j] = j;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      return clause_less(dec.bodies[u][a], dec.bodies[u][b]);
    });
    std::vector<Clause> bodies(order.size());
    std::vector<double> errs(order.size());
    for (size_t j = 0; j < order.size(); ++j) {
      bodies[j] = std::move(dec.bodies[u][order[j]]);
      errs[j] = dec.body_err[u][order[j]];
    }
    dec.bodies[u] = std::move(bodies);
    dec.body_err[u] = std::move(errs);
  }
  return dec;
}

size_t ValuationTable::tuple_index(const std::vector<uint32_t>& idx) const {
  if (idx.size() != dims.size())
    fail(errc::invalid_argument, "tuple index arity mismatch");
  size_t flat = 0;
  for (size_t u = 0; u < dims.size(); ++u) {
    if (idx[u] >= dims[u]) fail(errc::invalid_argument, "tuple index out of range");
    flat = flat * dims[u] + idx[u];
  }
  return flat;
}

ValuationTable estimate_v(const Decomposition& dec, const SourceModel& src, int l,
                          VMode mode, const ValuationOptions& opt) {
  if (l < 1) fail(errc::invalid_argument, "estimate_v needs l >= 1");
  if (!(opt.epsilon > 0.0) || !std::isfinite(opt.epsilon))
    fail(errc::invalid_argument, "estimate_v epsilon must be positive and finite");
  if (!(opt.delta > 0.0 && opt.delta < 1.0))
    fail(errc::invalid_argument, "estimate_v delta must lie in (0,1)");
  if (opt.sample_cap < 1) fail(errc::invalid_argument, "estimate_v sample cap must be positive");
  if (dec.bodies.size() != dec.n)
    fail(errc::invalid_argument, "decomposition vertex count mismatch");
  if (src.n() != dec.n) fail(errc::invalid_argument, "source/decomposition vertex mismatch");

  const InputEncoding enc = InputEncoding::make(dec.n);
  ValuationTable table;
  table.mode = mode;

  double targets = 0;
  if (mode == VMode::exact_tuple) {
    double product = 1;
    table.dims.reserve(dec.n);
    for (uint32_t u = 0; u < dec.n; ++u) {
      table.dims.push_back(uint32_t(dec.bodies[u].size()));
      product *= double(dec.bodies[u].size());
      if (product > double(opt.exact_tuple_cap))
        fail(errc::resource, "tuple table exceeds the exact-mode cap");
    }
    table.tuple_v.assign(size_t(product), 0.0);
    targets = product;
  } else {
    table.marginal.resize(dec.n);
    for (uint32_t u = 0; u < dec.n; ++u) {
      table.marginal[u].assign(dec.bodies[u].size(), 0.0);
      targets += double(dec.bodies[u].size());
    }
  }
  if (targets == 0) return table;

  const double t = opt.epsilon / std::max<double>(1.0, double(dec.pool_size));
  const double log_term = std::log(2.0 * targets / opt.delta);
  double need = std::ceil(2.0 * log_term / (t * t));
  uint64_t samples = uint64_t(std::min<double>(need, double(opt.sample_cap)));
  samples = std::max<uint64_t>(samples, 1);
  table.samples = samples;
  table.target_accuracy = t;
  table.accuracy = std::sqrt(2.0 * log_term / double(samples));

  std::vector<size_t> strides;
  if (mode == VMode::exact_tuple) {
    strides.assign(dec.n, 1);
    for (uint32_t u = dec.n; u-- > 1;) strides[u - 1] = strides[u] * table.dims[u];
  }

  std::vector<std::vector<uint32_t>> sat(dec.n);
  auto accumulate = [&](const GraphInstance& g, double weight) {
    const double s = src.predict(g) ? 1.0 : -1.0;
    for (uint32_t u = 0; u < dec.n; ++u) {
      sat[u].clear();
      const uint64_t word = encode_input(u, g, g.init, enc);
      for (uint32_t j = 0; j < dec.bodies[u].size(); ++j)
        if (eval_clause(dec.bodies[u][j], word, enc.d)) sat[u].push_back(j);
    }
    if (mode == VMode::marginal) {
      for (uint32_t u = 0; u < dec.n; ++u)
        for (uint32_t j : sat[u]) table.marginal[u][j] += weight * s;
      return;
    }
    // Walk only the satisfied tuples; every other product term is zero.
    std::function<void(uint32_t, size_t)> walk = [&](uint32_t u, size_t flat) {
      if (u == dec.n) {
        table.tuple_v[flat] += weight * s;
        return;
      }
      for (uint32_t j : sat[u]) walk(u + 1, flat + strides[u] * j);
    };
    walk(0, 0);
  };

  auto rng = fork_rng(opt.seed, "valuation");
  const uint32_t bits = instance_bit_count(enc);
  if (bits <= 20) {
    std::vector<uint64_t> hist(size_t(1) << bits, 0);
    for (uint64_t i = 0; i < samples; ++i) {
      const GraphInstance g = random_instance(dec.n, rng);
      hist[size_t(g.init | (g.adj << dec.n))]++;
    }
    const uint64_t init_mask = (uint64_t(1) << dec.n) - 1;
    for (size_t key = 0; key < hist.size(); ++key) {
      if (hist[key] == 0) continue;
      GraphInstance g{dec.n, uint64_t(key) & init_mask, uint64_t(key) >> dec.n};
      accumulate(g, double(hist[key]) / double(samples));
    }
  } else {
    for (uint64_t i = 0; i < samples; ++i)
      accumulate(random_instance(dec.n, rng), 1.0 / double(samples));
  }

  auto clamp = [](double& v) { v = std::clamp(v, -1.0, 1.0); };
  for (double& v : table.tuple_v) clamp(v);
  for (auto& row : table.marginal)
    for (double& v : row) clamp(v);
  return table;
}

namespace {

enum class TV : uint8_t { zero, one, open };

TV tv_from_bool(bool b) { return b ? TV::one : TV::zero; }

// Three-valued tree evaluation: an undetermined branch bit resolves only when
// both subtrees agree.
TV eval_tree_tv(const DecisionTree& t, const std::function<TV(uint32_t)>& bit) {
  std::function<TV(int32_t)> go = [&](int32_t idx) -> TV {
    const DecisionTree::Node& node = t.nodes()[size_t(idx)];
    if (node.is_leaf) return tv_from_bool(node.label);
    const TV v = bit(node.lit.var);
    if (v == TV::open) {
      const TV a = go(node.kid0);
      const TV b = go(node.kid1);
      return a == b ? a : TV::open;
    }
    const bool lit_true = (v == TV::one) != node.lit.neg;
    return go(lit_true ? node.kid1 : node.kid0);
  };
  return go(0);
}

struct LeafInfo {
  uint32_t body_index = 0;
  bool label = false;
  const Clause* body = nullptr;
};

std::vector<LeafInfo> leaf_infos(const DecisionTree& t, const std::vector<Clause>& bodies,
                                 uint32_t vertex) {
  std::vector<LeafInfo> out;
  std::function<void(int32_t, Clause&)> go = [&](int32_t idx, Clause& path) {
    const DecisionTree::Node& node = t.nodes()[size_t(idx)];
    if (node.is_leaf) {
      Clause body = path;
      std::sort(body.lits.begin(), body.lits.end(),
                [](const Literal& a, const Literal& b) { return a.var < b.var; });
      if (!distinct_vars(body))
        fail(errc::invalid_argument, "candidate tree repeats a variable on a path");
      auto it = std::lower_bound(bodies.begin(), bodies.end(), body, clause_less);
      if (it == bodies.end() || !(*it == body))
        fail(errc::invalid_argument, "leaf path " + format_clause(body) +
                                         " missing from the pool of vertex " +
                                         std::to_string(vertex));
      out.push_back({uint32_t(it - bodies.begin()), node.label, &*it});
      return;
    }
    path.lits.push_back(negate(node.lit));
    go(node.kid0, path);
    path.lits.back() = node.lit;
    go(node.kid1, path);
    path.lits.pop_back();
  };
  Clause path;
  go(0, path);
  return out;
}

}  // namespace

double valuation(const std::vector<DecisionTree>& trees, const Decomposition& dec,
                 const ValuationTable& table, int l) {
  if (l < 1) fail(errc::invalid_argument, "valuation needs l >= 1");
  if (table.mode != VMode::exact_tuple)
    fail(errc::invalid_argument, "valuation needs exact-mode tuple weights");
  if (trees.size() != dec.n)
    fail(errc::invalid_argument, "valuation needs one tree per vertex");
  if (table.dims.size() != dec.n)
    fail(errc::invalid_argument, "weight table arity mismatch");
  const InputEncoding enc = InputEncoding::make(dec.n);
  for (uint32_t u = 0; u < dec.n; ++u)
    if (table.dims[u] != dec.bodies[u].size())
      fail(errc::invalid_argument, "weight table shape mismatch");

  std::vector<std::vector<LeafInfo>> leaves(dec.n);
  for (uint32_t u = 0; u < dec.n; ++u) leaves[u] = leaf_infos(trees[u], dec.bodies[u], u);

  std::vector<uint32_t> pick(dec.n, 0);
  double total = 0.0;
  std::unordered_map<uint32_t, bool> edge_pin;
  std::unordered_map<uint32_t, bool> init_pin;

  std::function<void(uint32_t)> walk = [&](uint32_t u) {
    if (u < dec.n) {
      for (uint32_t j = 0; j < leaves[u].size(); ++j) {
        pick[u] = j;
        walk(u + 1);
      }
      return;
    }
    edge_pin.clear();
    init_pin.clear();
    bool empty_cell = false;
    std::vector<uint32_t> idx(dec.n);
    for (uint32_t v = 0; v < dec.n && !empty_cell; ++v) {
      const LeafInfo& leaf = leaves[v][pick[v]];
      idx[v] = leaf.body_index;
      for (const Literal& lit : leaf.body->lits) {
        auto& pin = enc.is_edge(lit.var) ? edge_pin : init_pin;
        const uint32_t key = enc.is_edge(lit.var) ? lit.var : enc.dp_vertex(lit.var);
        auto [it, fresh] = pin.emplace(key, !lit.neg);
        if (!fresh && it->second != !lit.neg) {
          empty_cell = true;  // contradictory pins: no instance reaches this tuple
          break;
        }
      }
    }
    if (empty_cell) return;

    bool out;
    if (l == 1) {
      out = leaves[dec.n - 1][pick[dec.n - 1]].label;
    } else {
      std::vector<TV> state(dec.n);
      for (uint32_t v = 0; v < dec.n; ++v) state[v] = tv_from_bool(leaves[v][pick[v]].label);
      for (int layer = 2; layer <= l; ++layer) {
        std::vector<TV> next(dec.n);
        for (uint32_t v = 0; v < dec.n; ++v) {
          const uint64_t id_word = encode_input(v, GraphInstance{dec.n, 0, 0}, 0, enc);
          next[v] = eval_tree_tv(trees[v], [&](uint32_t var) -> TV {
            if (enc.is_id(var)) return tv_from_bool(((id_word >> var) & 1u) != 0);
            if (enc.is_edge(var)) {
              auto it = edge_pin.find(var);
              return it == edge_pin.end() ? TV::open : tv_from_bool(it->second);
            }
            return state[enc.dp_vertex(var)];
          });
        }
        state = std::move(next);
      }
      if (state[dec.n - 1] == TV::open)
        fail(errc::undefined_value,
             "valuation undefined: a leaf-tuple cell leaves bits read after layer 1 "
             "unresolved; score candidates with mc_agreement instead");
      out = state[dec.n - 1] == TV::one;
    }
    total += (out ? 1.0 : -1.0) * table.tuple_v[table.tuple_index(idx)];
  };
  walk(0);
  return total;
}

namespace {

struct DPEntry {
  bool computed = false;
  double value = 0.0;
  int size = 0;
  bool is_leaf = true;
  uint32_t var = 0;
  int left_budget = 0;
};

class SingleTreeDP {
 public:
  SingleTreeDP(const std::vector<Clause>& bodies, const std::vector<double>& weights,
               int size_bound, int depth_bound)
      : bodies_(bodies), weights_(weights), depth_bound_(depth_bound) {
    if (bodies.empty()) fail(errc::invalid_argument, "tree DP over an empty pool");
    if (bodies.size() != weights.size())
      fail(errc::invalid_argument, "tree DP needs one weight per clause");
    if (size_bound < 1) fail(errc::invalid_argument, "tree DP size bound must be positive");
    if (depth_bound < 0) fail(errc::invalid_argument, "tree DP depth bound must be nonnegative");
    for (size_t i = 1; i < bodies.size(); ++i)
      if (!clause_less(bodies[i - 1], bodies[i]))
        fail(errc::invalid_argument, "tree DP pool must be sorted and deduplicated");
    if (!bodies.front().empty())
      fail(errc::invalid_argument, "tree DP pool lacks the empty clause");
    max_budget_ = size_bound % 2 == 0 ? size_bound - 1 : size_bound;
    for (const Clause& c : bodies)
      for (const Literal& lit : c.lits) vars_.insert(lit.var);
    memo_.assign(bodies.size(),
                 std::vector<DPEntry>(size_t(max_budget_ / 2) + 1, DPEntry{}));
  }

  DPResult run() {
    const DPEntry& best = solve(0, max_budget_);
    return {reconstruct(0, max_budget_), best.value};
  }

 private:
  int find(const Clause& c) const {
    auto it = std::lower_bound(bodies_.begin(), bodies_.end(), c, clause_less);
    if (it == bodies_.end() || !(*it == c)) return -1;
    return int(it - bodies_.begin());
  }

  const DPEntry& solve(int idx, int budget) {
    DPEntry& e = memo_[size_t(idx)][size_t(budget / 2)];
    if (e.computed) return e;
    e.computed = true;
    e.value = std::abs(weights_[size_t(idx)]);
    e.size = 1;
    e.is_leaf = true;
    if (budget >= 3 && int(bodies_[size_t(idx)].size()) < depth_bound_) {
      for (uint32_t var : vars_) {
        if (clause_has_var(bodies_[size_t(idx)], var)) continue;
        const int k0 = find(insert_literal(bodies_[size_t(idx)], {var, true}));
        const int k1 = find(insert_literal(bodies_[size_t(idx)], {var, false}));
        if (k0 < 0 || k1 < 0) continue;
        for (int left = 1; left <= budget - 2; left += 2) {
          const DPEntry a = solve(k0, left);
          const DPEntry b = solve(k1, budget - 1 - left);
          const double value = a.value + b.value;
          const int size = 1 + a.size + b.size;
          if (value > e.value || (value == e.value && size < e.size)) {
            e.value = value;
            e.size = size;
            e.is_leaf = false;
            e.var = var;
            e.left_budget = left;
          }
        }
      }
    }
    return e;
  }

  DecisionTree reconstruct(int idx, int budget) {
    const DPEntry& e = solve(idx, budget);
    if (e.is_leaf) return DecisionTree::leaf(weights_[size_t(idx)] >= 0.0);
    const Clause& body = bodies_[size_t(idx)];
    const int k0 = find(insert_literal(body, {e.var, true}));
    const int k1 = find(insert_literal(body, {e.var, false}));
    return DecisionTree::split({e.var, false}, reconstruct(k0, e.left_budget),
                               reconstruct(k1, budget - 1 - e.left_budget));
  }

  const std::vector<Clause>& bodies_;
  const std::vector<double>& weights_;
  int depth_bound_;
  int max_budget_ = 1;
  std::set<uint32_t> vars_;
  std::vector<std::vector<DPEntry>> memo_;
};

}  // namespace

DPResult tree_dp_single(const std::vector<Clause>& bodies,
                        const std::vector<double>& weights, int size_bound,
                        int depth_bound) {
  return SingleTreeDP(bodies, weights, size_bound, depth_bound).run();
}

std::vector<DecisionTree> enumerate_pool_trees(const std::vector<Clause>& bodies,
                                               int size_bound, int depth_bound,
                                               uint64_t cap) {
  if (bodies.empty()) fail(errc::invalid_argument, "tree enumeration over an empty pool");
  for (size_t i = 1; i < bodies.size(); ++i)
    if (!clause_less(bodies[i - 1], bodies[i]))
      fail(errc::invalid_argument, "tree enumeration pool must be sorted");
  if (!bodies.front().empty())
    fail(errc::invalid_argument, "tree enumeration pool lacks the empty clause");

  std::set<uint32_t> vars;
  for (const Clause& c : bodies)
    for (const Literal& lit : c.lits) vars.insert(lit.var);
  auto find = [&](const Clause& c) -> int {
    auto it = std::lower_bound(bodies.begin(), bodies.end(), c, clause_less);
    if (it == bodies.end() || !(*it == c)) return -1;
    return int(it - bodies.begin());
  };

  uint64_t built = 0;
  std::function<std::vector<DecisionTree>(int, int, int)> gen =
      [&](int idx, int depth_left, int budget) -> std::vector<DecisionTree> {
    std::vector<DecisionTree> out;
    out.push_back(DecisionTree::leaf(false));
    out.push_back(DecisionTree::leaf(true));
    built += 2;
    if (built > cap) fail(errc::resource, "pool tree enumeration cap exceeded");
    if (depth_left > 0 && budget >= 3) {
      for (uint32_t var : vars) {
        if (clause_has_var(bodies[size_t(idx)], var)) continue;
        const int k0 = find(insert_literal(bodies[size_t(idx)], {var, true}));
        const int k1 = find(insert_literal(bodies[size_t(idx)], {var, false}));
        if (k0 < 0 || k1 < 0) continue;
        for (const DecisionTree& t0 : gen(k0, depth_left - 1, budget - 2)) {
          for (const DecisionTree& t1 : gen(k1, depth_left - 1, budget - 1 - t0.size())) {
            out.push_back(DecisionTree::split({var, false}, t0, t1));
            if (++built > cap) fail(errc::resource, "pool tree enumeration cap exceeded");
          }
        }
      }
    }
    return out;
  };
  return gen(0, depth_bound, size_bound);
}

Agreement mc_agreement(const LocalIterationModel& m, const SourceModel& src,
                       uint64_t samples, uint64_t seed) {
  if (samples < 1) fail(errc::invalid_argument, "mc_agreement needs at least one sample");
  if (m.n != src.n()) fail(errc::invalid_argument, "mc_agreement vertex count mismatch");
  auto rng = fork_rng(seed, "agreement");
  std::vector<GraphInstance> draws;
  draws.reserve(samples);
  for (uint64_t i = 0; i < samples; ++i) draws.push_back(random_instance(m.n, rng));
  uint64_t agree = 0;
  for (const GraphInstance& g : draws)
    if (run_local_iteration(m, g).output == src.predict(g)) ++agree;
  Agreement out;
  out.value = double(agree) / double(samples);
  out.half_width = std::sqrt(std::log(2.0 / 0.05) / (2.0 * double(samples)));
  out.samples = samples;
  return out;
}

double exact_agreement(const LocalIterationModel& a, const LocalIterationModel& b) {
  if (a.n != b.n) fail(errc::invalid_argument, "exact_agreement vertex count mismatch");
  const InputEncoding enc = InputEncoding::make(a.n);
  const uint32_t bits = instance_bit_count(enc);
  if (bits > 24) fail(errc::resource, "instance space too large to enumerate");
  const uint64_t total = uint64_t(1) << bits;
  const uint64_t init_mask = (uint64_t(1) << a.n) - 1;
  uint64_t agree = 0;
  for (uint64_t key = 0; key < total; ++key) {
    GraphInstance g{a.n, key & init_mask, key >> a.n};
    if (model_output(a, enc, g) == model_output(b, enc, g)) ++agree;
  }
  return double(agree) / double(total);
}

JointResult joint_select(const Decomposition& dec, const ValuationTable& table,
                         const SourceModel& src, int l, const JointOptions& opt) {
  if (l < 1) fail(errc::invalid_argument, "joint_select needs l >= 1");
  if (dec.bodies.size() != dec.n)
    fail(errc::invalid_argument, "decomposition vertex count mismatch");
  if (src.n() != dec.n) fail(errc::invalid_argument, "source/decomposition vertex mismatch");
  if (opt.size_bound < 1) fail(errc::invalid_argument, "size bound must be positive");
  if (opt.depth_bound < 0) fail(errc::invalid_argument, "depth bound must be nonnegative");
  if (opt.candidates < 1) fail(errc::invalid_argument, "need at least one candidate per vertex");
  if (opt.mc_samples < 1) fail(errc::invalid_argument, "need at least one scoring sample");

  JointResult result;
  result.shortlist_sizes.assign(dec.n, 0);
  result.candidates.resize(dec.n);

  if (opt.exact_joint) {
    if (table.mode != VMode::exact_tuple)
      fail(errc::invalid_argument, "exact-joint selection needs exact-mode weights");
    if (dec.n > 3 || l != 1)
      fail(errc::invalid_argument, "exact-joint selection is limited to n <= 3 at l = 1");
    double combos = 1;
    for (uint32_t u = 0; u < dec.n; ++u) {
      if (dec.bodies[u].empty())
        fail(errc::invalid_argument,
             "no pooled clauses for vertex " + std::to_string(u));
      result.candidates[u] =
          enumerate_pool_trees(dec.bodies[u], opt.size_bound, opt.depth_bound, opt.enum_cap);
      result.shortlist_sizes[u] = uint32_t(dec.bodies[u].size());
      combos *= double(result.candidates[u].size());
      if (combos > 1e7) fail(errc::resource, "exact-joint product space too large");
    }
    std::vector<uint32_t> pick(dec.n, 0);
    std::vector<DecisionTree> trees(dec.n);
    bool have_best = false;
    double best = 0;
    std::vector<uint32_t> best_pick;
    for (;;) {
      for (uint32_t u = 0; u < dec.n; ++u) trees[u] = result.candidates[u][pick[u]];
      const double val = valuation(trees, dec, table, l);
      ++result.scored_products;
      if (!have_best || val > best) {
        have_best = true;
        best = val;
        best_pick = pick;
      }
      uint32_t u = dec.n;
      while (u > 0) {
        --u;
        if (++pick[u] < result.candidates[u].size()) break;
        pick[u] = 0;
        if (u == 0) {
          result.trees.resize(dec.n);
          for (uint32_t w = 0; w < dec.n; ++w)
            result.trees[w] = result.candidates[w][best_pick[w]];
          result.score = best;
          return result;
        }
      }
    }
  }

  if (table.mode != VMode::marginal)
    fail(errc::invalid_argument, "shortlist selection needs marginal weights");
  if (table.marginal.size() != dec.n)
    fail(errc::invalid_argument, "marginal weight table shape mismatch");

  std::vector<std::vector<Clause>> subs(dec.n);
  std::vector<std::vector<std::string>> kept(dec.n);
  for (uint32_t u = 0; u < dec.n; ++u) {
    const auto& bodies = dec.bodies[u];
    if (bodies.empty()) {
      result.candidates[u].push_back(DecisionTree::leaf(true));  // nothing to build from
      continue;
    }
    if (table.marginal[u].size() != bodies.size())
      fail(errc::invalid_argument, "marginal weight table shape mismatch");

    std::vector<uint32_t> order(bodies.size());
    for (uint32_t j = 0; j < order.size(); ++j) order[j] = j;
    const auto& errs = dec.body_err[u];
    std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
      const bool na = std::isnan(errs[a]), nb = std::isnan(errs[b]);
      if (na != nb) return nb;  // probed clauses outrank never-probed ones
      if (!na && errs[a] != errs[b]) return errs[a] < errs[b];
      return a < b;
    });
    if (order.size() > opt.shortlist) order.resize(opt.shortlist);
    if (std::find(order.begin(), order.end(), 0u) == order.end())
      order.back() = 0;  // the empty clause anchors every tree's root
    std::sort(order.begin(), order.end());
    result.shortlist_sizes[u] = uint32_t(order.size());

    std::vector<Clause>& sub = subs[u];
    std::vector<double> weights;
    sub.reserve(order.size());
    for (uint32_t j : order) {
      sub.push_back(bodies[j]);
      weights.push_back(table.marginal[u][j]);
    }

    std::vector<std::string> seen;
    std::vector<DecisionTree>& cand = result.candidates[u];
    for (int budget = 1; budget <= opt.size_bound; budget += 2) {
      DPResult dp = tree_dp_single(sub, weights, budget, opt.depth_bound);
      std::string key = dp.tree.serialized();
      if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
      seen.push_back(std::move(key));
      cand.push_back(std::move(dp.tree));
    }
    // Larger budgets never lose value, so trim from the low-budget end.
    if (cand.size() > opt.candidates)
      cand.erase(cand.begin(), cand.end() - long(opt.candidates));
    for (const auto& t : cand) kept[u].push_back(t.serialized());
  }

  const InputEncoding enc = InputEncoding::make(dec.n);
  auto rng = fork_rng(opt.seed, "agreement");
  std::vector<GraphInstance> draws;
  draws.reserve(opt.mc_samples);
  for (uint64_t i = 0; i < opt.mc_samples; ++i) draws.push_back(random_instance(dec.n, rng));
  std::vector<uint8_t> src_bits(draws.size());
  for (size_t i = 0; i < draws.size(); ++i) src_bits[i] = src.predict(draws[i]) ? 1 : 0;

  const auto product_size = [&] {
    double combos = 1;
    for (uint32_t u = 0; u < dec.n; ++u) combos *= double(result.candidates[u].size());
    return combos;
  };
  if (product_size() > 1e7) fail(errc::resource, "candidate product space too large");

  LocalIterationModel model;
  model.n = dec.n;
  model.l = l;
  model.per_vertex.resize(dec.n);
  uint64_t best_agree = 0;
  std::vector<uint32_t> best_pick;
  bool have_best = false;
  // Earlier candidates win ties, so rescans after list growth cannot evict
  // an equally good earlier winner.
  const auto scan = [&] {
    std::vector<uint32_t> pick(dec.n, 0);
    for (;;) {
      for (uint32_t u = 0; u < dec.n; ++u) model.per_vertex[u] = result.candidates[u][pick[u]];
      uint64_t agree = 0;
      for (size_t i = 0; i < draws.size(); ++i)
        if (uint8_t(model_output(model, enc, draws[i])) == src_bits[i]) ++agree;
      ++result.scored_products;
      if (!have_best || agree > best_agree) {
        have_best = true;
        best_agree = agree;
        best_pick = pick;
      }
      uint32_t u = dec.n;
      bool done = true;
      while (u > 0) {
        --u;
        if (++pick[u] < result.candidates[u].size()) {
          done = false;
          break;
        }
        pick[u] = 0;
      }
      if (done) break;
    }
  };
  scan();

  // Marginal weights see every vertex in isolation, so a pair of vertices
  // that must change together can leave the scan stuck on a plateau. Refit
  // passes measure each vertex's correlations inside the simulated dynamics
  // of the current winner (and of its single-coordinate variations, which
  // supply the off-plateau contexts): the output vertex refits against the
  // layer-(l-1) word its final application actually reads, the others
  // against init-word correlations signed by how flipping their layer-1
  // state moves the output. DP trees from these weights join the candidate
  // lists and the grown product is rescored on the same draws.
  if (l >= 2 && opt.refine_sweeps > 0) {
    struct Uniq {
      GraphInstance g;
      double mult = 0;  // draw multiplicity
      double sgn = 0;   // +/-1 source prediction
    };
    std::vector<Uniq> uniq;
    {
      std::map<uint64_t, size_t> slot;
      for (size_t i = 0; i < draws.size(); ++i) {
        const uint64_t key = draws[i].init | (draws[i].adj << dec.n);
        auto [it, fresh] = slot.try_emplace(key, uniq.size());
        if (fresh) uniq.push_back({draws[i], 0.0, src_bits[i] ? 1.0 : -1.0});
        uniq[it->second].mult += 1.0;
      }
    }
    const auto tree_at = [&](const std::vector<uint32_t>& ctx, uint32_t u) -> const DecisionTree& {
      return result.candidates[u][ctx[u]];
    };
    const auto next_word = [&](const std::vector<uint32_t>& ctx, const GraphInstance& g,
                               uint64_t w) {
      uint64_t out = 0;
      for (uint32_t u = 0; u < dec.n; ++u)
        out |= uint64_t{tree_at(ctx, u).evaluate(encode_input(u, g, w, enc), enc.d)} << u;
      return out;
    };
    const auto output_from_layer1 = [&](const std::vector<uint32_t>& ctx,
                                        const GraphInstance& g, uint64_t w1) {
      uint64_t w = w1;
      for (int t = 2; t <= l; ++t) w = next_word(ctx, g, w);
      return (w >> (dec.n - 1)) & 1u;
    };

    for (int sweep = 0; sweep < opt.refine_sweeps; ++sweep) {
      std::vector<std::vector<uint32_t>> contexts{best_pick};
      for (uint32_t u = 0; u < dec.n; ++u)
        for (uint32_t c = 0; c < result.candidates[u].size(); ++c)
          if (c != best_pick[u]) {
            contexts.push_back(best_pick);
            contexts.back()[u] = c;
          }
      bool grew = false;
      for (const auto& ctx : contexts) {
        std::vector<std::vector<double>> d(dec.n);
        for (uint32_t u = 0; u < dec.n; ++u) d[u].assign(subs[u].size(), 0.0);
        for (const Uniq& q : uniq) {
          uint64_t w1 = next_word(ctx, q.g, q.g.init);
          uint64_t wl1 = w1;
          for (int t = 2; t < l; ++t) wl1 = next_word(ctx, q.g, wl1);
          for (uint32_t u = 0; u < dec.n; ++u) {
            if (subs[u].empty()) continue;
            if (u + 1 == dec.n) {
              const uint64_t word = encode_input(u, q.g, wl1, enc);
              for (size_t j = 0; j < subs[u].size(); ++j)
                if (eval_clause(subs[u][j], word, enc.d)) d[u][j] += q.mult * q.sgn;
            } else {
              const uint64_t bit = uint64_t{1} << u;
              const uint64_t o0 = output_from_layer1(ctx, q.g, w1 & ~bit);
              const uint64_t o1 = output_from_layer1(ctx, q.g, w1 | bit);
              if (o0 == o1) continue;
              const double s = q.mult * q.sgn * (o1 ? 1.0 : -1.0);
              const uint64_t word = encode_input(u, q.g, q.g.init, enc);
              for (size_t j = 0; j < subs[u].size(); ++j)
                if (eval_clause(subs[u][j], word, enc.d)) d[u][j] += s;
            }
          }
        }
        for (uint32_t u = 0; u < dec.n; ++u) {
          bool live = false;
          for (double x : d[u]) live = live || x != 0.0;
          if (!live) continue;
          DPResult dp = tree_dp_single(subs[u], d[u], opt.size_bound, opt.depth_bound);
          std::string key = dp.tree.serialized();
          if (std::find(kept[u].begin(), kept[u].end(), key) != kept[u].end()) continue;
          const double grown =
              product_size() / double(result.candidates[u].size()) *
              double(result.candidates[u].size() + 1);
          if (grown * double(opt.mc_samples) > double(opt.refine_scan_cap)) continue;
          kept[u].push_back(std::move(key));
          result.candidates[u].push_back(std::move(dp.tree));
          grew = true;
        }
      }
      if (!grew) break;
      scan();
    }
  }

  result.trees.resize(dec.n);
  for (uint32_t u = 0; u < dec.n; ++u) result.trees[u] = result.candidates[u][best_pick[u]];
  result.score = double(best_agree) / double(opt.mc_samples);
  return result;
}

LocalIterationModel distill(const SourceModel& src, const DistillConfig& cfg,
                            DistillReport* report, const LocalIterationModel* truth) {
  if (cfg.l < 1) fail(errc::invalid_argument, "distill needs l >= 1");
  if (cfg.depth < 0) fail(errc::invalid_argument, "distill depth bound must be nonnegative");
  DistillReport local;
  DistillReport& rep = report ? *report : local;
  rep = DistillReport{};

  const uint32_t n = src.n();
  const int size_bound = cfg.size_bound > 0 ? cfg.size_bound : (1 << (cfg.depth + 1)) - 1;

  Phase1Options p1;
  p1.rounds = cfg.rounds;
  p1.l = cfg.l;
  p1.k = cfg.k;
  p1.probe = cfg.probe;
  p1.delta = cfg.probe_delta;
  p1.pool_cap = cfg.pool_cap;
  p1.dry_run_cap = cfg.dry_run_cap;
  p1.seed = cfg.seed;

  LatentCache cache(src, cfg.latent_cache_bits);
  PathPool pool;
  auto note_pool = [&] {
    rep.pool_sizes = pool.depth_sizes();
    rep.pool_records = pool.records.size();
    rep.probes_issued = pool.probes_issued;
    rep.exhaustive_probes = pool.exhaustive_probes;
    rep.probe_fraction = pool.probe_fraction();
  };
  try {
    run_phase1(src, p1, pool, &cache);
  } catch (...) {
    note_pool();
    throw;
  }
  note_pool();

  const Decomposition dec = decompose_pool(pool, n);

  ValuationOptions vo;
  vo.epsilon = cfg.epsilon;
  vo.delta = cfg.delta;
  vo.sample_cap = cfg.v_sample_cap;
  vo.exact_tuple_cap = cfg.exact_tuple_cap;
  vo.seed = cfg.seed;
  const VMode mode = cfg.exact_joint ? VMode::exact_tuple : VMode::marginal;
  const ValuationTable table = estimate_v(dec, src, cfg.l, mode, vo);
  rep.v_samples = table.samples;
  rep.v_accuracy = table.accuracy;

  JointOptions jo;
  jo.exact_joint = cfg.exact_joint;
  jo.size_bound = size_bound;
  jo.depth_bound = cfg.depth;
  jo.shortlist = cfg.shortlist;
  jo.candidates = cfg.candidates;
  jo.mc_samples = cfg.mc_samples;
  jo.enum_cap = cfg.enum_cap;
  jo.refine_sweeps = cfg.refine_sweeps;
  jo.refine_scan_cap = cfg.refine_scan_cap;
  jo.seed = cfg.seed;
  const JointResult joint = joint_select(dec, table, src, cfg.l, jo);
  rep.paths_per_vertex = joint.shortlist_sizes;
  rep.candidates_per_vertex.clear();
  for (const auto& cand : joint.candidates)
    rep.candidates_per_vertex.push_back(uint32_t(cand.size()));
  rep.selection_score = joint.score;

  LocalIterationModel model;
  model.n = n;
  model.l = cfg.l;
  model.per_vertex = joint.trees;

  rep.source_agreement = mc_agreement(model, src, cfg.mc_samples, cfg.seed);
  if (truth) {
    if (truth->n != n) fail(errc::invalid_argument, "truth model vertex count mismatch");
    const InputEncoding enc = InputEncoding::make(n);
    if (instance_bit_count(enc) <= 20) {
      rep.truth_agreement = exact_agreement(model, *truth);
    } else {
      auto rng = fork_rng(cfg.seed, "truth-agreement");
      uint64_t agree = 0;
      for (uint64_t i = 0; i < cfg.mc_samples; ++i) {
        const GraphInstance g = random_instance(n, rng);
        if (model_output(model, enc, g) == model_output(*truth, enc, g)) ++agree;
      }
      rep.truth_agreement = double(agree) / double(cfg.mc_samples);
    }
  }
  return model;
}

}  // namespace litd
