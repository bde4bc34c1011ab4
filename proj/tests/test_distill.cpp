#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "distill.hpp"
#include "doctest.h"

using namespace litd;

namespace {

Clause sorted_clause(std::vector<Literal> lits) {
  std::sort(lits.begin(), lits.end(),
            [](const Literal& a, const Literal& b) { return a.var < b.var; });
  Clause c;
  c.lits = std::move(lits);
  return c;
}

PathPool hand_pool(const std::vector<Clause>& clauses) {
  PathPool pool;
  pool.by_depth.resize(1);
  for (const Clause& c : clauses) {
    pool.by_depth[0].push_back(uint32_t(pool.records.size()));
    ClauseRecord rec;
    rec.clause = c;
    pool.records.push_back(rec);
  }
  return pool;
}

LocalIterationModel random_truth(uint32_t n, int l, int depth, uint64_t seed) {
  const InputEncoding enc = InputEncoding::make(n);
  std::vector<uint32_t> domain;
  for (uint32_t v = enc.id_bits; v < enc.d; ++v) domain.push_back(v);
  auto rng = fork_rng(seed, "truth");
  LocalIterationModel m;
  m.n = n;
  m.l = l;
  for (uint32_t v = 0; v < n; ++v) m.per_vertex.push_back(random_tree(depth, domain, rng));
  return m;
}

std::unique_ptr<OracleSource> oracle_of(const LocalIterationModel& truth,
                                        uint32_t distractors, uint64_t seed) {
  OracleSpec spec;
  spec.truth = truth;
  spec.distractors = distractors;
  spec.seed = seed;
  return build_oracle_source(spec);
}

// Layer-one conjunction value of a stripped body at its vertex.
bool body_sat(const Clause& body, uint32_t u, const GraphInstance& g,
              const InputEncoding& enc) {
  return eval_clause(body, encode_input(u, g, g.init, enc), enc.d);
}

std::set<std::string> pool_strings(const PathPool& pool, bool accepted_only) {
  std::set<std::string> out;
  for (const ClauseRecord& rec : pool.records)
    if (!accepted_only || rec.accepted) out.insert(format_clause(rec.clause));
  return out;
}

// Enumerated +/-1 correlation between the source and a candidate model.
double enumerated_product(const SourceModel& src, const LocalIterationModel& m) {
  const InputEncoding enc = InputEncoding::make(m.n);
  const uint64_t total = uint64_t(1) << instance_bit_count(enc);
  const uint64_t init_mask = (uint64_t(1) << m.n) - 1;
  double sum = 0;
  for (uint64_t key = 0; key < total; ++key) {
    GraphInstance g{m.n, key & init_mask, key >> m.n};
    const double a = src.predict(g) ? 1.0 : -1.0;
    const double b = run_local_iteration(m, g).output ? 1.0 : -1.0;
    sum += a * b;
  }
  return sum / double(total);
}

double enumerated_agreement(const SourceModel& src, const LocalIterationModel& m) {
  return (enumerated_product(src, m) + 1.0) / 2.0;
}

// Decomposition over the full depth-1 closure at n=2: every selector path plus
// every one-literal extension, 14 records in all, 7 bodies per vertex.
PathPool depth1_closure_pool_n2() {
  const InputEncoding enc = InputEncoding::make(2);
  std::vector<Clause> clauses;
  for (int neg = 1; neg >= 0; --neg) {
    Clause prefix = sorted_clause({{0, neg != 0}});
    clauses.push_back(prefix);
    for (uint32_t var = 1; var < enc.d; ++var)
      for (int vneg = 0; vneg < 2; ++vneg)
        clauses.push_back(sorted_clause({{0, neg != 0}, {var, vneg != 0}}));
  }
  return hand_pool(clauses);
}

ValuationTable exact_table_n2(const Decomposition& dec, const SourceModel& src) {
  const InputEncoding enc = InputEncoding::make(2);
  ValuationTable t;
  t.mode = VMode::exact_tuple;
  t.dims = {uint32_t(dec.bodies[0].size()), uint32_t(dec.bodies[1].size())};
  t.tuple_v.assign(size_t(t.dims[0]) * t.dims[1], 0.0);
  for (uint64_t key = 0; key < 8; ++key) {
    GraphInstance g{2, key & 3, key >> 2};
    const double s = src.predict(g) ? 1.0 : -1.0;
    for (uint32_t i = 0; i < t.dims[0]; ++i) {
      if (!body_sat(dec.bodies[0][i], 0, g, enc)) continue;
      for (uint32_t j = 0; j < t.dims[1]; ++j)
        if (body_sat(dec.bodies[1][j], 1, g, enc))
          t.tuple_v[size_t(i) * t.dims[1] + j] += s / 8.0;
    }
  }
  t.samples = 8;
  return t;
}

}  // namespace

TEST_CASE("exhaustive probe count matches the unpruned expansion") {
  // n=2: S_0 = {true, !x0, x0}. One round probes those 3; a second round also
  // probes every distinct one-literal extension: 8 from the empty clause and
  // 6 from each selector path, 20 in all.
  CHECK(exhaustive_probe_count(2, 1, 1000).value() == 3);
  CHECK(exhaustive_probe_count(2, 2, 1000).value() == 23);
  // n=3 (d=8): |S_0| = 6, extensions 16 + 14 + 14 + 3*12 = 80.
  CHECK(exhaustive_probe_count(3, 2, 1000).value() == 86);
  CHECK(!exhaustive_probe_count(3, 4, 50).has_value());
}

TEST_CASE("phase 1 pools every path of the truth") {
  int good = 0;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const LocalIterationModel truth = random_truth(2, 1, 1, seed);
    auto src = oracle_of(truth, 2, seed);
    const PathPool pool = phase1_exact(*src, 2, 1, 0.1, ProbeConfig{}, seed);
    const std::set<std::string> have = pool_strings(pool, false);
    bool all = true;
    for (const Clause& path : root_prefix_paths(truth.composed())) {
      Clause canon = sorted_clause(path.lits);
      if (!have.count(format_clause(canon))) all = false;
    }
    good += all ? 1 : 0;
  }
  CHECK(good >= 19);
}

TEST_CASE("depth-0 truth leaves only constant features standing") {
  // With leaf aggregators and no distractors the latent spans constants, so
  // the only accepted clauses beyond the selector paths are the ones whose
  // iterated conjunction is itself constant over the instance space.
  const InputEncoding enc = InputEncoding::make(2);
  for (uint64_t seed = 0; seed < 5; ++seed) {
    LocalIterationModel truth;
    truth.n = 2;
    truth.l = 1;
    truth.per_vertex = {DecisionTree::leaf(false), DecisionTree::leaf(true)};
    auto src = oracle_of(truth, 0, seed);
    const PathPool pool = phase1_exact(*src, 2, 1, 0.1, ProbeConfig{}, seed);
    for (const ClauseRecord& rec : pool.records) {
      if (!rec.accepted) continue;
      bool id_only = true;
      for (const Literal& lit : rec.clause.lits)
        if (!enc.is_id(lit.var)) id_only = false;
      if (id_only) continue;
      bool first = feature_value(rec.clause, GraphInstance{2, 0, 0}, 1, enc);
      for (uint64_t key = 1; key < 8; ++key) {
        GraphInstance g{2, key & 3, key >> 2};
        CHECK(feature_value(rec.clause, g, 1, enc) == first);
      }
    }
    // The selector paths themselves always read out exactly.
    const std::set<std::string> accepted = pool_strings(pool, true);
    CHECK(accepted.count("true"));
    CHECK(accepted.count("x0"));
    CHECK(accepted.count("!x0"));
  }
}

TEST_CASE("an unreadable extension is rejected across seeds") {
  // Against a depth-0 truth without distractors, x0&dp_1 reads Init(1): risk
  // 1/4 against a constant-spanned latent, far past every round tolerance.
  const Clause target = sorted_clause({{0, false}, {3, false}});
  int rejected = 0;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    LocalIterationModel truth;
    truth.n = 2;
    truth.l = 1;
    truth.per_vertex = {DecisionTree::leaf(false), DecisionTree::leaf(true)};
    auto src = oracle_of(truth, 0, seed);
    const PathPool pool = phase1_exact(*src, 2, 1, 0.1, ProbeConfig{}, seed);
    for (const ClauseRecord& rec : pool.records)
      if (rec.clause == target && rec.probed && !rec.accepted) ++rejected;
  }
  CHECK(rejected >= 19);
}

TEST_CASE("decompose_pool routes by selector prefix") {
  SUBCASE("selector paths only") {
    const SelectorPaths sp = selector_paths(4);
    std::vector<Clause> clauses = sp.internal;
    clauses.insert(clauses.end(), sp.full.begin(), sp.full.end());
    const Decomposition dec = decompose_pool(hand_pool(clauses), 4);
    CHECK(dec.selector_owned.size() == 3);
    for (uint32_t u = 0; u < 4; ++u) {
      REQUIRE(dec.bodies[u].size() == 1);
      CHECK(dec.bodies[u][0].empty());
    }
    CHECK(dec.prefixes.size() == 4);
    CHECK(dec.pool_size == 7);
  }
  SUBCASE("a routed clause keeps only its body") {
    const Decomposition dec =
        decompose_pool(hand_pool({sorted_clause({{0, false}, {2, false}})}), 2);
    REQUIRE(dec.bodies[1].size() == 1);
    CHECK(format_clause(dec.bodies[1][0]) == "x2");
    CHECK(dec.bodies[0].empty());
    CHECK(dec.selector_owned.empty());
  }
  SUBCASE("dead codes and partial id assignments stay selector-owned") {
    const Decomposition dec = decompose_pool(
        hand_pool({sorted_clause({{0, false}, {1, false}}),   // code 3 >= n
                   sorted_clause({{1, false}}),               // id bit without x0
                   sorted_clause({{2, false}})}),             // no id bits at all
        3);
    CHECK(dec.selector_owned.size() == 3);
    for (uint32_t u = 0; u < 3; ++u) CHECK(dec.bodies[u].empty());
  }
  SUBCASE("corrupt clauses are refused") {
    Clause unsorted;
    unsorted.lits = {{3, false}, {1, false}};
    CHECK_THROWS_WITH_AS(decompose_pool(hand_pool({unsorted}), 2),
                         doctest::Contains("pool corruption"), error);
    Clause wide = sorted_clause({{9, false}});
    CHECK_THROWS_AS(decompose_pool(hand_pool({wide}), 2), error);
  }
  SUBCASE("a live pool partitions exactly") {
    const LocalIterationModel truth = random_truth(3, 1, 1, 5);
    auto src = oracle_of(truth, 2, 5);
    const PathPool pool = phase1_exact(*src, 2, 1, 0.1, ProbeConfig{}, 5);
    const Decomposition dec = decompose_pool(pool, 3);
    size_t total = dec.selector_owned.size();
    const InputEncoding enc = InputEncoding::make(3);
    for (uint32_t u = 0; u < 3; ++u) {
      total += dec.bodies[u].size();
      for (const Clause& body : dec.bodies[u])
        for (const Literal& lit : body.lits) CHECK(!enc.is_id(lit.var));
      CHECK(dec.bodies[u].size() == dec.body_err[u].size());
    }
    CHECK(total == pool.records.size());
  }
}

TEST_CASE("estimate_v is exact on constant sources") {
  const SelectorPaths sp = selector_paths(2);
  std::vector<Clause> clauses = sp.internal;
  clauses.insert(clauses.end(), sp.full.begin(), sp.full.end());
  const Decomposition dec = decompose_pool(hand_pool(clauses), 2);
  ValuationOptions opt;
  opt.seed = 11;
  for (bool label : {true, false}) {
    LocalIterationModel truth;
    truth.n = 2;
    truth.l = 1;
    truth.per_vertex = {DecisionTree::leaf(label), DecisionTree::leaf(label)};
    auto src = oracle_of(truth, 0, 1);
    const ValuationTable t = estimate_v(dec, *src, 1, VMode::exact_tuple, opt);
    REQUIRE(t.tuple_v.size() == 1);
    CHECK(t.tuple_v[0] == (label ? 1.0 : -1.0));
    CHECK(t.samples >= 1);
  }
}

TEST_CASE("estimate_v meets its advertised accuracy") {
  const LocalIterationModel truth = random_truth(2, 1, 1, 7);
  auto src = oracle_of(truth, 2, 7);
  const PathPool pool = depth1_closure_pool_n2();
  const Decomposition dec = decompose_pool(pool, 2);
  REQUIRE(dec.bodies[0].size() == 7);
  REQUIRE(dec.bodies[1].size() == 7);
  const ValuationTable exact = exact_table_n2(dec, *src);

  int covered = 0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    ValuationOptions opt;
    opt.epsilon = 0.4;
    opt.delta = 0.05;
    opt.sample_cap = 1u << 20;
    opt.exact_tuple_cap = 100;
    opt.seed = seed;
    const ValuationTable t = estimate_v(dec, *src, 1, VMode::exact_tuple, opt);
    CHECK(t.target_accuracy == doctest::Approx(0.4 / 14.0).epsilon(1e-12));
    CHECK(t.accuracy <= t.target_accuracy + 1e-15);
    double worst = 0;
    for (size_t i = 0; i < t.tuple_v.size(); ++i) {
      CHECK(std::abs(t.tuple_v[i]) <= 1.0);
      worst = std::max(worst, std::abs(t.tuple_v[i] - exact.tuple_v[i]));
    }
    covered += worst <= t.target_accuracy ? 1 : 0;
  }
  CHECK(covered >= 95);

  // A binding sample cap is reported as a wider achieved half-width.
  ValuationOptions capped;
  capped.epsilon = 0.4;
  capped.sample_cap = 1000;
  capped.exact_tuple_cap = 100;
  const ValuationTable t = estimate_v(dec, *src, 1, VMode::exact_tuple, capped);
  CHECK(t.samples == 1000);
  CHECK(t.accuracy > t.target_accuracy);
}

TEST_CASE("valuation matches the enumerated expectation at l=1") {
  const LocalIterationModel truth = random_truth(2, 1, 1, 3);
  auto src = oracle_of(truth, 2, 3);
  const Decomposition dec = decompose_pool(depth1_closure_pool_n2(), 2);
  const ValuationTable exact = exact_table_n2(dec, *src);

  auto rng = fork_rng(17, "candidates");
  const std::vector<uint32_t> domain = {1, 2, 3};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<DecisionTree> trees;
    for (int v = 0; v < 2; ++v)
      trees.push_back(draw_bit(rng) ? random_tree(1, domain, rng)
                                    : DecisionTree::leaf(draw_bit(rng)));
    LocalIterationModel cand{2, 1, trees};
    const double lhs = valuation(trees, dec, exact, 1);
    const double rhs = enumerated_product(*src, cand);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }

  // All-ones candidate: the single surviving tuple weight is E[2v-1].
  std::vector<DecisionTree> ones = {DecisionTree::leaf(true), DecisionTree::leaf(true)};
  double mean = 0;
  for (uint64_t key = 0; key < 8; ++key)
    mean += (src->predict(GraphInstance{2, key & 3, key >> 2}) ? 1.0 : -1.0) / 8.0;
  CHECK(valuation(ones, dec, exact, 1) == doctest::Approx(mean).epsilon(1e-12));

  ValuationTable zeros = exact;
  std::fill(zeros.tuple_v.begin(), zeros.tuple_v.end(), 0.0);
  const std::vector<DecisionTree> pair = {DecisionTree::leaf(false),
                                          DecisionTree::leaf(true)};
  CHECK(valuation(pair, dec, zeros, 1) == 0.0);
}

TEST_CASE("valuation refuses tuples it cannot pin down") {
  // v1's tree branches to an edge test only at layer 2 (the layer-1 path that
  // the tuple fixes takes the other branch), so the edge bit is unpinned and
  // the three-valued run cannot resolve the output.
  std::vector<Clause> clauses;
  clauses.push_back(sorted_clause({{0, true}}));                            // v0 prefix
  clauses.push_back(sorted_clause({{0, false}}));                           // v1 prefix
  clauses.push_back(sorted_clause({{0, false}, {2, true}}));                // !dp0
  clauses.push_back(sorted_clause({{0, false}, {1, true}, {2, false}}));    // dp0 & !e01
  clauses.push_back(sorted_clause({{0, false}, {1, false}, {2, false}}));   // dp0 & e01
  const Decomposition dec = decompose_pool(hand_pool(clauses), 2);

  ValuationTable table;
  table.mode = VMode::exact_tuple;
  table.dims = {uint32_t(dec.bodies[0].size()), uint32_t(dec.bodies[1].size())};
  table.tuple_v.assign(size_t(table.dims[0]) * table.dims[1], 0.0);

  const DecisionTree deep = DecisionTree::split(
      {2, false}, DecisionTree::leaf(false),
      DecisionTree::split({1, false}, DecisionTree::leaf(false), DecisionTree::leaf(true)));
  std::vector<DecisionTree> trees = {DecisionTree::leaf(true), deep};
  CHECK_THROWS_WITH_AS(valuation(trees, dec, table, 2), doctest::Contains("mc_agreement"),
                       error);
  // At l=1 no later layer exists, so the same candidate pair is fine.
  CHECK(valuation(trees, dec, table, 1) == 0.0);

  // When every read past layer 1 is pinned by the tuple itself, l=2 resolves.
  std::vector<Clause> pinned;
  pinned.push_back(sorted_clause({{0, true}}));
  pinned.push_back(sorted_clause({{0, false}}));
  pinned.push_back(sorted_clause({{0, false}, {1, true}}));
  pinned.push_back(sorted_clause({{0, false}, {1, false}}));
  const Decomposition dec2 = decompose_pool(hand_pool(pinned), 2);
  ValuationTable table2;
  table2.mode = VMode::exact_tuple;
  table2.dims = {1, 3};
  table2.tuple_v.assign(3, 0.25);
  const DecisionTree edge_tree = DecisionTree::split({1, false}, DecisionTree::leaf(false),
                                                     DecisionTree::leaf(true));
  std::vector<DecisionTree> trees2 = {DecisionTree::leaf(true), edge_tree};
  CHECK(valuation(trees2, dec2, table2, 2) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("single-tree DP: frozen example and budget behavior") {
  std::vector<Clause> bodies = {Clause{}, sorted_clause({{1, false}}),
                                sorted_clause({{1, true}})};
  std::sort(bodies.begin(), bodies.end(), clause_less);
  std::vector<double> weights(3);
  for (size_t i = 0; i < 3; ++i) {
    if (bodies[i].empty()) weights[i] = 0.0;
    else if (bodies[i].lits[0].neg) weights[i] = -0.5;
    else weights[i] = 0.5;
  }
  const DPResult at1 = tree_dp_single(bodies, weights, 1, 1);
  CHECK(at1.value == 0.0);
  CHECK(at1.tree.serialized() == "(leaf 1)");

  const DPResult at3 = tree_dp_single(bodies, weights, 3, 1);
  CHECK(at3.value == 1.0);
  CHECK(at3.tree.serialized() == "(x1 (leaf 0) (leaf 1))");

  CHECK(tree_dp_single(bodies, weights, 7, 2).value == 1.0);  // nothing more to gain

  CHECK_THROWS_AS(tree_dp_single({}, {}, 3, 1), error);
  CHECK_THROWS_AS(tree_dp_single({sorted_clause({{1, false}})}, {0.5}, 3, 1), error);
}

TEST_CASE("single-tree DP equals exhaustive search") {
  // Closed depth-2 pool over two variables: 9 bodies.
  std::vector<Clause> bodies = {Clause{}};
  for (uint32_t var : {1u, 2u})
    for (int neg = 0; neg < 2; ++neg) bodies.push_back(sorted_clause({{var, neg != 0}}));
  for (int n1 = 0; n1 < 2; ++n1)
    for (int n2 = 0; n2 < 2; ++n2)
      bodies.push_back(sorted_clause({{1, n1 != 0}, {2, n2 != 0}}));
  std::sort(bodies.begin(), bodies.end(), clause_less);
  auto find = [&](const Clause& c) {
    auto it = std::lower_bound(bodies.begin(), bodies.end(), c, clause_less);
    REQUIRE(it != bodies.end());
    REQUIRE(*it == c);
    return size_t(it - bodies.begin());
  };

  // Independent oracle: enumerate every pool tree as its list of leaf bodies.
  using Shape = std::vector<size_t>;
  std::function<std::vector<Shape>(size_t, int, int)> shapes =
      [&](size_t idx, int depth_left, int budget) -> std::vector<Shape> {
    std::vector<Shape> out = {{idx}};
    if (depth_left > 0 && budget >= 3) {
      for (uint32_t var : {1u, 2u}) {
        bool on = false;
        for (const Literal& lit : bodies[idx].lits) on = on || lit.var == var;
        if (on) continue;
        const size_t k0 = find(sorted_clause([&] {
          auto lits = bodies[idx].lits;
          lits.push_back({var, true});
          return lits;
        }()));
        const size_t k1 = find(sorted_clause([&] {
          auto lits = bodies[idx].lits;
          lits.push_back({var, false});
          return lits;
        }()));
        for (const Shape& a : shapes(k0, depth_left - 1, budget - 2))
          for (const Shape& b : shapes(k1, depth_left - 1, budget - 1 - int(2 * a.size() - 1))) {
            if (int(2 * (a.size() + b.size()) - 1) > budget) continue;
            Shape merged = a;
            merged.insert(merged.end(), b.begin(), b.end());
            out.push_back(std::move(merged));
          }
      }
    }
    return out;
  };

  auto rng = fork_rng(23, "weights");
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> w(bodies.size());
    for (double& x : w) x = 2.0 * draw_unit(rng) - 1.0;
    if (trial % 7 == 0) w[trial % w.size()] = 0.0;

    double best = -1;
    for (const Shape& shape : shapes(0, 2, 7)) {
      double value = 0;
      for (size_t leaf : shape) value += std::abs(w[leaf]);
      best = std::max(best, value);
    }

    const DPResult dp = tree_dp_single(bodies, w, 7, 2);
    CHECK(dp.value == doctest::Approx(best).epsilon(1e-12));

    // The returned tree itself attains the value it reports.
    double recomputed = 0;
    std::function<void(int32_t, std::vector<Literal>&)> walk =
        [&](int32_t idx, std::vector<Literal>& path) {
      const auto& node = dp.tree.nodes()[size_t(idx)];
      if (node.is_leaf) {
        const double wl = w[find(sorted_clause(path))];
        recomputed += (node.label ? 1.0 : -1.0) * wl;
        return;
      }
      path.push_back(negate(node.lit));
      walk(node.kid0, path);
      path.back() = node.lit;
      walk(node.kid1, path);
      path.pop_back();
    };
    std::vector<Literal> path;
    walk(0, path);
    CHECK(recomputed == doctest::Approx(dp.value).epsilon(1e-12));

    // Determinism of tie handling.
    CHECK(tree_dp_single(bodies, w, 7, 2).tree.serialized() == dp.tree.serialized());

    // Budget monotonicity.
    double prev = -1;
    for (int budget = 1; budget <= 7; budget += 2) {
      const double v = tree_dp_single(bodies, w, budget, 2).value;
      CHECK(v >= prev - 1e-15);
      prev = v;
    }
  }
}

TEST_CASE("pool tree enumeration is exact and capped") {
  std::vector<Clause> bodies = {Clause{}, sorted_clause({{1, false}}),
                                sorted_clause({{1, true}})};
  std::sort(bodies.begin(), bodies.end(), clause_less);
  const auto trees = enumerate_pool_trees(bodies, 3, 1, 100);
  CHECK(trees.size() == 6);  // two leaves plus four labeled splits on x1
  std::set<std::string> distinct;
  for (const DecisionTree& t : trees) distinct.insert(t.serialized());
  CHECK(distinct.size() == 6);
  CHECK_THROWS_AS(enumerate_pool_trees(bodies, 3, 1, 3), error);
}

TEST_CASE("mc_agreement endpoints and calibration") {
  const LocalIterationModel truth = random_truth(2, 1, 1, 9);
  auto src = oracle_of(truth, 1, 9);
  CHECK(mc_agreement(truth, *src, 512, 4).value == 1.0);

  // Complementing the output vertex's leaves flips every prediction at l=1.
  LocalIterationModel flipped = truth;
  const DecisionTree& t1 = truth.per_vertex[1];
  if (t1.root().is_leaf) {
    flipped.per_vertex[1] = DecisionTree::leaf(!t1.root().label);
  } else {
    flipped.per_vertex[1] = DecisionTree::split(
        t1.root().lit,
        DecisionTree::leaf(!t1.nodes()[size_t(t1.root().kid0)].label),
        DecisionTree::leaf(!t1.nodes()[size_t(t1.root().kid1)].label));
  }
  CHECK(mc_agreement(flipped, *src, 512, 4).value == 0.0);

  const LocalIterationModel truth3 = random_truth(3, 2, 1, 21);
  auto src3 = oracle_of(truth3, 2, 21);
  const LocalIterationModel cand = random_truth(3, 2, 1, 22);
  const double exact = enumerated_agreement(*src3, cand);
  int inside = 0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    const Agreement a = mc_agreement(cand, *src3, 400, seed);
    CHECK(a.samples == 400);
    inside += std::abs(a.value - exact) <= a.half_width ? 1 : 0;
  }
  CHECK(inside >= 95);
}

TEST_CASE("exact-joint distillation recovers a depth-1 truth at n=2") {
  int perfect = 0;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const LocalIterationModel truth = random_truth(2, 1, 1, 100 + seed);
    auto src = oracle_of(truth, 2, 100 + seed);
    DistillConfig cfg;
    cfg.l = 1;
    cfg.rounds = 1;
    cfg.depth = 1;
    cfg.exact_joint = true;
    cfg.v_sample_cap = 50000;
    cfg.mc_samples = 2000;
    cfg.seed = seed;
    DistillReport rep;
    const LocalIterationModel model = distill(*src, cfg, &rep, &truth);
    REQUIRE(rep.truth_agreement.has_value());
    perfect += *rep.truth_agreement == 1.0 ? 1 : 0;
    CHECK(rep.pool_sizes.size() == 2);
    CHECK(rep.probes_issued == rep.pool_sizes[0]);
  }
  CHECK(perfect >= 19);
}

TEST_CASE("joint selection invariants across both modes") {
  const LocalIterationModel truth = random_truth(2, 1, 1, 31);
  auto src = oracle_of(truth, 2, 31);
  const PathPool pool = phase1_exact(*src, 1, 1, 0.1, ProbeConfig{}, 31);
  const Decomposition dec = decompose_pool(pool, 2);

  ValuationOptions vo;
  vo.sample_cap = 50000;
  vo.seed = 31;
  const ValuationTable exact = estimate_v(dec, *src, 1, VMode::exact_tuple, vo);
  const ValuationTable marg = estimate_v(dec, *src, 1, VMode::marginal, vo);

  JointOptions jo;
  jo.size_bound = 3;
  jo.depth_bound = 1;
  jo.mc_samples = 1024;
  jo.seed = 31;
  JointOptions joe = jo;
  joe.exact_joint = true;
  const JointResult ex = joint_select(dec, exact, *src, 1, joe);
  const JointResult sh = joint_select(dec, marg, *src, 1, jo);

  // The exhaustive product can only do better under the same objective.
  CHECK(valuation(ex.trees, dec, exact, 1) >=
        valuation(sh.trees, dec, exact, 1) - 1e-12);

  // The shortlist winner's reported score is reproducible and dominant.
  LocalIterationModel chosen{2, 1, sh.trees};
  CHECK(mc_agreement(chosen, *src, jo.mc_samples, jo.seed).value ==
        doctest::Approx(sh.score).epsilon(1e-12));
  std::vector<uint32_t> pick(2, 0);
  for (pick[0] = 0; pick[0] < sh.candidates[0].size(); ++pick[0])
    for (pick[1] = 0; pick[1] < sh.candidates[1].size(); ++pick[1]) {
      LocalIterationModel combo{2, 1,
                                {sh.candidates[0][pick[0]], sh.candidates[1][pick[1]]}};
      CHECK(mc_agreement(combo, *src, jo.mc_samples, jo.seed).value <= sh.score + 1e-12);
    }
}

TEST_CASE("a constant source distills to a constant model") {
  LocalIterationModel truth;
  truth.n = 3;
  truth.l = 1;
  truth.per_vertex = {DecisionTree::leaf(true), DecisionTree::leaf(true),
                      DecisionTree::leaf(true)};
  auto src = oracle_of(truth, 2, 2);
  DistillConfig cfg;
  cfg.l = 1;
  cfg.rounds = 1;
  cfg.depth = 1;
  cfg.size_bound = 3;
  cfg.v_sample_cap = 20000;
  cfg.mc_samples = 1024;
  cfg.seed = 2;
  DistillReport rep;
  const LocalIterationModel model = distill(*src, cfg, &rep);
  REQUIRE(rep.source_agreement.has_value());
  CHECK(rep.source_agreement->value == 1.0);
  for (uint64_t key = 0; key < 64; ++key) {
    GraphInstance g{3, key & 7, key >> 3};
    CHECK(run_local_iteration(model, g).output);
  }
}

TEST_CASE("distill leaves a partial report behind on failure") {
  const LocalIterationModel truth = random_truth(4, 1, 1, 12);
  auto src = oracle_of(truth, 1, 12);
  DistillConfig cfg;
  cfg.l = 1;
  cfg.rounds = 1;
  cfg.pool_cap = 5;
  DistillReport rep;
  CHECK_THROWS_AS(distill(*src, cfg, &rep), error);
  CHECK(rep.pool_records == 6);
  REQUIRE(!rep.pool_sizes.empty());
  CHECK(rep.pool_sizes[0] == 6);
  CHECK(rep.probes_issued == 0);
}

TEST_CASE("top-k accounting: fraction and monotonicity") {
  const LocalIterationModel truth = random_truth(3, 1, 1, 40);
  auto src = oracle_of(truth, 1, 40);
  uint64_t prev = 0;
  for (uint32_t k : {1u, 2u, 3u, 5u, 1000u}) {
    const PathPool pool = phase1_topk(*src, 2, 1, k, ProbeConfig{}, 40);
    CHECK(pool.probes_issued >= prev);
    prev = pool.probes_issued;
    if (k == 1000) {
      REQUIRE(pool.exhaustive_probes.has_value());
      CHECK(*pool.exhaustive_probes == 86);
      CHECK(pool.probes_issued == 86);
      CHECK(*pool.probe_fraction() == 1.0);
    }
  }
  CHECK_THROWS_AS(phase1_topk(*src, 2, 1, 0, ProbeConfig{}, 40), error);
}

TEST_CASE("shortlist distillation recovers a depth-2 truth at n=4") {
  int perfect = 0;
  for (uint64_t seed = 0; seed < 6; ++seed) {
    const LocalIterationModel truth = random_truth(4, 2, 2, 200 + seed);
    auto src = oracle_of(truth, 4, 200 + seed);
    DistillConfig cfg;
    cfg.l = 2;
    cfg.rounds = 2;
    cfg.depth = 2;
    cfg.v_sample_cap = 50000;
    cfg.mc_samples = 20000;
    cfg.seed = seed;
    DistillReport rep;
    const LocalIterationModel model = distill(*src, cfg, &rep, &truth);
    REQUIRE(rep.truth_agreement.has_value());
    perfect += *rep.truth_agreement == 1.0 ? 1 : 0;
    CHECK(rep.paths_per_vertex.size() == 4);
    CHECK(rep.candidates_per_vertex.size() == 4);
  }
  CHECK(perfect >= 5);
}
