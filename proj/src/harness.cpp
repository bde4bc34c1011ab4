#include "harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "probe.hpp"

namespace litd {

namespace {

std::optional<std::string> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream body;
  body << in.rdbuf();
  return std::move(body).str();
}

void write_file(const std::filesystem::path& p, const std::string& body) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) fail(errc::io, "cannot write " + p.string());
  out << body;
  if (!out) fail(errc::io, "short write to " + p.string());
}

std::string hex16(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Cached sweep cells live at <out>/cells/<name>-<confighash>; an empty
// out_dir disables the cache entirely.
class CellStore {
 public:
  CellStore(const ExperimentConfig& cfg)
      : dir_(effective_out_dir(cfg)), hash_(hex16(config_hash(cfg))) {}

  std::optional<std::string> load(const std::string& name) const {
    if (dir_.empty()) return std::nullopt;
    return read_file(path(name));
  }
  void store(const std::string& name, const std::string& body) const {
    if (dir_.empty()) return;
    write_file(path(name), body);
  }

 private:
  std::filesystem::path path(const std::string& name) const {
    return std::filesystem::path(dir_) / "cells" / (name + "-" + hash_);
  }
  std::string dir_;
  std::string hash_;
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

std::optional<double> to_double(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  try {
    size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::optional<uint64_t> to_u64(const std::string& s) {
  uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string sanitize(std::string s) {
  for (char& ch : s)
    if (ch == ',' || ch == '\n' || ch == '\r') ch = ';';
  return s;
}

// Selector path to u extended by a tree path, in canonical literal order.
Clause conjunction_clause(const Clause& selector, const Clause& body) {
  Clause c = selector;
  c.lits.insert(c.lits.end(), body.lits.begin(), body.lits.end());
  std::sort(c.lits.begin(), c.lits.end(),
            [](const Literal& a, const Literal& b) { return a.var < b.var; });
  return c;
}

double mean_or(const std::vector<uint32_t>& xs, double fallback) {
  if (xs.empty()) return fallback;
  double sum = 0;
  for (uint32_t x : xs) sum += x;
  return sum / double(xs.size());
}

// Enumerates every instance when the space is small, else falls back to the
// shared Monte Carlo estimator.
double agreement_vs_source(const LocalIterationModel& m, const SourceModel& src,
                           int samples, uint64_t seed) {
  const InputEncoding enc = InputEncoding::make(m.n);
  const uint32_t bits = instance_bit_count(enc);
  if (bits <= 16) {
    const uint64_t total = uint64_t(1) << bits;
    const uint64_t init_mask = (uint64_t(1) << m.n) - 1;
    uint64_t agree = 0;
    for (uint64_t key = 0; key < total; ++key) {
      GraphInstance g{m.n, key & init_mask, key >> m.n};
      if (run_local_iteration(m, g).output == src.predict(g)) ++agree;
    }
    return double(agree) / double(total);
  }
  return mc_agreement(m, src, uint64_t(samples), seed).value;
}

std::string lrh_row_line(const LrhRow& r) {
  std::ostringstream out;
  out << r.depth << ',' << format_number(r.norm) << ',' << r.n_conj << ','
      << format_number(r.source_acc) << ',' << format_number(r.avg_train_err) << ','
      << format_number(r.avg_test_err);
  return std::move(out).str();
}

std::optional<LrhRow> parse_lrh_row(const std::string& line) {
  const std::vector<std::string> f = split_csv_line(line);
  if (f.size() != 6) return std::nullopt;
  LrhRow r;
  const auto depth = to_u64(f[0]), conj = to_u64(f[2]);
  const auto norm = to_double(f[1]), acc = to_double(f[3]), tr = to_double(f[4]),
             te = to_double(f[5]);
  if (!depth || !conj || !norm || !acc || !tr || !te) return std::nullopt;
  r.depth = int(*depth);
  r.norm = *norm;
  r.n_conj = uint32_t(*conj);
  r.source_acc = *acc;
  r.avg_train_err = *tr;
  r.avg_test_err = *te;
  return r;
}

std::string e2e_row_line(const E2ERow& r) {
  std::ostringstream out;
  out << r.depth << ',' << r.k << ',' << r.cell << ',' << format_number(r.source_acc)
      << ',' << format_number(r.distill_acc) << ',' << format_number(r.truth_acc) << ','
      << r.probes << ',' << format_number(r.probe_frac) << ','
      << format_number(r.paths_per_vertex) << ','
      << format_number(r.cand_trees_per_vertex) << ',' << r.status;
  return std::move(out).str();
}

std::optional<E2ERow> parse_e2e_row(const std::string& line) {
  const std::vector<std::string> f = split_csv_line(line);
  if (f.size() != 11) return std::nullopt;
  E2ERow r;
  const auto depth = to_u64(f[0]), k = to_u64(f[1]), cell = to_u64(f[2]),
             probes = to_u64(f[6]);
  const auto sa = to_double(f[3]), da = to_double(f[4]), ta = to_double(f[5]),
             pf = to_double(f[7]), pv = to_double(f[8]), cv = to_double(f[9]);
  if (!depth || !k || !cell || !probes || !sa || !da || !ta || !pf || !pv || !cv)
    return std::nullopt;
  if (f[10].empty()) return std::nullopt;
  r.depth = int(*depth);
  r.k = uint32_t(*k);
  r.cell = uint32_t(*cell);
  r.source_acc = *sa;
  r.distill_acc = *da;
  r.truth_acc = *ta;
  r.probes = *probes;
  r.probe_frac = *pf;
  r.paths_per_vertex = *pv;
  r.cand_trees_per_vertex = *cv;
  r.status = f[10];
  return r;
}

}  // namespace

std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

std::string effective_out_dir(const ExperimentConfig& cfg) {
  if (const char* env = std::getenv("LITD_OUT_DIR"); env && *env) return env;
  return cfg.out_dir;
}

std::string provenance_header(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "# " << kVersion << "\n";
  out << "# config " << hex16(config_hash(cfg)) << "\n";
  out << "# seed " << cfg.seed << "\n";
  return std::move(out).str();
}

uint64_t cell_seed(const ExperimentConfig& cfg, int depth, uint32_t cell) {
  const uint64_t base = splitmix64(cfg.seed ^ hash_tag("sweep-cell"));
  return splitmix64(base + (uint64_t(uint32_t(depth)) << 32) + cell);
}

PreparedSource prepare_source(const ExperimentConfig& cfg, int depth, uint32_t cell) {
  const uint64_t master = cell_seed(cfg, depth, cell);
  const InputEncoding enc = InputEncoding::make(cfg.n);
  std::vector<uint32_t> domain;
  for (uint32_t v = enc.id_bits; v < enc.d; ++v) domain.push_back(v);

  PreparedSource prep;
  prep.truth.n = cfg.n;
  prep.truth.l = cfg.l;
  auto rng = fork_rng(master, "truth");
  for (uint32_t v = 0; v < cfg.n; ++v)
    prep.truth.per_vertex.push_back(random_tree(depth, domain, rng));

  if (cfg.backend == Backend::oracle) {
    OracleSpec spec;
    spec.truth = prep.truth;
    spec.distractors = cfg.distractors;
    spec.noise = cfg.noise;
    spec.seed = splitmix64(master ^ hash_tag("oracle"));
    prep.source = build_oracle_source(spec);
  } else {
    MLPConfig mc = cfg.mlp;
    mc.input_dim = 0;  // sized from the instance width
    mc.seed = splitmix64(master ^ hash_tag("mlp"));
    prep.source = train_mlp_source(prep.truth, mc);
  }
  prep.source_acc = source_accuracy(*prep.source, prep.truth, cfg.accuracy_samples,
                                    splitmix64(master ^ hash_tag("source-acc")));
  return prep;
}

LrhTable run_lrh_table(const ExperimentConfig& cfg) {
  const CellStore cells(cfg);
  const double norms[2] = {std::numeric_limits<double>::infinity(), 0.001};

  LrhTable table;
  for (int depth : cfg.depths) {
    const std::string cell_name = "lrh-d" + std::to_string(depth);
    if (auto cached = cells.load(cell_name)) {
      std::istringstream in(*cached);
      std::string line;
      std::vector<LrhRow> rows;
      while (std::getline(in, line))
        if (auto row = parse_lrh_row(line)) rows.push_back(*row);
      if (rows.size() == 2) {
        table.rows.insert(table.rows.end(), rows.begin(), rows.end());
        continue;
      }
    }

    const PreparedSource prep = prepare_source(cfg, depth, 0);
    LatentCache cache(*prep.source, cfg.distill.latent_cache_bits);
    const SelectorPaths sp = selector_paths(cfg.n);
    std::vector<Clause> conjunctions;
    for (uint32_t u = 0; u < cfg.n; ++u)
      for (const Clause& path : root_prefix_paths(prep.truth.per_vertex[u]))
        conjunctions.push_back(conjunction_clause(sp.full[u], path));

    const uint64_t probe_base =
        splitmix64(cell_seed(cfg, depth, 0) ^ hash_tag("lrh-probe"));
    std::vector<LrhRow> rows;
    for (int ni = 0; ni < 2; ++ni) {
      ProbeConfig pc = cfg.probe;
      pc.tau = norms[ni];
      LrhRow row;
      row.depth = depth;
      row.norm = norms[ni];
      row.n_conj = uint32_t(conjunctions.size());
      row.source_acc = prep.source_acc;
      for (size_t j = 0; j < conjunctions.size(); ++j) {
        const uint64_t seed =
            splitmix64(probe_base + uint64_t(ni) * conjunctions.size() + j);
        const ProbeOutcome out = probe_clause(conjunctions[j], *prep.source, cfg.l, pc,
                                              seed, cache.enabled() ? &cache : nullptr);
        row.avg_train_err += out.train_risk;
        row.avg_test_err += out.risk;
      }
      row.avg_train_err /= double(std::max<size_t>(1, conjunctions.size()));
      row.avg_test_err /= double(std::max<size_t>(1, conjunctions.size()));
      rows.push_back(row);
    }
    cells.store(cell_name, lrh_row_line(rows[0]) + "\n" + lrh_row_line(rows[1]) + "\n");
    table.rows.insert(table.rows.end(), rows.begin(), rows.end());
  }

  std::ostringstream csv;
  csv << provenance_header(cfg);
  csv << "depth,norm,n_conj,source_acc,avg_train_err,avg_test_err\n";
  for (const LrhRow& row : table.rows) csv << lrh_row_line(row) << "\n";
  table.csv = std::move(csv).str();
  return table;
}

E2ETable run_e2e_table(const ExperimentConfig& cfg) {
  const CellStore cells(cfg);
  E2ETable table;
  // Sources are shared across the k sweep (and rebuilt at most once per
  // (depth, cell)) so paired comparisons see identical truths.
  std::map<std::pair<int, uint32_t>, PreparedSource> prepared;

  for (int depth : cfg.depths) {
    for (uint32_t k : cfg.ks) {
      for (uint32_t cell = 0; cell < cfg.seeds; ++cell) {
        const std::string cell_name = "e2e-d" + std::to_string(depth) + "-k" +
                                      std::to_string(k) + "-s" + std::to_string(cell);
        if (auto cached = cells.load(cell_name)) {
          std::string line = *cached;
          if (size_t nl = line.find('\n'); nl != std::string::npos) line.resize(nl);
          if (auto row = parse_e2e_row(line)) {
            table.rows.push_back(*row);
            continue;
          }
        }

        auto it = prepared.find({depth, cell});
        if (it == prepared.end())
          it = prepared.emplace(std::make_pair(depth, cell),
                                prepare_source(cfg, depth, cell)).first;
        const PreparedSource& prep = it->second;

        E2ERow row;
        row.depth = depth;
        row.k = k;
        row.cell = cell;
        row.source_acc = prep.source_acc;

        DistillConfig dc = cfg.distill;
        dc.l = cfg.l;
        dc.depth = depth;
        dc.k = k;
        dc.probe = cfg.probe;
        dc.seed = splitmix64(cell_seed(cfg, depth, cell) ^ hash_tag("distill"));

        DistillReport rep;
        try {
          const LocalIterationModel model = distill(*prep.source, dc, &rep, &prep.truth);
          row.distill_acc = agreement_vs_source(
              model, *prep.source, cfg.accuracy_samples,
              splitmix64(cell_seed(cfg, depth, cell) ^ hash_tag("distill-acc")));
          row.truth_acc = rep.truth_agreement.value_or(-1.0);
          row.status = "ok";
        } catch (const error& e) {
          row.status = sanitize(e.what());
        }
        row.probes = rep.probes_issued;
        row.probe_frac = rep.probe_fraction.value_or(-1.0);
        row.paths_per_vertex = mean_or(rep.paths_per_vertex, -1.0);
        row.cand_trees_per_vertex = mean_or(rep.candidates_per_vertex, -1.0);

        cells.store(cell_name, e2e_row_line(row) + "\n");
        table.rows.push_back(row);
      }
    }
  }

  std::ostringstream csv;
  csv << provenance_header(cfg);
  csv << "depth,k,seed,source_acc,distill_acc,truth_acc,probes,probe_frac,"
         "paths_per_vertex,cand_trees_per_vertex,status\n";
  for (const E2ERow& row : table.rows) csv << e2e_row_line(row) << "\n";
  table.csv = std::move(csv).str();
  return table;
}

SeparationTable run_separation(const ExperimentConfig& cfg) {
  const CellStore cells(cfg);
  const std::string cell_name =
      "sep-" + std::to_string(cfg.sep_lo) + "-" + std::to_string(cfg.sep_hi);

  SeparationTable table;
  bool loaded = false;
  if (auto cached = cells.load(cell_name)) {
    std::istringstream in(*cached);
    std::string line;
    std::getline(in, line);  // header
    std::vector<SeparationRow> rows;
    bool ok = true;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const std::vector<std::string> f = split_csv_line(line);
      if (f.size() != 6) {
        ok = false;
        break;
      }
      const auto n = to_u64(f[0]), total = to_u64(f[1]), neg = to_u64(f[2]),
                 leaves = to_u64(f[3]), bound = to_u64(f[4]);
      const auto agree = to_double(f[5]);
      if (!n || !total || !neg || !leaves || !bound || !agree) {
        ok = false;
        break;
      }
      SeparationRow row;
      row.n = uint32_t(*n);
      row.total = *total;
      row.negatives = *neg;
      row.min_leaves = int(*leaves);
      row.lower_bound = *bound;
      row.dp_agreement = *agree;
      if (!rows.empty())
        row.growth = double(row.min_leaves) / double(rows.back().min_leaves);
      rows.push_back(row);
    }
    if (ok && rows.size() == size_t(cfg.sep_hi - cfg.sep_lo + 1)) {
      table.rows = std::move(rows);
      loaded = true;
    }
  }
  if (!loaded) {
    table.rows = separation_report(cfg.sep_lo, cfg.sep_hi);
    cells.store(cell_name, separation_csv(table.rows));
  }
  table.csv = provenance_header(cfg) + separation_csv(table.rows);
  return table;
}

std::string csv_to_markdown(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  std::ostringstream out;
  bool header_done = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      out << line.substr(line.size() > 1 && line[1] == ' ' ? 2 : 1) << "\n";
      continue;
    }
    const std::vector<std::string> fields = split_csv_line(line);
    out << "|";
    for (const std::string& f : fields) out << ' ' << f << " |";
    out << "\n";
    if (!header_done) {
      out << "|";
      for (size_t i = 0; i < fields.size(); ++i) out << " --- |";
      out << "\n";
      header_done = true;
    }
  }
  return std::move(out).str();
}

}  // namespace litd
