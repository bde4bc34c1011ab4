#include "config.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

namespace litd {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void bad_line(size_t line, const std::string& what) {
  fail(errc::parse, "line " + std::to_string(line) + ": " + what);
}

uint64_t parse_u64(const std::string& v, size_t line, const std::string& key) {
  uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    bad_line(line, key + " expects a non-negative integer, got '" + v + "'");
  return out;
}

int64_t parse_i64(const std::string& v, size_t line, const std::string& key) {
  int64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    bad_line(line, key + " expects an integer, got '" + v + "'");
  return out;
}

double parse_f64(const std::string& v, size_t line, const std::string& key) {
  if (v == "inf" || v == "infinity") return std::numeric_limits<double>::infinity();
  try {
    size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size() || std::isnan(out)) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    bad_line(line, key + " expects a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& v, size_t line, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_line(line, key + " expects true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : v) {
    if (ch == ',') {
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  parts.push_back(trim(cur));
  return parts;
}

std::string format_f64(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

const char* backend_name(Backend b) { return b == Backend::oracle ? "oracle" : "mlp"; }
const char* activation_name(Activation a) {
  return a == Activation::relu ? "relu" : "identity";
}
const char* loss_name(LossKind k) { return k == LossKind::logistic ? "logistic" : "squared"; }
const char* optimizer_name(Optimizer o) { return o == Optimizer::sgd ? "sgd" : "adam"; }

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string raw;
  std::string section = "experiment";
  size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (size_t hash = raw.find_first_of("#;"); hash != std::string::npos)
      raw.erase(hash);
    const std::string s = trim(raw);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') bad_line(line, "unterminated section header");
      section = trim(s.substr(1, s.size() - 2));
      if (section != "experiment" && section != "probe" && section != "mlp" &&
          section != "distill" && section != "separation")
        bad_line(line, "unknown section [" + section + "]");
      continue;
    }
    const size_t eq = s.find('=');
    if (eq == std::string::npos) bad_line(line, "expected key = value");
    const std::string key = trim(s.substr(0, eq));
    const std::string val = trim(s.substr(eq + 1));
    if (key.empty()) bad_line(line, "empty key");

    auto unknown = [&]() {
      bad_line(line, "unknown key '" + key + "' in [" + section + "]");
    };
    if (section == "experiment") {
      if (key == "n") cfg.n = uint32_t(parse_u64(val, line, key));
      else if (key == "l") cfg.l = int(parse_i64(val, line, key));
      else if (key == "depths") {
        cfg.depths.clear();
        for (const std::string& p : split_list(val))
          cfg.depths.push_back(int(parse_i64(p, line, key)));
      } else if (key == "ks") {
        cfg.ks.clear();
        for (const std::string& p : split_list(val))
          cfg.ks.push_back(uint32_t(parse_u64(p, line, key)));
      } else if (key == "backend") {
        if (val == "oracle") cfg.backend = Backend::oracle;
        else if (val == "mlp") cfg.backend = Backend::mlp;
        else bad_line(line, "backend expects oracle or mlp, got '" + val + "'");
      } else if (key == "seeds") cfg.seeds = uint32_t(parse_u64(val, line, key));
      else if (key == "distractors") cfg.distractors = uint32_t(parse_u64(val, line, key));
      else if (key == "noise") cfg.noise = parse_f64(val, line, key);
      else if (key == "accuracy_samples")
        cfg.accuracy_samples = int(parse_i64(val, line, key));
      else if (key == "seed") cfg.seed = parse_u64(val, line, key);
      else if (key == "out_dir") cfg.out_dir = val;
      else unknown();
    } else if (section == "probe") {
      if (key == "tau") cfg.probe.tau = parse_f64(val, line, key);
      else if (key == "epsilon") cfg.probe.epsilon = parse_f64(val, line, key);
      else if (key == "delta") cfg.probe.delta = parse_f64(val, line, key);
      else if (key == "sample_cap") cfg.probe.sample_cap = parse_u64(val, line, key);
      else if (key == "pgd_steps") cfg.probe.pgd_steps = uint32_t(parse_u64(val, line, key));
      else if (key == "step_size") cfg.probe.step_size = parse_f64(val, line, key);
      else if (key == "accept_factor") cfg.probe.accept_factor = parse_f64(val, line, key);
      else unknown();
    } else if (section == "mlp") {
      if (key == "blocks") cfg.mlp.blocks = uint32_t(parse_u64(val, line, key));
      else if (key == "width") cfg.mlp.width = uint32_t(parse_u64(val, line, key));
      else if (key == "activation") {
        if (val == "relu") cfg.mlp.activation = Activation::relu;
        else if (val == "identity") cfg.mlp.activation = Activation::identity;
        else bad_line(line, "activation expects relu or identity, got '" + val + "'");
      } else if (key == "loss") {
        if (val == "logistic") cfg.mlp.loss = LossKind::logistic;
        else if (val == "squared") cfg.mlp.loss = LossKind::squared;
        else bad_line(line, "loss expects logistic or squared, got '" + val + "'");
      } else if (key == "optimizer") {
        if (val == "sgd") cfg.mlp.optimizer = Optimizer::sgd;
        else if (val == "adam") cfg.mlp.optimizer = Optimizer::adam;
        else bad_line(line, "optimizer expects sgd or adam, got '" + val + "'");
      } else if (key == "lr") cfg.mlp.lr = parse_f64(val, line, key);
      else if (key == "lr_decay") cfg.mlp.lr_decay = parse_f64(val, line, key);
      else if (key == "batch") cfg.mlp.batch = uint32_t(parse_u64(val, line, key));
      else if (key == "steps") cfg.mlp.steps = parse_u64(val, line, key);
      else unknown();
    } else if (section == "distill") {
      if (key == "rounds") cfg.distill.rounds = int(parse_i64(val, line, key));
      else if (key == "size_bound") cfg.distill.size_bound = int(parse_i64(val, line, key));
      else if (key == "exact_joint") cfg.distill.exact_joint = parse_bool(val, line, key);
      else if (key == "epsilon") cfg.distill.epsilon = parse_f64(val, line, key);
      else if (key == "delta") cfg.distill.delta = parse_f64(val, line, key);
      else if (key == "probe_delta") cfg.distill.probe_delta = parse_f64(val, line, key);
      else if (key == "pool_cap") cfg.distill.pool_cap = parse_u64(val, line, key);
      else if (key == "dry_run_cap") cfg.distill.dry_run_cap = parse_u64(val, line, key);
      else if (key == "exact_tuple_cap")
        cfg.distill.exact_tuple_cap = parse_u64(val, line, key);
      else if (key == "v_sample_cap") cfg.distill.v_sample_cap = parse_u64(val, line, key);
      else if (key == "shortlist") cfg.distill.shortlist = uint32_t(parse_u64(val, line, key));
      else if (key == "candidates")
        cfg.distill.candidates = uint32_t(parse_u64(val, line, key));
      else if (key == "mc_samples") cfg.distill.mc_samples = parse_u64(val, line, key);
      else if (key == "enum_cap") cfg.distill.enum_cap = parse_u64(val, line, key);
      else if (key == "latent_cache_bits")
        cfg.distill.latent_cache_bits = uint32_t(parse_u64(val, line, key));
      else unknown();
    } else {  // separation
      if (key == "n_lo") cfg.sep_lo = uint32_t(parse_u64(val, line, key));
      else if (key == "n_hi") cfg.sep_hi = uint32_t(parse_u64(val, line, key));
      else unknown();
    }
  }
  validate_config(cfg);
  return cfg;
}

std::string render_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "[experiment]\n";
  out << "n = " << cfg.n << "\n";
  out << "l = " << cfg.l << "\n";
  out << "depths = ";
  for (size_t i = 0; i < cfg.depths.size(); ++i)
    out << (i ? "," : "") << cfg.depths[i];
  out << "\n";
  out << "ks = ";
  for (size_t i = 0; i < cfg.ks.size(); ++i) out << (i ? "," : "") << cfg.ks[i];
  out << "\n";
  out << "backend = " << backend_name(cfg.backend) << "\n";
  out << "seeds = " << cfg.seeds << "\n";
  out << "distractors = " << cfg.distractors << "\n";
  out << "noise = " << format_f64(cfg.noise) << "\n";
  out << "accuracy_samples = " << cfg.accuracy_samples << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "out_dir = " << cfg.out_dir << "\n";
  out << "[probe]\n";
  out << "tau = " << format_f64(cfg.probe.tau) << "\n";
  out << "epsilon = " << format_f64(cfg.probe.epsilon) << "\n";
  out << "delta = " << format_f64(cfg.probe.delta) << "\n";
  out << "sample_cap = " << cfg.probe.sample_cap << "\n";
  out << "pgd_steps = " << cfg.probe.pgd_steps << "\n";
  out << "step_size = " << format_f64(cfg.probe.step_size) << "\n";
  out << "accept_factor = " << format_f64(cfg.probe.accept_factor) << "\n";
  out << "[mlp]\n";
  out << "blocks = " << cfg.mlp.blocks << "\n";
  out << "width = " << cfg.mlp.width << "\n";
  out << "activation = " << activation_name(cfg.mlp.activation) << "\n";
  out << "loss = " << loss_name(cfg.mlp.loss) << "\n";
  out << "optimizer = " << optimizer_name(cfg.mlp.optimizer) << "\n";
  out << "lr = " << format_f64(cfg.mlp.lr) << "\n";
  out << "lr_decay = " << format_f64(cfg.mlp.lr_decay) << "\n";
  out << "batch = " << cfg.mlp.batch << "\n";
  out << "steps = " << cfg.mlp.steps << "\n";
  out << "[distill]\n";
  out << "rounds = " << cfg.distill.rounds << "\n";
  out << "size_bound = " << cfg.distill.size_bound << "\n";
  out << "exact_joint = " << (cfg.distill.exact_joint ? "true" : "false") << "\n";
  out << "epsilon = " << format_f64(cfg.distill.epsilon) << "\n";
  out << "delta = " << format_f64(cfg.distill.delta) << "\n";
  out << "probe_delta = " << format_f64(cfg.distill.probe_delta) << "\n";
  out << "pool_cap = " << cfg.distill.pool_cap << "\n";
  out << "dry_run_cap = " << cfg.distill.dry_run_cap << "\n";
  out << "exact_tuple_cap = " << cfg.distill.exact_tuple_cap << "\n";
  out << "v_sample_cap = " << cfg.distill.v_sample_cap << "\n";
  out << "shortlist = " << cfg.distill.shortlist << "\n";
  out << "candidates = " << cfg.distill.candidates << "\n";
  out << "mc_samples = " << cfg.distill.mc_samples << "\n";
  out << "enum_cap = " << cfg.distill.enum_cap << "\n";
  out << "latent_cache_bits = " << cfg.distill.latent_cache_bits << "\n";
  out << "[separation]\n";
  out << "n_lo = " << cfg.sep_lo << "\n";
  out << "n_hi = " << cfg.sep_hi << "\n";
  return out.str();
}

void validate_config(const ExperimentConfig& cfg) {
  auto check = [&](bool ok, const std::string& msg) {
    if (!ok) fail(errc::invalid_argument, "config: " + msg);
  };
  check(cfg.n >= 2 && cfg.n <= 10, "experiment.n must be in [2, 10]");
  check(cfg.l >= 1 && cfg.l <= 16, "experiment.l must be in [1, 16]");
  check(!cfg.depths.empty(), "experiment.depths must not be empty");
  for (int d : cfg.depths)
    check(d >= 0 && d <= 6, "experiment.depths entries must be in [0, 6]");
  check(!cfg.ks.empty(), "experiment.ks must not be empty");
  for (uint32_t k : cfg.ks)
    check(k <= 100000, "experiment.ks entries must be at most 100000");
  check(cfg.seeds >= 1 && cfg.seeds <= 100, "experiment.seeds must be in [1, 100]");
  check(cfg.distractors <= 64, "experiment.distractors must be at most 64");
  check(cfg.noise >= 0.0, "experiment.noise must be non-negative");
  check(cfg.accuracy_samples >= 1, "experiment.accuracy_samples must be positive");

  check(cfg.probe.tau > 0.0, "probe.tau must be positive");
  check(cfg.probe.epsilon > 0.0 && cfg.probe.epsilon < 1.0,
        "probe.epsilon must be in (0, 1)");
  check(cfg.probe.delta > 0.0 && cfg.probe.delta < 1.0, "probe.delta must be in (0, 1)");
  check(cfg.probe.pgd_steps >= 1, "probe.pgd_steps must be positive");
  check(cfg.probe.step_size >= 0.0, "probe.step_size must be non-negative");
  check(cfg.probe.accept_factor >= 1.0, "probe.accept_factor must be at least 1");

  check(cfg.mlp.blocks >= 1 && cfg.mlp.blocks <= 16, "mlp.blocks must be in [1, 16]");
  check(cfg.mlp.width >= 1 && cfg.mlp.width <= 4096, "mlp.width must be in [1, 4096]");
  check(cfg.mlp.lr > 0.0, "mlp.lr must be positive");
  check(cfg.mlp.lr_decay >= 0.0, "mlp.lr_decay must be non-negative");
  check(cfg.mlp.batch >= 1, "mlp.batch must be positive");
  check(cfg.mlp.steps >= 1, "mlp.steps must be positive");

  check(cfg.distill.rounds >= 1 && cfg.distill.rounds <= 6,
        "distill.rounds must be in [1, 6]");
  check(cfg.distill.size_bound >= 0, "distill.size_bound must be non-negative");
  check(cfg.distill.epsilon > 0.0 && cfg.distill.epsilon < 1.0,
        "distill.epsilon must be in (0, 1)");
  check(cfg.distill.delta > 0.0 && cfg.distill.delta < 1.0,
        "distill.delta must be in (0, 1)");
  check(cfg.distill.probe_delta > 0.0 && cfg.distill.probe_delta < 1.0,
        "distill.probe_delta must be in (0, 1)");
  check(cfg.distill.pool_cap >= 1, "distill.pool_cap must be positive");
  check(cfg.distill.dry_run_cap >= 1, "distill.dry_run_cap must be positive");
  check(cfg.distill.exact_tuple_cap >= 1, "distill.exact_tuple_cap must be positive");
  check(cfg.distill.v_sample_cap >= 1, "distill.v_sample_cap must be positive");
  check(cfg.distill.shortlist >= 1, "distill.shortlist must be positive");
  check(cfg.distill.candidates >= 1, "distill.candidates must be positive");
  check(cfg.distill.mc_samples >= 1, "distill.mc_samples must be positive");
  check(cfg.distill.enum_cap >= 1, "distill.enum_cap must be positive");
  check(cfg.distill.latent_cache_bits <= 30,
        "distill.latent_cache_bits must be at most 30");

  check(cfg.sep_lo >= 3, "separation.n_lo must be at least 3");
  check(cfg.sep_lo <= cfg.sep_hi, "separation.n_lo must not exceed separation.n_hi");
  check(2 * (cfg.sep_hi - 2) + 1 <= 16, "separation.n_hi must be at most 9");
}

uint64_t config_hash(const ExperimentConfig& cfg) {
  return hash_tag(render_config(cfg));
}

}  // namespace litd
