#include "source.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace litd {
namespace {

bool instance_bit(const GraphInstance& g, uint32_t pos, const InputEncoding& enc) {
  if (pos < enc.n) return (g.init >> pos) & 1u;
  return (g.adj >> (pos - enc.n)) & 1u;
}

// Key=value scanners for the checkpoint grammar.
std::vector<std::pair<std::string, std::string>> split_pairs(const std::string& line) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) {
    auto eq = tok.find('=');
    if (eq == std::string::npos || eq == 0)
      fail(errc::parse, "source checkpoint: expected key=value, got '" + tok + "'");
    out.emplace_back(tok.substr(0, eq), tok.substr(eq + 1));
  }
  return out;
}

uint64_t parse_u64(const std::string& key, const std::string& text) {
  try {
    size_t used = 0;
    uint64_t v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    fail(errc::parse, "source checkpoint: bad integer for " + key + ": '" + text + "'");
  }
}

double parse_f64(const std::string& key, const std::string& text) {
  try {
    size_t used = 0;
    double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    fail(errc::parse, "source checkpoint: bad number for " + key + ": '" + text + "'");
  }
}

const char* activation_name(Activation a) { return a == Activation::relu ? "relu" : "identity"; }
const char* loss_name(LossKind k) { return k == LossKind::logistic ? "logistic" : "squared"; }

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  fail(errc::parse, "source checkpoint: unknown activation '" + s + "'");
}

LossKind parse_loss(const std::string& s) {
  if (s == "logistic") return LossKind::logistic;
  if (s == "squared") return LossKind::squared;
  fail(errc::parse, "source checkpoint: unknown loss '" + s + "'");
}

}  // namespace

Eigen::VectorXd instance_features(const GraphInstance& g) {
  const InputEncoding enc = InputEncoding::make(g.n);
  const uint32_t dim = instance_bit_count(enc);
  Eigen::VectorXd x(dim);
  for (uint32_t i = 0; i < dim; ++i) x[i] = instance_bit(g, i, enc) ? 1.0 : -1.0;
  return x;
}

// ---------------------------------------------------------------------------

OracleSource::OracleSource(OracleSpec spec)
    : spec_(std::move(spec)), enc_(spec_.truth.encoding()) {
  if (spec_.truth.l < 1)
    fail(errc::invalid_argument, "oracle source: model needs at least one iteration");
  if (spec_.noise < 0.0) fail(errc::invalid_argument, "oracle source: negative noise");

  planted_ = root_prefix_paths(spec_.truth.composed());

  // Decoy supports avoid every instance bit a planted feature can read, so
  // no probe target correlates with them.
  std::vector<char> used(instance_bit_count(enc_), 0);
  for (const Clause& s : planted_)
    for (uint32_t b : dependency_set(s, spec_.truth.l, enc_, uint32_t(s.size())))
      used[b] = 1;
  std::vector<uint32_t> free_bits;
  for (uint32_t b = 0; b < used.size(); ++b)
    if (!used[b]) free_bits.push_back(b);
  if (spec_.distractors > 0 && free_bits.empty())
    fail(errc::resource, "oracle source: distractor bit budget exhausted");

  for (uint32_t k = 0; k < spec_.distractors; ++k) {
    auto rng = fork_rng(spec_.seed, "distractor", k);
    uint64_t len = 1 + draw_below(rng, std::min<uint64_t>(3, free_bits.size()));
    std::vector<uint32_t> bag = free_bits;
    std::vector<uint32_t> sup;
    for (uint64_t i = 0; i < len; ++i) {
      uint64_t j = draw_below(rng, bag.size());
      sup.push_back(bag[j]);
      bag[j] = bag.back();
      bag.pop_back();
    }
    std::sort(sup.begin(), sup.end());
    supports_.push_back(std::move(sup));
  }
}

bool OracleSource::predict(const GraphInstance& g) const {
  return run_local_iteration(spec_.truth, g).output;
}

uint32_t OracleSource::latent_dim() const {
  return uint32_t(planted_.size() + supports_.size());
}

double OracleSource::norm_bound() const {
  return (1.0 + spec_.noise) * std::sqrt(double(latent_dim()));
}

Eigen::VectorXd OracleSource::latent(const GraphInstance& g) const {
  if (g.n != enc_.n) fail(errc::invalid_argument, "oracle source: instance size mismatch");
  Eigen::VectorXd out(latent_dim());
  Eigen::Index j = 0;
  for (const Clause& s : planted_)
    out[j++] = feature_value(s, g, spec_.truth.l, enc_) ? 1.0 : 0.0;
  for (const auto& sup : supports_) {
    uint32_t parity = 0;
    for (uint32_t b : sup) parity ^= uint32_t(instance_bit(g, b, enc_));
    out[j++] = parity ? 1.0 : 0.0;
  }
  if (spec_.noise > 0.0) {
    // Jitter is a fixed function of the instance, not of query order.
    uint64_t mix = splitmix64(g.init ^ splitmix64(g.adj ^ 0x6c62272e07bb0142ULL));
    auto rng = fork_rng(spec_.seed, "jitter", mix);
    for (Eigen::Index i = 0; i < out.size(); ++i)
      out[i] += spec_.noise * (2.0 * draw_unit(rng) - 1.0);
  }
  return out;
}

std::string OracleSource::checkpoint() const {
  std::ostringstream out;
  out << "litd-source 1\n"
      << "kind=oracle\n";
  out << "distractors=" << spec_.distractors << " seed=" << spec_.seed << " noise="
      << std::setprecision(17) << spec_.noise << "\n";
  out << save_model(spec_.truth);
  return out.str();
}

std::unique_ptr<OracleSource> build_oracle_source(OracleSpec spec) {
  return std::make_unique<OracleSource>(std::move(spec));
}

// ---------------------------------------------------------------------------

std::string TrainedSource::checkpoint() const {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "litd-source 1\n"
      << "kind=mlp\n"
      << "n=" << n_ << " bound=" << bound_ << "\n";
  out << "net input_dim=" << net_.input_dim << " blocks=" << net_.blocks
      << " width=" << net_.width << " activation=" << activation_name(net_.activation)
      << " loss=" << loss_name(net_.loss) << "\n";
  auto dump = [&](const std::string& name, const Eigen::MatrixXd& m) {
    out << "param " << name << " " << m.rows() << " " << m.cols();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) out << " " << m(r, c);
    out << "\n";
  };
  dump("w_in", net_.w_in);
  dump("b_in", net_.b_in);
  for (uint32_t k = 0; k < net_.blocks; ++k) {
    dump("w_blk" + std::to_string(k), net_.w_blk[k]);
    dump("b_blk" + std::to_string(k), net_.b_blk[k]);
  }
  dump("w_out", net_.w_out);
  dump("b_out", Eigen::MatrixXd::Constant(1, 1, net_.b_out));
  return out.str();
}

std::unique_ptr<TrainedSource> train_mlp_source(const LocalIterationModel& truth,
                                                MLPConfig cfg, TrainReport* report) {
  const InputEncoding enc = truth.encoding();
  const uint32_t dim = instance_bit_count(enc);
  if (cfg.input_dim == 0) cfg.input_dim = dim;
  if (cfg.input_dim != dim)
    fail(errc::invalid_argument, "train source: input_dim does not match the instance width");
  if (cfg.batch == 0) fail(errc::invalid_argument, "train source: batch must be positive");

  auto rng_init = fork_rng(cfg.seed, "init");
  ResidualNet net = ResidualNet::init(cfg, rng_init);

  const int holdout = 2048;
  auto rng_hold = fork_rng(cfg.seed, "heldout");
  Eigen::MatrixXd hx(dim, holdout);
  Eigen::VectorXd hy(holdout);
  for (int i = 0; i < holdout; ++i) {
    GraphInstance g = random_instance(truth.n, rng_hold);
    hx.col(i) = instance_features(g);
    hy[i] = run_local_iteration(truth, g).output ? 1.0 : 0.0;
  }

  auto rng_train = fork_rng(cfg.seed, "train");
  AdamState adam = AdamState::zeros_like(net);
  NetGradients grads;
  Eigen::MatrixXd X(dim, cfg.batch);
  Eigen::VectorXd y(cfg.batch);
  for (uint64_t t = 0; t < cfg.steps; ++t) {
    for (uint32_t b = 0; b < cfg.batch; ++b) {
      GraphInstance g = random_instance(truth.n, rng_train);
      X.col(b) = instance_features(g);
      y[b] = run_local_iteration(truth, g).output ? 1.0 : 0.0;
    }
    net_loss_and_gradients(net, X, y, &grads);
    double lr = cfg.lr / (1.0 + cfg.lr_decay * (double(t) / double(cfg.steps)));
    if (cfg.optimizer == Optimizer::adam)
      apply_adam(net, grads, adam, lr);
    else
      apply_sgd(net, grads, lr);
  }

  int hits = 0;
  double max_norm = 0.0;
  for (int i = 0; i < holdout; ++i) {
    Eigen::VectorXd x = hx.col(i);
    hits += int((net.score(x) >= 0.5) == (hy[i] >= 0.5));
    max_norm = std::max(max_norm, net.latent(x).norm());
  }
  if (report) {
    report->final_loss = net_loss_and_gradients(net, hx, hy, nullptr);
    report->heldout_accuracy = double(hits) / holdout;
    report->steps = cfg.steps;
  }
  return std::make_unique<TrainedSource>(truth.n, std::move(net), 1.1 * max_norm);
}

double source_accuracy(const SourceModel& src, const LocalIterationModel& truth,
                       int samples, uint64_t seed) {
  if (samples <= 0) fail(errc::invalid_argument, "source accuracy: needs samples");
  auto rng = fork_rng(seed, "source-acc");
  int hits = 0;
  for (int i = 0; i < samples; ++i) {
    GraphInstance g = random_instance(truth.n, rng);
    hits += int(src.predict(g) == run_local_iteration(truth, g).output);
  }
  return double(hits) / samples;
}

// ---------------------------------------------------------------------------

std::unique_ptr<SourceModel> load_source(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "litd-source 1")
    fail(errc::parse, "source checkpoint: bad header");
  if (!std::getline(in, line)) fail(errc::parse, "source checkpoint: missing kind");

  if (line == "kind=oracle") {
    if (!std::getline(in, line)) fail(errc::parse, "source checkpoint: missing oracle fields");
    OracleSpec spec;
    for (const auto& [key, value] : split_pairs(line)) {
      if (key == "distractors")
        spec.distractors = uint32_t(parse_u64(key, value));
      else if (key == "seed")
        spec.seed = parse_u64(key, value);
      else if (key == "noise")
        spec.noise = parse_f64(key, value);
      else
        fail(errc::parse, "source checkpoint: unknown oracle field '" + key + "'");
    }
    std::ostringstream rest;
    rest << in.rdbuf();
    spec.truth = load_model(rest.str());
    return build_oracle_source(std::move(spec));
  }

  if (line != "kind=mlp") fail(errc::parse, "source checkpoint: unknown kind line '" + line + "'");

  if (!std::getline(in, line)) fail(errc::parse, "source checkpoint: missing model fields");
  uint32_t n = 0;
  double bound = -1.0;
  for (const auto& [key, value] : split_pairs(line)) {
    if (key == "n")
      n = uint32_t(parse_u64(key, value));
    else if (key == "bound")
      bound = parse_f64(key, value);
    else
      fail(errc::parse, "source checkpoint: unknown model field '" + key + "'");
  }
  if (n == 0 || bound < 0.0) fail(errc::parse, "source checkpoint: model fields incomplete");

  if (!std::getline(in, line)) fail(errc::parse, "source checkpoint: missing net line");
  std::istringstream net_line(line);
  std::string tag;
  net_line >> tag;
  if (tag != "net") fail(errc::parse, "source checkpoint: expected net line");
  std::string fields;
  std::getline(net_line, fields);
  MLPConfig cfg;
  bool have_dim = false;
  for (const auto& [key, value] : split_pairs(fields)) {
    if (key == "input_dim") {
      cfg.input_dim = uint32_t(parse_u64(key, value));
      have_dim = true;
    } else if (key == "blocks")
      cfg.blocks = uint32_t(parse_u64(key, value));
    else if (key == "width")
      cfg.width = uint32_t(parse_u64(key, value));
    else if (key == "activation")
      cfg.activation = parse_activation(value);
    else if (key == "loss")
      cfg.loss = parse_loss(value);
    else
      fail(errc::parse, "source checkpoint: unknown net field '" + key + "'");
  }
  if (!have_dim || cfg.width == 0) fail(errc::parse, "source checkpoint: net fields incomplete");

  ResidualNet net = ResidualNet::zeros(cfg);
  auto read_param = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols,
                        double* dst_row_major) {
    if (!std::getline(in, line)) fail(errc::parse, "source checkpoint: missing param " + name);
    std::istringstream ps(line);
    std::string head, got;
    Eigen::Index r = 0, c = 0;
    ps >> head >> got >> r >> c;
    if (head != "param" || got != name || r != rows || c != cols)
      fail(errc::parse, "source checkpoint: malformed param line for " + name);
    for (Eigen::Index i = 0; i < rows * cols; ++i) {
      if (!(ps >> dst_row_major[i]))
        fail(errc::parse, "source checkpoint: truncated values for " + name);
    }
    double extra;
    if (ps >> extra) fail(errc::parse, "source checkpoint: surplus values for " + name);
  };
  auto read_mat = [&](const std::string& name, Eigen::MatrixXd& m) {
    std::vector<double> buf(size_t(m.size()));
    read_param(name, m.rows(), m.cols(), buf.data());
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = buf[size_t(r * m.cols() + c)];
  };
  auto read_vec = [&](const std::string& name, Eigen::VectorXd& v) {
    read_param(name, v.size(), 1, v.data());
  };
  read_mat("w_in", net.w_in);
  read_vec("b_in", net.b_in);
  for (uint32_t k = 0; k < net.blocks; ++k) {
    read_mat("w_blk" + std::to_string(k), net.w_blk[k]);
    read_vec("b_blk" + std::to_string(k), net.b_blk[k]);
  }
  read_vec("w_out", net.w_out);
  read_param("b_out", 1, 1, &net.b_out);
  while (std::getline(in, line))
    if (line.find_first_not_of(" \t") != std::string::npos)
      fail(errc::parse, "source checkpoint: trailing content after parameters");
  const InputEncoding enc = InputEncoding::make(n);
  if (cfg.input_dim != instance_bit_count(enc))
    fail(errc::parse, "source checkpoint: input_dim does not match n");
  return std::make_unique<TrainedSource>(n, std::move(net), bound);
}

}  // namespace litd
