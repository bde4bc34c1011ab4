// Command-line front end over the C API: truth generation, source
// construction, linear-readability probing, distillation, and the
// separation report. Config files use the INI dialect; --set overrides
// individual keys, and LITD_OUT_DIR overrides the output directory.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "litd/litd.h"

namespace {

struct cli_error {
  litd_status status;
  std::string message;
};

[[noreturn]] void die(litd_status status, const std::string& message) {
  throw cli_error{status, message};
}

[[noreturn]] void die_last(litd_status status) {
  die(status, litd_last_error());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) die(LITD_ERR_IO, "cannot read " + path);
  std::ostringstream body;
  body << in.rdbuf();
  return std::move(body).str();
}

void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) die(LITD_ERR_IO, "cannot write " + path);
  out << body;
  if (!out) die(LITD_ERR_IO, "short write to " + path);
}

// Wrap a returned C string so every exit path frees it.
struct owned_string {
  char* ptr = nullptr;
  ~owned_string() { litd_string_free(ptr); }
  std::string str() const { return ptr ? ptr : ""; }
};

struct owned_config {
  litd_config* ptr = nullptr;
  ~owned_config() { litd_config_free(ptr); }
};

struct owned_model {
  litd_model* ptr = nullptr;
  ~owned_model() { litd_model_free(ptr); }
};

struct owned_source {
  litd_source* ptr = nullptr;
  ~owned_source() { litd_source_free(ptr); }
};

// Config file plus "section.key=value" overrides.
void load_config(const std::string& path, const std::vector<std::string>& sets,
                 owned_config& out) {
  const std::string text = path.empty() ? "" : read_file(path);
  if (litd_status st = litd_config_parse(text.c_str(), &out.ptr); st != LITD_OK)
    die_last(st);
  for (const std::string& s : sets) {
    const size_t dot = s.find('.');
    const size_t eq = s.find('=', dot == std::string::npos ? 0 : dot);
    if (dot == std::string::npos || eq == std::string::npos || dot > eq)
      die(LITD_ERR_PARSE, "--set expects section.key=value, got '" + s + "'");
    const std::string section = s.substr(0, dot);
    const std::string key = s.substr(dot + 1, eq - dot - 1);
    const std::string value = s.substr(eq + 1);
    if (litd_status st =
            litd_config_set(out.ptr, section.c_str(), key.c_str(), value.c_str());
        st != LITD_OK)
      die_last(st);
  }
}

void emit(const std::string& body, const std::string& out_path) {
  if (out_path.empty())
    std::cout << body;
  else
    write_file(out_path, body);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string(litd_version()) +
               " - distills graph message passing out of black-box sources"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "config file (INI dialect)");
  app.add_option("--set", sets, "override a config key as section.key=value");

  // gen-truth
  auto* gen = app.add_subcommand("gen-truth", "sample a random ground-truth model");
  uint32_t gen_n = 4;
  int gen_l = 2, gen_depth = 2;
  uint64_t gen_seed = 1;
  std::string gen_out;
  gen->add_option("--n", gen_n, "vertex count");
  gen->add_option("--l", gen_l, "message passing layers");
  gen->add_option("--depth", gen_depth, "per-vertex tree depth");
  gen->add_option("--seed", gen_seed, "rng seed");
  gen->add_option("--out", gen_out, "output file (default stdout)");

  // train-source
  auto* train = app.add_subcommand("train-source", "build the configured backend");
  std::string train_truth, train_out;
  train->add_option("--truth", train_truth, "truth model file")->required();
  train->add_option("--out", train_out, "checkpoint output file (default stdout)");

  // probe-lrh
  auto* lrh = app.add_subcommand("probe-lrh", "linear-readability table");
  std::string lrh_out;
  bool lrh_md = false;
  lrh->add_option("--out", lrh_out, "CSV output file (default stdout)");
  lrh->add_flag("--markdown", lrh_md, "render markdown instead of CSV");

  // distill
  auto* dist = app.add_subcommand("distill", "distill a source into a model");
  std::string dist_source, dist_truth, dist_out;
  int dist_depth = 2;
  uint32_t dist_k = 0;
  dist->add_option("--source", dist_source, "source checkpoint file")->required();
  dist->add_option("--truth", dist_truth, "optional truth model file");
  dist->add_option("--depth", dist_depth, "per-vertex tree depth bound");
  dist->add_option("--k", dist_k, "top-k branch width (0: accept/reject)");
  dist->add_option("--out", dist_out, "distilled model output file");

  // separation
  auto* sep = app.add_subcommand("separation", "tree-size separation report");
  std::string sep_out;
  bool sep_md = false;
  sep->add_option("--out", sep_out, "CSV output file (default stdout)");
  sep->add_flag("--markdown", sep_md, "render markdown instead of CSV");

  // report
  auto* rep = app.add_subcommand("report", "render a driver CSV as markdown");
  std::string rep_csv, rep_out;
  rep->add_option("--csv", rep_csv, "CSV file produced by a driver")->required();
  rep->add_option("--out", rep_out, "output file (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      owned_model m;
      if (litd_status st = litd_model_random(gen_n, gen_l, gen_depth, gen_seed, &m.ptr);
          st != LITD_OK)
        die_last(st);
      owned_string text;
      if (litd_status st = litd_model_render(m.ptr, &text.ptr); st != LITD_OK)
        die_last(st);
      emit(text.str(), gen_out);
    } else if (*train) {
      owned_config cfg;
      load_config(config_path, sets, cfg);
      owned_model truth;
      if (litd_status st = litd_model_parse(read_file(train_truth).c_str(), &truth.ptr);
          st != LITD_OK)
        die_last(st);
      owned_source src;
      if (litd_status st = litd_source_build(truth.ptr, cfg.ptr, &src.ptr);
          st != LITD_OK)
        die_last(st);
      owned_string text;
      if (litd_status st = litd_source_render(src.ptr, &text.ptr); st != LITD_OK)
        die_last(st);
      emit(text.str(), train_out);
    } else if (*lrh) {
      owned_config cfg;
      load_config(config_path, sets, cfg);
      owned_string csv;
      if (litd_status st = litd_run_lrh(cfg.ptr, &csv.ptr); st != LITD_OK)
        die_last(st);
      if (!lrh_md) {
        emit(csv.str(), lrh_out);
      } else {
        owned_string md;
        if (litd_status st = litd_csv_markdown(csv.ptr, &md.ptr); st != LITD_OK)
          die_last(st);
        emit(md.str(), lrh_out);
      }
    } else if (*dist) {
      owned_config cfg;
      load_config(config_path, sets, cfg);
      owned_source src;
      if (litd_status st = litd_source_parse(read_file(dist_source).c_str(), &src.ptr);
          st != LITD_OK)
        die_last(st);
      owned_model truth;
      if (!dist_truth.empty())
        if (litd_status st =
                litd_model_parse(read_file(dist_truth).c_str(), &truth.ptr);
            st != LITD_OK)
          die_last(st);
      owned_model model;
      owned_string report;
      if (litd_status st = litd_distill(src.ptr, cfg.ptr, dist_depth, dist_k, truth.ptr,
                                        &model.ptr, &report.ptr);
          st != LITD_OK)
        die_last(st);
      std::cout << report.str() << "\n";
      if (!dist_out.empty()) {
        owned_string text;
        if (litd_status st = litd_model_render(model.ptr, &text.ptr); st != LITD_OK)
          die_last(st);
        write_file(dist_out, text.str());
      }
    } else if (*sep) {
      owned_config cfg;
      load_config(config_path, sets, cfg);
      owned_string csv;
      if (litd_status st = litd_run_separation(cfg.ptr, &csv.ptr); st != LITD_OK)
        die_last(st);
      if (!sep_md) {
        emit(csv.str(), sep_out);
      } else {
        owned_string md;
        if (litd_status st = litd_csv_markdown(csv.ptr, &md.ptr); st != LITD_OK)
          die_last(st);
        emit(md.str(), sep_out);
      }
    } else if (*rep) {
      owned_string md;
      if (litd_status st = litd_csv_markdown(read_file(rep_csv).c_str(), &md.ptr);
          st != LITD_OK)
        die_last(st);
      emit(md.str(), rep_out);
    }
  } catch (const cli_error& e) {
    nlohmann::json j;
    j["error"] = e.message;
    j["status"] = int(e.status);
    std::cerr << j.dump() << "\n";
    return int(e.status) == 0 ? 1 : int(e.status);
  }
  return 0;
}
