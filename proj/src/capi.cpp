#include "litd/litd.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "config.hpp"
#include "harness.hpp"
#include "json.hpp"
#include "probe.hpp"

using nlohmann::json;

// The C enum mirrors errc value for value so codes pass through unchanged.
static_assert(LITD_OK == int(litd::errc::ok));
static_assert(LITD_ERR_INVALID_ARGUMENT == int(litd::errc::invalid_argument));
static_assert(LITD_ERR_PARSE == int(litd::errc::parse));
static_assert(LITD_ERR_RESOURCE == int(litd::errc::resource));
static_assert(LITD_ERR_INFEASIBLE == int(litd::errc::infeasible));
static_assert(LITD_ERR_ALIGNMENT == int(litd::errc::alignment));
static_assert(LITD_ERR_TRAIN == int(litd::errc::train));
static_assert(LITD_ERR_UNDEFINED_VALUE == int(litd::errc::undefined_value));
static_assert(LITD_ERR_IO == int(litd::errc::io));

struct litd_config {
  litd::ExperimentConfig cfg;
};
struct litd_model {
  litd::LocalIterationModel model;
};
struct litd_source {
  std::unique_ptr<litd::SourceModel> src;
};

namespace {

thread_local std::string g_last_error;

template <typename Fn>
litd_status guarded(Fn&& fn) {
  try {
    fn();
    return LITD_OK;
  } catch (const litd::error& e) {
    g_last_error = e.what();
    return litd_status(int(e.code()));
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return LITD_ERR_RESOURCE;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return LITD_ERR_INVALID_ARGUMENT;
  }
}

char* copy_out(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void require(bool ok, const char* what) {
  if (!ok) litd::fail(litd::errc::invalid_argument, what);
}

litd::GraphInstance make_instance(const litd::LocalIterationModel& m, uint64_t init,
                                  uint64_t adj) {
  const litd::InputEncoding enc = litd::InputEncoding::make(m.n);
  if (m.n < 64 && (init >> m.n) != 0)
    litd::fail(litd::errc::invalid_argument, "init sets bits past the vertex count");
  if (enc.edge_bits < 64 && (adj >> enc.edge_bits) != 0)
    litd::fail(litd::errc::invalid_argument, "adj sets bits past the edge slots");
  return litd::GraphInstance{m.n, init, adj};
}

litd::GraphInstance make_instance_n(uint32_t n, uint64_t init, uint64_t adj) {
  litd::LocalIterationModel stub;
  stub.n = n;
  return make_instance(stub, init, adj);
}

}  // namespace

extern "C" {

const char* litd_version(void) { return litd::kVersion; }

const char* litd_last_error(void) { return g_last_error.c_str(); }

void litd_string_free(char* s) { std::free(s); }

litd_status litd_config_parse(const char* text, litd_config** out) {
  return guarded([&] {
    require(text && out, "null argument");
    auto handle = std::make_unique<litd_config>();
    handle->cfg = litd::parse_config(text);
    *out = handle.release();
  });
}

litd_status litd_config_render(const litd_config* cfg, char** out_text) {
  return guarded([&] {
    require(cfg && out_text, "null argument");
    *out_text = copy_out(litd::render_config(cfg->cfg));
  });
}

litd_status litd_config_set(litd_config* cfg, const char* section, const char* key,
                            const char* value) {
  return guarded([&] {
    require(cfg && section && key && value, "null argument");
    // The dialect is last-wins, so an appended override line re-parses into
    // the updated, revalidated config.
    const std::string text = litd::render_config(cfg->cfg) + "[" + section + "]\n" +
                             key + " = " + value + "\n";
    cfg->cfg = litd::parse_config(text);
  });
}

uint64_t litd_config_hash(const litd_config* cfg) {
  return cfg ? litd::config_hash(cfg->cfg) : 0;
}

void litd_config_free(litd_config* cfg) { delete cfg; }

litd_status litd_model_random(uint32_t n, int l, int depth, uint64_t seed,
                              litd_model** out) {
  return guarded([&] {
    require(out, "null argument");
    require(n >= 2 && n <= 10, "n must be in [2, 10]");
    require(l >= 1 && l <= 16, "l must be in [1, 16]");
    require(depth >= 0 && depth <= 6, "depth must be in [0, 6]");
    const litd::InputEncoding enc = litd::InputEncoding::make(n);
    std::vector<uint32_t> domain;
    for (uint32_t v = enc.id_bits; v < enc.d; ++v) domain.push_back(v);
    auto handle = std::make_unique<litd_model>();
    handle->model.n = n;
    handle->model.l = l;
    auto rng = litd::fork_rng(seed, "model-random");
    for (uint32_t v = 0; v < n; ++v)
      handle->model.per_vertex.push_back(litd::random_tree(depth, domain, rng));
    *out = handle.release();
  });
}

litd_status litd_model_parse(const char* text, litd_model** out) {
  return guarded([&] {
    require(text && out, "null argument");
    auto handle = std::make_unique<litd_model>();
    handle->model = litd::load_model(text);
    *out = handle.release();
  });
}

litd_status litd_model_render(const litd_model* m, char** out_text) {
  return guarded([&] {
    require(m && out_text, "null argument");
    *out_text = copy_out(litd::save_model(m->model));
  });
}

litd_status litd_model_run(const litd_model* m, uint64_t init, uint64_t adj,
                           int* out_bit) {
  return guarded([&] {
    require(m && out_bit, "null argument");
    const litd::GraphInstance g = make_instance(m->model, init, adj);
    *out_bit = litd::run_local_iteration(m->model, g).output ? 1 : 0;
  });
}

litd_status litd_model_agreement(const litd_model* a, const litd_model* b,
                                 double* out) {
  return guarded([&] {
    require(a && b && out, "null argument");
    *out = litd::exact_agreement(a->model, b->model);
  });
}

void litd_model_free(litd_model* m) { delete m; }

litd_status litd_source_build(const litd_model* truth, const litd_config* cfg,
                              litd_source** out) {
  return guarded([&] {
    require(truth && cfg && out, "null argument");
    const litd::ExperimentConfig& c = cfg->cfg;
    auto handle = std::make_unique<litd_source>();
    if (c.backend == litd::Backend::oracle) {
      litd::OracleSpec spec;
      spec.truth = truth->model;
      spec.distractors = c.distractors;
      spec.noise = c.noise;
      spec.seed = litd::splitmix64(c.seed ^ litd::hash_tag("oracle"));
      handle->src = litd::build_oracle_source(spec);
    } else {
      litd::MLPConfig mc = c.mlp;
      mc.input_dim = 0;
      mc.seed = litd::splitmix64(c.seed ^ litd::hash_tag("mlp"));
      handle->src = litd::train_mlp_source(truth->model, mc);
    }
    *out = handle.release();
  });
}

litd_status litd_source_parse(const char* checkpoint, litd_source** out) {
  return guarded([&] {
    require(checkpoint && out, "null argument");
    auto handle = std::make_unique<litd_source>();
    handle->src = litd::load_source(checkpoint);
    *out = handle.release();
  });
}

litd_status litd_source_render(const litd_source* s, char** out_checkpoint) {
  return guarded([&] {
    require(s && out_checkpoint, "null argument");
    *out_checkpoint = copy_out(s->src->checkpoint());
  });
}

litd_status litd_source_predict(const litd_source* s, uint64_t init, uint64_t adj,
                                int* out_bit) {
  return guarded([&] {
    require(s && out_bit, "null argument");
    const litd::GraphInstance g = make_instance_n(s->src->n(), init, adj);
    *out_bit = s->src->predict(g) ? 1 : 0;
  });
}

litd_status litd_source_accuracy(const litd_source* s, const litd_model* truth,
                                 int samples, uint64_t seed, double* out) {
  return guarded([&] {
    require(s && truth && out, "null argument");
    require(samples >= 1, "samples must be positive");
    *out = litd::source_accuracy(*s->src, truth->model, samples, seed);
  });
}

void litd_source_free(litd_source* s) { delete s; }

litd_status litd_probe_clause(const litd_source* s, const char* clause, int l,
                              double tau, double epsilon, double delta,
                              uint64_t sample_cap, uint64_t seed,
                              double* out_test_risk, double* out_train_risk) {
  return guarded([&] {
    require(s && clause, "null argument");
    litd::ProbeConfig pc;
    pc.tau = tau > 0 ? tau : std::numeric_limits<double>::infinity();
    pc.epsilon = epsilon;
    pc.delta = delta;
    pc.sample_cap = sample_cap;
    const litd::Clause c = litd::parse_clause(clause);
    const litd::ProbeOutcome outcome =
        litd::probe_clause(c, *s->src, l, pc, seed, nullptr);
    if (out_test_risk) *out_test_risk = outcome.risk;
    if (out_train_risk) *out_train_risk = outcome.train_risk;
  });
}

litd_status litd_distill(const litd_source* src, const litd_config* cfg, int depth,
                         uint32_t k, const litd_model* truth, litd_model** out_model,
                         char** out_report) {
  return guarded([&] {
    require(src && cfg, "null argument");
    const litd::ExperimentConfig& c = cfg->cfg;
    litd::DistillConfig dc = c.distill;
    dc.l = c.l;
    dc.depth = depth;
    dc.k = k;
    dc.probe = c.probe;
    dc.seed = litd::splitmix64(c.seed ^ litd::hash_tag("distill"));
    require(depth >= 0 && depth <= 6, "depth must be in [0, 6]");

    litd::DistillReport rep;
    const litd::LocalIterationModel model =
        litd::distill(*src->src, dc, &rep, truth ? &truth->model : nullptr);

    if (out_report) {
      json j;
      j["pool_sizes"] = rep.pool_sizes;
      j["pool_records"] = rep.pool_records;
      j["probes_issued"] = rep.probes_issued;
      if (rep.exhaustive_probes) j["exhaustive_probes"] = *rep.exhaustive_probes;
      if (rep.probe_fraction) j["probe_fraction"] = *rep.probe_fraction;
      j["paths_per_vertex"] = rep.paths_per_vertex;
      j["candidates_per_vertex"] = rep.candidates_per_vertex;
      j["v_samples"] = rep.v_samples;
      j["v_accuracy"] = rep.v_accuracy;
      j["selection_score"] = rep.selection_score;
      if (rep.source_agreement) {
        j["source_agreement"] = rep.source_agreement->value;
        j["source_agreement_half_width"] = rep.source_agreement->half_width;
      }
      if (rep.truth_agreement) j["truth_agreement"] = *rep.truth_agreement;
      *out_report = copy_out(j.dump(2));
    }
    if (out_model) {
      auto handle = std::make_unique<litd_model>();
      handle->model = model;
      *out_model = handle.release();
    }
  });
}

litd_status litd_run_lrh(const litd_config* cfg, char** out_csv) {
  return guarded([&] {
    require(cfg && out_csv, "null argument");
    *out_csv = copy_out(litd::run_lrh_table(cfg->cfg).csv);
  });
}

litd_status litd_run_e2e(const litd_config* cfg, char** out_csv) {
  return guarded([&] {
    require(cfg && out_csv, "null argument");
    *out_csv = copy_out(litd::run_e2e_table(cfg->cfg).csv);
  });
}

litd_status litd_run_separation(const litd_config* cfg, char** out_csv) {
  return guarded([&] {
    require(cfg && out_csv, "null argument");
    *out_csv = copy_out(litd::run_separation(cfg->cfg).csv);
  });
}

litd_status litd_csv_markdown(const char* csv, char** out_md) {
  return guarded([&] {
    require(csv && out_md, "null argument");
    *out_md = copy_out(litd::csv_to_markdown(csv));
  });
}

}  // extern "C"
