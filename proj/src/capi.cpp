#include "stamo/stamo.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>

#include "stamo/eval.hpp"
#include "stamo/util.hpp"

struct stamo_plan {
  stamo::ExperimentPlan plan;
};

struct stamo_world {
  stamo::World world;
};

struct stamo_pretrained {
  stamo::NeeFeatures features;
  stamo::LinkingModel model;
};

struct stamo_results {
  stamo::ExperimentResults results;
};

namespace {

namespace fs = std::filesystem;

thread_local std::string g_last_error;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename F>
stamo_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return STAMO_OK;
  } catch (const UsageError& e) {
    g_last_error = e.what();
    return STAMO_USAGE;
  } catch (const stamo::DataError& e) {
    g_last_error = e.what();
    return STAMO_DATA;
  } catch (const std::invalid_argument& e) {
    g_last_error = e.what();
    return STAMO_USAGE;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return STAMO_RUNTIME;
  } catch (...) {
    g_last_error = "unknown error";
    return STAMO_RUNTIME;
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw UsageError(what);
}

const stamo::EeTask& task_at(const stamo_world* w, std::size_t ee) {
  if (ee >= w->world.ees.size())
    throw UsageError("emerging entity " + std::to_string(ee) + " out of range (world has " +
                     std::to_string(w->world.ees.size()) + ")");
  return w->world.ees[ee];
}

std::pair<std::vector<stamo::Document>, std::vector<stamo::Document>> labeled_split(const stamo_world* w,
                                                                                   std::size_t ee, std::size_t k) {
  const auto& task = task_at(w, ee);
  if (k == 0) return {task.labeled, task.unlabeled};
  if (k > task.oracle.size())
    throw UsageError("labeled size " + std::to_string(k) + " exceeds the " + std::to_string(task.oracle.size()) +
                     " candidate documents");
  return stamo::split_labeled(task.oracle, k, stamo::mix_seed(w->world.cfg.seed, 1000 + ee));
}

stamo::StamoConfig stamo_config(const stamo_plan* p, const stamo_pretrained* pre, std::size_t ee, std::uint64_t seed) {
  stamo::StamoConfig cfg = p->plan.stamo;
  cfg.seed = stamo::mix_seed(seed, 5000 + ee);
  cfg.embed = p->plan.pipeline.embed;
  cfg.embed.dim = pre->features.store.dim();
  return cfg;
}

void write_features(const stamo_pretrained* pre, const stamo::EeParams& theta, const stamo::AliasDictionary& dict,
                    const std::string& dir) {
  stamo::save_feature_store(stamo::with_ee(pre->features.store, theta), dict, dir);
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw stamo::DataError("cannot write " + path.string());
  out << text;
}

}  // namespace

extern "C" {

const char* stamo_last_error(void) { return g_last_error.c_str(); }

const char* stamo_version(void) { return "1.0.0"; }

void stamo_free_string(char* s) { std::free(s); }

stamo_status stamo_plan_create(stamo_plan** out) {
  return guarded([&] {
    require(out != nullptr, "null output pointer");
    *out = new stamo_plan{};
  });
}

void stamo_plan_destroy(stamo_plan* plan) { delete plan; }

stamo_status stamo_plan_load_config(stamo_plan* plan, const char* path) {
  return guarded([&] {
    require(plan && path, "null argument");
    stamo::apply_config(stamo::load_config(path), plan->plan);
  });
}

stamo_status stamo_plan_set(stamo_plan* plan, const char* key, const char* value) {
  return guarded([&] {
    require(plan && key && value, "null argument");
    try {
      stamo::apply_config({{key, value}}, plan->plan);
    } catch (const stamo::DataError& e) {
      throw UsageError(e.what());
    }
  });
}

stamo_status stamo_plan_describe(const stamo_plan* plan, char** out) {
  return guarded([&] {
    require(plan && out, "null argument");
    *out = copy_string(stamo::describe(plan->plan));
  });
}

stamo_status stamo_world_generate(const stamo_plan* plan, uint64_t seed, stamo_world** out) {
  return guarded([&] {
    require(plan && out, "null argument");
    stamo::WorldConfig cfg = plan->plan.world;
    cfg.seed = seed;
    try {
      cfg.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    *out = new stamo_world{stamo::generate_world(cfg)};
  });
}

stamo_status stamo_world_load(const char* dir, stamo_world** out) {
  return guarded([&] {
    require(dir && out, "null argument");
    *out = new stamo_world{stamo::load_world(dir)};
  });
}

stamo_status stamo_world_save(const stamo_world* world, const char* dir) {
  return guarded([&] {
    require(world && dir, "null argument");
    stamo::save_world(world->world, dir);
  });
}

size_t stamo_world_ee_count(const stamo_world* world) { return world ? world->world.ees.size() : 0; }

void stamo_world_destroy(stamo_world* world) { delete world; }

stamo_status stamo_pretrain(const stamo_world* world, const stamo_plan* plan, uint64_t seed, stamo_pretrained** out) {
  return guarded([&] {
    require(world && plan && out, "null argument");
    auto features = stamo::pretrain_features(world->world, plan->plan.pipeline, seed);
    auto model = stamo::pretrain_model(world->world, features, plan->plan.model, stamo::FeatureMask{},
                                       plan->plan.pipeline, seed);
    *out = new stamo_pretrained{std::move(features), std::move(model)};
  });
}

stamo_status stamo_pretrained_save(const stamo_pretrained* pre, const char* dir) {
  return guarded([&] {
    require(pre && dir, "null argument");
    stamo::save_feature_store(pre->features.store, pre->features.dict, (fs::path(dir) / "features").string());
    stamo::save_model(pre->model, (fs::path(dir) / "model.bin").string());
  });
}

stamo_status stamo_pretrained_load(const stamo_world* world, const char* dir, stamo_pretrained** out) {
  return guarded([&] {
    require(world && dir && out, "null argument");
    auto dict = stamo::build_alias_dictionary(world->world.nee_kb.entities());
    auto store = stamo::load_feature_store((fs::path(dir) / "features").string(), dict);
    if (store.n_entities() != world->world.nee_kb.size() + 1)
      throw stamo::DataError("pretrained features do not match the world's entity count");
    auto model = stamo::load_model((fs::path(dir) / "model.bin").string());
    if (model.shape.dim != store.dim()) throw stamo::DataError("model and feature dimensions differ");
    *out = new stamo_pretrained{{std::move(dict), std::move(store)}, std::move(model)};
  });
}

uint64_t stamo_pretrained_store_checksum(const stamo_pretrained* pre) {
  return pre ? stamo::checksum(pre->features.store) : 0;
}

uint64_t stamo_pretrained_model_checksum(const stamo_pretrained* pre) { return pre ? stamo::checksum(pre->model) : 0; }

void stamo_pretrained_destroy(stamo_pretrained* pre) { delete pre; }

stamo_status stamo_estimate(const stamo_world* world, const stamo_pretrained* pre, const stamo_plan* plan, size_t ee,
                            size_t labeled_size, uint64_t seed, const char* out_dir) {
  return guarded([&] {
    require(world && pre && plan && out_dir, "null argument");
    const auto& task = task_at(world, ee);
    const auto [labeled, unlabeled] = labeled_split(world, ee, labeled_size);
    const auto dict = stamo::build_alias_dictionary(task.kb.entities());
    const stamo::StamoContext ctx(task.kb, dict, pre->features.store, pre->model);
    const auto cfg = stamo_config(plan, pre, ee, seed);
    const auto est = stamo::estimate_ee_features(labeled, ctx, cfg.embed, stamo::estimation_seed(cfg));
    write_features(pre, est.params, dict, out_dir);
  });
}

stamo_status stamo_run(const stamo_world* world, const stamo_pretrained* pre, const stamo_plan* plan, size_t ee,
                       const char* variant, size_t labeled_size, uint64_t seed, const char* out_dir) {
  return guarded([&] {
    require(world && pre && plan && out_dir, "null argument");
    const auto& task = task_at(world, ee);
    const auto [labeled, unlabeled] = labeled_split(world, ee, labeled_size);
    const auto dict = stamo::build_alias_dictionary(task.kb.entities());
    const stamo::StamoContext ctx(task.kb, dict, pre->features.store, pre->model);
    auto cfg = stamo_config(plan, pre, ee, seed);
    if (variant) cfg.variant = stamo::parse_variant(variant);

    const auto test_web = stamo::prepare_test_set(task.test_web, ctx);
    const auto test_wiki = stamo::prepare_test_set(task.test_wiki, ctx);
    const stamo::Probe probe = [&](const stamo::EeParams& p) {
      const auto a = stamo::evaluate(test_web, ctx, p), b = stamo::evaluate(test_wiki, ctx, p);
      return std::pair{(a.acc + b.acc) / 2.0, (a.f1 + b.f1) / 2.0};
    };
    const auto result = stamo::run_stamo(labeled, unlabeled, ctx, cfg, probe);

    write_features(pre, result.theta, dict, out_dir);
    std::ofstream trace(fs::path(out_dir) / "trace.csv");
    if (!trace) throw stamo::DataError(std::string("cannot write trace.csv under ") + out_dir);
    stamo::write_trace_csv(result.trace, trace);
    std::string manifest = stamo::describe(plan->plan);
    manifest += "run.ee=" + std::to_string(ee) + "\n";
    manifest += std::string("run.variant=") + stamo::to_string(cfg.variant) + "\n";
    manifest += "run.labeled_size=" + std::to_string(labeled.size()) + "\n";
    manifest += "run.seed=" + std::to_string(seed) + "\n";
    manifest += "run.stamo_seed=" + std::to_string(cfg.seed) + "\n";
    manifest += "run.world_seed=" + std::to_string(world->world.cfg.seed) + "\n";
    write_text(fs::path(out_dir) / "manifest.txt", manifest);
  });
}

stamo_status stamo_evaluate(const stamo_world* world, const stamo_pretrained* pre, size_t ee, const char* features_dir,
                            const char* dataset, stamo_metrics* out) {
  return guarded([&] {
    require(world && pre && features_dir && dataset && out, "null argument");
    const auto& task = task_at(world, ee);
    const std::string which = dataset;
    require(which == "test_web" || which == "test_wiki", "dataset must be test_web or test_wiki");
    const auto dict = stamo::build_alias_dictionary(task.kb.entities());
    const stamo::StamoContext ctx(task.kb, dict, pre->features.store, pre->model);
    const auto learned = stamo::load_feature_store(features_dir, dict, pre->features.store.dim());
    if (learned.n_entities() != task.kb.size()) throw stamo::DataError("feature store does not match the task KB");
    const auto theta = stamo::extract_ee(learned, ctx.layout);
    const auto test = stamo::prepare_test_set(which == "test_web" ? task.test_web : task.test_wiki, ctx);
    const auto m = stamo::evaluate(test, ctx, theta);
    *out = {m.acc,     m.precision, m.recall,  m.f1,      m.n_mentions, m.tp, m.fp, m.fn, m.correct,
            m.precision_undefined ? 1 : 0, m.recall_undefined ? 1 : 0};
  });
}

stamo_status stamo_experiment(const stamo_plan* plan, stamo_progress_fn progress, void* user, stamo_results** out) {
  return guarded([&] {
    require(plan && out, "null argument");
    stamo::ProgressFn fn;
    if (progress) fn = [&](const std::string& msg) { progress(msg.c_str(), user); };
    *out = new stamo_results{stamo::run_experiment(plan->plan, fn)};
  });
}

size_t stamo_results_row_count(const stamo_results* results) { return results ? results->results.rows.size() : 0; }

size_t stamo_results_freeze_violations(const stamo_results* results) {
  return results ? results->results.freeze_violations : 0;
}

stamo_status stamo_results_write(const stamo_results* results, const char* out_dir) {
  return guarded([&] {
    require(results && out_dir, "null argument");
    stamo::emit_plots(results->results, out_dir);
  });
}

void stamo_results_destroy(stamo_results* results) { delete results; }

stamo_status stamo_plot(const char* results_dir, const char* out_dir) {
  return guarded([&] {
    require(results_dir && out_dir, "null argument");
    const fs::path dir(results_dir);
    std::ifstream rows(dir / "results.csv");
    if (!rows) throw stamo::DataError("cannot open " + (dir / "results.csv").string());
    stamo::ExperimentResults results;
    results.rows = stamo::read_results_csv(rows);
    if (std::ifstream traces(dir / "traces.csv"); traces) results.traces = stamo::read_traces_csv(traces);
    stamo::emit_plots(results, out_dir);
  });
}

}  // extern "C"
