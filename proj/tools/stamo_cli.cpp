#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stamo/stamo.h"

namespace {

struct Failure {
  int code;
};

void check(stamo_status s) {
  if (s == STAMO_OK) return;
  std::fprintf(stderr, "error: %s\n", stamo_last_error());
  throw Failure{static_cast<int>(s)};
}

template <typename T, void (*Destroy)(T*)>
struct Deleter {
  void operator()(T* p) const { Destroy(p); }
};

using Plan = std::unique_ptr<stamo_plan, Deleter<stamo_plan, stamo_plan_destroy>>;
using World = std::unique_ptr<stamo_world, Deleter<stamo_world, stamo_world_destroy>>;
using Pretrained = std::unique_ptr<stamo_pretrained, Deleter<stamo_pretrained, stamo_pretrained_destroy>>;
using Results = std::unique_ptr<stamo_results, Deleter<stamo_results, stamo_results_destroy>>;

struct Options {
  std::string config;
  std::vector<std::string> sets;
  std::string model;
  std::string variant = "full";
  std::string out;
  std::string world;
  std::string pretrained;
  std::string features;
  std::string dataset = "test_web";
  std::string results;
  std::uint64_t seed = 1;
  std::size_t ee = 0;
  std::size_t labeled_size = 0;
  bool quiet = false;
};

Plan make_plan(const Options& o) {
  stamo_plan* raw = nullptr;
  check(stamo_plan_create(&raw));
  Plan plan(raw);
  if (!o.config.empty()) check(stamo_plan_load_config(plan.get(), o.config.c_str()));
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set expects key=value, got '%s'\n", kv.c_str());
      throw Failure{STAMO_USAGE};
    }
    check(stamo_plan_set(plan.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
  }
  if (!o.model.empty()) check(stamo_plan_set(plan.get(), "model.kind", o.model.c_str()));
  return plan;
}

World load_world(const Options& o) {
  stamo_world* raw = nullptr;
  check(stamo_world_load(o.world.c_str(), &raw));
  return World(raw);
}

Pretrained load_pretrained(const stamo_world* world, const Options& o) {
  stamo_pretrained* raw = nullptr;
  check(stamo_pretrained_load(world, o.pretrained.c_str(), &raw));
  return Pretrained(raw);
}

void progress(const char* message, void* user) {
  if (!*static_cast<bool*>(user)) std::fprintf(stderr, "%s\n", message);
}

int cmd_generate(const Options& o) {
  const Plan plan = make_plan(o);
  stamo_world* raw = nullptr;
  check(stamo_world_generate(plan.get(), o.seed, &raw));
  const World world(raw);
  check(stamo_world_save(world.get(), o.out.c_str()));
  std::printf("world with %zu emerging entities written to %s\n", stamo_world_ee_count(world.get()), o.out.c_str());
  return 0;
}

int cmd_pretrain(const Options& o) {
  const Plan plan = make_plan(o);
  const World world = load_world(o);
  stamo_pretrained* raw = nullptr;
  check(stamo_pretrain(world.get(), plan.get(), o.seed, &raw));
  const Pretrained pre(raw);
  check(stamo_pretrained_save(pre.get(), o.out.c_str()));
  std::printf("store %016llx model %016llx\n",
              static_cast<unsigned long long>(stamo_pretrained_store_checksum(pre.get())),
              static_cast<unsigned long long>(stamo_pretrained_model_checksum(pre.get())));
  return 0;
}

int cmd_estimate(const Options& o) {
  const Plan plan = make_plan(o);
  const World world = load_world(o);
  const Pretrained pre = load_pretrained(world.get(), o);
  check(stamo_estimate(world.get(), pre.get(), plan.get(), o.ee, o.labeled_size, o.seed, o.out.c_str()));
  return 0;
}

int cmd_stamo(const Options& o) {
  const Plan plan = make_plan(o);
  const World world = load_world(o);
  const Pretrained pre = load_pretrained(world.get(), o);
  check(stamo_run(world.get(), pre.get(), plan.get(), o.ee, o.variant.c_str(), o.labeled_size, o.seed,
                  o.out.c_str()));
  return 0;
}

int cmd_eval(const Options& o) {
  const World world = load_world(o);
  const Pretrained pre = load_pretrained(world.get(), o);
  stamo_metrics m{};
  check(stamo_evaluate(world.get(), pre.get(), o.ee, o.features.c_str(), o.dataset.c_str(), &m));
  std::printf("dataset=%s ee=%zu mentions=%zu acc=%.6f p=%.6f r=%.6f f1=%.6f tp=%zu fp=%zu fn=%zu%s%s\n",
              o.dataset.c_str(), o.ee, m.n_mentions, m.acc, m.precision, m.recall, m.f1, m.tp, m.fp, m.fn,
              m.precision_undefined ? " p_undefined" : "", m.recall_undefined ? " r_undefined" : "");
  return 0;
}

int cmd_experiment(const Options& o) {
  const Plan plan = make_plan(o);
  bool quiet = o.quiet;
  stamo_results* raw = nullptr;
  check(stamo_experiment(plan.get(), progress, &quiet, &raw));
  const Results results(raw);
  check(stamo_results_write(results.get(), o.out.c_str()));
  const std::size_t violations = stamo_results_freeze_violations(results.get());
  std::printf("%zu rows written to %s, %zu freeze violations\n", stamo_results_row_count(results.get()),
              o.out.c_str(), violations);
  return violations == 0 ? 0 : STAMO_RUNTIME;
}

int cmd_plot(const Options& o) {
  check(stamo_plot(o.results.c_str(), o.out.c_str()));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feature learning for emerging entities in entity linking"};
  app.set_version_flag("--version", std::string(stamo_version()));
  app.require_subcommand(1);
  Options o;

  const auto add_plan = [&](CLI::App* c) {
    c->add_option("--config", o.config, "key=value config file")->check(CLI::ExistingFile);
    c->add_option("--set", o.sets, "override one config key (key=value), repeatable");
  };

  auto* gen = app.add_subcommand("generate", "generate a synthetic world");
  add_plan(gen);
  gen->add_option("--seed", o.seed, "world seed");
  gen->add_option("--out", o.out, "output directory")->required();

  auto* pre = app.add_subcommand("pretrain", "estimate NEE features and train the linking model");
  add_plan(pre);
  pre->add_option("--world", o.world, "world directory")->required();
  pre->add_option("--model", o.model, "deeped or yamada");
  pre->add_option("--seed", o.seed, "pre-training seed");
  pre->add_option("--out", o.out, "output directory")->required();

  const auto add_run = [&](CLI::App* c) {
    add_plan(c);
    c->add_option("--world", o.world, "world directory")->required();
    c->add_option("--pretrained", o.pretrained, "pretrain output directory")->required();
    c->add_option("--ee", o.ee, "emerging entity index");
    c->add_option("--labeled-size", o.labeled_size, "labeled documents (0 keeps the world's split)");
    c->add_option("--seed", o.seed, "run seed");
    c->add_option("--out", o.out, "output directory")->required();
  };

  auto* est = app.add_subcommand("estimate", "estimate emerging-entity features from the labeled set");
  add_run(est);

  auto* run = app.add_subcommand("stamo", "self-train emerging-entity features");
  add_run(run);
  run->add_option("--variant", o.variant, "vanilla, intra, inter or full");

  auto* ev = app.add_subcommand("eval", "score learned features on a test set");
  ev->add_option("--world", o.world, "world directory")->required();
  ev->add_option("--pretrained", o.pretrained, "pretrain output directory")->required();
  ev->add_option("--ee", o.ee, "emerging entity index");
  ev->add_option("--features", o.features, "feature-store directory")->required();
  ev->add_option("--dataset", o.dataset, "test_web or test_wiki");

  auto* exp = app.add_subcommand("experiment", "run the method x entity x seed matrix");
  add_plan(exp);
  exp->add_option("--model", o.model, "deeped or yamada");
  exp->add_option("--out", o.out, "results directory")->required();
  exp->add_flag("--quiet", o.quiet, "no progress lines");

  auto* plot = app.add_subcommand("plot", "rebuild summary and charts from results.csv and traces.csv");
  plot->add_option("--results", o.results, "results directory")->required();
  plot->add_option("--out", o.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : STAMO_USAGE;
  }

  try {
    if (*gen) return cmd_generate(o);
    if (*pre) return cmd_pretrain(o);
    if (*est) return cmd_estimate(o);
    if (*run) return cmd_stamo(o);
    if (*ev) return cmd_eval(o);
    if (*exp) return cmd_experiment(o);
    if (*plot) return cmd_plot(o);
  } catch (const Failure& f) {
    return f.code;
  }
  return STAMO_USAGE;
}
