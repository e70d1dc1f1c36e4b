#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "support.hpp"

namespace stamo {
namespace {

namespace fs = std::filesystem;

TEST(Metrics, MatchHandCounts) {
  const EntityId ee{9};
  const std::vector<EntityId> gold = {EntityId{9}, EntityId{9}, EntityId{1}, EntityId{2}, EntityId{9}};
  const std::vector<EntityId> pred = {EntityId{9}, EntityId{3}, EntityId{9}, EntityId{2}, EntityId{9}};
  const auto m = compute_metrics(pred, gold, ee);
  EXPECT_EQ(m.n_mentions, 5u);
  EXPECT_EQ(m.correct, 3u);
  EXPECT_EQ(m.tp, 2u);
  EXPECT_EQ(m.fp, 1u);
  EXPECT_EQ(m.fn, 1u);
  EXPECT_DOUBLE_EQ(m.acc, 0.6);
  EXPECT_DOUBLE_EQ(m.precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.recall, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.f1, 2.0 / 3.0);
  EXPECT_FALSE(m.precision_undefined || m.recall_undefined);
}

TEST(Metrics, FlagUndefinedRatios) {
  const EntityId ee{9};
  const std::vector<EntityId> gold = {EntityId{1}, EntityId{2}};
  const auto none = compute_metrics(gold, gold, ee);
  EXPECT_TRUE(none.precision_undefined);
  EXPECT_TRUE(none.recall_undefined);
  EXPECT_EQ(none.f1, 0.0);
  EXPECT_EQ(none.acc, 1.0);

  const std::vector<EntityId> miss = {EntityId{1}, EntityId{1}};
  const auto m = compute_metrics(miss, std::vector<EntityId>{EntityId{9}, EntityId{1}}, ee);
  EXPECT_TRUE(m.precision_undefined);
  EXPECT_FALSE(m.recall_undefined);
  EXPECT_EQ(m.f1, 0.0);
  EXPECT_THROW(compute_metrics(miss, std::vector<EntityId>{EntityId{1}}, ee), std::invalid_argument);
}

TEST(Metrics, RandomCasesAgreeWithDefinition) {
  Rng rng(3);
  const EntityId ee{4};
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + test::pick(rng, 30);
    std::vector<EntityId> pred(n), gold(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = EntityId{static_cast<std::uint32_t>(test::pick(rng, 5))};
      gold[i] = EntityId{static_cast<std::uint32_t>(test::pick(rng, 5))};
    }
    double tp = 0, pp = 0, gp = 0, ok = 0;
    for (std::size_t i = 0; i < n; ++i) {
      ok += pred[i] == gold[i];
      pp += pred[i] == ee;
      gp += gold[i] == ee;
      tp += pred[i] == ee && gold[i] == ee;
    }
    const double p = pp ? tp / pp : 0, r = gp ? tp / gp : 0;
    const auto m = compute_metrics(pred, gold, ee);
    EXPECT_DOUBLE_EQ(m.acc, ok / n);
    EXPECT_DOUBLE_EQ(m.precision, p);
    EXPECT_DOUBLE_EQ(m.recall, r);
    EXPECT_NEAR(m.f1, p + r > 0 ? 2 * p * r / (p + r) : 0.0, 1e-15);
    EXPECT_EQ(m.precision_undefined, pp == 0);
    EXPECT_EQ(m.recall_undefined, gp == 0);
  }
}

ResultRow row(std::string method, std::size_t ee, std::uint64_t seed, std::string dataset, double f1,
              double acc = 0.5) {
  ResultRow r;
  r.method = std::move(method);
  r.ee = ee;
  r.seed = seed;
  r.dataset = std::move(dataset);
  r.metrics.f1 = f1;
  r.metrics.acc = acc;
  r.metrics.precision = f1;
  r.metrics.recall = f1;
  return r;
}

TEST(Summary, AveragesEntitiesThenSeeds) {
  // Seed 1 has two entities, seed 2 one; a plain row mean would weight seed 1 twice.
  std::vector<ResultRow> rows = {
      row("M", 0, 1, "test_web", 0.2), row("M", 0, 1, "test_wiki", 0.4),
      row("M", 1, 1, "test_web", 0.6), row("M", 1, 1, "test_wiki", 0.8),
      row("M", 0, 2, "test_web", 1.0), row("M", 0, 2, "test_wiki", 0.0),
  };
  ResultRow failed = row("M", 2, 1, "test_web", 0.0);
  failed.failed = true;
  rows.push_back(failed);

  EXPECT_DOUBLE_EQ(*seed_mean_f1(rows, "M", 1), 0.5);
  EXPECT_DOUBLE_EQ(*seed_mean_f1(rows, "M", 2), 0.5);
  EXPECT_FALSE(seed_mean_f1(rows, "M", 3));
  EXPECT_DOUBLE_EQ(method_mean_f1(rows, "M"), 0.5);

  const auto summary = summarize(rows);
  ASSERT_EQ(summary.size(), 3u);
  EXPECT_EQ(summary[0].dataset, "test_web");
  EXPECT_DOUBLE_EQ(summary[0].f1, (0.4 + 1.0) / 2);  // seed 1: (0.2+0.6)/2
  EXPECT_NEAR(summary[0].f1_sd, std::sqrt(2 * 0.3 * 0.3), 1e-12);
  EXPECT_DOUBLE_EQ(summary[1].f1, (0.6 + 0.0) / 2);
  EXPECT_EQ(summary[2].dataset, "avg");
  EXPECT_DOUBLE_EQ(summary[2].f1, 0.5);
  EXPECT_EQ(summary[2].f1_sd, 0.0);
  EXPECT_EQ(summary[2].seeds, 2u);
}

TEST(Drawdown, MatchesPairwiseOracle) {
  Rng rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> s(test::pick(rng, 25));
    for (double& x : s) x = test::uniform(rng, 0, 1);
    const std::size_t first = test::pick(rng, 6);
    double oracle = 0.0;
    for (std::size_t i = first; i < s.size(); ++i)
      for (std::size_t j = i; j < s.size(); ++j) oracle = std::max(oracle, s[i] - s[j]);
    EXPECT_EQ(max_drawdown(s, first), oracle);
  }
  const std::vector<double> s = {0.9, 0.1, 0.5, 0.7, 0.4, 0.8};
  EXPECT_DOUBLE_EQ(max_drawdown(s, 0), 0.8);
  EXPECT_DOUBLE_EQ(max_drawdown(s, 2), 0.3);
}

TEST(SlotCurve, AveragesTracesOfOneMethod) {
  const auto trace = [](std::vector<double> f1) {
    SlotTrace t;
    for (std::size_t i = 0; i < f1.size(); ++i) {
      SlotRecord r;
      r.slot = i;
      r.probe_f1 = f1[i];
      t.records.push_back(r);
    }
    return t;
  };
  const std::vector<TraceRecord> traces = {{"A", 0, 1, trace({0.2, 0.4})},
                                           {"B", 0, 1, trace({1.0, 1.0})},
                                           {"A", 1, 1, trace({0.4, 0.8})}};
  const auto curve = mean_slot_f1(traces, "A");
  ASSERT_EQ(curve.size(), 2u);
  EXPECT_DOUBLE_EQ(curve[0], 0.3);
  EXPECT_DOUBLE_EQ(curve[1], 0.6);
  EXPECT_TRUE(mean_slot_f1(traces, "C").empty());
}

TEST(Csv, ResultsRoundTrip) {
  std::vector<ResultRow> rows = {row("STAMO@L=10", 3, 42, "test_web", 0.125, 0.75),
                                 row("Estimation", 0, 1, "test_wiki", 1.0, 0.5)};
  rows[0].model = ModelKind::Yamada;
  rows[0].slots = 20;
  rows[1].failed = true;
  std::stringstream buf;
  write_results_csv(rows, buf);
  const auto back = read_results_csv(buf);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].method, "STAMO@L=10");
  EXPECT_EQ(back[0].model, ModelKind::Yamada);
  EXPECT_EQ(back[0].ee, 3u);
  EXPECT_EQ(back[0].seed, 42u);
  EXPECT_EQ(back[0].dataset, "test_web");
  EXPECT_EQ(back[0].metrics.f1, 0.125);
  EXPECT_EQ(back[0].metrics.acc, 0.75);
  EXPECT_EQ(back[0].slots, 20u);
  EXPECT_TRUE(back[1].failed);

  std::stringstream again;
  write_results_csv(back, again);
  std::stringstream first;
  write_results_csv(rows, first);
  EXPECT_EQ(again.str(), first.str());

  std::stringstream bad("header\nSTAMO,deep-ed,0\n");
  EXPECT_THROW(read_results_csv(bad), DataError);
}

TEST(Csv, TracesRoundTrip) {
  SlotTrace t;
  for (std::size_t i = 0; i < 3; ++i) {
    SlotRecord r;
    r.slot = i;
    r.loss = 0.5 * i;
    r.delta_norm = 0.25;
    r.probe_acc = 0.75;
    r.probe_f1 = 0.125 * i;
    if (i) r.agreement = 0.5;
    r.degenerate = i == 0;
    r.digest = 0xfeedface12345678ull + i;
    t.records.push_back(r);
  }
  const std::vector<TraceRecord> traces = {{"STAMO", 1, 7, t}, {"SelfTraining", 1, 7, t}};
  std::stringstream buf;
  write_traces_csv(traces, buf);
  const auto back = read_traces_csv(buf);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].method, "SelfTraining");
  ASSERT_EQ(back[0].trace.records.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& a = back[0].trace.records[i];
    const auto& b = t.records[i];
    EXPECT_EQ(a.slot, b.slot);
    EXPECT_EQ(a.loss, b.loss);
    EXPECT_EQ(a.probe_f1, b.probe_f1);
    EXPECT_EQ(a.agreement, b.agreement);
    EXPECT_EQ(a.degenerate, b.degenerate);
    EXPECT_EQ(a.digest, b.digest);
  }
}

TEST(Config, ParsesCommentsAndNamesBadLines) {
  const auto c = parse_config("# header\n a = 1 \n\nb=x,y # trailing\n");
  EXPECT_EQ(c, (ConfigMap{{"a", "1"}, {"b", "x,y"}}));
  for (const auto& [text, line] : std::vector<std::pair<std::string, std::string>>{
           {"a=1\nnot a pair\n", "line 2"}, {"a=1\n\n =3\n", "line 3"}}) {
    try {
      parse_config(text);
      FAIL() << text;
    } catch (const DataError& e) {
      EXPECT_NE(std::string(e.what()).find(line), std::string::npos) << e.what();
    }
  }
}

TEST(Config, ApplyRejectsUnknownKeysAndBadValues) {
  ExperimentPlan plan;
  EXPECT_THROW(apply_config({{"stamo.slot", "3"}}, plan), DataError);
  EXPECT_THROW(apply_config({{"stamo.slots", "three"}}, plan), DataError);
  EXPECT_THROW(apply_config({{"stamo.variant", "bogus"}}, plan), DataError);
  EXPECT_THROW(apply_config({{"plan.feature_ablations", "color"}}, plan), DataError);
  EXPECT_THROW(apply_config({{"world.ee_doc_freq_range", "1"}}, plan), DataError);

  apply_config({{"stamo.slots", "7"}, {"model.kind", "yamada"}, {"model.dim", "24"}, {"plan.seeds", "3,4"}}, plan);
  EXPECT_EQ(plan.stamo.slots, 7u);
  EXPECT_EQ(plan.model, ModelKind::Yamada);
  EXPECT_EQ(plan.pipeline.embed.dim, 24u);
  EXPECT_EQ(plan.seeds, (std::vector<std::uint64_t>{3, 4}));
}

TEST(Config, DescribeRoundTrips) {
  ExperimentPlan plan;
  apply_config({{"stamo.intra_lr", "0.0025"},
                {"stamo.eta_embedding", "0.1"},
                {"plan.labeled_sizes", "10,50"},
                {"plan.feature_ablations", "prior,embedding"},
                {"plan.inter_ablations", "delta,warmup"},
                {"plan.methods", "Estimation,STAMO"},
                {"world.ee_ambiguity_range", "0.2,0.4"}},
               plan);
  const std::string text = describe(plan);
  ExperimentPlan back;
  apply_config(parse_config(text), back);
  EXPECT_EQ(describe(back), text);
  EXPECT_EQ(back.stamo.intra_lr, 0.0025);
  EXPECT_EQ(back.feature_ablations, plan.feature_ablations);
  EXPECT_EQ(back.world, plan.world);
}

TEST(Plan, ParsesMethodNames) {
  EXPECT_EQ(parse_method("Estimation").kind, MethodKind::Estimation);
  const auto nk = parse_method("EstimationNK(200)");
  EXPECT_EQ(nk.kind, MethodKind::EstimationNK);
  EXPECT_EQ(nk.nk, 200u);
  EXPECT_EQ(parse_method("SelfTraining+Intra").kind, MethodKind::SelfTrainingIntra);
  EXPECT_EQ(parse_method("SelfTraining+Inter").kind, MethodKind::SelfTrainingInter);
  EXPECT_EQ(parse_method("STAMO").kind, MethodKind::Stamo);
  EXPECT_THROW(parse_method("EstimationNK(x)"), DataError);
  EXPECT_THROW(parse_method("stamo"), DataError);
}

TEST(Plan, ExpandNamesEveryRow) {
  ExperimentPlan plan;
  plan.methods = {"Estimation", "STAMO"};
  plan.world.labeled_per_ee = 10;
  plan.labeled_sizes = {10, 50};
  plan.feature_ablations = {FeatureGroup::Relatedness};
  plan.inter_ablations = {"delta", "eta", "warmup"};
  std::vector<std::string> names;
  for (const auto& m : plan.expand()) names.push_back(m.name);
  EXPECT_EQ(names, (std::vector<std::string>{"Estimation", "STAMO", "Estimation@L=50", "STAMO@L=50",
                                             "STAMO-no-relatedness", "STAMO-raw-delta", "STAMO-unit-eta",
                                             "STAMO-no-warmup"}));
  const auto specs = plan.expand();
  EXPECT_EQ(specs[3].labeled_size, 50u);
  EXPECT_FALSE(specs[4].mask.relatedness);
  EXPECT_TRUE(specs[4].mask.prior);
  EXPECT_TRUE(specs[5].ablation.raw_delta);
  EXPECT_TRUE(specs[6].ablation.unit_rate);
  EXPECT_TRUE(specs[7].ablation.no_warmup);

  plan.inter_ablations = {"momentum"};
  EXPECT_THROW(plan.validate(), DataError);
  plan.inter_ablations.clear();
  plan.seeds.clear();
  EXPECT_THROW(plan.validate(), DataError);
}

ExperimentPlan tiny_plan() {
  ExperimentPlan plan;
  plan.world = test::small_world_config(21);
  plan.world.wiki_docs = 200;
  plan.world.model_docs = 120;
  plan.world.n_ees = 1;
  plan.pipeline = test::small_pipeline();
  plan.pipeline.train.epochs = 1;
  plan.seeds = {21};
  plan.methods = {"Estimation", "SelfTraining", "STAMO"};
  plan.inter_ablations = {"warmup"};
  plan.stamo.slots = 3;
  plan.stamo.intra_epochs = 2;
  return plan;
}

TEST(Experiment, TinyRunIsDeterministicAndFrozen) {
  const auto plan = tiny_plan();
  std::vector<std::string> log;
  const auto a = run_experiment(plan, [&](const std::string& m) { log.push_back(m); });
  const auto b = run_experiment(plan);
  EXPECT_FALSE(log.empty());
  EXPECT_EQ(a.freeze_violations, 0u);
  ASSERT_EQ(a.rows.size(), 4u * 2u);
  for (const auto& r : a.rows) EXPECT_FALSE(r.failed) << r.method << ": " << r.error;
  EXPECT_EQ(a.traces.size(), 3u);
  for (const auto& t : a.traces) EXPECT_EQ(t.trace.records.size(), plan.stamo.slots + 1);

  std::stringstream x, y;
  write_results_csv(a.rows, x);
  write_results_csv(b.rows, y);
  EXPECT_EQ(x.str(), y.str());
  EXPECT_EQ(a.store_checksums, b.store_checksums);
  EXPECT_EQ(a.model_checksums, b.model_checksums);

  const auto dir = fs::temp_directory_path() / "stamo_plots_test";
  fs::remove_all(dir);
  emit_plots(a, dir.string());
  for (const char* f : {"results.csv", "summary.csv", "traces.csv", "slot_f1.csv", "slot_f1.svg"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  std::ifstream in(dir / "results.csv");
  std::stringstream disk;
  disk << in.rdbuf();
  EXPECT_EQ(disk.str(), x.str());
  fs::remove_all(dir);
}

}  // namespace
}  // namespace stamo
