#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "stamo/stamo.h"

namespace {

namespace fs = std::filesystem;

// Small enough that pretraining takes well under a second.
const char* const kTinyPlan[][2] = {
    {"world.n_entities", "80"},   {"world.n_ees", "2"},           {"world.vocab_size", "400"},
    {"world.topic_dim", "6"},     {"world.ambiguous_aliases", "30"}, {"world.wiki_docs", "200"},
    {"world.model_docs", "120"},  {"world.web_docs_per_ee", "60"}, {"world.labeled_per_ee", "6"},
    {"world.test_docs_per_ee", "40"}, {"world.ee_doc_freq_range", "5,60"}, {"model.dim", "16"},
    {"model.hidden", "16"},       {"embed.epochs", "8"},          {"embed.word_epochs", "3"},
    {"train.epochs", "1"},        {"stamo.slots", "3"},           {"stamo.intra_epochs", "2"},
    {"plan.seeds", "3"},          {"plan.methods", "Estimation,STAMO"}, {"plan.max_ees", "1"},
};

struct Fixture : ::testing::Test {
  stamo_plan* plan = nullptr;
  fs::path dir;

  void SetUp() override {
    ASSERT_EQ(stamo_plan_create(&plan), STAMO_OK);
    for (const auto& [k, v] : kTinyPlan) ASSERT_EQ(stamo_plan_set(plan, k, v), STAMO_OK) << stamo_last_error();
    dir = fs::temp_directory_path() / ("stamo_capi_" + std::string(
        ::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
  }
  void TearDown() override {
    stamo_plan_destroy(plan);
    fs::remove_all(dir);
  }
  std::string path(const char* leaf) const { return (dir / leaf).string(); }
};

TEST(CApi, VersionAndStatusCodes) {
  EXPECT_STREQ(stamo_version(), "1.0.0");
  stamo_plan* plan = nullptr;
  ASSERT_EQ(stamo_plan_create(&plan), STAMO_OK);
  EXPECT_EQ(stamo_plan_set(plan, "no.such.key", "1"), STAMO_USAGE);
  EXPECT_NE(std::string(stamo_last_error()).find("no.such.key"), std::string::npos);
  EXPECT_EQ(stamo_plan_set(plan, "stamo.slots", "many"), STAMO_USAGE);
  EXPECT_EQ(stamo_plan_set(plan, nullptr, "1"), STAMO_USAGE);
  EXPECT_EQ(stamo_plan_create(nullptr), STAMO_USAGE);
  EXPECT_EQ(stamo_plan_load_config(plan, "/nonexistent/stamo.cfg"), STAMO_DATA);
  EXPECT_EQ(stamo_world_load("/nonexistent/world", nullptr), STAMO_USAGE);
  stamo_world* world = nullptr;
  EXPECT_EQ(stamo_world_load("/nonexistent/world", &world), STAMO_DATA);
  EXPECT_EQ(world, nullptr);
  EXPECT_EQ(stamo_plan_set(plan, "world.ee_twin_overlap", "1.5"), STAMO_OK);
  EXPECT_EQ(stamo_world_generate(plan, 1, &world), STAMO_USAGE);

  char* text = nullptr;
  ASSERT_EQ(stamo_plan_describe(plan, &text), STAMO_OK);
  EXPECT_NE(std::string(text).find("world.ee_twin_overlap=1.5\n"), std::string::npos);
  stamo_free_string(text);
  stamo_plan_destroy(plan);
  stamo_plan_destroy(nullptr);
  stamo_world_destroy(nullptr);
}

TEST_F(Fixture, PerEntityPipelineRoundTrips) {
  stamo_world* world = nullptr;
  ASSERT_EQ(stamo_world_generate(plan, 5, &world), STAMO_OK) << stamo_last_error();
  EXPECT_EQ(stamo_world_ee_count(world), 2u);
  ASSERT_EQ(stamo_world_save(world, path("world").c_str()), STAMO_OK) << stamo_last_error();
  stamo_world* loaded = nullptr;
  ASSERT_EQ(stamo_world_load(path("world").c_str(), &loaded), STAMO_OK) << stamo_last_error();
  EXPECT_EQ(stamo_world_ee_count(loaded), 2u);

  stamo_pretrained* pre = nullptr;
  ASSERT_EQ(stamo_pretrain(world, plan, 9, &pre), STAMO_OK) << stamo_last_error();
  ASSERT_EQ(stamo_pretrained_save(pre, path("pre").c_str()), STAMO_OK) << stamo_last_error();
  stamo_pretrained* back = nullptr;
  ASSERT_EQ(stamo_pretrained_load(loaded, path("pre").c_str(), &back), STAMO_OK) << stamo_last_error();
  EXPECT_EQ(stamo_pretrained_store_checksum(back), stamo_pretrained_store_checksum(pre));
  EXPECT_EQ(stamo_pretrained_model_checksum(back), stamo_pretrained_model_checksum(pre));
  const auto store_sum = stamo_pretrained_store_checksum(back);
  const auto model_sum = stamo_pretrained_model_checksum(back);

  ASSERT_EQ(stamo_estimate(loaded, back, plan, 0, 0, 1, path("est").c_str()), STAMO_OK) << stamo_last_error();
  ASSERT_EQ(stamo_run(loaded, back, plan, 0, "full", 0, 1, path("run").c_str()), STAMO_OK) << stamo_last_error();
  EXPECT_TRUE(fs::exists(dir / "run" / "trace.csv"));
  std::ifstream manifest(dir / "run" / "manifest.txt");
  std::string all((std::istreambuf_iterator<char>(manifest)), {});
  EXPECT_NE(all.find("run.variant=full"), std::string::npos);
  EXPECT_EQ(stamo_pretrained_store_checksum(back), store_sum);
  EXPECT_EQ(stamo_pretrained_model_checksum(back), model_sum);

  stamo_metrics m{};
  ASSERT_EQ(stamo_evaluate(loaded, back, 0, path("run").c_str(), "test_web", &m), STAMO_OK) << stamo_last_error();
  EXPECT_GT(m.n_mentions, 0u);
  EXPECT_GE(m.f1, 0.0);
  EXPECT_LE(m.f1, 1.0);
  EXPECT_EQ(m.correct, static_cast<size_t>(m.acc * m.n_mentions + 0.5));
  stamo_metrics again{};
  ASSERT_EQ(stamo_evaluate(loaded, back, 0, path("run").c_str(), "test_web", &again), STAMO_OK);
  EXPECT_EQ(again.f1, m.f1);

  EXPECT_EQ(stamo_evaluate(loaded, back, 0, path("run").c_str(), "train", &m), STAMO_USAGE);
  EXPECT_EQ(stamo_run(loaded, back, plan, 0, "sideways", 0, 1, path("x").c_str()), STAMO_USAGE);
  EXPECT_EQ(stamo_run(loaded, back, plan, 7, "full", 0, 1, path("x").c_str()), STAMO_USAGE);
  EXPECT_EQ(stamo_estimate(loaded, back, plan, 0, 61, 1, path("x").c_str()), STAMO_USAGE);
  EXPECT_EQ(stamo_pretrained_load(loaded, path("world").c_str(), &pre), STAMO_DATA);

  stamo_pretrained_destroy(back);
  stamo_pretrained_destroy(pre);
  stamo_world_destroy(loaded);
  stamo_world_destroy(world);
}

TEST_F(Fixture, ExperimentWritesResultsAndPlots) {
  int calls = 0;
  stamo_results* results = nullptr;
  ASSERT_EQ(stamo_experiment(plan, [](const char*, void* user) { ++*static_cast<int*>(user); }, &calls, &results),
            STAMO_OK)
      << stamo_last_error();
  EXPECT_GT(calls, 0);
  EXPECT_EQ(stamo_results_row_count(results), 4u);
  EXPECT_EQ(stamo_results_freeze_violations(results), 0u);
  ASSERT_EQ(stamo_results_write(results, path("out").c_str()), STAMO_OK) << stamo_last_error();
  ASSERT_EQ(stamo_plot(path("out").c_str(), path("replot").c_str()), STAMO_OK) << stamo_last_error();
  for (const char* f : {"results.csv", "summary.csv", "slot_f1.svg"}) EXPECT_TRUE(fs::exists(dir / "replot" / f)) << f;
  stamo_results_destroy(results);
  EXPECT_EQ(stamo_plot(path("missing").c_str(), path("replot").c_str()), STAMO_DATA);
}

}  // namespace
