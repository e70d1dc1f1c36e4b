#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "support.hpp"

namespace stamo {
namespace {

namespace fs = std::filesystem;

TEST(Jsonl, RoundTripPreservesDocuments) {
  Rng rng(1);
  const auto kb = test::random_kb(10, 3, true);
  auto docs = test::random_corpus(rng, kb, 25, 12, 0.6);
  docs[3].source = SourceKind::WikiLike;
  for (auto& d : docs)
    if (!d.mentions.empty()) {
      d.mentions.front().label = Label::pseudo(EntityId{2});
      break;
    }
  docs[5].tokens.push_back("quote\"and\\slash");
  EXPECT_EQ(parse_corpus(format_corpus(docs)), docs);

  const auto path = fs::temp_directory_path() / "stamo_corpus.jsonl";
  save_corpus(docs, path.string());
  EXPECT_EQ(load_corpus(path.string()), docs);
  fs::remove(path);
}

TEST(Jsonl, ErrorsNameTheLine) {
  const std::string good =
      R"({"doc_id":"a","source":"web","tokens":["x","y"],"mentions":[{"start":0,"end":1,"surface":"x","label":{"kind":"none"}}]})";
  const std::string bad_span =
      R"({"doc_id":"b","source":"web","tokens":["x"],"mentions":[{"start":0,"end":2,"surface":"x"}]})";
  const std::string bad_kind =
      R"({"doc_id":"c","source":"web","tokens":["x"],"mentions":[{"start":0,"end":1,"surface":"x","label":{"kind":"maybe","entity":1}}]})";
  EXPECT_EQ(parse_corpus(good + "\n\n" + good + "\n").size(), 2u);
  for (const auto& [text, line] : std::vector<std::pair<std::string, std::string>>{
           {good + "\n" + bad_span, "line 2"},
           {good + "\n\n" + bad_kind, "line 3"},
           {"{not json", "line 1"},
           {R"({"doc_id":"d","source":"book","tokens":[],"mentions":[]})", "line 1"}}) {
    try {
      parse_corpus(text);
      FAIL() << "accepted: " << text;
    } catch (const DataError& e) {
      EXPECT_NE(std::string(e.what()).find(line), std::string::npos) << e.what();
    }
  }
}

TEST(WorldConfig, ValidationRejectsInconsistentSettings) {
  EXPECT_NO_THROW(WorldConfig{}.validate());
  const auto broken = [](auto edit) {
    WorldConfig c;
    edit(c);
    return c;
  };
  EXPECT_THROW(broken([](WorldConfig& c) { c.ee_doc_freq_range = {0, 5}; }).validate(), std::invalid_argument);
  EXPECT_THROW(broken([](WorldConfig& c) { c.ee_doc_freq_range = {9, 5}; }).validate(), std::invalid_argument);
  EXPECT_THROW(broken([](WorldConfig& c) { c.ee_ambiguity_range = {0.0, 0.5}; }).validate(), std::invalid_argument);
  EXPECT_THROW(broken([](WorldConfig& c) { c.ee_ambiguity_range = {0.3, 1.0}; }).validate(), std::invalid_argument);
  EXPECT_THROW(broken([](WorldConfig& c) { c.labeled_per_ee = c.web_docs_per_ee + 1; }).validate(),
               std::invalid_argument);
  EXPECT_THROW(broken([](WorldConfig& c) { c.aliases_per_entity = 4; }).validate(), std::invalid_argument);
  EXPECT_THROW(broken([](WorldConfig& c) { c.ee_twin_overlap = 1.5; }).validate(), std::invalid_argument);
}

TEST(Split, PartitionsTheCorpusAndStripsCandidateLabels) {
  Rng rng(2);
  const auto kb = test::random_kb(8, 2, true);
  const auto web = test::random_corpus(rng, kb, 40, 10);
  for (std::size_t k : {0, 1, 7, 40}) {
    const auto [l, u] = split_labeled(web, k, 99);
    ASSERT_EQ(l.size(), k);
    ASSERT_EQ(u.size(), web.size() - k);
    std::multiset<std::string> ids;
    for (const auto& d : l) ids.insert(d.doc_id);
    for (const auto& d : u) {
      EXPECT_EQ(ids.count(d.doc_id), 0u);
      ids.insert(d.doc_id);
      for (const auto& m : d.mentions)
        if (m.is_candidate) EXPECT_FALSE(m.label.known());
    }
    EXPECT_EQ(ids.size(), web.size());
    EXPECT_EQ(std::set<std::string>(ids.begin(), ids.end()).size(), web.size());
  }
  EXPECT_EQ(split_labeled(web, 7, 99), split_labeled(web, 7, 99));
  EXPECT_THROW(split_labeled(web, 41, 1), DataError);
}

TEST(Ambiguity, CountsCandidateMentionsOnly) {
  Document d;
  d.doc_id = "d";
  d.tokens = {"a", "b", "a", "c"};
  d.mentions = {{0, 1, "a", true, Label::gold(EntityId{5})},
                {1, 2, "b", false, Label::gold(EntityId{5})},
                {2, 3, "a", true, Label::gold(EntityId{1})},
                {3, 4, "c", true, Label::none()}};
  EXPECT_DOUBLE_EQ(ambiguity_rate({d}, EntityId{5}), 1.0 / 3.0);
  EXPECT_EQ(ambiguity_rate({}, EntityId{5}), 0.0);
}

class WorldTest : public ::testing::Test {
 protected:
  static const World& world() { return test::small_pipeline_instance().world; }
};

TEST_F(WorldTest, TasksSatisfyTheirStructuralInvariants) {
  const auto& w = world();
  const auto& cfg = w.cfg;
  ASSERT_EQ(w.ees.size(), cfg.n_ees);
  for (const auto& task : w.ees) {
    const EntityId ee = *task.kb.emerging();
    EXPECT_EQ(ee.value, w.nee_kb.size());
    EXPECT_LE(task.kb.at(ee).aliases.size(), 3u);
    EXPECT_EQ(task.labeled.size(), cfg.labeled_per_ee);
    EXPECT_EQ(task.labeled.size() + task.unlabeled.size(), cfg.web_docs_per_ee);
    EXPECT_EQ(task.oracle.size(), cfg.web_docs_per_ee);

    std::set<std::string> w_ids, l_ids;
    for (const auto& d : task.oracle) w_ids.insert(d.doc_id);
    for (const auto& d : task.labeled) l_ids.insert(d.doc_id);
    for (const auto& d : task.unlabeled) EXPECT_EQ(l_ids.count(d.doc_id), 0u);
    for (const auto& d : task.labeled) EXPECT_EQ(w_ids.count(d.doc_id), 1u);
    for (const auto* test : {&task.test_web, &task.test_wiki}) {
      EXPECT_EQ(test->size(), cfg.test_docs_per_ee);
      for (const auto& d : *test) EXPECT_EQ(w_ids.count(d.doc_id), 0u);
    }

    const auto& aliases = task.kb.at(ee).aliases;
    for (const auto* docs : {&task.oracle, &task.test_web, &task.test_wiki})
      for (const auto& d : *docs) {
        EXPECT_NO_THROW(validate_document(d));
        bool has_candidate = false;
        for (const auto& m : d.mentions) {
          const bool alias = std::find(aliases.begin(), aliases.end(), m.surface) != aliases.end();
          EXPECT_EQ(m.is_candidate, alias);
          has_candidate = has_candidate || m.is_candidate;
          if (m.is_candidate) EXPECT_EQ(m.label.kind, LabelKind::Gold);
        }
        EXPECT_TRUE(has_candidate) << d.doc_id;
      }
    for (const auto& d : task.unlabeled)
      for (const auto& m : d.mentions)
        if (m.is_candidate) EXPECT_FALSE(m.label.known());
  }
}

TEST_F(WorldTest, EmergingEntitiesMeetTheirSelectionBounds) {
  const auto& w = world();
  for (const auto& task : w.ees) {
    const EntityId ee = *task.kb.emerging();
    const double realized = ambiguity_rate(task.oracle, ee);
    EXPECT_DOUBLE_EQ(realized, task.truth.ambiguity);
    EXPECT_GE(task.truth.target_ambiguity, w.cfg.ee_ambiguity_range[0]);
    EXPECT_LE(task.truth.target_ambiguity, w.cfg.ee_ambiguity_range[1]);
    EXPECT_LE(std::abs(realized - task.truth.target_ambiguity), 0.05);
    std::size_t freq = 0;
    for (const auto& d : task.oracle)
      freq += std::any_of(d.mentions.begin(), d.mentions.end(),
                          [&](const auto& m) { return m.label.known() && m.label.entity == ee; });
    EXPECT_EQ(freq, task.truth.doc_freq);
    EXPECT_GE(freq, w.cfg.ee_doc_freq_range[0]);
    EXPECT_LE(freq, w.cfg.ee_doc_freq_range[1]);
  }
}

TEST_F(WorldTest, NonEmergingCorporaNeverMentionEmergingEntities) {
  const auto& w = world();
  for (const auto* docs : {&w.wiki, &w.model_corpus})
    for (const auto& d : *docs)
      for (const auto& m : d.mentions) {
        EXPECT_LT(m.label.entity.value, w.nee_kb.size());
        EXPECT_FALSE(m.is_candidate);
      }
}

TEST(World, GenerationIsDeterministicPerSeed) {
  auto cfg = test::small_world_config(3);
  cfg.wiki_docs = 100;
  cfg.model_docs = 50;
  const auto a = generate_world(cfg), b = generate_world(cfg);
  ASSERT_EQ(a.ees.size(), b.ees.size());
  EXPECT_EQ(a.wiki, b.wiki);
  for (std::size_t j = 0; j < a.ees.size(); ++j) EXPECT_EQ(a.ees[j].oracle, b.ees[j].oracle);
  cfg.seed = 4;
  EXPECT_NE(generate_world(cfg).wiki, a.wiki);
}

TEST(World, SaveLoadRoundTrip) {
  auto cfg = test::small_world_config(5);
  cfg.wiki_docs = 80;
  cfg.model_docs = 40;
  const auto w = generate_world(cfg);
  const auto dir = fs::temp_directory_path() / "stamo_world_roundtrip";
  fs::remove_all(dir);
  save_world(w, dir.string());
  const auto back = load_world(dir.string());
  EXPECT_EQ(back.cfg, w.cfg);
  EXPECT_EQ(back.wiki, w.wiki);
  EXPECT_EQ(back.model_corpus, w.model_corpus);
  ASSERT_EQ(back.ees.size(), w.ees.size());
  for (std::size_t j = 0; j < w.ees.size(); ++j) {
    EXPECT_EQ(back.ees[j].labeled, w.ees[j].labeled);
    EXPECT_EQ(back.ees[j].unlabeled, w.ees[j].unlabeled);
    EXPECT_EQ(back.ees[j].test_wiki, w.ees[j].test_wiki);
    EXPECT_EQ(back.ees[j].kb.entities().size(), w.ees[j].kb.entities().size());
  }
  fs::remove_all(dir);
  EXPECT_THROW(load_world(dir.string()), DataError);
}

}  // namespace
}  // namespace stamo
