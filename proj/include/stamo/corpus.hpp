#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "stamo/kb.hpp"

namespace stamo {

// ---------------------------------------------------------------------------
// JSONL documents

std::vector<Document> load_corpus(const std::string& path);
void save_corpus(const std::vector<Document>& docs, const std::string& path);

/// One JSON object per line; throws DataError naming the line on bad input.
std::vector<Document> parse_corpus(std::string_view text);
std::string format_corpus(const std::vector<Document>& docs);

// ---------------------------------------------------------------------------
// Synthetic world

struct WorldConfig {
  std::size_t n_entities = 240;  // non-emerging entities
  std::size_t n_ees = 10;
  std::size_t aliases_per_entity = 2;  // aliases of an emerging entity, at most 3
  std::size_t vocab_size = 1200;
  std::size_t topic_dim = 12;
  std::array<std::size_t, 2> ee_doc_freq_range = {20, 1000};
  std::array<double, 2> ee_ambiguity_range = {0.2, 0.8};
  std::size_t wiki_docs = 3000;
  std::size_t model_docs = 1500;  // NEE-only web-like corpus used to train the linking model
  std::size_t web_docs_per_ee = 200;
  std::size_t labeled_per_ee = 10;
  std::size_t test_docs_per_ee = 200;
  std::uint64_t seed = 1;

  // Shape of the generator.
  std::size_t doc_length = 48;
  std::size_t friends_per_entity = 4;
  std::size_t signature_words = 4;
  std::size_t ambiguous_aliases = 90;   // shared alias pool
  std::size_t max_alias_sharing = 4;    // NEEs per shared alias
  double wiki_signature = 0.30;         // word source mix for wiki-like text
  double wiki_topic = 0.45;
  double web_signature = 0.15;          // and for web-like text
  double web_topic = 0.35;
  double primary_topic_mass = 0.75;
  double ee_twin_overlap = 0.5;  // share of an EE's friends and signature words copied from its main rival
  std::size_t max_retries = 50;

  /// Throws std::invalid_argument when the configuration is inconsistent.
  void validate() const;

  friend bool operator==(const WorldConfig&, const WorldConfig&) = default;
};

struct EeTruth {
  double target_ambiguity = 0.0;
  double ambiguity = 0.0;     // realized over W
  std::size_t doc_freq = 0;   // documents of W that refer to the emerging entity
  std::size_t primary_topic = 0;
};

/// One emerging entity's task. `oracle` holds W with every label intact and is
/// only meant for oracle checks and upper-bound baselines; `unlabeled` carries
/// no candidate labels.
struct EeTask {
  std::string name;
  KnowledgeBase kb;  // the non-emerging entities plus this emerging entity
  std::vector<Document> labeled;
  std::vector<Document> unlabeled;
  std::vector<Document> oracle;
  std::vector<Document> test_web;
  std::vector<Document> test_wiki;
  EeTruth truth;
};

struct WorldTruth {
  /// Generating P(e | m) for the shared aliases, keyed by surface.
  std::map<std::string, std::map<std::uint32_t, double>> prior;
  std::vector<std::size_t> primary_topic;  // per non-emerging entity
};

struct World {
  WorldConfig cfg;
  KnowledgeBase nee_kb;
  std::vector<Document> wiki;
  std::vector<Document> model_corpus;
  std::vector<EeTask> ees;
  WorldTruth truth;
};

/// Deterministic per cfg.seed. Throws DataError when an emerging entity cannot
/// meet its ambiguity and frequency bounds within cfg.max_retries attempts.
World generate_world(const WorldConfig& cfg);

/// Uniform sample of k documents without replacement. U keeps the order of W
/// and has its candidate labels stripped.
std::pair<std::vector<Document>, std::vector<Document>> split_labeled(const std::vector<Document>& web,
                                                                      std::size_t k, std::uint64_t seed);

/// Fraction of candidate mentions labeled with `ee`.
double ambiguity_rate(const std::vector<Document>& docs, EntityId ee);

/// Layout: world.json, nee_kb.tsv, wiki.jsonl, model.jsonl and one directory
/// per emerging entity with kb.tsv and its corpora.
void save_world(const World& world, const std::string& dir);
World load_world(const std::string& dir);

}  // namespace stamo
