#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "stamo/corpus.hpp"
#include "stamo/eval.hpp"
#include "stamo/kb.hpp"
#include "stamo/util.hpp"

namespace stamo::test {

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
inline std::size_t pick(Rng& rng, std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }

/// n entities; entity i answers to "a<i % n_aliases>" and its own name "e<i>".
/// The last one is emerging when `with_ee` is set.
inline KnowledgeBase random_kb(std::size_t n, std::size_t n_aliases, bool with_ee = false) {
  std::vector<Entity> es;
  for (std::size_t i = 0; i < n; ++i) {
    Entity e;
    e.id = EntityId{static_cast<std::uint32_t>(i)};
    e.canonical_name = "e" + std::to_string(i);
    e.aliases = {"a" + std::to_string(i % n_aliases), e.canonical_name};
    e.is_emerging = with_ee && i + 1 == n;
    es.push_back(std::move(e));
  }
  return KnowledgeBase(std::move(es));
}

/// Documents of filler words "w<k>" with single-token mentions of random
/// entities; every mention is labeled gold with probability `p_label`.
inline std::vector<Document> random_corpus(Rng& rng, const KnowledgeBase& kb, std::size_t n_docs, std::size_t vocab,
                                           double p_label = 1.0) {
  std::vector<Document> docs;
  for (std::size_t d = 0; d < n_docs; ++d) {
    Document doc;
    doc.doc_id = "d" + std::to_string(d);
    const std::size_t len = 8 + pick(rng, 16);
    for (std::size_t t = 0; t < len; ++t) {
      if (pick(rng, 4) == 0) {
        const Entity& e = kb.entities()[pick(rng, kb.size())];
        const std::string& surface = e.aliases[pick(rng, e.aliases.size())];
        MentionOccurrence m;
        m.start = doc.tokens.size();
        m.end = m.start + 1;
        m.surface = surface;
        m.is_candidate = kb.emerging() && [&] {
          const auto& ee = kb.at(*kb.emerging());
          return std::find(ee.aliases.begin(), ee.aliases.end(), surface) != ee.aliases.end();
        }();
        if (uniform(rng, 0, 1) < p_label) m.label = Label::gold(e.id);
        doc.tokens.push_back(surface);
        doc.mentions.push_back(std::move(m));
      } else {
        doc.tokens.push_back("w" + std::to_string(pick(rng, vocab)));
      }
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

inline WorldConfig small_world_config(std::uint64_t seed = 7) {
  WorldConfig cfg;
  cfg.n_entities = 80;
  cfg.n_ees = 2;
  cfg.vocab_size = 400;
  cfg.topic_dim = 6;
  cfg.ambiguous_aliases = 30;
  cfg.wiki_docs = 600;
  cfg.model_docs = 300;
  cfg.web_docs_per_ee = 60;
  cfg.labeled_per_ee = 6;
  cfg.test_docs_per_ee = 40;
  cfg.ee_doc_freq_range = {5, 60};
  cfg.seed = seed;
  return cfg;
}

inline PipelineConfig small_pipeline() {
  PipelineConfig p;
  p.embed.dim = 16;
  p.embed.epochs = 8;
  p.embed.word_epochs = 3;
  p.shape.dim = 16;
  p.shape.window = 20;
  p.shape.attention_keep = 10;
  p.shape.hidden = 16;
  p.train.epochs = 3;
  return p;
}

/// A generated world with its frozen features and a trained model, built once per process.
struct Pipeline {
  World world;
  PipelineConfig cfg;
  NeeFeatures features;
  LinkingModel model;
};

inline const Pipeline& small_pipeline_instance() {
  static const Pipeline p = [] {
    Pipeline out{generate_world(small_world_config()), small_pipeline(), {}, {}};
    out.features = pretrain_features(out.world, out.cfg, 11);
    out.model = pretrain_model(out.world, out.features, ModelKind::DeepEd, FeatureMask{}, out.cfg, 12);
    return out;
  }();
  return p;
}

}  // namespace stamo::test
