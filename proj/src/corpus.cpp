#include "stamo/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "stamo/util.hpp"

namespace stamo {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// JSONL

namespace {

ordered_json document_to_json(const Document& doc) {
  ordered_json j;
  j["doc_id"] = doc.doc_id;
  j["source"] = doc.source == SourceKind::WikiLike ? "wiki" : "web";
  j["tokens"] = doc.tokens;
  j["mentions"] = ordered_json::array();
  for (const auto& m : doc.mentions) {
    ordered_json mj;
    mj["start"] = m.start;
    mj["end"] = m.end;
    mj["surface"] = m.surface;
    mj["candidate"] = m.is_candidate;
    ordered_json label;
    switch (m.label.kind) {
      case LabelKind::Gold: label["kind"] = "gold"; break;
      case LabelKind::Pseudo: label["kind"] = "pseudo"; break;
      case LabelKind::None: label["kind"] = "none"; break;
    }
    if (m.label.known()) label["entity"] = m.label.entity.value;
    mj["label"] = std::move(label);
    j["mentions"].push_back(std::move(mj));
  }
  return j;
}

Label label_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "none") return Label::none();
  const auto entity = EntityId{j.at("entity").get<std::uint32_t>()};
  if (kind == "gold") return Label::gold(entity);
  if (kind == "pseudo") return Label::pseudo(entity);
  throw DataError("unknown label kind: " + kind);
}

Document document_from_json(const json& j) {
  Document doc;
  doc.doc_id = j.at("doc_id").get<std::string>();
  const std::string source = j.at("source").get<std::string>();
  if (source == "wiki")
    doc.source = SourceKind::WikiLike;
  else if (source == "web")
    doc.source = SourceKind::WebLike;
  else
    throw DataError("unknown source: " + source);
  doc.tokens = j.at("tokens").get<std::vector<std::string>>();
  for (const auto& mj : j.at("mentions")) {
    MentionOccurrence m;
    m.start = mj.at("start").get<std::size_t>();
    m.end = mj.at("end").get<std::size_t>();
    m.surface = mj.at("surface").get<std::string>();
    m.is_candidate = mj.value("candidate", false);
    if (mj.contains("label")) m.label = label_from_json(mj.at("label"));
    doc.mentions.push_back(std::move(m));
  }
  validate_document(doc);
  return doc;
}

}  // namespace

std::vector<Document> parse_corpus(std::string_view text) {
  std::vector<Document> docs;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      docs.push_back(document_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return docs;
}

std::string format_corpus(const std::vector<Document>& docs) {
  std::string out;
  for (const auto& d : docs) {
    out += document_to_json(d).dump();
    out += '\n';
  }
  return out;
}

std::vector<Document> load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_corpus(buf.str());
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

void save_corpus(const std::vector<Document>& docs, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << format_corpus(docs);
}

// ---------------------------------------------------------------------------
// Config

void WorldConfig::validate() const {
  const auto fail = [](const std::string& why) { throw std::invalid_argument("world config: " + why); };
  if (n_entities < 2) fail("need at least two non-emerging entities");
  if (aliases_per_entity == 0 || aliases_per_entity > 3) fail("aliases_per_entity must be in 1..3");
  if (topic_dim == 0) fail("topic_dim must be positive");
  if (vocab_size < 4 * topic_dim) fail("vocab_size too small for the topic count");
  if (ee_doc_freq_range[0] == 0 || ee_doc_freq_range[0] > ee_doc_freq_range[1])
    fail("ee_doc_freq_range must satisfy 0 < lo <= hi");
  if (!(ee_ambiguity_range[0] > 0.0 && ee_ambiguity_range[0] <= ee_ambiguity_range[1] &&
        ee_ambiguity_range[1] < 1.0))
    fail("ee_ambiguity_range must lie inside (0, 1)");
  if (labeled_per_ee > web_docs_per_ee) fail("labeled_per_ee exceeds web_docs_per_ee");
  if (ambiguous_aliases < n_ees * aliases_per_entity) fail("too few shared aliases for the emerging entities");
  if (max_alias_sharing < 1) fail("max_alias_sharing must be positive");
  if (web_signature + web_topic > 1.0 || wiki_signature + wiki_topic > 1.0) fail("word mix exceeds 1");
  if (!(primary_topic_mass > 0.0 && primary_topic_mass <= 1.0)) fail("primary_topic_mass must be in (0, 1]");
  if (doc_length == 0) fail("doc_length must be positive");
  if (!(ee_twin_overlap >= 0.0 && ee_twin_overlap <= 1.0)) fail("ee_twin_overlap must be in [0, 1]");
}

// ---------------------------------------------------------------------------
// Generator

namespace {

struct EntitySpec {
  std::string name;
  std::vector<std::string> shared;  // shared aliases this entity answers to
  std::size_t primary = 0;
  std::size_t secondary = 0;
  std::vector<std::size_t> signature;  // word indices
  std::vector<std::uint32_t> friends;  // non-emerging entity ids
  double popularity = 1.0;
};

class Generator {
 public:
  explicit Generator(const WorldConfig& cfg) : cfg_(cfg), rng_(mix_seed(cfg.seed, 0xC0)) {}

  World run();

 private:
  std::string fresh_name();
  void build_vocabulary();
  void build_entities();
  void build_aliases();
  void make_twin(EntitySpec& ee);
  std::size_t draw_word(const EntitySpec& e, SourceKind source);
  Document make_doc(std::string id, SourceKind source, const EntitySpec& main,
                    const std::vector<MentionOccurrence>& mentions);
  std::vector<MentionOccurrence> friend_mentions(const EntitySpec& e);
  std::uint32_t draw_by_weight(const std::vector<std::uint32_t>& ids, const std::vector<double>& w);
  std::vector<Document> wiki_corpus();
  std::vector<Document> model_corpus();
  std::vector<Document> candidate_docs(std::size_t ee_index, const EntitySpec& ee, double ambiguity,
                                       std::size_t count, SourceKind source, const std::string& tag);
  EeTask make_task(std::size_t j);

  const WorldConfig& cfg_;
  Rng rng_;
  std::set<std::string> used_names_;
  std::vector<std::string> words_;
  std::vector<std::vector<std::size_t>> topic_words_;
  std::vector<std::size_t> background_;
  std::vector<EntitySpec> nee_;
  std::vector<EntitySpec> ee_;
  std::map<std::string, std::vector<std::uint32_t>> alias_owners_;  // shared alias -> NEEs
  WorldTruth truth_;
};

std::string Generator::fresh_name() {
  static constexpr const char* kOnset[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z",
                                           "br", "dr", "kr", "st", "th", "sh"};
  static constexpr const char* kVowel[] = {"a", "e", "i", "o", "u", "ai", "ou"};
  std::uniform_int_distribution<std::size_t> onset(0, std::size(kOnset) - 1), vowel(0, std::size(kVowel) - 1),
      syllables(2, 3);
  for (;;) {
    std::string s;
    const std::size_t n = syllables(rng_);
    for (std::size_t i = 0; i < n; ++i) s += std::string(kOnset[onset(rng_)]) + kVowel[vowel(rng_)];
    if (used_names_.insert(s).second) return s;
  }
}

void Generator::build_vocabulary() {
  const std::size_t n_background = cfg_.vocab_size / 4;
  const std::size_t per_topic = (cfg_.vocab_size - n_background) / cfg_.topic_dim;
  topic_words_.assign(cfg_.topic_dim, {});
  for (std::size_t k = 0; k < cfg_.topic_dim; ++k)
    for (std::size_t i = 0; i < per_topic; ++i) {
      topic_words_[k].push_back(words_.size());
      words_.push_back("w" + std::to_string(words_.size()));
    }
  while (words_.size() < cfg_.vocab_size) {
    background_.push_back(words_.size());
    words_.push_back("w" + std::to_string(words_.size()));
  }
}

void Generator::build_entities() {
  std::uniform_int_distribution<std::size_t> topic(0, cfg_.topic_dim - 1);
  std::normal_distribution<double> lognormal(0.0, 1.0);
  const auto make = [&]() {
    EntitySpec e;
    e.primary = topic(rng_);
    do e.secondary = topic(rng_);
    while (cfg_.topic_dim > 1 && e.secondary == e.primary);
    const auto& pool = topic_words_[e.primary];
    std::vector<std::size_t> sig;
    std::sample(pool.begin(), pool.end(), std::back_inserter(sig), cfg_.signature_words, rng_);
    e.signature = std::move(sig);
    e.popularity = std::exp(lognormal(rng_));
    return e;
  };
  nee_.resize(cfg_.n_entities);
  for (auto& e : nee_) {
    e = make();
    e.name = fresh_name();
  }
  ee_.resize(cfg_.n_ees);
  for (auto& e : ee_) {
    e = make();
    e.name = fresh_name();
  }
  std::vector<std::vector<std::uint32_t>> by_topic(cfg_.topic_dim);
  for (std::uint32_t i = 0; i < nee_.size(); ++i) by_topic[nee_[i].primary].push_back(i);
  const auto pick_friends = [&](EntitySpec& e, std::optional<std::uint32_t> self) {
    std::vector<std::uint32_t> pool;
    for (std::uint32_t i : by_topic[e.primary])
      if (!self || i != *self) pool.push_back(i);
    if (pool.size() < cfg_.friends_per_entity)
      for (std::uint32_t i = 0; i < nee_.size(); ++i)
        if ((!self || i != *self) && std::find(pool.begin(), pool.end(), i) == pool.end()) pool.push_back(i);
    std::sample(pool.begin(), pool.end(), std::back_inserter(e.friends),
                std::min(cfg_.friends_per_entity, pool.size()), rng_);
    std::shuffle(e.friends.begin(), e.friends.end(), rng_);
  };
  for (std::uint32_t i = 0; i < nee_.size(); ++i) pick_friends(nee_[i], i);
  for (auto& e : ee_) pick_friends(e, std::nullopt);
  truth_.primary_topic.clear();
  for (const auto& e : nee_) truth_.primary_topic.push_back(e.primary);
}

void Generator::build_aliases() {
  std::uniform_int_distribution<std::size_t> sharing(2, std::max<std::size_t>(2, cfg_.max_alias_sharing));
  std::uniform_int_distribution<std::uint32_t> any(0, static_cast<std::uint32_t>(nee_.size() - 1));
  std::vector<std::string> pool;
  for (std::size_t a = 0; a < cfg_.ambiguous_aliases; ++a) {
    const std::string alias = fresh_name();
    std::set<std::uint32_t> owners;
    const std::size_t want = std::min(sharing(rng_), nee_.size());
    while (owners.size() < want) owners.insert(any(rng_));
    for (std::uint32_t o : owners) nee_[o].shared.push_back(alias);
    alias_owners_[alias] = {owners.begin(), owners.end()};
    pool.push_back(alias);
  }
  // Emerging entities take aliases owned by entities of their own topic when
  // possible, so topic words alone cannot separate them.
  std::set<std::string> taken;
  for (auto& ee : ee_) {
    std::vector<std::string> clean, rest;
    for (const auto& a : pool) {
      if (taken.count(a)) continue;
      const auto& owners = alias_owners_[a];
      const bool clash = std::any_of(owners.begin(), owners.end(),
                                     [&](std::uint32_t o) { return nee_[o].primary == ee.primary; });
      (clash ? clean : rest).push_back(a);
    }
    std::shuffle(clean.begin(), clean.end(), rng_);
    std::shuffle(rest.begin(), rest.end(), rng_);
    clean.insert(clean.end(), rest.begin(), rest.end());
    if (clean.size() < cfg_.aliases_per_entity) throw DataError("not enough shared aliases for emerging entities");
    ee.shared.assign(clean.begin(), clean.begin() + static_cast<std::ptrdiff_t>(cfg_.aliases_per_entity));
    taken.insert(ee.shared.begin(), ee.shared.end());
    make_twin(ee);
  }
  for (const auto& [alias, owners] : alias_owners_) {
    double total = 0.0;
    for (std::uint32_t o : owners) total += nee_[o].popularity / static_cast<double>(nee_[o].shared.size());
    auto& col = truth_.prior[alias];
    for (std::uint32_t o : owners) col[o] = nee_[o].popularity / static_cast<double>(nee_[o].shared.size()) / total;
  }
}

// The emerging entity copies part of its context from the most popular
// same-topic owner of its first alias. Mislabeled rival documents then pull
// its estimated features toward the rival.
void Generator::make_twin(EntitySpec& ee) {
  const auto& owners = alias_owners_.at(ee.shared.front());
  std::optional<std::uint32_t> rival;
  for (int same_topic = 1; same_topic >= 0 && !rival; --same_topic)
    for (std::uint32_t o : owners)
      if ((!same_topic || nee_[o].primary == ee.primary) && (!rival || nee_[o].popularity > nee_[*rival].popularity))
        rival = o;
  const EntitySpec& r = nee_[*rival];
  ee.secondary = r.secondary;
  const auto copy = [&](auto& mine, const auto& theirs) {
    const auto n = static_cast<std::size_t>(std::lround(cfg_.ee_twin_overlap * static_cast<double>(mine.size())));
    std::size_t i = 0;
    for (const auto& x : theirs) {
      if (i >= n) break;
      if (std::find(mine.begin(), mine.end(), x) != mine.end()) continue;
      mine[i++] = x;
    }
  };
  copy(ee.friends, r.friends);
  copy(ee.signature, r.signature);
}

std::size_t Generator::draw_word(const EntitySpec& e, SourceKind source) {
  const double p_sig = source == SourceKind::WikiLike ? cfg_.wiki_signature : cfg_.web_signature;
  const double p_topic = source == SourceKind::WikiLike ? cfg_.wiki_topic : cfg_.web_topic;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = u(rng_);
  const auto uniform = [&](const std::vector<std::size_t>& v) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng_)];
  };
  if (r < p_sig && !e.signature.empty()) return uniform(e.signature);
  if (r < p_sig + p_topic) {
    const std::size_t k = u(rng_) < cfg_.primary_topic_mass ? e.primary : e.secondary;
    return uniform(topic_words_[k]);
  }
  return background_.empty() ? uniform(topic_words_[e.primary]) : uniform(background_);
}

Document Generator::make_doc(std::string id, SourceKind source, const EntitySpec& main,
                             const std::vector<MentionOccurrence>& mentions) {
  std::vector<std::string> words;
  for (std::size_t i = 0; i < cfg_.doc_length; ++i) words.push_back(words_[draw_word(main, source)]);
  // Mentions go in at distinct gaps, in shuffled order.
  std::vector<MentionOccurrence> order = mentions;
  std::shuffle(order.begin(), order.end(), rng_);
  std::vector<std::size_t> gaps(words.size() + 1);
  std::iota(gaps.begin(), gaps.end(), std::size_t{0});
  std::vector<std::size_t> chosen;
  std::sample(gaps.begin(), gaps.end(), std::back_inserter(chosen), order.size(), rng_);
  std::sort(chosen.begin(), chosen.end());

  Document doc;
  doc.doc_id = std::move(id);
  doc.source = source;
  std::size_t w = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    while (w < chosen[i]) doc.tokens.push_back(words[w++]);
    MentionOccurrence m = order[i];
    m.start = doc.tokens.size();
    doc.tokens.push_back(m.surface);
    m.end = doc.tokens.size();
    doc.mentions.push_back(std::move(m));
  }
  while (w < words.size()) doc.tokens.push_back(words[w++]);
  return doc;
}

std::vector<MentionOccurrence> Generator::friend_mentions(const EntitySpec& e) {
  std::vector<MentionOccurrence> out;
  if (e.friends.empty()) return out;
  const std::size_t n = std::uniform_int_distribution<std::size_t>(1, std::min<std::size_t>(3, e.friends.size()))(rng_);
  std::vector<std::uint32_t> picked;
  std::sample(e.friends.begin(), e.friends.end(), std::back_inserter(picked), n, rng_);
  for (std::uint32_t f : picked) {
    MentionOccurrence m;
    m.surface = nee_[f].name;
    m.label = Label::gold(EntityId{f});
    out.push_back(std::move(m));
  }
  return out;
}

std::uint32_t Generator::draw_by_weight(const std::vector<std::uint32_t>& ids, const std::vector<double>& w) {
  std::discrete_distribution<std::size_t> d(w.begin(), w.end());
  return ids[d(rng_)];
}

std::vector<Document> Generator::wiki_corpus() {
  std::vector<std::uint32_t> ids(nee_.size());
  std::iota(ids.begin(), ids.end(), 0u);
  std::vector<double> pop;
  for (const auto& e : nee_) pop.push_back(e.popularity);
  std::uniform_int_distribution<std::size_t> n_main(1, 3);
  std::bernoulli_distribution use_alias(0.5);
  std::vector<Document> docs;
  for (std::size_t d = 0; d < cfg_.wiki_docs; ++d) {
    const std::uint32_t id = draw_by_weight(ids, pop);
    const EntitySpec& e = nee_[id];
    auto mentions = friend_mentions(e);
    for (std::size_t k = n_main(rng_); k > 0; --k) {
      MentionOccurrence m;
      if (!e.shared.empty() && use_alias(rng_))
        m.surface = e.shared[std::uniform_int_distribution<std::size_t>(0, e.shared.size() - 1)(rng_)];
      else
        m.surface = e.name;
      m.label = Label::gold(EntityId{id});
      mentions.push_back(std::move(m));
    }
    docs.push_back(make_doc("wiki-" + std::to_string(d), SourceKind::WikiLike, e, mentions));
  }
  return docs;
}

std::vector<Document> Generator::model_corpus() {
  std::vector<std::uint32_t> ids;
  std::vector<double> pop;
  for (std::uint32_t i = 0; i < nee_.size(); ++i)
    if (!nee_[i].shared.empty()) {
      ids.push_back(i);
      pop.push_back(nee_[i].popularity);
    }
  std::vector<Document> docs;
  if (ids.empty()) return docs;
  std::uniform_int_distribution<std::size_t> n_main(1, 2);
  for (std::size_t d = 0; d < cfg_.model_docs; ++d) {
    const std::uint32_t id = draw_by_weight(ids, pop);
    const EntitySpec& e = nee_[id];
    const std::string alias = e.shared[std::uniform_int_distribution<std::size_t>(0, e.shared.size() - 1)(rng_)];
    auto mentions = friend_mentions(e);
    for (std::size_t k = n_main(rng_); k > 0; --k) {
      MentionOccurrence m;
      m.surface = alias;
      m.label = Label::gold(EntityId{id});
      mentions.push_back(std::move(m));
    }
    docs.push_back(make_doc("model-" + std::to_string(d), SourceKind::WebLike, e, mentions));
  }
  return docs;
}

std::vector<Document> Generator::candidate_docs(std::size_t ee_index, const EntitySpec& ee, double ambiguity,
                                                std::size_t count, SourceKind source, const std::string& tag) {
  const EntityId ee_id{static_cast<std::uint32_t>(nee_.size())};
  std::bernoulli_distribution is_ee(ambiguity);
  std::uniform_int_distribution<std::size_t> n_main(1, 2);
  std::vector<Document> docs;
  for (std::size_t d = 0; d < count; ++d) {
    const std::string& alias = ee.shared[std::uniform_int_distribution<std::size_t>(0, ee.shared.size() - 1)(rng_)];
    EntityId referent = ee_id;
    const EntitySpec* main = &ee;
    if (!is_ee(rng_)) {
      const auto& owners = alias_owners_.at(alias);
      std::vector<double> w;
      for (std::uint32_t o : owners) w.push_back(truth_.prior.at(alias).at(o));
      referent = EntityId{draw_by_weight(owners, w)};
      main = &nee_[referent.value];
    }
    auto mentions = friend_mentions(*main);
    for (std::size_t k = n_main(rng_); k > 0; --k) {
      MentionOccurrence m;
      m.surface = alias;
      m.is_candidate = true;
      m.label = Label::gold(referent);
      mentions.push_back(std::move(m));
    }
    char id[64];
    std::snprintf(id, sizeof id, "ee%02zu-%s-%04zu", ee_index, tag.c_str(), d);
    docs.push_back(make_doc(id, source, *main, mentions));
  }
  return docs;
}

std::vector<Entity> nee_entities(const std::vector<EntitySpec>& nee) {
  std::vector<Entity> out;
  for (std::uint32_t i = 0; i < nee.size(); ++i) {
    Entity e;
    e.id = EntityId{i};
    e.canonical_name = nee[i].name;
    e.aliases.push_back(nee[i].name);
    e.aliases.insert(e.aliases.end(), nee[i].shared.begin(), nee[i].shared.end());
    out.push_back(std::move(e));
  }
  return out;
}

EeTask Generator::make_task(std::size_t j) {
  const EntitySpec& ee = ee_[j];
  EeTask task;
  char name[16];
  std::snprintf(name, sizeof name, "ee_%02zu", j);
  task.name = name;
  auto entities = nee_entities(nee_);
  Entity e;
  e.id = EntityId{static_cast<std::uint32_t>(nee_.size())};
  e.canonical_name = ee.name;
  e.aliases = ee.shared;
  e.is_emerging = true;
  entities.push_back(std::move(e));
  task.kb = KnowledgeBase(std::move(entities));

  const double lo = cfg_.ee_ambiguity_range[0], hi = cfg_.ee_ambiguity_range[1];
  const double target = lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
  const EntityId ee_id = *task.kb.emerging();
  std::vector<Document> web;
  bool ok = false;
  for (std::size_t attempt = 0; attempt < cfg_.max_retries && !ok; ++attempt) {
    web = candidate_docs(j, ee, target, cfg_.web_docs_per_ee, SourceKind::WebLike, "web");
    const double realized = ambiguity_rate(web, ee_id);
    const std::size_t freq = static_cast<std::size_t>(std::count_if(web.begin(), web.end(), [&](const Document& d) {
      return std::any_of(d.mentions.begin(), d.mentions.end(),
                         [&](const MentionOccurrence& m) { return m.label.known() && m.label.entity == ee_id; });
    }));
    ok = std::abs(realized - target) <= 0.05 && freq >= cfg_.ee_doc_freq_range[0] &&
         freq <= cfg_.ee_doc_freq_range[1];
    task.truth = {target, realized, freq, ee.primary};
  }
  if (!ok)
    throw DataError("emerging entity " + std::to_string(j) + " missed its ambiguity or frequency bounds after " +
                    std::to_string(cfg_.max_retries) + " attempts");
  task.test_web = candidate_docs(j, ee, target, cfg_.test_docs_per_ee, SourceKind::WebLike, "test-web");
  task.test_wiki = candidate_docs(j, ee, target, cfg_.test_docs_per_ee, SourceKind::WikiLike, "test-wiki");
  auto [l, u] = split_labeled(web, cfg_.labeled_per_ee, mix_seed(cfg_.seed, 1000 + j));
  task.labeled = std::move(l);
  task.unlabeled = std::move(u);
  task.oracle = std::move(web);
  return task;
}

World Generator::run() {
  build_vocabulary();
  build_entities();
  build_aliases();
  World w;
  w.cfg = cfg_;
  w.nee_kb = KnowledgeBase(nee_entities(nee_));
  w.wiki = wiki_corpus();
  w.model_corpus = model_corpus();
  for (std::size_t j = 0; j < ee_.size(); ++j) w.ees.push_back(make_task(j));
  w.truth = truth_;
  return w;
}

}  // namespace

World generate_world(const WorldConfig& cfg) {
  cfg.validate();
  return Generator(cfg).run();
}

double ambiguity_rate(const std::vector<Document>& docs, EntityId ee) {
  std::size_t total = 0, hits = 0;
  for (const auto& d : docs)
    for (const auto& m : d.mentions)
      if (m.is_candidate) {
        ++total;
        hits += m.label.known() && m.label.entity == ee ? 1 : 0;
      }
  return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

std::pair<std::vector<Document>, std::vector<Document>> split_labeled(const std::vector<Document>& web,
                                                                      std::size_t k, std::uint64_t seed) {
  if (k > web.size())
    throw DataError("cannot label " + std::to_string(k) + " of " + std::to_string(web.size()) + " documents");
  std::vector<std::size_t> idx(web.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<bool> in_l(web.size(), false);
  for (std::size_t i = 0; i < k; ++i) in_l[idx[i]] = true;
  std::vector<Document> l, u;
  for (std::size_t i = 0; i < web.size(); ++i) {
    if (in_l[i]) {
      l.push_back(web[i]);
      continue;
    }
    Document d = web[i];
    for (auto& m : d.mentions)
      if (m.is_candidate) m.label = Label::none();
    u.push_back(std::move(d));
  }
  return {std::move(l), std::move(u)};
}

// ---------------------------------------------------------------------------
// World directory

namespace {

ordered_json config_to_json(const WorldConfig& c) {
  ordered_json j;
  j["n_entities"] = c.n_entities;
  j["n_ees"] = c.n_ees;
  j["aliases_per_entity"] = c.aliases_per_entity;
  j["vocab_size"] = c.vocab_size;
  j["topic_dim"] = c.topic_dim;
  j["ee_doc_freq_range"] = c.ee_doc_freq_range;
  j["ee_ambiguity_range"] = c.ee_ambiguity_range;
  j["wiki_docs"] = c.wiki_docs;
  j["model_docs"] = c.model_docs;
  j["web_docs_per_ee"] = c.web_docs_per_ee;
  j["labeled_per_ee"] = c.labeled_per_ee;
  j["test_docs_per_ee"] = c.test_docs_per_ee;
  j["seed"] = c.seed;
  j["doc_length"] = c.doc_length;
  j["friends_per_entity"] = c.friends_per_entity;
  j["signature_words"] = c.signature_words;
  j["ambiguous_aliases"] = c.ambiguous_aliases;
  j["max_alias_sharing"] = c.max_alias_sharing;
  j["wiki_signature"] = c.wiki_signature;
  j["wiki_topic"] = c.wiki_topic;
  j["web_signature"] = c.web_signature;
  j["web_topic"] = c.web_topic;
  j["primary_topic_mass"] = c.primary_topic_mass;
  j["max_retries"] = c.max_retries;
  j["ee_twin_overlap"] = c.ee_twin_overlap;
  return j;
}

WorldConfig config_from_json(const json& j) {
  WorldConfig c;
  j.at("n_entities").get_to(c.n_entities);
  j.at("n_ees").get_to(c.n_ees);
  j.at("aliases_per_entity").get_to(c.aliases_per_entity);
  j.at("vocab_size").get_to(c.vocab_size);
  j.at("topic_dim").get_to(c.topic_dim);
  j.at("ee_doc_freq_range").get_to(c.ee_doc_freq_range);
  j.at("ee_ambiguity_range").get_to(c.ee_ambiguity_range);
  j.at("wiki_docs").get_to(c.wiki_docs);
  j.at("model_docs").get_to(c.model_docs);
  j.at("web_docs_per_ee").get_to(c.web_docs_per_ee);
  j.at("labeled_per_ee").get_to(c.labeled_per_ee);
  j.at("test_docs_per_ee").get_to(c.test_docs_per_ee);
  j.at("seed").get_to(c.seed);
  j.at("doc_length").get_to(c.doc_length);
  j.at("friends_per_entity").get_to(c.friends_per_entity);
  j.at("signature_words").get_to(c.signature_words);
  j.at("ambiguous_aliases").get_to(c.ambiguous_aliases);
  j.at("max_alias_sharing").get_to(c.max_alias_sharing);
  j.at("wiki_signature").get_to(c.wiki_signature);
  j.at("wiki_topic").get_to(c.wiki_topic);
  j.at("web_signature").get_to(c.web_signature);
  j.at("web_topic").get_to(c.web_topic);
  j.at("primary_topic_mass").get_to(c.primary_topic_mass);
  j.at("max_retries").get_to(c.max_retries);
  j.at("ee_twin_overlap").get_to(c.ee_twin_overlap);
  return c;
}

const char* kTaskFiles[] = {"labeled.jsonl", "unlabeled.jsonl", "oracle.jsonl", "test_web.jsonl",
                            "test_wiki.jsonl"};

}  // namespace

void save_world(const World& world, const std::string& dir) {
  fs::create_directories(dir);
  const fs::path root(dir);
  save_kb_tsv(world.nee_kb, (root / "nee_kb.tsv").string());
  save_corpus(world.wiki, (root / "wiki.jsonl").string());
  save_corpus(world.model_corpus, (root / "model.jsonl").string());

  ordered_json manifest;
  manifest["config"] = config_to_json(world.cfg);
  manifest["files"] = {{"kb", "nee_kb.tsv"}, {"wiki", "wiki.jsonl"}, {"model", "model.jsonl"}};
  ordered_json prior = ordered_json::object();
  for (const auto& [alias, col] : world.truth.prior) {
    ordered_json c = ordered_json::object();
    for (const auto& [e, p] : col) c[std::to_string(e)] = p;
    prior[alias] = std::move(c);
  }
  manifest["truth"] = {{"prior", std::move(prior)}, {"primary_topic", world.truth.primary_topic}};
  manifest["ees"] = ordered_json::array();
  for (const auto& task : world.ees) {
    const fs::path sub = root / task.name;
    fs::create_directories(sub);
    save_kb_tsv(task.kb, (sub / "kb.tsv").string());
    const std::vector<Document>* sets[] = {&task.labeled, &task.unlabeled, &task.oracle, &task.test_web,
                                           &task.test_wiki};
    for (std::size_t i = 0; i < std::size(kTaskFiles); ++i) save_corpus(*sets[i], (sub / kTaskFiles[i]).string());
    ordered_json t;
    t["name"] = task.name;
    t["dir"] = task.name;
    t["target_ambiguity"] = task.truth.target_ambiguity;
    t["ambiguity"] = task.truth.ambiguity;
    t["doc_freq"] = task.truth.doc_freq;
    t["primary_topic"] = task.truth.primary_topic;
    t["labeled"] = task.labeled.size();
    t["unlabeled"] = task.unlabeled.size();
    manifest["ees"].push_back(std::move(t));
  }
  std::ofstream out(root / "world.json");
  if (!out) throw DataError("cannot write " + (root / "world.json").string());
  out << manifest.dump(2) << '\n';
}

World load_world(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream in(root / "world.json");
  if (!in) throw DataError("cannot open " + (root / "world.json").string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const std::exception& e) {
    throw DataError("world.json: " + std::string(e.what()));
  }
  World w;
  try {
    w.cfg = config_from_json(manifest.at("config"));
    for (const auto& [alias, col] : manifest.at("truth").at("prior").items())
      for (const auto& [e, p] : col.items()) w.truth.prior[alias][static_cast<std::uint32_t>(std::stoul(e))] = p.get<double>();
    manifest.at("truth").at("primary_topic").get_to(w.truth.primary_topic);
  } catch (const json::exception& e) {
    throw DataError("world.json: " + std::string(e.what()));
  }
  w.nee_kb = load_kb_tsv((root / "nee_kb.tsv").string());
  w.wiki = load_corpus((root / "wiki.jsonl").string());
  w.model_corpus = load_corpus((root / "model.jsonl").string());
  for (const auto& t : manifest.at("ees")) {
    EeTask task;
    task.name = t.at("name").get<std::string>();
    const fs::path sub = root / t.at("dir").get<std::string>();
    task.kb = load_kb_tsv((sub / "kb.tsv").string());
    std::vector<Document>* sets[] = {&task.labeled, &task.unlabeled, &task.oracle, &task.test_web, &task.test_wiki};
    for (std::size_t i = 0; i < std::size(kTaskFiles); ++i) *sets[i] = load_corpus((sub / kTaskFiles[i]).string());
    task.truth.target_ambiguity = t.at("target_ambiguity").get<double>();
    task.truth.ambiguity = t.at("ambiguity").get<double>();
    task.truth.doc_freq = t.at("doc_freq").get<std::size_t>();
    task.truth.primary_topic = t.at("primary_topic").get<std::size_t>();
    w.ees.push_back(std::move(task));
  }
  return w;
}

}  // namespace stamo
