#include "stamo/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "stamo/util.hpp"

namespace stamo {

// ---------------------------------------------------------------------------
// Counts and prior

std::uint64_t CooccurrenceCounts::get(EntityId e, std::uint32_t mention) const {
  auto it = counts.find({e.value, mention});
  return it == counts.end() ? 0 : it->second;
}

void CooccurrenceCounts::merge(const CooccurrenceCounts& other) {
  for (const auto& [key, n] : other.counts) counts[key] += n;
}

CooccurrenceCounts count_cooccurrences(std::span<const Document> corpus, const AliasDictionary& dict) {
  CooccurrenceCounts out;
  for (const Document& d : corpus) {
    for (const MentionOccurrence& m : d.mentions) {
      if (!m.label.known()) continue;
      auto idx = dict.mention_index(m.surface);
      if (idx == kNoMention) continue;
      ++out.counts[{m.label.entity.value, idx}];
    }
  }
  return out;
}

double PriorTable::get(EntityId e, std::uint32_t mention) const {
  auto it = entries_.find({e.value, mention});
  return it == entries_.end() ? 0.0 : it->second;
}

void PriorTable::set(EntityId e, std::uint32_t mention, double p) {
  if (p == 0.0)
    entries_.erase({e.value, mention});
  else
    entries_[{e.value, mention}] = p;
}

namespace {

std::map<std::uint32_t, std::uint64_t> column_totals(const CooccurrenceCounts& counts,
                                                     const AliasDictionary& dict) {
  std::map<std::uint32_t, std::uint64_t> totals;
  for (const auto& [key, n] : counts.counts) {
    const auto& cands = dict.lookup(dict.mention(key.second));
    if (std::binary_search(cands.begin(), cands.end(), EntityId{key.first})) totals[key.second] += n;
  }
  return totals;
}

}  // namespace

PriorTable estimate_prior(const CooccurrenceCounts& counts, const AliasDictionary& dict) {
  PriorTable out;
  const auto totals = column_totals(counts, dict);
  for (const auto& [key, n] : counts.counts) {
    auto it = totals.find(key.second);
    if (it == totals.end() || it->second == 0) continue;
    const auto& cands = dict.lookup(dict.mention(key.second));
    if (!std::binary_search(cands.begin(), cands.end(), EntityId{key.first})) continue;
    out.set(EntityId{key.first}, key.second,
            static_cast<double>(n) / static_cast<double>(it->second));
  }
  return out;
}

PriorTable update_prior_for_ee(const PriorTable& prior, const CooccurrenceCounts& web_counts,
                               EntityId ee, const AliasDictionary& dict) {
  PriorTable out = prior;
  std::set<std::uint32_t> columns;
  for (std::uint32_t j = 0; j < dict.vocab_size(); ++j) {
    const auto& cands = dict.lookup(dict.mention(j));
    if (std::binary_search(cands.begin(), cands.end(), ee)) columns.insert(j);
  }
  for (std::uint32_t j : columns) {
    std::uint64_t total = 0;
    for (EntityId e : dict.lookup(dict.mention(j))) total += web_counts.get(e, j);
    const double p = total == 0 ? 0.0
                                : static_cast<double>(web_counts.get(ee, j)) / static_cast<double>(total);
    out.set(ee, j, p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Document index and WLM

const std::vector<std::string>& DocSetIndex::docs_of(EntityId e) const {
  static const std::vector<std::string> kEmpty;
  auto it = doc_sets.find(e.value);
  return it == doc_sets.end() ? kEmpty : it->second;
}

DocSetIndex build_doc_index(std::span<const Document> corpus) {
  DocSetIndex index;
  std::set<std::string> ids;
  std::map<std::uint32_t, std::set<std::string>> sets;
  for (const Document& d : corpus) {
    ids.insert(d.doc_id);
    for (const MentionOccurrence& m : d.mentions)
      if (m.label.known()) sets[m.label.entity.value].insert(d.doc_id);
  }
  index.total_docs = ids.size();
  for (auto& [e, s] : sets) index.doc_sets.emplace(e, std::vector<std::string>(s.begin(), s.end()));
  return index;
}

namespace {

double wlm_from_sizes(std::size_t a, std::size_t b, std::size_t overlap, std::size_t total) {
  if (a == 0 || b == 0 || overlap == 0) return 0.0;
  const double num = std::log(static_cast<double>(std::max(a, b))) - std::log(static_cast<double>(overlap));
  const double den = std::log(static_cast<double>(total)) - std::log(static_cast<double>(std::min(a, b)));
  if (den <= 0.0) return num == 0.0 ? 1.0 : 0.0;
  return std::max(0.0, 1.0 - num / den);
}

std::size_t intersection_size(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::size_t n = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

}  // namespace

double wlm(EntityId i, EntityId j, const DocSetIndex& index) {
  const auto& di = index.docs_of(i);
  if (i == j) return di.empty() ? 0.0 : 1.0;
  const auto& dj = index.docs_of(j);
  if (di.empty() || dj.empty()) return 0.0;
  return wlm_from_sizes(di.size(), dj.size(), intersection_size(di, dj), index.total_docs);
}

double RelatednessMatrix::get(EntityId a, EntityId b) const {
  auto it = entries_.find({std::min(a.value, b.value), std::max(a.value, b.value)});
  return it == entries_.end() ? 0.0 : it->second;
}

void RelatednessMatrix::set(EntityId a, EntityId b, double value) {
  const std::pair key{std::min(a.value, b.value), std::max(a.value, b.value)};
  if (value == 0.0)
    entries_.erase(key);
  else
    entries_[key] = value;
}

RelatednessMatrix build_relatedness(const DocSetIndex& index) {
  std::map<std::string, std::vector<std::uint32_t>> by_doc;
  for (const auto& [e, docs] : index.doc_sets)
    for (const auto& d : docs) by_doc[d].push_back(e);
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> overlap;
  for (const auto& [d, ents] : by_doc)
    for (std::size_t x = 0; x < ents.size(); ++x)
      for (std::size_t y = x + 1; y < ents.size(); ++y) ++overlap[{ents[x], ents[y]}];

  RelatednessMatrix out;
  for (const auto& [e, docs] : index.doc_sets)
    if (!docs.empty()) out.set(EntityId{e}, EntityId{e}, 1.0);
  for (const auto& [key, n] : overlap) {
    const auto a = index.docs_of(EntityId{key.first}).size();
    const auto b = index.docs_of(EntityId{key.second}).size();
    out.set(EntityId{key.first}, EntityId{key.second}, wlm_from_sizes(a, b, n, index.total_docs));
  }
  return out;
}

RelatednessMatrix update_relatedness_for_ee(const RelatednessMatrix& matrix,
                                            const DocSetIndex& web_index, EntityId ee,
                                            std::size_t n_entities) {
  RelatednessMatrix out = matrix;
  for (std::uint32_t j = 0; j < n_entities; ++j) out.set(ee, EntityId{j}, wlm(ee, EntityId{j}, web_index));
  return out;
}

// ---------------------------------------------------------------------------
// Embeddings

WordEmbeddingTable::WordEmbeddingTable(std::vector<std::string> words, std::size_t dim)
    : dim_(dim), words_(std::move(words)), data_(words_.size() * dim, 0.0), zero_(dim, 0.0) {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], static_cast<std::int32_t>(i)).second)
      throw DataError("duplicate word in embedding table: " + words_[i]);
  }
}

std::int32_t WordEmbeddingTable::find(std::string_view word) const {
  auto it = index_.find(word);
  return it == index_.end() ? -1 : it->second;
}

std::span<const double> WordEmbeddingTable::vec(std::int32_t index) const {
  if (index < 0) return {zero_.data(), dim_};
  return {data_.data() + static_cast<std::size_t>(index) * dim_, dim_};
}

std::vector<std::int32_t> positive_words(EntityId e, std::span<const Document> corpus,
                                         const WordEmbeddingTable& words, std::size_t window) {
  std::vector<std::int32_t> out;
  for (const Document& d : corpus) {
    for (const MentionOccurrence& m : d.mentions) {
      if (!m.label.known() || m.label.entity != e) continue;
      const std::size_t lo = m.start > window ? m.start - window : 0;
      const std::size_t hi = std::min(d.tokens.size(), m.end + window);
      for (std::size_t t = lo; t < hi; ++t) {
        if (t >= m.start && t < m.end) continue;
        auto w = words.find(d.tokens[t]);
        if (w >= 0) out.push_back(w);
      }
    }
  }
  return out;
}

namespace {

// Pairs are (positive, negative) word indices; x.(w+ - w-) is formed on the fly.
double pair_score(std::span<const double> x, const WordEmbeddingTable& words, std::pair<std::int32_t, std::int32_t> p) {
  const double* wp = words.vec(p.first).data();
  const double* wn = words.vec(p.second).data();
  double s = 0.0;
  for (std::size_t q = 0; q < x.size(); ++q) s += x[q] * (wp[q] - wn[q]);
  return s;
}

double mean_hinge(std::span<const double> x, const WordEmbeddingTable& words,
                  const std::vector<std::pair<std::int32_t, std::int32_t>>& pairs, double margin) {
  if (pairs.empty()) return 0.0;
  double total = 0.0;
  for (const auto& p : pairs) total += std::max(0.0, margin - pair_score(x, words, p));
  return total / static_cast<double>(pairs.size());
}

}  // namespace

EmbeddingFit train_entity_embedding(EntityId e, std::span<const Document> corpus,
                                    const WordEmbeddingTable& words, const EmbedConfig& cfg,
                                    std::uint64_t seed) {
  const std::size_t dim = words.dim();
  EmbeddingFit fit;
  fit.vector.assign(dim, 0.0);
  const auto positives = positive_words(e, corpus, words, cfg.window);
  if (positives.empty() || words.size() == 0 || cfg.negatives == 0) {
    fit.degenerate = true;
    return fit;
  }

  Rng rng(seed);
  std::uniform_int_distribution<std::int32_t> pick(0, static_cast<std::int32_t>(words.size()) - 1);
  std::vector<std::pair<std::int32_t, std::int32_t>> pairs;
  pairs.reserve(positives.size() * cfg.negatives);
  for (std::int32_t pos : positives)
    for (std::size_t k = 0; k < cfg.negatives; ++k) pairs.emplace_back(pos, pick(rng));
  const std::size_t n_pairs = pairs.size();
  fit.pairs = n_pairs;
  fit.initial_loss = mean_hinge(fit.vector, words, pairs, cfg.margin);

  std::vector<std::size_t> order(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) order[i] = i;
  auto& x = fit.vector;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double running = 0.0;
    for (std::size_t p : order) {
      const double h = cfg.margin - pair_score(x, words, pairs[p]);
      if (h <= 0.0) continue;
      running += h;
      const double* wp = words.vec(pairs[p].first).data();
      const double* wn = words.vec(pairs[p].second).data();
      for (std::size_t q = 0; q < dim; ++q) x[q] += cfg.learning_rate * (wp[q] - wn[q]);
    }
    fit.epoch_loss.push_back(running / static_cast<double>(n_pairs));
  }
  // Unit norm, so the amount of training data does not leak into dot-product scores.
  const double norm = std::sqrt(dot(x, x));
  if (norm > 0.0)
    for (double& v : x) v /= norm;
  fit.final_loss = mean_hinge(fit.vector, words, pairs, cfg.margin);
  return fit;
}

JointEmbeddings train_word_embeddings(std::span<const Document> corpus, std::size_t n_entities,
                                      const EmbedConfig& cfg, std::uint64_t seed) {
  std::set<std::string> vocab;
  for (const Document& d : corpus) vocab.insert(d.tokens.begin(), d.tokens.end());
  JointEmbeddings out{WordEmbeddingTable(std::vector<std::string>(vocab.begin(), vocab.end()), cfg.dim),
                      EmbeddingMatrix(n_entities, cfg.dim)};
  auto& words = out.words;
  const std::size_t dim = cfg.dim;
  if (words.size() == 0) return out;

  Rng rng(seed);
  std::normal_distribution<double> init(0.0, cfg.init_scale);
  for (std::size_t w = 0; w < words.size(); ++w)
    for (double& v : words.mutable_vec(static_cast<std::int32_t>(w))) v = init(rng);
  for (std::size_t e = 0; e < n_entities; ++e)
    for (double& v : out.entities.row(EntityId{static_cast<std::uint32_t>(e)})) v = init(rng);

  // (entity, positive word) pairs in corpus order.
  std::vector<std::pair<std::uint32_t, std::int32_t>> pairs;
  for (const Document& d : corpus) {
    for (const MentionOccurrence& m : d.mentions) {
      if (!m.label.known() || m.label.entity.value >= n_entities) continue;
      const std::size_t lo = m.start > cfg.window ? m.start - cfg.window : 0;
      const std::size_t hi = std::min(d.tokens.size(), m.end + cfg.window);
      for (std::size_t t = lo; t < hi; ++t) {
        if (t >= m.start && t < m.end) continue;
        pairs.emplace_back(m.label.entity.value, words.find(d.tokens[t]));
      }
    }
  }

  std::uniform_int_distribution<std::int32_t> pick(0, static_cast<std::int32_t>(words.size()) - 1);
  std::vector<double> x_old(dim);
  for (std::size_t epoch = 0; epoch < cfg.word_epochs; ++epoch) {
    std::shuffle(pairs.begin(), pairs.end(), rng);
    for (const auto& [e, pos] : pairs) {
      auto x = out.entities.row(EntityId{e});
      for (std::size_t k = 0; k < cfg.negatives; ++k) {
        const std::int32_t neg = pick(rng);
        if (neg == pos) continue;
        auto wp = words.mutable_vec(pos);
        auto wn = words.mutable_vec(neg);
        double s = 0.0;
        for (std::size_t q = 0; q < dim; ++q) s += x[q] * (wp[q] - wn[q]);
        if (cfg.margin - s <= 0.0) continue;
        std::copy(x.begin(), x.end(), x_old.begin());
        for (std::size_t q = 0; q < dim; ++q) {
          x[q] += cfg.learning_rate * (wp[q] - wn[q]);
          wp[q] += cfg.learning_rate * x_old[q];
          wn[q] -= cfg.learning_rate * x_old[q];
        }
      }
    }
  }
  return out;
}

FeatureStore estimate_features(std::span<const Document> corpus, const AliasDictionary& dict,
                               std::size_t n_entities, const EmbedConfig& cfg, std::uint64_t seed) {
  FeatureStore store;
  store.prior = estimate_prior(count_cooccurrences(corpus, dict), dict);
  const auto index = build_doc_index(corpus);
  store.relatedness = build_relatedness(index);
  auto joint = train_word_embeddings(corpus, n_entities, cfg, mix_seed(seed, 1));
  store.words = std::move(joint.words);
  store.entities = EmbeddingMatrix(n_entities, cfg.dim);
  for (const auto& [e, docs] : index.doc_sets) {
    if (e >= n_entities) continue;
    auto fit = train_entity_embedding(EntityId{e}, corpus, store.words, cfg, mix_seed(seed, 100 + e));
    std::copy(fit.vector.begin(), fit.vector.end(), store.entities.row(EntityId{e}).begin());
  }
  return store;
}

namespace {

void hash_store(const FeatureStore& store, Fnv1a& h, std::optional<EntityId> skip) {
  const auto skipped = [&](std::uint32_t e) { return skip && skip->value == e; };
  for (const auto& [key, p] : store.prior.entries()) {
    if (skipped(key.first)) continue;
    h.add(std::uint64_t{key.first});
    h.add(std::uint64_t{key.second});
    h.add(p);
  }
  for (const auto& [key, r] : store.relatedness.entries()) {
    if (skipped(key.first) || skipped(key.second)) continue;
    h.add(std::uint64_t{key.first});
    h.add(std::uint64_t{key.second});
    h.add(r);
  }
  for (std::uint32_t e = 0; e < store.entities.rows(); ++e)
    if (!skipped(e)) h.add(store.entities.row(EntityId{e}));
  for (const auto& w : store.words.words()) h.add(w);
  h.add(std::span<const double>(store.words.data()));
}

}  // namespace

std::uint64_t checksum(const FeatureStore& store) {
  Fnv1a h;
  hash_store(store, h, std::nullopt);
  return h.value();
}

std::uint64_t checksum_excluding(const FeatureStore& store, EntityId ee) {
  Fnv1a h;
  hash_store(store, h, ee);
  return h.value();
}

const char* to_string(FeatureGroup g) {
  switch (g) {
    case FeatureGroup::Prior: return "prior";
    case FeatureGroup::Relatedness: return "relatedness";
    case FeatureGroup::Embedding: return "embedding";
  }
  return "?";
}

EeLayout EeLayout::for_task(const KnowledgeBase& kb, const AliasDictionary& dict, std::size_t dim) {
  auto ee = kb.emerging();
  if (!ee) throw DataError("knowledge base has no emerging entity");
  EeLayout layout;
  layout.ee = *ee;
  for (const auto& alias : kb.at(*ee).aliases) {
    auto idx = dict.mention_index(alias);
    if (idx == kNoMention) throw DataError("alias missing from dictionary: " + alias);
    layout.alias_mentions.push_back(idx);
  }
  layout.n_entities = kb.size();
  layout.dim = dim;
  return layout;
}

std::size_t EeLayout::offset(FeatureGroup g) const {
  switch (g) {
    case FeatureGroup::Prior: return 0;
    case FeatureGroup::Relatedness: return alias_mentions.size();
    case FeatureGroup::Embedding: return alias_mentions.size() + n_entities;
  }
  return 0;
}

std::size_t EeLayout::extent(FeatureGroup g) const {
  switch (g) {
    case FeatureGroup::Prior: return alias_mentions.size();
    case FeatureGroup::Relatedness: return n_entities;
    case FeatureGroup::Embedding: return dim;
  }
  return 0;
}

int EeLayout::alias_slot(std::uint32_t mention) const {
  for (std::size_t i = 0; i < alias_mentions.size(); ++i)
    if (alias_mentions[i] == mention) return static_cast<int>(i);
  return -1;
}

EeParams extract_ee(const FeatureStore& store, const EeLayout& layout) {
  EeParams p = EeParams::zeros(layout);
  auto prior = p.group(FeatureGroup::Prior);
  for (std::size_t i = 0; i < layout.alias_mentions.size(); ++i)
    prior[i] = store.prior.get(layout.ee, layout.alias_mentions[i]);
  auto rel = p.group(FeatureGroup::Relatedness);
  for (std::uint32_t j = 0; j < layout.n_entities; ++j) rel[j] = store.relatedness.get(layout.ee, EntityId{j});
  auto emb = store.entities.row(layout.ee);
  std::copy(emb.begin(), emb.end(), p.group(FeatureGroup::Embedding).begin());
  return p;
}

FeatureStore with_ee(const FeatureStore& base, const EeParams& ee) {
  FeatureStore out = base;
  const auto& layout = ee.layout;
  auto prior = ee.group(FeatureGroup::Prior);
  for (std::size_t i = 0; i < layout.alias_mentions.size(); ++i)
    out.prior.set(layout.ee, layout.alias_mentions[i], prior[i]);
  auto rel = ee.group(FeatureGroup::Relatedness);
  for (std::uint32_t j = 0; j < layout.n_entities; ++j) out.relatedness.set(layout.ee, EntityId{j}, rel[j]);
  auto emb = ee.group(FeatureGroup::Embedding);
  std::copy(emb.begin(), emb.end(), out.entities.row(layout.ee).begin());
  return out;
}

std::uint64_t digest(const EeParams& p) {
  Fnv1a h;
  h.add(std::span<const double>(p.values));
  return h.value();
}

double FeatureView::prior(EntityId e, std::uint32_t mention) const {
  if (is_ee(e)) {
    const int slot = ee_->layout.alias_slot(mention);
    return slot < 0 ? 0.0 : ee_->values[static_cast<std::size_t>(slot)];
  }
  return base_->prior.get(e, mention);
}

double FeatureView::relatedness(EntityId a, EntityId b) const {
  if (is_ee(a)) return ee_->group(FeatureGroup::Relatedness)[b.value];
  if (is_ee(b)) return ee_->group(FeatureGroup::Relatedness)[a.value];
  return base_->relatedness.get(a, b);
}

std::span<const double> FeatureView::embedding(EntityId e) const {
  if (is_ee(e)) return ee_->group(FeatureGroup::Embedding);
  return base_->entities.row(e);
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

constexpr char kMagic[4] = {'S', 'T', 'M', 'F'};

void put_u32(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    const int c = in.get();
    if (c == EOF) throw DataError("truncated matrix header");
    v |= static_cast<std::uint32_t>(c & 0xff) << (8 * i);
  }
  return v;
}

void write_matrix(const std::string& path, std::size_t rows, std::size_t dim, const std::vector<double>& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out.write(kMagic, 4);
  out.put(static_cast<char>(kStoreFormatVersion));
  put_u32(out, static_cast<std::uint32_t>(dim));
  put_u32(out, static_cast<std::uint32_t>(rows));
  for (double v : data) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

std::vector<double> read_matrix(const std::string& path, std::size_t& rows, std::size_t& dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) throw DataError(path + ": bad magic");
  const int version = in.get();
  if (version != kStoreFormatVersion) throw DataError(path + ": unsupported format version");
  dim = get_u32(in);
  rows = get_u32(in);
  std::vector<double> data(rows * dim);
  for (double& v : data) v = static_cast<double>(std::bit_cast<float>(get_u32(in)));
  return data;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void save_feature_store(const FeatureStore& store, const AliasDictionary& dict, const std::string& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir + "/prior.tsv");
    if (!out) throw DataError("cannot write " + dir + "/prior.tsv");
    for (const auto& [key, p] : store.prior.entries())
      out << key.first << '\t' << dict.mention(key.second) << '\t' << fmt_double(p) << '\n';
  }
  {
    std::ofstream out(dir + "/relatedness.tsv");
    if (!out) throw DataError("cannot write " + dir + "/relatedness.tsv");
    for (const auto& [key, r] : store.relatedness.entries())
      out << key.first << '\t' << key.second << '\t' << fmt_double(r) << '\n';
  }
  write_matrix(dir + "/embeddings.f32", store.entities.rows(), store.entities.dim(), store.entities.data());
  write_matrix(dir + "/words.f32", store.words.size(), store.words.dim(), store.words.data());
  std::ofstream words(dir + "/words.txt");
  for (const auto& w : store.words.words()) words << w << '\n';
}

FeatureStore load_feature_store(const std::string& dir, const AliasDictionary& dict,
                                std::optional<std::size_t> expected_dim) {
  FeatureStore store;
  std::size_t rows = 0, dim = 0;
  auto ent = read_matrix(dir + "/embeddings.f32", rows, dim);
  if (expected_dim && dim != *expected_dim)
    throw DataError("embedding dimension " + std::to_string(dim) + " does not match expected " +
                    std::to_string(*expected_dim));
  store.entities = EmbeddingMatrix(rows, dim);
  for (std::uint32_t e = 0; e < rows; ++e)
    std::copy_n(ent.begin() + e * dim, dim, store.entities.row(EntityId{e}).begin());

  std::size_t wrows = 0, wdim = 0;
  auto wdata = read_matrix(dir + "/words.f32", wrows, wdim);
  if (wdim != dim) throw DataError("word dimension does not match entity dimension");
  std::vector<std::string> words;
  {
    std::ifstream in(dir + "/words.txt");
    if (!in) throw DataError("cannot open " + dir + "/words.txt");
    std::string line;
    while (std::getline(in, line)) words.push_back(line);
  }
  if (words.size() != wrows) throw DataError("words.txt does not match words.f32");
  store.words = WordEmbeddingTable(std::move(words), wdim);
  for (std::size_t w = 0; w < wrows; ++w)
    std::copy_n(wdata.begin() + w * wdim, wdim, store.words.mutable_vec(static_cast<std::int32_t>(w)).begin());

  const auto read_rows = [&](const std::string& name, auto&& handle) {
    std::ifstream in(dir + "/" + name);
    if (!in) throw DataError("cannot open " + dir + "/" + name);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::istringstream ss(line);
      std::string a, b, c;
      if (!std::getline(ss, a, '\t') || !std::getline(ss, b, '\t') || !std::getline(ss, c))
        throw DataError(name + ":" + std::to_string(lineno) + ": expected 3 columns");
      try {
        handle(a, b, std::stod(c));
      } catch (const std::invalid_argument&) {
        throw DataError(name + ":" + std::to_string(lineno) + ": bad number");
      }
    }
  };
  read_rows("prior.tsv", [&](const std::string& e, const std::string& m, double p) {
    auto idx = dict.mention_index(m);
    if (idx == kNoMention) throw DataError("prior.tsv: unknown mention " + m);
    store.prior.set(EntityId{static_cast<std::uint32_t>(std::stoul(e))}, idx, p);
  });
  read_rows("relatedness.tsv", [&](const std::string& i, const std::string& j, double r) {
    store.relatedness.set(EntityId{static_cast<std::uint32_t>(std::stoul(i))},
                          EntityId{static_cast<std::uint32_t>(std::stoul(j))}, r);
  });
  return store;
}

}  // namespace stamo
