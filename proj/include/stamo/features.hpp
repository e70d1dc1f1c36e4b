#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stamo/kb.hpp"

namespace stamo {

// ---------------------------------------------------------------------------
// Prior probability

/// Tally of labeled (entity, mention) pairs. Gold and Pseudo labels count
/// alike; unlabeled mentions are ignored.
struct CooccurrenceCounts {
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> counts;

  std::uint64_t get(EntityId e, std::uint32_t mention) const;
  void merge(const CooccurrenceCounts& other);

  friend bool operator==(const CooccurrenceCounts&, const CooccurrenceCounts&) = default;
};

CooccurrenceCounts count_cooccurrences(std::span<const Document> corpus, const AliasDictionary& dict);

class PriorTable {
 public:
  double get(EntityId e, std::uint32_t mention) const;
  void set(EntityId e, std::uint32_t mention, double p);
  const std::map<std::pair<std::uint32_t, std::uint32_t>, double>& entries() const { return entries_; }

  friend bool operator==(const PriorTable&, const PriorTable&) = default;

 private:
  std::map<std::pair<std::uint32_t, std::uint32_t>, double> entries_;
};

/// P(e | m) = count(e, m) / sum over E(m). Zero-total columns stay absent.
PriorTable estimate_prior(const CooccurrenceCounts& counts, const AliasDictionary& dict);

/// Overwrites only the emerging entity's entries, one per alias, using counts
/// from the web corpus. A zero denominator yields 0.
PriorTable update_prior_for_ee(const PriorTable& prior, const CooccurrenceCounts& web_counts,
                               EntityId ee, const AliasDictionary& dict);

// ---------------------------------------------------------------------------
// Relatedness

/// Inverted index entity -> sorted ids of the documents that refer to it.
struct DocSetIndex {
  std::size_t total_docs = 0;
  std::map<std::uint32_t, std::vector<std::string>> doc_sets;

  const std::vector<std::string>& docs_of(EntityId e) const;
};

DocSetIndex build_doc_index(std::span<const Document> corpus);

/// Milne-Witten link measure with natural logs. Empty doc sets or an empty
/// overlap give 0, negative values clamp to 0, and wlm(i, i) = 1.
double wlm(EntityId i, EntityId j, const DocSetIndex& index);

/// Sparse symmetric matrix; absent entries read as 0.
class RelatednessMatrix {
 public:
  double get(EntityId a, EntityId b) const;
  void set(EntityId a, EntityId b, double value);
  const std::map<std::pair<std::uint32_t, std::uint32_t>, double>& entries() const { return entries_; }

  friend bool operator==(const RelatednessMatrix&, const RelatednessMatrix&) = default;

 private:
  std::map<std::pair<std::uint32_t, std::uint32_t>, double> entries_;
};

RelatednessMatrix build_relatedness(const DocSetIndex& index);

/// Recomputes row and column `ee` from the web index; everything else is kept.
RelatednessMatrix update_relatedness_for_ee(const RelatednessMatrix& matrix,
                                            const DocSetIndex& web_index, EntityId ee,
                                            std::size_t n_entities);

// ---------------------------------------------------------------------------
// Embeddings

class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t rows, std::size_t dim) : dim_(dim), data_(rows * dim, 0.0) {}

  std::size_t rows() const { return dim_ ? data_.size() / dim_ : 0; }
  std::size_t dim() const { return dim_; }
  std::span<const double> row(EntityId e) const { return {data_.data() + e.value * dim_, dim_}; }
  std::span<double> row(EntityId e) { return {data_.data() + e.value * dim_, dim_}; }
  const std::vector<double>& data() const { return data_; }

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

/// Frozen word vectors. Out-of-vocabulary lookups return the zero vector.
class WordEmbeddingTable {
 public:
  WordEmbeddingTable() = default;
  WordEmbeddingTable(std::vector<std::string> words, std::size_t dim);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return words_.size(); }
  /// Index of `word`, or -1 when out of vocabulary.
  std::int32_t find(std::string_view word) const;
  std::span<const double> vec(std::int32_t index) const;
  std::span<double> mutable_vec(std::int32_t index) { return {data_.data() + index * dim_, dim_}; }
  const std::vector<std::string>& words() const { return words_; }
  const std::vector<double>& data() const { return data_; }

  friend bool operator==(const WordEmbeddingTable& a, const WordEmbeddingTable& b) {
    return a.dim_ == b.dim_ && a.words_ == b.words_ && a.data_ == b.data_;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> words_;
  std::map<std::string, std::int32_t, std::less<>> index_;
  std::vector<double> data_;
  std::vector<double> zero_;
};

struct EmbedConfig {
  std::size_t dim = 64;
  double margin = 0.1;
  std::size_t negatives = 5;
  std::size_t epochs = 35;
  double learning_rate = 1e-2;
  std::size_t window = 5;  // words on each side of a mention
  std::size_t word_epochs = 10;
  double init_scale = 0.1;
};

struct EmbeddingFit {
  std::vector<double> vector;
  bool degenerate = false;
  std::size_t pairs = 0;
  double initial_loss = 0.0;  // mean hinge over the sampled pairs
  double final_loss = 0.0;
  std::vector<double> epoch_loss;
};

/// Words within `window` tokens of every mention labeled `e`, excluding the
/// mention's own tokens; in-vocabulary only, in corpus order.
std::vector<std::int32_t> positive_words(EntityId e, std::span<const Document> corpus,
                                         const WordEmbeddingTable& words, std::size_t window);

/// Max-margin fit of one entity vector against frozen word vectors: each
/// positive word is paired with `negatives` uniformly sampled vocabulary
/// words, and the hinge [margin - x.w+ + x.w-]_+ is minimized by SGD.
EmbeddingFit train_entity_embedding(EntityId e, std::span<const Document> corpus,
                                    const WordEmbeddingTable& words, const EmbedConfig& cfg,
                                    std::uint64_t seed);

struct JointEmbeddings {
  WordEmbeddingTable words;
  EmbeddingMatrix entities;
};

/// Aligns word and entity vectors jointly on a gold-labeled corpus using the
/// same hinge objective. Used once to produce the frozen word table.
JointEmbeddings train_word_embeddings(std::span<const Document> corpus, std::size_t n_entities,
                                      const EmbedConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Feature store and the emerging entity's parameter bundle

struct FeatureStore {
  PriorTable prior;
  RelatednessMatrix relatedness;
  EmbeddingMatrix entities;
  WordEmbeddingTable words;

  std::size_t n_entities() const { return entities.rows(); }
  std::size_t dim() const { return entities.dim(); }

  friend bool operator==(const FeatureStore&, const FeatureStore&) = default;
};

/// Estimates every feature group from a gold-labeled corpus. `n_entities`
/// includes a reserved all-zero slot for the emerging entity when present.
FeatureStore estimate_features(std::span<const Document> corpus, const AliasDictionary& dict,
                               std::size_t n_entities, const EmbedConfig& cfg, std::uint64_t seed);

std::uint64_t checksum(const FeatureStore& store);
/// Checksum over every entry not involving `ee`.
std::uint64_t checksum_excluding(const FeatureStore& store, EntityId ee);

enum class FeatureGroup { Prior = 0, Relatedness = 1, Embedding = 2 };
inline constexpr FeatureGroup kFeatureGroups[] = {FeatureGroup::Prior, FeatureGroup::Relatedness,
                                                  FeatureGroup::Embedding};
const char* to_string(FeatureGroup g);

/// Flat layout of theta(e*): [prior per alias | relatedness row | embedding].
struct EeLayout {
  EntityId ee;
  std::vector<std::uint32_t> alias_mentions;  // mention index of each alias
  std::size_t n_entities = 0;
  std::size_t dim = 0;

  static EeLayout for_task(const KnowledgeBase& kb, const AliasDictionary& dict, std::size_t dim);

  std::size_t size() const { return alias_mentions.size() + n_entities + dim; }
  std::size_t offset(FeatureGroup g) const;
  std::size_t extent(FeatureGroup g) const;
  /// Slot of `mention` among the aliases, or -1.
  int alias_slot(std::uint32_t mention) const;

  friend bool operator==(const EeLayout&, const EeLayout&) = default;
};

struct EeParams {
  EeLayout layout;
  std::vector<double> values;

  static EeParams zeros(const EeLayout& layout) { return {layout, std::vector<double>(layout.size())}; }

  std::span<double> group(FeatureGroup g) { return {values.data() + layout.offset(g), layout.extent(g)}; }
  std::span<const double> group(FeatureGroup g) const {
    return {values.data() + layout.offset(g), layout.extent(g)};
  }

  friend bool operator==(const EeParams&, const EeParams&) = default;
};

EeParams extract_ee(const FeatureStore& store, const EeLayout& layout);
FeatureStore with_ee(const FeatureStore& base, const EeParams& ee);
std::uint64_t digest(const EeParams& p);

/// Read-only lookups over a frozen store with the emerging entity's entries
/// taken from an override bundle.
class FeatureView {
 public:
  explicit FeatureView(const FeatureStore& base) : base_(&base) {}
  FeatureView(const FeatureStore& base, const EeParams& ee) : base_(&base), ee_(&ee) {}

  double prior(EntityId e, std::uint32_t mention) const;
  double relatedness(EntityId a, EntityId b) const;
  std::span<const double> embedding(EntityId e) const;
  std::span<const double> word(std::int32_t index) const { return base_->words.vec(index); }
  const WordEmbeddingTable& words() const { return base_->words; }
  std::size_t dim() const { return base_->dim(); }
  const EeParams* ee() const { return ee_; }
  bool is_ee(EntityId e) const { return ee_ && e == ee_->layout.ee; }

 private:
  const FeatureStore* base_;
  const EeParams* ee_ = nullptr;
};

// ---------------------------------------------------------------------------
// Persistence: prior.tsv, relatedness.tsv, embeddings.f32, words.f32, words.txt

inline constexpr std::uint8_t kStoreFormatVersion = 1;

void save_feature_store(const FeatureStore& store, const AliasDictionary& dict, const std::string& dir);
/// Throws DataError on malformed files or when `expected_dim` is given and
/// differs from the stored dimension.
FeatureStore load_feature_store(const std::string& dir, const AliasDictionary& dict,
                                std::optional<std::size_t> expected_dim = std::nullopt);

}  // namespace stamo
