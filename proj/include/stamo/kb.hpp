#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace stamo {

/// Malformed or inconsistent input data (files, corpora, KB definitions).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EntityId {
  std::uint32_t value = 0;

  friend auto operator<=>(const EntityId&, const EntityId&) = default;
};

struct Entity {
  EntityId id;
  std::string canonical_name;
  std::vector<std::string> aliases;
  bool is_emerging = false;
};

/// Dense entity table. At most one emerging entity, and it must hold the last
/// index.
class KnowledgeBase {
 public:
  KnowledgeBase() = default;
  explicit KnowledgeBase(std::vector<Entity> entities);

  std::size_t size() const { return entities_.size(); }
  const Entity& at(EntityId id) const { return entities_.at(id.value); }
  const std::vector<Entity>& entities() const { return entities_; }
  std::optional<EntityId> emerging() const { return emerging_; }

 private:
  std::vector<Entity> entities_;
  std::optional<EntityId> emerging_;
};

/// KB TSV: entity_id, canonical_name, pipe-separated aliases, is_emerging.
KnowledgeBase load_kb_tsv(const std::string& path);
void save_kb_tsv(const KnowledgeBase& kb, const std::string& path);

inline constexpr std::uint32_t kNoMention = 0xffffffffu;

class AliasDictionary {
 public:
  /// Candidate set E(m), ascending EntityId. Empty for unknown surfaces.
  const std::vector<EntityId>& lookup(std::string_view surface) const;
  /// Dense index of a surface in the mention vocabulary, or kNoMention.
  std::uint32_t mention_index(std::string_view surface) const;
  const std::string& mention(std::uint32_t index) const { return vocab_.at(index); }
  std::size_t vocab_size() const { return vocab_.size(); }
  bool contains(std::string_view surface) const { return mention_index(surface) != kNoMention; }

 private:
  friend AliasDictionary build_alias_dictionary(const std::vector<Entity>& entities);

  std::map<std::string, std::uint32_t, std::less<>> index_;
  std::vector<std::string> vocab_;
  std::vector<std::vector<EntityId>> candidates_;
};

AliasDictionary build_alias_dictionary(const std::vector<Entity>& entities);

enum class LabelKind { Gold, Pseudo, None };

struct Label {
  LabelKind kind = LabelKind::None;
  EntityId entity{};

  static Label gold(EntityId e) { return {LabelKind::Gold, e}; }
  static Label pseudo(EntityId e) { return {LabelKind::Pseudo, e}; }
  static Label none() { return {}; }
  bool known() const { return kind != LabelKind::None; }

  friend bool operator==(const Label&, const Label&) = default;
};

struct MentionOccurrence {
  std::size_t start = 0;  // token span [start, end)
  std::size_t end = 0;
  std::string surface;
  bool is_candidate = false;
  Label label;

  friend bool operator==(const MentionOccurrence&, const MentionOccurrence&) = default;
};

enum class SourceKind { WikiLike, WebLike };

struct Document {
  std::string doc_id;
  std::vector<std::string> tokens;
  std::vector<MentionOccurrence> mentions;
  SourceKind source = SourceKind::WebLike;

  friend bool operator==(const Document&, const Document&) = default;
};

/// Throws DataError when spans are out of bounds, overlap, are unsorted, or
/// disagree with the surface string.
void validate_document(const Document& doc);

std::string join_tokens(const std::vector<std::string>& tokens, std::size_t begin, std::size_t end);

enum class LinkMode { Train, Test };

inline constexpr std::size_t kTrainCandidateLimit = 30;

struct CandidateSet {
  std::vector<EntityId> candidates;
  bool truncated = false;
};

using PriorLookup = std::function<double(EntityId)>;

/// Train mode keeps the top 30 candidates by prior (ties: ascending id); Test
/// mode keeps all. An empty prior lookup falls back to dictionary order.
CandidateSet candidates_for(std::string_view surface, const AliasDictionary& dict,
                            const PriorLookup& prior, LinkMode mode);

}  // namespace stamo
