#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "stamo/features.hpp"
#include "stamo/kb.hpp"

namespace stamo {

enum class ModelKind { Yamada, DeepEd };

const char* to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);

/// Feature groups the scorer may read. A disabled group contributes zero to
/// every score that depends on it.
struct FeatureMask {
  bool prior = true;
  bool relatedness = true;
  bool embedding = true;

  bool enabled(FeatureGroup g) const;
  friend bool operator==(const FeatureMask&, const FeatureMask&) = default;
};

struct ModelShape {
  std::size_t dim = 64;
  std::size_t window = 50;          // H: context words, half on each side
  std::size_t attention_keep = 25;  // H': words kept by the attention
  std::size_t hidden = 100;
  double dropout = 0.1;

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

/// Linear(in, hidden) -> Dropout -> ReLU -> Linear(hidden, 1).
struct ScoreNet {
  std::size_t in = 0;
  std::size_t hidden = 0;
  std::vector<double> w1;  // hidden x in, row-major
  std::vector<double> b1;
  std::vector<double> w2;
  double b2 = 0.0;

  double forward(std::span<const double> x) const;

  friend bool operator==(const ScoreNet&, const ScoreNet&) = default;
};

struct LinkingModel {
  ModelKind kind = ModelKind::DeepEd;
  ModelShape shape;
  FeatureMask mask;
  ScoreNet net;
  // DeepED diagonal matrices; empty for Yamada.
  std::vector<double> diag_context;
  std::vector<double> diag_support;
  std::vector<double> diag_coherence;

  static LinkingModel create(ModelKind kind, const ModelShape& shape, const FeatureMask& mask,
                             std::uint64_t seed);
  std::size_t n_scores() const { return kind == ModelKind::Yamada ? 6 : 4; }

  friend bool operator==(const LinkingModel&, const LinkingModel&) = default;
};

std::uint64_t checksum(const LinkingModel& model);

/// One mention prepared for scoring: candidates, word context c and entity
/// context (the linked non-candidate mentions of the same document).
struct MentionInstance {
  std::uint32_t mention = kNoMention;
  std::string surface;
  std::vector<EntityId> candidates;
  std::vector<std::int32_t> context;  // word indices; -1 is out of vocabulary
  std::vector<EntityId> entity_context;
  std::vector<std::array<double, 3>> surface_scores;  // per candidate
  std::optional<EntityId> gold;
  std::size_t doc = 0;          // position of the source document in its corpus
  std::size_t occurrence = 0;   // position of the mention in the document
};

struct InstanceOptions {
  LinkMode mode = LinkMode::Test;
  std::size_t window = 50;
  /// Score only candidate mentions (mentions of an emerging entity alias);
  /// otherwise every labeled mention is scored.
  bool candidates_only = true;
};

std::vector<MentionInstance> build_instances(const Document& doc, std::size_t doc_index,
                                             const KnowledgeBase& kb, const AliasDictionary& dict,
                                             const FeatureView& view, const InstanceOptions& opt);

std::vector<MentionInstance> build_instances(std::span<const Document> corpus, const KnowledgeBase& kb,
                                             const AliasDictionary& dict, const FeatureView& view,
                                             const InstanceOptions& opt);

// ---------------------------------------------------------------------------
// Individual scores

double cosine(std::span<const double> a, std::span<const double> b);
std::size_t levenshtein(std::string_view a, std::string_view b);

/// (normalized edit similarity, equals-or-contains, starts-or-ends-with).
std::array<double, 3> surface_features(std::string_view entity_name, std::string_view mention);

double yamada_context_similarity(std::span<const double> entity, std::span<const std::int32_t> context,
                                 const WordEmbeddingTable& words);
double yamada_topical_coherence(EntityId e, std::span<const EntityId> entity_context, const FeatureView& view);

/// u(w) per context position: the best candidate's support for that word.
std::vector<double> deeped_support_scores(std::span<const std::int32_t> context,
                                          std::span<const EntityId> candidates, const FeatureView& view,
                                          const LinkingModel& model);
/// Softmax over the top `keep` support scores (ties: earlier position); 0 elsewhere.
std::vector<double> deeped_attention(std::span<const double> support, std::size_t keep);
double deeped_context_score(EntityId e, std::span<const std::int32_t> context,
                            std::span<const double> attention, const FeatureView& view,
                            const LinkingModel& model);
/// (embedding coherence through the coherence diagonal, mean relatedness).
std::pair<double, double> deeped_coherence_scores(EntityId e, std::span<const EntityId> entity_context,
                                                  const FeatureView& view, const LinkingModel& model);

/// Score vector Psi for every candidate, masked per the model.
std::vector<std::vector<double>> candidate_scores(const LinkingModel& model, const FeatureView& view,
                                                  const MentionInstance& inst);
/// g(e; m) for every candidate, dropout disabled.
std::vector<double> score_candidates(const LinkingModel& model, const FeatureView& view,
                                     const MentionInstance& inst);
double yamada_score(const LinkingModel& model, const FeatureView& view, const MentionInstance& inst,
                    std::size_t candidate);
double deeped_score(const LinkingModel& model, const FeatureView& view, const MentionInstance& inst,
                    std::size_t candidate);

/// Highest-scoring candidate; ties go to the lower EntityId.
std::optional<EntityId> predict(const LinkingModel& model, const FeatureView& view, const MentionInstance& inst);

// ---------------------------------------------------------------------------
// Objective and gradients

struct LossResult {
  double loss = 0.0;
  std::size_t skipped = 0;  // mentions whose gold label is not a candidate
};

/// Sum over mentions and non-gold candidates of [mu - g(gold) + g(e)]_+.
LossResult margin_loss(const LinkingModel& model, const FeatureView& view,
                       std::span<const MentionInstance> batch, double margin);

struct EeGradient {
  double loss = 0.0;
  std::size_t skipped = 0;
  std::vector<double> grad;  // EeLayout order
};

/// Gradient of the margin loss with respect to theta(e*) only. The view must
/// carry an emerging-entity bundle. Hinge and ReLU kinks take derivative 0.
EeGradient grad_wrt_ee_features(const LinkingModel& model, const FeatureView& view,
                                std::span<const MentionInstance> batch, double margin);

struct TrainConfig {
  double margin = 0.1;
  std::size_t epochs = 10;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
};

struct TrainReport {
  std::vector<double> loss_trace;  // full-set loss before training and after each epoch
};

/// Trains phi (the score network and, for DeepED, the diagonals) with Adam on
/// the margin loss. Dropout is active only here. The feature view is read-only.
TrainReport train_model(LinkingModel& model, std::span<const MentionInstance> corpus,
                        const FeatureView& view, const TrainConfig& cfg);

/// Flattened phi in a fixed order, and its gradient on a batch (dropout off).
std::vector<double> flatten_params(const LinkingModel& model);
void unflatten_params(LinkingModel& model, std::span<const double> flat);
std::vector<double> grad_wrt_model(const LinkingModel& model, const FeatureView& view,
                                   std::span<const MentionInstance> batch, double margin);

// ---------------------------------------------------------------------------
// Linking

struct LinkResult {
  std::size_t occurrence = 0;  // mention position in the document
  EntityId entity;
};

/// Links every candidate mention of `doc` with a non-empty candidate set.
std::vector<LinkResult> link_document(const Document& doc, const KnowledgeBase& kb,
                                      const AliasDictionary& dict, const LinkingModel& model,
                                      const FeatureView& view);

// Checkpoint: magic, version, kind, shape, mask, then float32 parameters.
void save_model(const LinkingModel& model, const std::string& path);
LinkingModel load_model(const std::string& path);

}  // namespace stamo
