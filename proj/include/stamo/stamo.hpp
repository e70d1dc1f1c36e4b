#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "stamo/features.hpp"
#include "stamo/kb.hpp"
#include "stamo/models.hpp"

namespace stamo {

enum class Variant { Vanilla, IntraOnly, InterOnly, Full };

const char* to_string(Variant v);
Variant parse_variant(std::string_view text);

/// Switches that remove one piece of the inter-slot update.
struct InterAblation {
  bool raw_delta = false;   // step along delta itself instead of the moment-adjusted delta
  bool unit_rate = false;   // eta^t = 1 for every group and slot, no warm-up
  bool no_warmup = false;   // eta^t = eta from the first slot

  friend bool operator==(const InterAblation&, const InterAblation&) = default;
};

struct StamoConfig {
  std::size_t slots = 20;
  std::array<double, 3> eta = {5e-2, 5e-2, 1e-3};  // prior, relatedness, embedding
  double warmup = 5.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t intra_epochs = 50;
  double intra_lr = 1e-4;
  std::size_t intra_batch = 32;
  double margin = 0.1;
  Variant variant = Variant::Full;
  InterAblation ablation;
  EmbedConfig embed;
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

/// Seed of every estimation step in a run, so Estimation on L alone matches
/// the run's initial estimate.
std::uint64_t estimation_seed(const StamoConfig& cfg);

/// eta^t = min(eta, eta * t / gamma).
double warmup_rate(double eta, std::size_t t, double gamma);

/// Inter-slot optimizer state. The moments are kept as raw accumulators
/// m_t = beta1 m_{t-1} + delta and c1_t = beta1 c1_{t-1} + 1, so the bias
/// corrected estimate m_t / c1_t is exact at t = 1.
struct SlotState {
  std::size_t t = 0;
  EeParams theta_hat;
  std::vector<double> m;
  std::vector<double> n;
  double c1 = 0.0;
  double c2 = 0.0;

  static SlotState start(const EeParams& theta0);

  std::vector<double> first_moment(double beta1) const;   // s_t
  std::vector<double> second_moment(double beta2) const;  // v_t
  std::vector<double> corrected_first() const;            // s_t / (1 - beta1^t)
  std::vector<double> corrected_second() const;           // v_t / (1 - beta2^t)
};

/// Frozen inputs shared by every step of one emerging entity's run.
struct StamoContext {
  const KnowledgeBase& kb;
  const AliasDictionary& dict;
  const FeatureStore& store;
  const LinkingModel& model;
  EeLayout layout;

  StamoContext(const KnowledgeBase& kb, const AliasDictionary& dict, const FeatureStore& store,
               const LinkingModel& model);
};

struct EeEstimate {
  EeParams params;
  bool degenerate = false;  // no mention anywhere is labeled with the emerging entity
};

/// Prior, relatedness row and embedding of the emerging entity, estimated on a
/// corpus whose candidate mentions all carry Gold or Pseudo labels.
EeEstimate estimate_ee_features(std::span<const Document> corpus, const StamoContext& ctx,
                                const EmbedConfig& embed, std::uint64_t seed);

struct IntraResult {
  EeParams params;
  std::vector<double> loss_trace;  // loss on L before training and after each epoch
};

/// Gradient descent on the margin loss over L with respect to theta(e*) only.
/// Returns the epoch-end parameters with the lowest loss, so the result never
/// scores worse on L than the starting point.
IntraResult intra_slot_optimize(const EeParams& theta_init, std::span<const Document> labeled,
                                const StamoContext& ctx, const StamoConfig& cfg);

/// Candidate-mention instances of `docs`, scored over every candidate.
std::vector<MentionInstance> candidate_instances(std::span<const Document> docs, const StamoContext& ctx,
                                                 const EeParams& theta, LinkMode mode);

/// Labels every candidate mention of `unlabeled` with the model's argmax.
std::vector<Document> pseudo_label(std::span<const Document> unlabeled, const StamoContext& ctx,
                                   const EeParams& theta);

struct InterResult {
  EeParams theta_hat;
  SlotState state;
  std::vector<double> delta;
};

InterResult inter_slot_update(const EeParams& theta_prev, const EeParams& theta_intra, const SlotState& state,
                              const StamoConfig& cfg);

struct SlotRecord {
  std::size_t slot = 0;
  double loss = 0.0;
  double delta_norm = 0.0;
  double probe_acc = 0.0;
  double probe_f1 = 0.0;
  std::optional<double> agreement;  // pseudo labels unchanged since the previous slot
  bool degenerate = false;
  std::uint64_t digest = 0;
};

struct SlotTrace {
  std::vector<SlotRecord> records;
};

void write_trace_csv(const SlotTrace& trace, std::ostream& out);

/// Held-out evaluation of a parameter bundle, called once per slot.
using Probe = std::function<std::pair<double, double>(const EeParams&)>;  // (acc, f1)

struct StamoResult {
  EeParams theta;
  SlotTrace trace;
  SlotState state;
};

StamoResult run_stamo(std::span<const Document> labeled, std::span<const Document> unlabeled,
                      const StamoContext& ctx, const StamoConfig& cfg, const Probe& probe = {});

}  // namespace stamo
