#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "stamo/corpus.hpp"
#include "stamo/features.hpp"
#include "stamo/models.hpp"
#include "stamo/stamo.hpp"

namespace stamo {

// ---------------------------------------------------------------------------
// Metrics

struct MetricsReport {
  double acc = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t n_mentions = 0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t correct = 0;
  bool precision_undefined = false;  // no mention predicted as the emerging entity
  bool recall_undefined = false;     // no gold mention of the emerging entity
};

/// Accuracy over all mentions; precision, recall and F1 with respect to `ee`.
/// Throws std::invalid_argument when the two lists differ in length.
MetricsReport compute_metrics(std::span<const EntityId> predictions, std::span<const EntityId> gold, EntityId ee);

// ---------------------------------------------------------------------------
// Pre-training on non-emerging data

struct PipelineConfig {
  EmbedConfig embed;
  ModelShape shape;
  TrainConfig train;
};

/// Frozen ingredients shared by every method: NEE features (with an all-zero
/// emerging-entity row) and the alias dictionary they are keyed by.
struct NeeFeatures {
  AliasDictionary dict;
  FeatureStore store;
};

NeeFeatures pretrain_features(const World& world, const PipelineConfig& cfg, std::uint64_t seed);

/// Trains phi on the world's NEE-only model corpus.
LinkingModel pretrain_model(const World& world, const NeeFeatures& features, ModelKind kind,
                            const FeatureMask& mask, const PipelineConfig& cfg, std::uint64_t seed,
                            TrainReport* report = nullptr);

/// Candidate mentions of a test corpus with their gold entities.
struct TestSet {
  std::vector<MentionInstance> instances;
  std::vector<EntityId> gold;
};

TestSet prepare_test_set(std::span<const Document> docs, const StamoContext& ctx);
MetricsReport evaluate(const TestSet& test, const StamoContext& ctx, const EeParams& theta);

// ---------------------------------------------------------------------------
// Experiments

enum class MethodKind { Estimation, EstimationNK, SelfTraining, SelfTrainingIntra, SelfTrainingInter, Stamo };

struct MethodSpec {
  std::string name;
  MethodKind kind = MethodKind::Stamo;
  std::size_t labeled_size = 0;  // 0: the plan's default
  std::size_t nk = 0;            // EstimationNK: documents of W labeled
  FeatureMask mask;
  InterAblation ablation;
};

/// Parses "Estimation", "EstimationNK(200)", "SelfTraining", "SelfTraining+Intra",
/// "SelfTraining+Inter" or "STAMO".
MethodSpec parse_method(std::string_view text);

struct ExperimentPlan {
  std::vector<std::string> methods = {"Estimation", "SelfTraining", "SelfTraining+Intra", "SelfTraining+Inter",
                                      "STAMO"};
  ModelKind model = ModelKind::DeepEd;
  WorldConfig world;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::vector<std::size_t> labeled_sizes;            // extra |L| values for Estimation and STAMO
  std::vector<FeatureGroup> feature_ablations;       // STAMO with one group removed
  std::vector<std::string> inter_ablations;          // subset of {delta, eta, warmup}
  std::size_t max_ees = 0;                           // 0: every emerging entity
  StamoConfig stamo;
  PipelineConfig pipeline;
  bool record_wall_time = false;  // otherwise wall_ms is written as 0 so results are reproducible

  void validate() const;
  /// Every method row the plan expands to, base methods first.
  std::vector<MethodSpec> expand() const;
};

struct ResultRow {
  std::string method;
  ModelKind model = ModelKind::DeepEd;
  std::size_t ee = 0;
  std::uint64_t seed = 0;
  std::string dataset;  // test_web or test_wiki
  MetricsReport metrics;
  std::size_t slots = 0;
  double wall_ms = 0.0;
  bool failed = false;
  std::string error;
};

struct TraceRecord {
  std::string method;
  std::size_t ee = 0;
  std::uint64_t seed = 0;
  SlotTrace trace;
};

struct ExperimentResults {
  std::vector<ResultRow> rows;
  std::vector<TraceRecord> traces;
  std::size_t freeze_violations = 0;  // runs after which phi or an NEE feature changed
  std::map<std::uint64_t, std::uint64_t> store_checksums;  // per seed
  std::map<std::uint64_t, std::uint64_t> model_checksums;  // per seed, full-feature model
};

using ProgressFn = std::function<void(const std::string&)>;

/// Runs every (method, emerging entity, seed) cell. A method that throws is
/// recorded as a failed row and the run continues.
ExperimentResults run_experiment(const ExperimentPlan& plan, const ProgressFn& progress = {});

struct SummaryRow {
  std::string method;
  std::string dataset;  // test_web, test_wiki or avg
  double acc = 0.0, p = 0.0, r = 0.0, f1 = 0.0;
  double f1_sd = 0.0;  // across seed means
  std::size_t seeds = 0;
};

/// Macro average: per emerging entity, then across entities, then across seeds.
std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows);

/// Mean F1 (averaged over both test sets) for one method and seed; nullopt if absent.
std::optional<double> seed_mean_f1(const std::vector<ResultRow>& rows, const std::string& method,
                                   std::uint64_t seed);
double method_mean_f1(const std::vector<ResultRow>& rows, const std::string& method);

/// Mean held-out F1 per slot over every trace of `method`.
std::vector<double> mean_slot_f1(const std::vector<TraceRecord>& traces, const std::string& method);

/// Largest drop from the running peak, evaluated at slots first..end.
double max_drawdown(std::span<const double> series, std::size_t first);

void write_results_csv(const std::vector<ResultRow>& rows, std::ostream& out);
std::vector<ResultRow> read_results_csv(std::istream& in);
/// Long format: method, ee_id, seed, then the per-slot trace columns.
void write_traces_csv(const std::vector<TraceRecord>& traces, std::ostream& out);
std::vector<TraceRecord> read_traces_csv(std::istream& in);
void write_summary_csv(const std::vector<SummaryRow>& rows, std::ostream& out);

/// results.csv, summary.csv, slot_f1.csv, labeled_size.csv, traces/ and SVG charts.
void emit_plots(const ExperimentResults& results, const std::string& out_dir);

// ---------------------------------------------------------------------------
// Config files: one key=value per line, '#' starts a comment.

using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config(std::string_view text);
ConfigMap load_config(const std::string& path);
/// Applies recognized keys; throws DataError on an unknown key or bad value.
void apply_config(const ConfigMap& cfg, ExperimentPlan& plan);
std::string describe(const ExperimentPlan& plan);

}  // namespace stamo
