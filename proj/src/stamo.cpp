#include "stamo/stamo.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <stdexcept>

#include "stamo/util.hpp"

namespace stamo {

const char* to_string(Variant v) {
  switch (v) {
    case Variant::Vanilla: return "vanilla";
    case Variant::IntraOnly: return "intra";
    case Variant::InterOnly: return "inter";
    case Variant::Full: return "full";
  }
  return "full";
}

Variant parse_variant(std::string_view text) {
  if (text == "vanilla") return Variant::Vanilla;
  if (text == "intra") return Variant::IntraOnly;
  if (text == "inter") return Variant::InterOnly;
  if (text == "full" || text == "stamo") return Variant::Full;
  throw std::invalid_argument("unknown variant: " + std::string(text));
}

void StamoConfig::validate() const {
  if (!(warmup >= 1.0)) throw std::invalid_argument("warm-up period must be at least 1");
  for (double e : eta)
    if (!(e > 0.0)) throw std::invalid_argument("learning rates must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw std::invalid_argument("moment decay rates must lie in [0, 1)");
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  if (!(intra_lr >= 0.0)) throw std::invalid_argument("intra learning rate must be non-negative");
  if (intra_batch == 0) throw std::invalid_argument("intra batch size must be positive");
}

std::uint64_t estimation_seed(const StamoConfig& cfg) { return mix_seed(cfg.seed, 0x51); }

double warmup_rate(double eta, std::size_t t, double gamma) {
  return std::min(eta, eta * static_cast<double>(t) / gamma);
}

// ---------------------------------------------------------------------------
// Slot state

SlotState SlotState::start(const EeParams& theta0) {
  SlotState s;
  s.theta_hat = theta0;
  s.m.assign(theta0.values.size(), 0.0);
  s.n.assign(theta0.values.size(), 0.0);
  return s;
}

std::vector<double> SlotState::first_moment(double beta1) const {
  std::vector<double> out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = (1.0 - beta1) * m[i];
  return out;
}

std::vector<double> SlotState::second_moment(double beta2) const {
  std::vector<double> out(n.size());
  for (std::size_t i = 0; i < n.size(); ++i) out[i] = (1.0 - beta2) * n[i];
  return out;
}

std::vector<double> SlotState::corrected_first() const {
  std::vector<double> out(m.size(), 0.0);
  if (c1 > 0.0)
    for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] / c1;
  return out;
}

std::vector<double> SlotState::corrected_second() const {
  std::vector<double> out(n.size(), 0.0);
  if (c2 > 0.0)
    for (std::size_t i = 0; i < n.size(); ++i) out[i] = n[i] / c2;
  return out;
}

StamoContext::StamoContext(const KnowledgeBase& kb, const AliasDictionary& dict, const FeatureStore& store,
                           const LinkingModel& model)
    : kb(kb), dict(dict), store(store), model(model), layout(EeLayout::for_task(kb, dict, store.dim())) {}

// ---------------------------------------------------------------------------
// Estimation

EeEstimate estimate_ee_features(std::span<const Document> corpus, const StamoContext& ctx,
                                const EmbedConfig& embed, std::uint64_t seed) {
  const EeLayout& layout = ctx.layout;
  EeEstimate out{EeParams::zeros(layout), false};

  const auto counts = count_cooccurrences(corpus, ctx.dict);
  bool any = false;
  for (std::uint32_t mention : layout.alias_mentions) any = any || counts.get(layout.ee, mention) > 0;
  if (!any) {
    out.degenerate = true;
    return out;
  }

  const PriorTable prior = update_prior_for_ee(PriorTable{}, counts, layout.ee, ctx.dict);
  auto p = out.params.group(FeatureGroup::Prior);
  for (std::size_t i = 0; i < layout.alias_mentions.size(); ++i)
    p[i] = prior.get(layout.ee, layout.alias_mentions[i]);

  const DocSetIndex index = build_doc_index(corpus);
  auto r = out.params.group(FeatureGroup::Relatedness);
  for (std::uint32_t j = 0; j < layout.n_entities; ++j) r[j] = wlm(layout.ee, EntityId{j}, index);

  EmbedConfig ecfg = embed;
  ecfg.dim = layout.dim;
  const EmbeddingFit fit = train_entity_embedding(layout.ee, corpus, ctx.store.words, ecfg, seed);
  std::copy(fit.vector.begin(), fit.vector.end(), out.params.group(FeatureGroup::Embedding).begin());
  return out;
}

// ---------------------------------------------------------------------------
// Instances and pseudo labels

std::vector<MentionInstance> candidate_instances(std::span<const Document> docs, const StamoContext& ctx,
                                                 const EeParams& theta, LinkMode mode) {
  const FeatureView view(ctx.store, theta);
  InstanceOptions opt;
  opt.mode = mode;
  opt.window = ctx.model.shape.window;
  opt.candidates_only = true;
  return build_instances(docs, ctx.kb, ctx.dict, view, opt);
}

namespace {

std::vector<EntityId> predict_all(std::span<const MentionInstance> instances, const StamoContext& ctx,
                                  const EeParams& theta) {
  const FeatureView view(ctx.store, theta);
  std::vector<EntityId> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) out.push_back(*predict(ctx.model, view, inst));
  return out;
}

std::vector<Document> apply_labels(std::span<const Document> docs, std::span<const MentionInstance> instances,
                                   std::span<const EntityId> labels) {
  std::vector<Document> out(docs.begin(), docs.end());
  for (std::size_t i = 0; i < instances.size(); ++i)
    out[instances[i].doc].mentions[instances[i].occurrence].label = Label::pseudo(labels[i]);
  return out;
}

}  // namespace

std::vector<Document> pseudo_label(std::span<const Document> unlabeled, const StamoContext& ctx,
                                   const EeParams& theta) {
  const auto instances = candidate_instances(unlabeled, ctx, theta, LinkMode::Test);
  return apply_labels(unlabeled, instances, predict_all(instances, ctx, theta));
}

// ---------------------------------------------------------------------------
// Intra-slot optimization

IntraResult intra_slot_optimize(const EeParams& theta_init, std::span<const Document> labeled,
                                const StamoContext& ctx, const StamoConfig& cfg) {
  IntraResult out{theta_init, {}};
  if (labeled.empty()) return out;
  const auto instances = candidate_instances(labeled, ctx, theta_init, LinkMode::Train);
  if (instances.empty()) return out;

  EeParams theta = theta_init;
  double best = margin_loss(ctx.model, FeatureView(ctx.store, theta), instances, cfg.margin).loss;
  out.loss_trace.push_back(best);
  const std::size_t batch = cfg.intra_batch;
  for (std::size_t epoch = 0; epoch < cfg.intra_epochs; ++epoch) {
    for (std::size_t start = 0; start < instances.size(); start += batch) {
      const std::size_t len = std::min(batch, instances.size() - start);
      const auto g = grad_wrt_ee_features(ctx.model, FeatureView(ctx.store, theta),
                                          std::span(instances).subspan(start, len), cfg.margin);
      for (std::size_t i = 0; i < theta.values.size(); ++i) theta.values[i] -= cfg.intra_lr * g.grad[i];
    }
    const double loss = margin_loss(ctx.model, FeatureView(ctx.store, theta), instances, cfg.margin).loss;
    out.loss_trace.push_back(loss);
    if (loss < best) {
      best = loss;
      out.params = theta;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Inter-slot optimization

InterResult inter_slot_update(const EeParams& theta_prev, const EeParams& theta_intra, const SlotState& state,
                              const StamoConfig& cfg) {
  InterResult out{theta_prev, state, {}};
  const std::size_t n = theta_prev.values.size();
  out.delta.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.delta[i] = theta_prev.values[i] - theta_intra.values[i];

  SlotState& s = out.state;
  s.t = state.t + 1;
  s.c1 = cfg.beta1 * s.c1 + 1.0;
  s.c2 = cfg.beta2 * s.c2 + 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    s.m[i] = cfg.beta1 * s.m[i] + out.delta[i];
    s.n[i] = cfg.beta2 * s.n[i] + out.delta[i] * out.delta[i];
  }

  const EeLayout& layout = theta_prev.layout;
  for (FeatureGroup g : kFeatureGroups) {
    // Without the small rate the schedule goes too: eta^t = 1 throughout.
    const double base = cfg.eta[static_cast<std::size_t>(g)];
    const double rate = cfg.ablation.unit_rate   ? 1.0
                        : cfg.ablation.no_warmup ? base
                                                 : warmup_rate(base, s.t, cfg.warmup);
    const std::size_t lo = layout.offset(g), hi = lo + layout.extent(g);
    for (std::size_t i = lo; i < hi; ++i) {
      const double step =
          cfg.ablation.raw_delta ? out.delta[i] : (s.m[i] / s.c1) / (std::sqrt(s.n[i] / s.c2) + cfg.eps);
      out.theta_hat.values[i] = theta_prev.values[i] - rate * step;
    }
  }
  for (double& p : out.theta_hat.group(FeatureGroup::Prior)) p = std::clamp(p, 0.0, 1.0);
  for (double& r : out.theta_hat.group(FeatureGroup::Relatedness)) r = std::clamp(r, 0.0, 1.0);
  s.theta_hat = out.theta_hat;
  return out;
}

// ---------------------------------------------------------------------------
// Trace

void write_trace_csv(const SlotTrace& trace, std::ostream& out) {
  out << "slot,loss,delta_norm,probe_acc,probe_f1,agreement,degenerate,digest\n";
  const auto flags = out.flags();
  for (const auto& r : trace.records) {
    out << r.slot << ',' << std::setprecision(17) << r.loss << ',' << r.delta_norm << ',' << r.probe_acc << ','
        << r.probe_f1 << ',';
    if (r.agreement) out << *r.agreement;
    out << ',' << (r.degenerate ? 1 : 0) << ',' << std::hex << std::setw(16) << std::setfill('0') << r.digest
        << std::dec << std::setfill(' ') << '\n';
  }
  out.flags(flags);
}

// ---------------------------------------------------------------------------
// Algorithm

StamoResult run_stamo(std::span<const Document> labeled, std::span<const Document> unlabeled,
                      const StamoContext& ctx, const StamoConfig& cfg, const Probe& probe) {
  cfg.validate();
  if (labeled.empty()) throw DataError("self-training needs at least one labeled document");
  const bool use_intra = cfg.variant == Variant::IntraOnly || cfg.variant == Variant::Full;
  const bool use_inter = cfg.variant == Variant::InterOnly || cfg.variant == Variant::Full;
  const std::uint64_t est_seed = estimation_seed(cfg);

  const auto l_instances = candidate_instances(labeled, ctx, EeParams::zeros(ctx.layout), LinkMode::Train);
  const auto u_instances = candidate_instances(unlabeled, ctx, EeParams::zeros(ctx.layout), LinkMode::Test);

  StamoResult out;
  const auto record = [&](std::size_t slot, const EeParams& theta, double delta_norm,
                          std::optional<double> agreement, bool degenerate) {
    SlotRecord r;
    r.slot = slot;
    r.loss = margin_loss(ctx.model, FeatureView(ctx.store, theta), l_instances, cfg.margin).loss;
    r.delta_norm = delta_norm;
    if (probe) std::tie(r.probe_acc, r.probe_f1) = probe(theta);
    r.agreement = agreement;
    r.degenerate = degenerate;
    r.digest = digest(theta);
    out.trace.records.push_back(r);
  };

  // Lines 1-3.
  const EeEstimate initial = estimate_ee_features(labeled, ctx, cfg.embed, est_seed);
  EeParams theta_hat = initial.params;
  if (use_intra) theta_hat = intra_slot_optimize(theta_hat, labeled, ctx, cfg).params;
  SlotState state = SlotState::start(theta_hat);
  record(0, theta_hat, 0.0, std::nullopt, initial.degenerate);

  std::vector<EntityId> previous;
  std::vector<Document> mixed(labeled.begin(), labeled.end());
  for (std::size_t t = 1; t <= cfg.slots; ++t) {
    // Line 5.
    const auto labels = predict_all(u_instances, ctx, theta_hat);
    std::optional<double> agreement;
    if (t > 1) {
      std::size_t same = 0;
      for (std::size_t i = 0; i < labels.size(); ++i) same += labels[i] == previous[i] ? 1 : 0;
      agreement = labels.empty() ? 1.0 : static_cast<double>(same) / static_cast<double>(labels.size());
    }
    previous = labels;

    // Line 6.
    const auto pseudo = apply_labels(unlabeled, u_instances, labels);
    mixed.resize(labeled.size());
    mixed.insert(mixed.end(), pseudo.begin(), pseudo.end());
    const EeEstimate est = estimate_ee_features(mixed, ctx, cfg.embed, est_seed);

    // Line 7.
    EeParams theta_intra = est.params;
    if (use_intra) theta_intra = intra_slot_optimize(est.params, labeled, ctx, cfg).params;

    // Lines 8-13.
    EeParams next = theta_intra;
    std::vector<double> delta(theta_hat.values.size());
    if (use_inter) {
      auto inter = inter_slot_update(theta_hat, theta_intra, state, cfg);
      next = std::move(inter.theta_hat);
      state = std::move(inter.state);
      delta = std::move(inter.delta);
    } else {
      for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = theta_hat.values[i] - theta_intra.values[i];
      state.t = t;
      state.theta_hat = next;
    }
    theta_hat = std::move(next);
    record(t, theta_hat, std::sqrt(dot(delta, delta)), agreement, est.degenerate);
  }
  out.theta = std::move(theta_hat);
  out.state = std::move(state);
  return out;
}

}  // namespace stamo
