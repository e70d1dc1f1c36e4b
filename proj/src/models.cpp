#include "stamo/models.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>

#include "stamo/util.hpp"

namespace stamo {

const char* to_string(ModelKind kind) { return kind == ModelKind::Yamada ? "yamada" : "deeped"; }

ModelKind parse_model_kind(std::string_view text) {
  if (text == "yamada") return ModelKind::Yamada;
  if (text == "deeped") return ModelKind::DeepEd;
  throw DataError("unknown model kind: " + std::string(text));
}

bool FeatureMask::enabled(FeatureGroup g) const {
  switch (g) {
    case FeatureGroup::Prior: return prior;
    case FeatureGroup::Relatedness: return relatedness;
    case FeatureGroup::Embedding: return embedding;
  }
  return false;
}

double ScoreNet::forward(std::span<const double> x) const {
  double out = b2;
  for (std::size_t h = 0; h < hidden; ++h) {
    double z = b1[h];
    for (std::size_t i = 0; i < in; ++i) z += w1[h * in + i] * x[i];
    if (z > 0.0) out += w2[h] * z;
  }
  return out;
}

LinkingModel LinkingModel::create(ModelKind kind, const ModelShape& shape, const FeatureMask& mask,
                                  std::uint64_t seed) {
  LinkingModel m;
  m.kind = kind;
  m.shape = shape;
  m.mask = mask;
  m.net.in = m.n_scores();
  m.net.hidden = shape.hidden;
  Rng rng(seed);
  std::normal_distribution<double> w1(0.0, std::sqrt(2.0 / static_cast<double>(m.net.in)));
  std::normal_distribution<double> w2(0.0, std::sqrt(1.0 / static_cast<double>(shape.hidden)));
  m.net.w1.resize(m.net.hidden * m.net.in);
  for (double& v : m.net.w1) v = w1(rng);
  m.net.b1.assign(m.net.hidden, 0.0);
  m.net.w2.resize(m.net.hidden);
  for (double& v : m.net.w2) v = w2(rng);
  if (kind == ModelKind::DeepEd) {
    m.diag_context.assign(shape.dim, 1.0);
    m.diag_support.assign(shape.dim, 1.0);
    m.diag_coherence.assign(shape.dim, 1.0);
  }
  return m;
}

std::vector<double> flatten_params(const LinkingModel& model) {
  std::vector<double> flat;
  const auto& n = model.net;
  flat.insert(flat.end(), n.w1.begin(), n.w1.end());
  flat.insert(flat.end(), n.b1.begin(), n.b1.end());
  flat.insert(flat.end(), n.w2.begin(), n.w2.end());
  flat.push_back(n.b2);
  flat.insert(flat.end(), model.diag_context.begin(), model.diag_context.end());
  flat.insert(flat.end(), model.diag_support.begin(), model.diag_support.end());
  flat.insert(flat.end(), model.diag_coherence.begin(), model.diag_coherence.end());
  return flat;
}

void unflatten_params(LinkingModel& model, std::span<const double> flat) {
  auto& n = model.net;
  const std::size_t expected = n.w1.size() + n.b1.size() + n.w2.size() + 1 + model.diag_context.size() +
                               model.diag_support.size() + model.diag_coherence.size();
  if (flat.size() != expected) throw DataError("parameter vector has the wrong size");
  auto it = flat.begin();
  const auto take = [&](std::vector<double>& dst) {
    std::copy_n(it, dst.size(), dst.begin());
    it += static_cast<std::ptrdiff_t>(dst.size());
  };
  take(n.w1);
  take(n.b1);
  take(n.w2);
  n.b2 = *it++;
  take(model.diag_context);
  take(model.diag_support);
  take(model.diag_coherence);
}

std::uint64_t checksum(const LinkingModel& model) {
  Fnv1a h;
  h.add(std::uint64_t{model.kind == ModelKind::Yamada ? 0u : 1u});
  h.add(std::span<const double>(flatten_params(model)));
  return h.value();
}

// ---------------------------------------------------------------------------
// Instances

std::vector<MentionInstance> build_instances(const Document& doc, std::size_t doc_index,
                                             const KnowledgeBase& kb, const AliasDictionary& dict,
                                             const FeatureView& view, const InstanceOptions& opt) {
  std::vector<MentionInstance> out;
  const std::size_t half = opt.window / 2;
  for (std::size_t i = 0; i < doc.mentions.size(); ++i) {
    const MentionOccurrence& m = doc.mentions[i];
    if (opt.candidates_only ? !m.is_candidate : !m.label.known()) continue;
    const std::uint32_t idx = dict.mention_index(m.surface);
    if (idx == kNoMention) continue;
    auto cands = candidates_for(
        m.surface, dict, [&](EntityId e) { return view.prior(e, idx); }, opt.mode);
    if (cands.candidates.empty()) continue;

    MentionInstance inst;
    inst.mention = idx;
    inst.surface = m.surface;
    inst.candidates = std::move(cands.candidates);
    inst.doc = doc_index;
    inst.occurrence = i;
    const std::size_t lo = m.start > half ? m.start - half : 0;
    const std::size_t hi = std::min(doc.tokens.size(), m.end + half);
    for (std::size_t t = lo; t < hi; ++t)
      if (t < m.start || t >= m.end) inst.context.push_back(view.words().find(doc.tokens[t]));
    for (std::size_t j = 0; j < doc.mentions.size(); ++j) {
      const auto& other = doc.mentions[j];
      if (j != i && !other.is_candidate && other.label.known()) inst.entity_context.push_back(other.label.entity);
    }
    for (EntityId c : inst.candidates)
      inst.surface_scores.push_back(surface_features(kb.at(c).canonical_name, m.surface));
    if (m.label.known()) inst.gold = m.label.entity;
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<MentionInstance> build_instances(std::span<const Document> corpus, const KnowledgeBase& kb,
                                             const AliasDictionary& dict, const FeatureView& view,
                                             const InstanceOptions& opt) {
  std::vector<MentionInstance> out;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    auto part = build_instances(corpus[d], d, kb, dict, view, opt);
    std::move(part.begin(), part.end(), std::back_inserter(out));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scores

double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = std::sqrt(dot(a, a));
  const double nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::array<double, 3> surface_features(std::string_view entity_name, std::string_view mention) {
  const std::size_t longest = std::max(entity_name.size(), mention.size());
  const double edit =
      longest == 0 ? 1.0
                   : 1.0 - static_cast<double>(levenshtein(entity_name, mention)) / static_cast<double>(longest);
  const bool contains = entity_name.find(mention) != std::string_view::npos;
  const bool affix = entity_name.starts_with(mention) || entity_name.ends_with(mention);
  return {edit, contains ? 1.0 : 0.0, affix ? 1.0 : 0.0};
}

namespace {

std::vector<double> mean_word_vector(std::span<const std::int32_t> context, const WordEmbeddingTable& words) {
  std::vector<double> mean(words.dim(), 0.0);
  if (context.empty()) return mean;
  for (std::int32_t w : context) {
    auto v = words.vec(w);
    for (std::size_t q = 0; q < mean.size(); ++q) mean[q] += v[q];
  }
  for (double& x : mean) x /= static_cast<double>(context.size());
  return mean;
}

std::vector<double> mean_entity_vector(std::span<const EntityId> ents, const FeatureView& view) {
  std::vector<double> mean(view.dim(), 0.0);
  if (ents.empty()) return mean;
  for (EntityId e : ents) {
    auto v = view.embedding(e);
    for (std::size_t q = 0; q < mean.size(); ++q) mean[q] += v[q];
  }
  for (double& x : mean) x /= static_cast<double>(ents.size());
  return mean;
}

// d cos(x, y) / dx, scaled by `scale` and added to `out`.
void add_cosine_grad(std::span<const double> x, std::span<const double> y, double scale,
                     std::span<double> out) {
  const double nx2 = dot(x, x);
  const double ny = std::sqrt(dot(y, y));
  if (nx2 == 0.0 || ny == 0.0 || scale == 0.0) return;
  const double nx = std::sqrt(nx2);
  const double c = dot(x, y) / (nx * ny);
  for (std::size_t q = 0; q < x.size(); ++q) out[q] += scale * (y[q] / (nx * ny) - c * x[q] / nx2);
}

double weighted_dot(std::span<const double> a, std::span<const double> diag, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t q = 0; q < a.size(); ++q) s += a[q] * diag[q] * b[q];
  return s;
}

// Positions of the top `keep` scores, highest first, ties by earlier position.
std::vector<std::size_t> top_positions(std::span<const double> support, std::size_t keep) {
  std::vector<std::size_t> order(support.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return support[a] > support[b]; });
  order.resize(std::min(keep, order.size()));
  return order;
}

std::vector<double> softmax_over(std::span<const double> support, std::span<const std::size_t> kept) {
  std::vector<double> alpha(kept.size());
  if (kept.empty()) return alpha;
  double mx = support[kept[0]];
  for (std::size_t p : kept) mx = std::max(mx, support[p]);
  double z = 0.0;
  for (std::size_t k = 0; k < kept.size(); ++k) z += alpha[k] = std::exp(support[kept[k]] - mx);
  for (double& a : alpha) a /= z;
  return alpha;
}

std::size_t best_candidate(std::span<const double> values, std::span<const EntityId> candidates) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < values.size(); ++c)
    if (values[c] > values[best] || (values[c] == values[best] && candidates[c] < candidates[best])) best = c;
  return best;
}

// Intermediate values of one mention's forward pass, kept for backprop.
struct MentionForward {
  std::vector<std::vector<double>> psi;
  std::size_t k_ctx = 0;
  // Yamada
  std::vector<double> word_mean;
  std::vector<double> entity_mean;
  // DeepED
  std::vector<double> support;
  std::vector<std::size_t> support_arg;  // candidate index behind each u(w)
  std::vector<std::size_t> kept;
  std::vector<double> alpha;                    // aligned with kept
  std::vector<std::vector<double>> ctx_terms;  // [candidate][k]
  std::vector<double> coherence_mean;          // (1/K) sum phi3 * x_e'
};

MentionForward forward_psi(const LinkingModel& model, const FeatureView& view, const MentionInstance& inst) {
  MentionForward fw;
  const std::size_t n_cand = inst.candidates.size();
  const std::size_t dim = view.dim();
  const auto& mask = model.mask;
  fw.k_ctx = inst.entity_context.size();
  fw.psi.assign(n_cand, std::vector<double>(model.n_scores(), 0.0));

  if (model.kind == ModelKind::Yamada) {
    if (mask.embedding) {
      fw.word_mean = mean_word_vector(inst.context, view.words());
      fw.entity_mean = mean_entity_vector(inst.entity_context, view);
    }
    for (std::size_t c = 0; c < n_cand; ++c) {
      const EntityId e = inst.candidates[c];
      auto& psi = fw.psi[c];
      if (mask.prior) psi[0] = view.prior(e, inst.mention);
      if (mask.embedding) {
        psi[1] = cosine(view.embedding(e), fw.word_mean);
        psi[2] = fw.k_ctx ? cosine(view.embedding(e), fw.entity_mean) : 0.0;
      }
      psi[3] = inst.surface_scores[c][0];
      psi[4] = inst.surface_scores[c][1];
      psi[5] = inst.surface_scores[c][2];
    }
    return fw;
  }

  if (mask.embedding) {
    const std::size_t n = inst.context.size();
    fw.support.assign(n, 0.0);
    fw.support_arg.assign(n, 0);
    std::vector<double> vals(n_cand);
    // x_c * diag once per candidate; the product order matches weighted_dot.
    std::vector<double> scaled(n_cand * dim);
    for (std::size_t c = 0; c < n_cand; ++c) {
      const auto x = view.embedding(inst.candidates[c]);
      for (std::size_t q = 0; q < dim; ++q) scaled[c * dim + q] = x[q] * model.diag_support[q];
    }
    for (std::size_t p = 0; p < n; ++p) {
      const double* w = view.word(inst.context[p]).data();
      for (std::size_t c = 0; c < n_cand; ++c) {
        const double* y = scaled.data() + c * dim;
        double s = 0.0;
        for (std::size_t q = 0; q < dim; ++q) s += y[q] * w[q];
        vals[c] = s;
      }
      const std::size_t b = best_candidate(vals, inst.candidates);
      fw.support[p] = vals[b];
      fw.support_arg[p] = b;
    }
    fw.kept = top_positions(fw.support, model.shape.attention_keep);
    fw.alpha = softmax_over(fw.support, fw.kept);
    fw.ctx_terms.assign(n_cand, std::vector<double>(fw.kept.size(), 0.0));
    fw.coherence_mean.assign(dim, 0.0);
    for (EntityId e : inst.entity_context) {
      auto v = view.embedding(e);
      for (std::size_t q = 0; q < dim; ++q) fw.coherence_mean[q] += model.diag_coherence[q] * v[q];
    }
    if (fw.k_ctx)
      for (double& x : fw.coherence_mean) x /= static_cast<double>(fw.k_ctx);
  }
  for (std::size_t c = 0; c < n_cand; ++c) {
    const EntityId e = inst.candidates[c];
    auto& psi = fw.psi[c];
    if (mask.prior) psi[0] = view.prior(e, inst.mention);
    if (mask.embedding) {
      const auto x = view.embedding(e);
      std::vector<double> y(dim);
      for (std::size_t q = 0; q < dim; ++q) y[q] = x[q] * model.diag_context[q];
      double s = 0.0;
      for (std::size_t k = 0; k < fw.kept.size(); ++k) {
        fw.ctx_terms[c][k] = dot(y, view.word(inst.context[fw.kept[k]]));
        s += fw.alpha[k] * fw.ctx_terms[c][k];
      }
      psi[1] = s;
      psi[2] = fw.k_ctx ? dot(x, fw.coherence_mean) : 0.0;
    }
    if (mask.relatedness && fw.k_ctx) {
      double r = 0.0;
      for (EntityId o : inst.entity_context) r += view.relatedness(e, o);
      psi[3] = r / static_cast<double>(fw.k_ctx);
    }
  }
  return fw;
}

// Network pass for one candidate, optionally with a dropout multiplier per
// hidden unit. Fills `act` with the post-dropout pre-activations.
double net_forward(const ScoreNet& net, std::span<const double> psi, const std::vector<double>* drop,
                   std::vector<double>& act) {
  act.assign(net.hidden, 0.0);
  double out = net.b2;
  for (std::size_t h = 0; h < net.hidden; ++h) {
    double z = net.b1[h];
    for (std::size_t i = 0; i < net.in; ++i) z += net.w1[h * net.in + i] * psi[i];
    if (drop) z *= (*drop)[h];
    act[h] = z;
    if (z > 0.0) out += net.w2[h] * z;
  }
  return out;
}

// Backprop of d(score) = ds through the network. Adds parameter gradients to
// `grad` (flatten_params order) when non-null; returns d score / d psi.
std::vector<double> net_backward(const ScoreNet& net, std::span<const double> psi,
                                 const std::vector<double>& act, const std::vector<double>* drop, double ds,
                                 std::vector<double>* grad) {
  std::vector<double> dpsi(net.in, 0.0);
  const std::size_t off_b1 = net.w1.size();
  const std::size_t off_w2 = off_b1 + net.b1.size();
  const std::size_t off_b2 = off_w2 + net.w2.size();
  if (grad) (*grad)[off_b2] += ds;
  for (std::size_t h = 0; h < net.hidden; ++h) {
    if (act[h] <= 0.0) continue;
    if (grad) (*grad)[off_w2 + h] += ds * act[h];
    double dz = ds * net.w2[h];
    if (drop) dz *= (*drop)[h];
    if (grad) {
      (*grad)[off_b1 + h] += dz;
      for (std::size_t i = 0; i < net.in; ++i) (*grad)[h * net.in + i] += dz * psi[i];
    }
    for (std::size_t i = 0; i < net.in; ++i) dpsi[i] += dz * net.w1[h * net.in + i];
  }
  return dpsi;
}

std::optional<std::size_t> gold_index(const MentionInstance& inst) {
  if (!inst.gold) return std::nullopt;
  for (std::size_t c = 0; c < inst.candidates.size(); ++c)
    if (inst.candidates[c] == *inst.gold) return c;
  return std::nullopt;
}

// Hinge terms of one mention: returns the loss and fills d loss / d score.
double hinge(std::span<const double> scores, std::size_t gold, double margin, std::vector<double>& dscore) {
  dscore.assign(scores.size(), 0.0);
  double loss = 0.0;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (c == gold) continue;
    const double v = margin - scores[gold] + scores[c];
    if (v > 0.0) {
      loss += v;
      dscore[c] += 1.0;
      dscore[gold] -= 1.0;
    }
  }
  return loss;
}

// d psi -> theta(e*) gradient for one mention.
void accumulate_theta(const LinkingModel& model, const FeatureView& view, const MentionInstance& inst,
                      const MentionForward& fw, const std::vector<std::vector<double>>& dpsi,
                      std::vector<double>& grad) {
  const EeParams& ee = *view.ee();
  const EeLayout& layout = ee.layout;
  const std::size_t emb_off = layout.offset(FeatureGroup::Embedding);
  const std::size_t rel_off = layout.offset(FeatureGroup::Relatedness);
  const std::size_t dim = view.dim();
  std::span<double> g_emb(grad.data() + emb_off, dim);
  const auto& mask = model.mask;

  for (std::size_t c = 0; c < inst.candidates.size(); ++c) {
    const EntityId e = inst.candidates[c];
    const auto& d = dpsi[c];
    const bool is_ee = view.is_ee(e);
    if (is_ee && mask.prior) {
      const int slot = layout.alias_slot(inst.mention);
      if (slot >= 0) grad[layout.offset(FeatureGroup::Prior) + static_cast<std::size_t>(slot)] += d[0];
    }
    if (model.kind == ModelKind::Yamada) {
      if (is_ee && mask.embedding) {
        const auto x = view.embedding(e);
        add_cosine_grad(x, fw.word_mean, d[1], g_emb);
        if (fw.k_ctx) add_cosine_grad(x, fw.entity_mean, d[2], g_emb);
      }
      continue;
    }
    if (mask.embedding) {
      for (std::size_t k = 0; k < fw.kept.size(); ++k) {
        const auto w = view.word(inst.context[fw.kept[k]]);
        if (is_ee) {
          const double a = d[1] * fw.alpha[k];
          for (std::size_t q = 0; q < dim; ++q) g_emb[q] += a * model.diag_context[q] * w[q];
        }
        if (view.is_ee(inst.candidates[fw.support_arg[fw.kept[k]]])) {
          const double coef = d[1] * fw.alpha[k] * (fw.ctx_terms[c][k] - fw.psi[c][1]);
          for (std::size_t q = 0; q < dim; ++q) g_emb[q] += coef * model.diag_support[q] * w[q];
        }
      }
      if (is_ee && fw.k_ctx)
        for (std::size_t q = 0; q < dim; ++q) g_emb[q] += d[2] * fw.coherence_mean[q];
    }
    if (is_ee && mask.relatedness && fw.k_ctx) {
      const double share = d[3] / static_cast<double>(fw.k_ctx);
      for (EntityId o : inst.entity_context) grad[rel_off + o.value] += share;
    }
  }
}

// d psi -> gradient of the DeepED diagonals (flatten_params order).
void accumulate_diagonals(const LinkingModel& model, const FeatureView& view, const MentionInstance& inst,
                          const MentionForward& fw, const std::vector<std::vector<double>>& dpsi,
                          std::vector<double>& grad) {
  if (model.kind != ModelKind::DeepEd || !model.mask.embedding) return;
  const std::size_t dim = view.dim();
  const std::size_t off_ctx = model.net.w1.size() + model.net.b1.size() + model.net.w2.size() + 1;
  const std::size_t off_sup = off_ctx + dim;
  const std::size_t off_coh = off_sup + dim;
  for (std::size_t c = 0; c < inst.candidates.size(); ++c) {
    const auto x = view.embedding(inst.candidates[c]);
    const auto& d = dpsi[c];
    for (std::size_t k = 0; k < fw.kept.size(); ++k) {
      const auto w = view.word(inst.context[fw.kept[k]]);
      const double a = d[1] * fw.alpha[k];
      for (std::size_t q = 0; q < dim; ++q) grad[off_ctx + q] += a * x[q] * w[q];
      const double coef = d[1] * fw.alpha[k] * (fw.ctx_terms[c][k] - fw.psi[c][1]);
      const auto xs = view.embedding(inst.candidates[fw.support_arg[fw.kept[k]]]);
      for (std::size_t q = 0; q < dim; ++q) grad[off_sup + q] += coef * xs[q] * w[q];
    }
    if (fw.k_ctx) {
      const double share = d[2] / static_cast<double>(fw.k_ctx);
      for (EntityId o : inst.entity_context) {
        const auto y = view.embedding(o);
        for (std::size_t q = 0; q < dim; ++q) grad[off_coh + q] += share * x[q] * y[q];
      }
    }
  }
}

}  // namespace

double yamada_context_similarity(std::span<const double> entity, std::span<const std::int32_t> context,
                                 const WordEmbeddingTable& words) {
  return cosine(entity, mean_word_vector(context, words));
}

double yamada_topical_coherence(EntityId e, std::span<const EntityId> entity_context, const FeatureView& view) {
  if (entity_context.empty()) return 0.0;
  return cosine(view.embedding(e), mean_entity_vector(entity_context, view));
}

std::vector<double> deeped_support_scores(std::span<const std::int32_t> context,
                                          std::span<const EntityId> candidates, const FeatureView& view,
                                          const LinkingModel& model) {
  std::vector<double> out(context.size(), 0.0);
  if (candidates.empty()) return out;
  std::vector<double> vals(candidates.size());
  for (std::size_t p = 0; p < context.size(); ++p) {
    const auto w = view.word(context[p]);
    for (std::size_t c = 0; c < candidates.size(); ++c)
      vals[c] = weighted_dot(view.embedding(candidates[c]), model.diag_support, w);
    out[p] = vals[best_candidate(vals, candidates)];
  }
  return out;
}

std::vector<double> deeped_attention(std::span<const double> support, std::size_t keep) {
  std::vector<double> out(support.size(), 0.0);
  const auto kept = top_positions(support, keep);
  const auto alpha = softmax_over(support, kept);
  for (std::size_t k = 0; k < kept.size(); ++k) out[kept[k]] = alpha[k];
  return out;
}

double deeped_context_score(EntityId e, std::span<const std::int32_t> context,
                            std::span<const double> attention, const FeatureView& view,
                            const LinkingModel& model) {
  double s = 0.0;
  const auto x = view.embedding(e);
  for (std::size_t p = 0; p < context.size(); ++p)
    if (attention[p] != 0.0) s += attention[p] * weighted_dot(x, model.diag_context, view.word(context[p]));
  return s;
}

std::pair<double, double> deeped_coherence_scores(EntityId e, std::span<const EntityId> entity_context,
                                                  const FeatureView& view, const LinkingModel& model) {
  if (entity_context.empty()) return {0.0, 0.0};
  double emb = 0.0, rel = 0.0;
  const auto x = view.embedding(e);
  for (EntityId o : entity_context) {
    emb += weighted_dot(x, model.diag_coherence, view.embedding(o));
    rel += view.relatedness(e, o);
  }
  const double k = static_cast<double>(entity_context.size());
  return {emb / k, rel / k};
}

std::vector<std::vector<double>> candidate_scores(const LinkingModel& model, const FeatureView& view,
                                                  const MentionInstance& inst) {
  return forward_psi(model, view, inst).psi;
}

std::vector<double> score_candidates(const LinkingModel& model, const FeatureView& view,
                                     const MentionInstance& inst) {
  const auto psi = candidate_scores(model, view, inst);
  std::vector<double> out(psi.size());
  for (std::size_t c = 0; c < psi.size(); ++c) out[c] = model.net.forward(psi[c]);
  return out;
}

double yamada_score(const LinkingModel& model, const FeatureView& view, const MentionInstance& inst,
                    std::size_t candidate) {
  return score_candidates(model, view, inst).at(candidate);
}

double deeped_score(const LinkingModel& model, const FeatureView& view, const MentionInstance& inst,
                    std::size_t candidate) {
  return score_candidates(model, view, inst).at(candidate);
}

std::optional<EntityId> predict(const LinkingModel& model, const FeatureView& view, const MentionInstance& inst) {
  if (inst.candidates.empty()) return std::nullopt;
  const auto scores = score_candidates(model, view, inst);
  return inst.candidates[best_candidate(scores, inst.candidates)];
}

// ---------------------------------------------------------------------------
// Objective

LossResult margin_loss(const LinkingModel& model, const FeatureView& view,
                       std::span<const MentionInstance> batch, double margin) {
  LossResult out;
  std::vector<double> dscore;
  for (const auto& inst : batch) {
    const auto g = gold_index(inst);
    if (!g) {
      ++out.skipped;
      continue;
    }
    out.loss += hinge(score_candidates(model, view, inst), *g, margin, dscore);
  }
  return out;
}

namespace {

struct InstanceGrad {
  double loss = 0.0;
  bool skipped = false;
};

// Loss of one mention and its gradients w.r.t. theta(e*) and/or phi.
InstanceGrad backprop_instance(const LinkingModel& model, const FeatureView& view, const MentionInstance& inst,
                               double margin, Rng* dropout_rng, std::vector<double>* theta_grad,
                               std::vector<double>* model_grad) {
  InstanceGrad out;
  const auto g = gold_index(inst);
  if (!g) {
    out.skipped = true;
    return out;
  }
  const auto fw = forward_psi(model, view, inst);
  const std::size_t n = inst.candidates.size();
  std::vector<std::vector<double>> act(n), drop;
  std::vector<double> scores(n);
  if (dropout_rng) {
    const double p = model.shape.dropout;
    std::bernoulli_distribution keep(1.0 - p);
    drop.assign(n, std::vector<double>(model.net.hidden));
    for (auto& d : drop)
      for (double& v : d) v = keep(*dropout_rng) ? 1.0 / (1.0 - p) : 0.0;
  }
  for (std::size_t c = 0; c < n; ++c)
    scores[c] = net_forward(model.net, fw.psi[c], dropout_rng ? &drop[c] : nullptr, act[c]);
  std::vector<double> dscore;
  out.loss = hinge(scores, *g, margin, dscore);
  if (out.loss == 0.0) return out;

  std::vector<std::vector<double>> dpsi(n);
  for (std::size_t c = 0; c < n; ++c) {
    if (dscore[c] == 0.0) {
      dpsi[c].assign(model.n_scores(), 0.0);
      continue;
    }
    dpsi[c] = net_backward(model.net, fw.psi[c], act[c], dropout_rng ? &drop[c] : nullptr, dscore[c], model_grad);
  }
  if (theta_grad) accumulate_theta(model, view, inst, fw, dpsi, *theta_grad);
  if (model_grad) accumulate_diagonals(model, view, inst, fw, dpsi, *model_grad);
  return out;
}

}  // namespace

EeGradient grad_wrt_ee_features(const LinkingModel& model, const FeatureView& view,
                                std::span<const MentionInstance> batch, double margin) {
  if (!view.ee()) throw std::logic_error("grad_wrt_ee_features needs an emerging-entity bundle");
  EeGradient out;
  out.grad.assign(view.ee()->layout.size(), 0.0);
  for (const auto& inst : batch) {
    auto r = backprop_instance(model, view, inst, margin, nullptr, &out.grad, nullptr);
    out.loss += r.loss;
    out.skipped += r.skipped ? 1 : 0;
  }
  return out;
}

std::vector<double> grad_wrt_model(const LinkingModel& model, const FeatureView& view,
                                   std::span<const MentionInstance> batch, double margin) {
  std::vector<double> grad(flatten_params(model).size(), 0.0);
  for (const auto& inst : batch) backprop_instance(model, view, inst, margin, nullptr, nullptr, &grad);
  return grad;
}

TrainReport train_model(LinkingModel& model, std::span<const MentionInstance> corpus, const FeatureView& view,
                        const TrainConfig& cfg) {
  if (corpus.empty()) throw DataError("cannot train a linking model on an empty corpus");
  TrainReport report;
  report.loss_trace.push_back(margin_loss(model, view, corpus, cfg.margin).loss);
  if (cfg.epochs == 0) return report;

  Rng rng(cfg.seed);
  std::vector<double> params = flatten_params(model);
  std::vector<double> m1(params.size(), 0.0), m2(params.size(), 0.0);
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  std::size_t step = 0;
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = std::max<std::size_t>(1, cfg.batch_size);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::vector<double> grad(params.size(), 0.0);
      for (std::size_t i = start; i < end; ++i)
        backprop_instance(model, view, corpus[order[i]], cfg.margin, &rng, nullptr, &grad);
      ++step;
      const double inv = 1.0 / static_cast<double>(end - start);
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      for (std::size_t k = 0; k < params.size(); ++k) {
        const double g = grad[k] * inv;
        m1[k] = kBeta1 * m1[k] + (1.0 - kBeta1) * g;
        m2[k] = kBeta2 * m2[k] + (1.0 - kBeta2) * g * g;
        params[k] -= cfg.learning_rate * (m1[k] / c1) / (std::sqrt(m2[k] / c2) + kEps);
      }
      unflatten_params(model, params);
    }
    report.loss_trace.push_back(margin_loss(model, view, corpus, cfg.margin).loss);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Linking

std::vector<LinkResult> link_document(const Document& doc, const KnowledgeBase& kb, const AliasDictionary& dict,
                                      const LinkingModel& model, const FeatureView& view) {
  InstanceOptions opt;
  opt.mode = LinkMode::Test;
  opt.window = model.shape.window;
  opt.candidates_only = true;
  std::vector<LinkResult> out;
  for (const auto& inst : build_instances(doc, 0, kb, dict, view, opt))
    if (auto e = predict(model, view, inst)) out.push_back({inst.occurrence, *e});
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kModelMagic[4] = {'S', 'T', 'M', 'M'};
constexpr int kModelVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    const int c = in.get();
    if (c == EOF) throw DataError("truncated model checkpoint");
    v |= static_cast<std::uint32_t>(c & 0xff) << (8 * i);
  }
  return v;
}

}  // namespace

void save_model(const LinkingModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out.write(kModelMagic, 4);
  out.put(static_cast<char>(kModelVersion));
  out.put(static_cast<char>(model.kind == ModelKind::Yamada ? 0 : 1));
  put_u32(out, static_cast<std::uint32_t>(model.shape.dim));
  put_u32(out, static_cast<std::uint32_t>(model.shape.window));
  put_u32(out, static_cast<std::uint32_t>(model.shape.attention_keep));
  put_u32(out, static_cast<std::uint32_t>(model.shape.hidden));
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(model.shape.dropout)));
  out.put(static_cast<char>((model.mask.prior ? 1 : 0) | (model.mask.relatedness ? 2 : 0) |
                            (model.mask.embedding ? 4 : 0)));
  const auto flat = flatten_params(model);
  put_u32(out, static_cast<std::uint32_t>(flat.size()));
  for (double v : flat) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));

  std::ofstream side(path + ".cfg");
  side << "kind=" << to_string(model.kind) << "\ndim=" << model.shape.dim << "\nwindow=" << model.shape.window
       << "\nattention_keep=" << model.shape.attention_keep << "\nhidden=" << model.shape.hidden
       << "\ndropout=" << model.shape.dropout << "\nuse_prior=" << model.mask.prior
       << "\nuse_relatedness=" << model.mask.relatedness << "\nuse_embedding=" << model.mask.embedding << '\n';
}

LinkingModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kModelMagic)) throw DataError(path + ": bad magic");
  if (in.get() != kModelVersion) throw DataError(path + ": unsupported checkpoint version");
  const int kind = in.get();
  if (kind != 0 && kind != 1) throw DataError(path + ": bad model kind");
  ModelShape shape;
  shape.dim = get_u32(in);
  shape.window = get_u32(in);
  shape.attention_keep = get_u32(in);
  shape.hidden = get_u32(in);
  shape.dropout = static_cast<double>(std::bit_cast<float>(get_u32(in)));
  const int bits = in.get();
  FeatureMask mask{(bits & 1) != 0, (bits & 2) != 0, (bits & 4) != 0};
  LinkingModel model = LinkingModel::create(kind == 0 ? ModelKind::Yamada : ModelKind::DeepEd, shape, mask, 0);
  const std::uint32_t n = get_u32(in);
  std::vector<double> flat(n);
  for (double& v : flat) v = static_cast<double>(std::bit_cast<float>(get_u32(in)));
  unflatten_params(model, flat);
  return model;
}

}  // namespace stamo
