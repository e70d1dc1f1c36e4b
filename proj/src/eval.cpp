#include "stamo/eval.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "stamo/util.hpp"

namespace stamo {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Metrics

MetricsReport compute_metrics(std::span<const EntityId> predictions, std::span<const EntityId> gold, EntityId ee) {
  if (predictions.size() != gold.size())
    throw std::invalid_argument("predictions and gold labels differ in length");
  MetricsReport r;
  r.n_mentions = gold.size();
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool pred_ee = predictions[i] == ee;
    const bool gold_ee = gold[i] == ee;
    r.correct += predictions[i] == gold[i] ? 1 : 0;
    r.tp += pred_ee && gold_ee ? 1 : 0;
    r.fp += pred_ee && !gold_ee ? 1 : 0;
    r.fn += !pred_ee && gold_ee ? 1 : 0;
  }
  r.acc = r.n_mentions ? static_cast<double>(r.correct) / static_cast<double>(r.n_mentions) : 0.0;
  r.precision_undefined = r.tp + r.fp == 0;
  r.recall_undefined = r.tp + r.fn == 0;
  if (!r.precision_undefined) r.precision = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp);
  if (!r.recall_undefined) r.recall = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
  if (r.precision + r.recall > 0.0) r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

// ---------------------------------------------------------------------------
// Pre-training

namespace {

// Stored matrices are float32; rounding here makes save/load an identity.
void round_to_float(std::span<double> xs) {
  for (double& x : xs) x = static_cast<double>(static_cast<float>(x));
}

}  // namespace

NeeFeatures pretrain_features(const World& world, const PipelineConfig& cfg, std::uint64_t seed) {
  NeeFeatures out{build_alias_dictionary(world.nee_kb.entities()), {}};
  EmbedConfig embed = cfg.embed;
  embed.dim = cfg.shape.dim;
  out.store = estimate_features(world.wiki, out.dict, world.nee_kb.size() + 1, embed, mix_seed(seed, 0xF0));
  for (std::uint32_t e = 0; e < out.store.entities.rows(); ++e) round_to_float(out.store.entities.row(EntityId{e}));
  for (std::size_t w = 0; w < out.store.words.size(); ++w)
    round_to_float(out.store.words.mutable_vec(static_cast<std::int32_t>(w)));
  return out;
}

LinkingModel pretrain_model(const World& world, const NeeFeatures& features, ModelKind kind,
                            const FeatureMask& mask, const PipelineConfig& cfg, std::uint64_t seed,
                            TrainReport* report) {
  LinkingModel model = LinkingModel::create(kind, cfg.shape, mask, mix_seed(seed, 0xA0));
  const FeatureView view(features.store);
  InstanceOptions opt;
  opt.mode = LinkMode::Train;
  opt.window = cfg.shape.window;
  opt.candidates_only = false;
  auto all = build_instances(world.model_corpus, world.nee_kb, features.dict, view, opt);
  std::vector<MentionInstance> ambiguous;
  for (auto& inst : all)
    if (inst.candidates.size() > 1) ambiguous.push_back(std::move(inst));
  TrainConfig train = cfg.train;
  train.seed = mix_seed(seed, 0xA1);
  auto rep = train_model(model, ambiguous, view, train);
  auto flat = flatten_params(model);
  round_to_float(flat);
  unflatten_params(model, flat);
  if (report) *report = std::move(rep);
  return model;
}

TestSet prepare_test_set(std::span<const Document> docs, const StamoContext& ctx) {
  TestSet out;
  out.instances = candidate_instances(docs, ctx, EeParams::zeros(ctx.layout), LinkMode::Test);
  for (const auto& inst : out.instances) {
    if (!inst.gold) throw DataError("test mention without a gold label");
    out.gold.push_back(*inst.gold);
  }
  return out;
}

MetricsReport evaluate(const TestSet& test, const StamoContext& ctx, const EeParams& theta) {
  const FeatureView view(ctx.store, theta);
  std::vector<EntityId> pred;
  pred.reserve(test.instances.size());
  for (const auto& inst : test.instances) pred.push_back(*predict(ctx.model, view, inst));
  return compute_metrics(pred, test.gold, ctx.layout.ee);
}

// ---------------------------------------------------------------------------
// Plans

MethodSpec parse_method(std::string_view text) {
  MethodSpec m;
  m.name = std::string(text);
  if (text == "Estimation") {
    m.kind = MethodKind::Estimation;
  } else if (text.starts_with("EstimationNK(") && text.ends_with(")")) {
    m.kind = MethodKind::EstimationNK;
    const std::string num(text.substr(13, text.size() - 14));
    try {
      m.nk = std::stoul(num);
    } catch (const std::exception&) {
      throw DataError("bad document count in " + m.name);
    }
  } else if (text == "SelfTraining") {
    m.kind = MethodKind::SelfTraining;
  } else if (text == "SelfTraining+Intra") {
    m.kind = MethodKind::SelfTrainingIntra;
  } else if (text == "SelfTraining+Inter") {
    m.kind = MethodKind::SelfTrainingInter;
  } else if (text == "STAMO") {
    m.kind = MethodKind::Stamo;
  } else {
    throw DataError("unknown method: " + m.name);
  }
  return m;
}

void ExperimentPlan::validate() const {
  if (methods.empty()) throw DataError("experiment plan has no methods");
  if (seeds.empty()) throw DataError("experiment plan has no seeds");
  for (const auto& m : methods) parse_method(m);
  for (const auto& a : inter_ablations)
    if (a != "delta" && a != "eta" && a != "warmup") throw DataError("unknown inter-slot ablation: " + a);
  try {
    world.validate();
    stamo.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
}

std::vector<MethodSpec> ExperimentPlan::expand() const {
  std::vector<MethodSpec> out;
  for (const auto& m : methods) out.push_back(parse_method(m));
  for (std::size_t k : labeled_sizes) {
    if (k == world.labeled_per_ee) continue;
    for (const char* base : {"Estimation", "STAMO"}) {
      MethodSpec m = parse_method(base);
      m.labeled_size = k;
      m.name += "@L=" + std::to_string(k);
      out.push_back(m);
    }
  }
  for (FeatureGroup g : feature_ablations) {
    MethodSpec m = parse_method("STAMO");
    m.name = std::string("STAMO-no-") + to_string(g);
    if (g == FeatureGroup::Prior) m.mask.prior = false;
    if (g == FeatureGroup::Relatedness) m.mask.relatedness = false;
    if (g == FeatureGroup::Embedding) m.mask.embedding = false;
    out.push_back(m);
  }
  for (const auto& a : inter_ablations) {
    MethodSpec m = parse_method("STAMO");
    if (a == "delta") {
      m.name = "STAMO-raw-delta";
      m.ablation.raw_delta = true;
    } else if (a == "eta") {
      m.name = "STAMO-unit-eta";
      m.ablation.unit_rate = true;
    } else {
      m.name = "STAMO-no-warmup";
      m.ablation.no_warmup = true;
    }
    out.push_back(m);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Running

namespace {

bool self_training(MethodKind k) {
  return k != MethodKind::Estimation && k != MethodKind::EstimationNK;
}

Variant variant_of(MethodKind k) {
  switch (k) {
    case MethodKind::SelfTraining: return Variant::Vanilla;
    case MethodKind::SelfTrainingIntra: return Variant::IntraOnly;
    case MethodKind::SelfTrainingInter: return Variant::InterOnly;
    default: return Variant::Full;
  }
}

int mask_key(const FeatureMask& m) { return (m.prior ? 1 : 0) | (m.relatedness ? 2 : 0) | (m.embedding ? 4 : 0); }

}  // namespace

ExperimentResults run_experiment(const ExperimentPlan& plan, const ProgressFn& progress) {
  plan.validate();
  const auto methods = plan.expand();
  ExperimentResults results;
  const auto say = [&](const std::string& msg) {
    if (progress) progress(msg);
  };

  for (std::uint64_t seed : plan.seeds) {
    WorldConfig wcfg = plan.world;
    wcfg.seed = seed;
    say("seed " + std::to_string(seed) + ": generating world");
    const World world = generate_world(wcfg);
    say("seed " + std::to_string(seed) + ": estimating NEE features");
    const NeeFeatures features = pretrain_features(world, plan.pipeline, seed);
    const std::uint64_t store_sum = checksum(features.store);
    results.store_checksums[seed] = store_sum;

    std::map<int, LinkingModel> models;
    std::map<int, std::uint64_t> model_sums;
    const auto model_for = [&](const FeatureMask& mask) -> const LinkingModel& {
      const int key = mask_key(mask);
      auto it = models.find(key);
      if (it == models.end()) {
        say("seed " + std::to_string(seed) + ": training " + to_string(plan.model) + " model (mask " +
            std::to_string(key) + ")");
        it = models.emplace(key, pretrain_model(world, features, plan.model, mask, plan.pipeline, seed)).first;
        model_sums[key] = checksum(it->second);
      }
      return it->second;
    };
    results.model_checksums[seed] = checksum(model_for(FeatureMask{}));

    const std::size_t n_ees = plan.max_ees ? std::min(plan.max_ees, world.ees.size()) : world.ees.size();
    for (std::size_t j = 0; j < n_ees; ++j) {
      const EeTask& task = world.ees[j];
      const AliasDictionary dict = build_alias_dictionary(task.kb.entities());
      const StamoContext base_ctx(task.kb, dict, features.store, model_for(FeatureMask{}));
      const TestSet test_web = prepare_test_set(task.test_web, base_ctx);
      const TestSet test_wiki = prepare_test_set(task.test_wiki, base_ctx);
      const std::uint64_t split_seed = mix_seed(seed, 1000 + j);

      for (const auto& method : methods) {
        const LinkingModel& model = model_for(method.mask);
        const StamoContext ctx(task.kb, dict, features.store, model);
        StamoConfig scfg = plan.stamo;
        scfg.seed = mix_seed(seed, 5000 + j);
        scfg.variant = variant_of(method.kind);
        scfg.ablation = method.ablation;
        scfg.embed.dim = features.store.dim();

        ResultRow proto;
        proto.method = method.name;
        proto.model = plan.model;
        proto.ee = j;
        proto.seed = seed;
        const auto start = std::chrono::steady_clock::now();
        try {
          std::vector<Document> labeled = task.labeled, unlabeled = task.unlabeled;
          const std::size_t k = method.kind == MethodKind::EstimationNK ? method.nk : method.labeled_size;
          if (k != 0 && !(method.kind != MethodKind::EstimationNK && k == plan.world.labeled_per_ee))
            std::tie(labeled, unlabeled) = split_labeled(task.oracle, std::min(k, task.oracle.size()), split_seed);

          EeParams theta;
          if (self_training(method.kind)) {
            const Probe probe = [&](const EeParams& p) {
              const auto a = evaluate(test_web, ctx, p), b = evaluate(test_wiki, ctx, p);
              return std::pair{(a.acc + b.acc) / 2.0, (a.f1 + b.f1) / 2.0};
            };
            auto run = run_stamo(labeled, unlabeled, ctx, scfg, probe);
            theta = std::move(run.theta);
            proto.slots = scfg.slots;
            results.traces.push_back({method.name, j, seed, std::move(run.trace)});
          } else {
            theta = estimate_ee_features(labeled, ctx, scfg.embed, estimation_seed(scfg)).params;
          }
          const double ms =
              std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
          proto.wall_ms = plan.record_wall_time ? ms : 0.0;
          for (const auto& [name, set] : {std::pair{"test_web", &test_web}, std::pair{"test_wiki", &test_wiki}}) {
            ResultRow row = proto;
            row.dataset = name;
            row.metrics = evaluate(*set, ctx, theta);
            results.rows.push_back(row);
          }
        } catch (const std::exception& e) {
          for (const char* name : {"test_web", "test_wiki"}) {
            ResultRow row = proto;
            row.dataset = name;
            row.failed = true;
            row.error = e.what();
            results.rows.push_back(row);
          }
          say("cell failed: " + method.name + " ee " + std::to_string(j) + ": " + e.what());
        }
        if (checksum(features.store) != store_sum || checksum(model) != model_sums[mask_key(method.mask)])
          ++results.freeze_violations;
      }
      say("seed " + std::to_string(seed) + ": finished emerging entity " + std::to_string(j));
    }
  }
  return results;
}

// ---------------------------------------------------------------------------
// Aggregation

namespace {

struct Means {
  double acc = 0, p = 0, r = 0, f1 = 0;
  std::size_t n = 0;
  void add(double a, double pp, double rr, double f) {
    acc += a;
    p += pp;
    r += rr;
    f1 += f;
    ++n;
  }
  Means mean() const {
    if (n == 0) return *this;
    const double k = static_cast<double>(n);
    return {acc / k, p / k, r / k, f1 / k, n};
  }
};

}  // namespace

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
  // (method, dataset, seed, ee) -> metrics; "avg" averages the two test sets.
  std::map<std::tuple<std::string, std::string, std::uint64_t, std::size_t>, Means> cell;
  std::vector<std::string> order;
  for (const auto& r : rows) {
    if (r.failed) continue;
    if (std::find(order.begin(), order.end(), r.method) == order.end()) order.push_back(r.method);
    const auto& m = r.metrics;
    cell[{r.method, r.dataset, r.seed, r.ee}].add(m.acc, m.precision, m.recall, m.f1);
    cell[{r.method, "avg", r.seed, r.ee}].add(m.acc, m.precision, m.recall, m.f1);
  }
  std::map<std::tuple<std::string, std::string, std::uint64_t>, Means> per_seed;
  for (const auto& [key, m] : cell) {
    const auto mm = m.mean();
    per_seed[{std::get<0>(key), std::get<1>(key), std::get<2>(key)}].add(mm.acc, mm.p, mm.r, mm.f1);
  }
  std::map<std::pair<std::string, std::string>, std::vector<Means>> per_method;
  for (const auto& [key, m] : per_seed) per_method[{std::get<0>(key), std::get<1>(key)}].push_back(m.mean());

  std::vector<SummaryRow> out;
  for (const auto& method : order)
    for (const char* dataset : {"test_web", "test_wiki", "avg"}) {
      auto it = per_method.find({method, dataset});
      if (it == per_method.end()) continue;
      Means total;
      for (const auto& s : it->second) total.add(s.acc, s.p, s.r, s.f1);
      const Means mean = total.mean();
      double var = 0.0;
      for (const auto& s : it->second) var += (s.f1 - mean.f1) * (s.f1 - mean.f1);
      const std::size_t n = it->second.size();
      SummaryRow row{method, dataset, mean.acc, mean.p, mean.r, mean.f1,
                     n > 1 ? std::sqrt(var / static_cast<double>(n - 1)) : 0.0, n};
      out.push_back(row);
    }
  return out;
}

std::optional<double> seed_mean_f1(const std::vector<ResultRow>& rows, const std::string& method,
                                   std::uint64_t seed) {
  std::map<std::size_t, Means> per_ee;
  for (const auto& r : rows)
    if (!r.failed && r.method == method && r.seed == seed) per_ee[r.ee].add(0, 0, 0, r.metrics.f1);
  if (per_ee.empty()) return std::nullopt;
  double total = 0.0;
  for (const auto& [ee, m] : per_ee) total += m.mean().f1;
  return total / static_cast<double>(per_ee.size());
}

double method_mean_f1(const std::vector<ResultRow>& rows, const std::string& method) {
  std::set<std::uint64_t> seeds;
  for (const auto& r : rows)
    if (r.method == method) seeds.insert(r.seed);
  double total = 0.0;
  std::size_t n = 0;
  for (std::uint64_t s : seeds)
    if (auto f = seed_mean_f1(rows, method, s)) {
      total += *f;
      ++n;
    }
  return n ? total / static_cast<double>(n) : 0.0;
}

std::vector<double> mean_slot_f1(const std::vector<TraceRecord>& traces, const std::string& method) {
  std::vector<double> sum;
  std::vector<std::size_t> count;
  for (const auto& t : traces) {
    if (t.method != method) continue;
    if (sum.size() < t.trace.records.size()) {
      sum.resize(t.trace.records.size(), 0.0);
      count.resize(t.trace.records.size(), 0);
    }
    for (std::size_t i = 0; i < t.trace.records.size(); ++i) {
      sum[i] += t.trace.records[i].probe_f1;
      ++count[i];
    }
  }
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] /= static_cast<double>(count[i]);
  return sum;
}

double max_drawdown(std::span<const double> series, std::size_t first) {
  double peak = -std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (std::size_t t = first; t < series.size(); ++t) {
    peak = std::max(peak, series[t]);
    worst = std::max(worst, peak - series[t]);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string file_safe(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_';
  return out;
}

double to_double(const std::string& s) {
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw DataError("bad number in CSV: '" + s + "'");
  }
}

}  // namespace

void write_results_csv(const std::vector<ResultRow>& rows, std::ostream& out) {
  out << "method,model,ee_id,seed,dataset,acc,p,r,f1,slots,wall_ms\n";
  for (const auto& r : rows) {
    out << r.method << ',' << to_string(r.model) << ',' << r.ee << ',' << r.seed << ',' << r.dataset << ',';
    if (r.failed)
      out << "nan,nan,nan,nan,";
    else
      out << fmt(r.metrics.acc) << ',' << fmt(r.metrics.precision) << ',' << fmt(r.metrics.recall) << ','
          << fmt(r.metrics.f1) << ',';
    char ms[32];
    std::snprintf(ms, sizeof ms, "%.0f", r.wall_ms);
    out << r.slots << ',' << ms << '\n';
  }
}

std::vector<ResultRow> read_results_csv(std::istream& in) {
  std::vector<ResultRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 11) throw DataError("results.csv line " + std::to_string(line_no) + ": expected 11 fields");
    try {
      ResultRow r;
      r.method = f[0];
      r.model = parse_model_kind(f[1]);
      r.ee = std::stoul(f[2]);
      r.seed = std::stoull(f[3]);
      r.dataset = f[4];
      r.failed = f[5] == "nan";
      if (!r.failed) {
        r.metrics.acc = to_double(f[5]);
        r.metrics.precision = to_double(f[6]);
        r.metrics.recall = to_double(f[7]);
        r.metrics.f1 = to_double(f[8]);
      }
      r.slots = std::stoul(f[9]);
      r.wall_ms = to_double(f[10]);
      rows.push_back(std::move(r));
    } catch (const DataError&) {
      throw;
    } catch (const std::exception& e) {
      throw DataError("results.csv line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

void write_traces_csv(const std::vector<TraceRecord>& traces, std::ostream& out) {
  out << "method,ee_id,seed,slot,loss,delta_norm,probe_acc,probe_f1,agreement,degenerate,digest\n";
  for (const auto& t : traces)
    for (const auto& r : t.trace.records) {
      out << t.method << ',' << t.ee << ',' << t.seed << ',' << r.slot << ',' << fmt(r.loss) << ','
          << fmt(r.delta_norm) << ',' << fmt(r.probe_acc) << ',' << fmt(r.probe_f1) << ',';
      if (r.agreement) out << fmt(*r.agreement);
      char digest[20];
      std::snprintf(digest, sizeof digest, "%016llx", static_cast<unsigned long long>(r.digest));
      out << ',' << (r.degenerate ? 1 : 0) << ',' << digest << '\n';
    }
}

std::vector<TraceRecord> read_traces_csv(std::istream& in) {
  std::vector<TraceRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 11) throw DataError("traces.csv line " + std::to_string(line_no) + ": expected 11 fields");
    try {
      const std::string method = f[0];
      const std::size_t ee = std::stoul(f[1]);
      const std::uint64_t seed = std::stoull(f[2]);
      if (out.empty() || out.back().method != method || out.back().ee != ee || out.back().seed != seed)
        out.push_back({method, ee, seed, {}});
      SlotRecord r;
      r.slot = std::stoul(f[3]);
      r.loss = to_double(f[4]);
      r.delta_norm = to_double(f[5]);
      r.probe_acc = to_double(f[6]);
      r.probe_f1 = to_double(f[7]);
      if (!f[8].empty()) r.agreement = to_double(f[8]);
      r.degenerate = f[9] == "1";
      r.digest = std::stoull(f[10], nullptr, 16);
      out.back().trace.records.push_back(r);
    } catch (const DataError&) {
      throw;
    } catch (const std::exception& e) {
      throw DataError("traces.csv line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_summary_csv(const std::vector<SummaryRow>& rows, std::ostream& out) {
  out << "method,dataset,acc,p,r,f1,f1_sd,seeds,aggregation\n";
  for (const auto& r : rows)
    out << r.method << ',' << r.dataset << ',' << fmt(r.acc) << ',' << fmt(r.p) << ',' << fmt(r.r) << ','
        << fmt(r.f1) << ',' << fmt(r.f1_sd) << ',' << r.seeds << ",macro\n";
}

// ---------------------------------------------------------------------------
// Charts

namespace {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

void write_svg(const std::string& path, const std::string& title, const std::string& x_label,
               const std::vector<Series>& series) {
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  const double w = 640, h = 400, left = 60, right = 180, top = 40, bottom = 50;
  double x0 = 0, x1 = 1;
  bool first = true;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      x0 = first ? x : std::min(x0, x);
      x1 = first ? x : std::max(x1, x);
      first = false;
    }
  if (x1 <= x0) x1 = x0 + 1;
  const auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * (w - left - right); };
  const auto py = [&](double y) { return top + (1.0 - y) * (h - top - bottom); };

  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << py(0) << "\" x2=\"" << w - right << "\" y2=\"" << py(0)
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << py(0) << "\" x2=\"" << left << "\" y2=\"" << py(1)
      << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = i / 4.0;
    out << "<text x=\"" << left - 6 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\" font-size=\"10\">"
        << fmt(y).substr(0, 4) << "</text>\n";
  }
  out << "<text x=\"" << (left + w - right) / 2 << "\" y=\"" << h - 12
      << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label << "</text>\n";
  out << "<text x=\"" << left - 6 << "\" y=\"" << h - bottom + 14 << "\" text-anchor=\"end\" font-size=\"10\">"
      << x0 << "</text>\n";
  out << "<text x=\"" << w - right << "\" y=\"" << h - bottom + 14 << "\" text-anchor=\"middle\" font-size=\"10\">"
      << x1 << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kColors[i % std::size(kColors)];
    const auto& s = series[i];
    if (s.points.size() == 1) {
      out << "<circle cx=\"" << px(s.points[0].first) << "\" cy=\"" << py(s.points[0].second)
          << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    } else if (!s.points.empty()) {
      out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (const auto& [x, y] : s.points) out << px(x) << ',' << py(y) << ' ';
      out << "\"/>\n";
    }
    out << "<text x=\"" << w - right + 10 << "\" y=\"" << top + 16 * i + 10 << "\" font-size=\"11\" fill=\""
        << color << "\">" << s.name << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace

void emit_plots(const ExperimentResults& results, const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "traces", ec);
  if (ec) throw DataError("cannot create " + out_dir + ": " + ec.message());
  const fs::path root(out_dir);
  const auto open = [&](const fs::path& p) {
    std::ofstream f(p);
    if (!f) throw DataError("cannot write " + p.string());
    return f;
  };

  {
    auto f = open(root / "results.csv");
    write_results_csv(results.rows, f);
  }
  {
    auto f = open(root / "summary.csv");
    write_summary_csv(summarize(results.rows), f);
  }
  {
    auto f = open(root / "traces.csv");
    write_traces_csv(results.traces, f);
  }
  for (const auto& t : results.traces) {
    auto f = open(root / "traces" /
                  (file_safe(t.method) + "_ee" + std::to_string(t.ee) + "_seed" + std::to_string(t.seed) + ".csv"));
    write_trace_csv(t.trace, f);
  }

  // Metric vs slot.
  std::vector<std::string> methods;
  for (const auto& t : results.traces)
    if (std::find(methods.begin(), methods.end(), t.method) == methods.end()) methods.push_back(t.method);
  std::vector<Series> slot_series;
  {
    auto f = open(root / "slot_f1.csv");
    f << "method,slot,mean_f1\n";
    for (const auto& m : methods) {
      Series s{m, {}};
      const auto curve = mean_slot_f1(results.traces, m);
      for (std::size_t i = 0; i < curve.size(); ++i) {
        f << m << ',' << i << ',' << fmt(curve[i]) << '\n';
        s.points.emplace_back(static_cast<double>(i), curve[i]);
      }
      slot_series.push_back(std::move(s));
    }
  }
  write_svg((root / "slot_f1.svg").string(), "Mean held-out F1 per slot", "slot", slot_series);

  // Metric vs |L|, from the methods named Base@L=k.
  std::map<std::string, std::map<std::size_t, double>> by_size;
  for (const auto& r : summarize(results.rows)) {
    const auto at = r.method.find("@L=");
    if (r.dataset == "avg" && at != std::string::npos)
      by_size[r.method.substr(0, at)][std::stoul(r.method.substr(at + 3))] = r.f1;
  }
  {
    auto f = open(root / "labeled_size.csv");
    f << "method,labeled_size,mean_f1\n";
    std::vector<Series> size_series;
    for (const auto& [m, pts] : by_size) {
      Series s{m, {}};
      for (const auto& [k, v] : pts) {
        f << m << ',' << k << ',' << fmt(v) << '\n';
        s.points.emplace_back(static_cast<double>(k), v);
      }
      size_series.push_back(std::move(s));
    }
    if (!size_series.empty()) write_svg((root / "labeled_size.svg").string(), "Mean F1 vs labeled size", "|L|", size_series);
  }
}

// ---------------------------------------------------------------------------
// Config

ConfigMap parse_config(std::string_view text) {
  ConfigMap out;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string line(text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos));
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("config line " + std::to_string(line_no) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw DataError("config line " + std::to_string(line_no) + ": empty key");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

ConfigMap load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ','))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out{};
  in >> out;
  if (!in || !in.eof()) throw DataError("config key " + key + ": bad value '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes") return true;
  if (value == "0" || value == "false" || value == "no") return false;
  throw DataError("config key " + key + ": expected a boolean, got '" + value + "'");
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::ostringstream out;
  for (std::size_t i = 0; i < xs.size(); ++i) out << (i ? "," : "") << xs[i];
  return out.str();
}

struct Binding {
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

template <typename T>
Binding number(std::string key, T& field) {
  return {key, [&field, key](const std::string& v) { field = parse_number<T>(key, v); },
          [&field] {
            // Shortest text that parses back to the same value.
            char buf[32];
            const auto end = std::to_chars(buf, buf + sizeof buf, field).ptr;
            return std::string(buf, end);
          }};
}

Binding flag(std::string key, bool& field) {
  return {key, [&field, key](const std::string& v) { field = parse_bool(key, v); },
          [&field] { return std::string(field ? "true" : "false"); }};
}

template <typename T>
Binding pair(std::string key, std::array<T, 2>& field) {
  return {key,
          [&field, key](const std::string& v) {
            const auto parts = split_list(v);
            if (parts.size() != 2) throw DataError("config key " + key + ": expected lo,hi");
            field = {parse_number<T>(key, parts[0]), parse_number<T>(key, parts[1])};
          },
          [&field] {
            std::ostringstream o;
            o << field[0] << ',' << field[1];
            return o.str();
          }};
}

std::vector<Binding> bindings(ExperimentPlan& p) {
  auto& w = p.world;
  auto& s = p.stamo;
  auto& e = p.pipeline.embed;
  auto& m = p.pipeline.shape;
  auto& t = p.pipeline.train;
  std::vector<Binding> b = {
      number("world.n_entities", w.n_entities),
      number("world.n_ees", w.n_ees),
      number("world.aliases_per_entity", w.aliases_per_entity),
      number("world.vocab_size", w.vocab_size),
      number("world.topic_dim", w.topic_dim),
      pair("world.ee_doc_freq_range", w.ee_doc_freq_range),
      pair("world.ee_ambiguity_range", w.ee_ambiguity_range),
      number("world.wiki_docs", w.wiki_docs),
      number("world.model_docs", w.model_docs),
      number("world.web_docs_per_ee", w.web_docs_per_ee),
      number("world.labeled_per_ee", w.labeled_per_ee),
      number("world.test_docs_per_ee", w.test_docs_per_ee),
      number("world.seed", w.seed),
      number("world.doc_length", w.doc_length),
      number("world.friends_per_entity", w.friends_per_entity),
      number("world.signature_words", w.signature_words),
      number("world.ambiguous_aliases", w.ambiguous_aliases),
      number("world.max_alias_sharing", w.max_alias_sharing),
      number("world.wiki_signature", w.wiki_signature),
      number("world.wiki_topic", w.wiki_topic),
      number("world.web_signature", w.web_signature),
      number("world.web_topic", w.web_topic),
      number("world.primary_topic_mass", w.primary_topic_mass),
      number("world.max_retries", w.max_retries),
      number("world.ee_twin_overlap", w.ee_twin_overlap),
      number("stamo.slots", s.slots),
      number("stamo.eta_prior", s.eta[0]),
      number("stamo.eta_relatedness", s.eta[1]),
      number("stamo.eta_embedding", s.eta[2]),
      number("stamo.warmup", s.warmup),
      number("stamo.beta1", s.beta1),
      number("stamo.beta2", s.beta2),
      number("stamo.eps", s.eps),
      number("stamo.intra_epochs", s.intra_epochs),
      number("stamo.intra_lr", s.intra_lr),
      number("stamo.intra_batch", s.intra_batch),
      number("stamo.margin", s.margin),
      {"stamo.variant", [&s](const std::string& v) {
         try {
           s.variant = parse_variant(v);
         } catch (const std::invalid_argument& ex) {
           throw DataError(ex.what());
         }
       },
       [&s] { return std::string(to_string(s.variant)); }},
      number("embed.margin", e.margin),
      number("embed.negatives", e.negatives),
      number("embed.epochs", e.epochs),
      number("embed.lr", e.learning_rate),
      number("embed.window", e.window),
      number("embed.word_epochs", e.word_epochs),
      number("embed.init_scale", e.init_scale),
      {"model.kind", [&p](const std::string& v) { p.model = parse_model_kind(v); },
       [&p] { return std::string(to_string(p.model)); }},
      number("model.dim", m.dim),
      number("model.window", m.window),
      number("model.attention_keep", m.attention_keep),
      number("model.hidden", m.hidden),
      number("model.dropout", m.dropout),
      number("train.margin", t.margin),
      number("train.epochs", t.epochs),
      number("train.lr", t.learning_rate),
      number("train.batch", t.batch_size),
      {"plan.methods", [&p](const std::string& v) { p.methods = split_list(v); }, [&p] { return join(p.methods); }},
      {"plan.seeds",
       [&p](const std::string& v) {
         p.seeds.clear();
         for (const auto& x : split_list(v)) p.seeds.push_back(parse_number<std::uint64_t>("plan.seeds", x));
       },
       [&p] { return join(p.seeds); }},
      {"plan.labeled_sizes",
       [&p](const std::string& v) {
         p.labeled_sizes.clear();
         for (const auto& x : split_list(v))
           p.labeled_sizes.push_back(parse_number<std::size_t>("plan.labeled_sizes", x));
       },
       [&p] { return join(p.labeled_sizes); }},
      {"plan.feature_ablations",
       [&p](const std::string& v) {
         p.feature_ablations.clear();
         for (const auto& x : split_list(v)) {
           if (x == "prior")
             p.feature_ablations.push_back(FeatureGroup::Prior);
           else if (x == "relatedness")
             p.feature_ablations.push_back(FeatureGroup::Relatedness);
           else if (x == "embedding")
             p.feature_ablations.push_back(FeatureGroup::Embedding);
           else
             throw DataError("unknown feature group: " + x);
         }
       },
       [&p] {
         std::vector<std::string> names;
         for (FeatureGroup g : p.feature_ablations) names.emplace_back(to_string(g));
         return join(names);
       }},
      {"plan.inter_ablations", [&p](const std::string& v) { p.inter_ablations = split_list(v); },
       [&p] { return join(p.inter_ablations); }},
      number("plan.max_ees", p.max_ees),
      flag("plan.record_wall_time", p.record_wall_time),
  };
  return b;
}

}  // namespace

void apply_config(const ConfigMap& cfg, ExperimentPlan& plan) {
  auto b = bindings(plan);
  for (const auto& [key, value] : cfg) {
    auto it = std::find_if(b.begin(), b.end(), [&](const Binding& x) { return x.key == key; });
    if (it == b.end()) throw DataError("unknown config key: " + key);
    it->set(value);
  }
  plan.pipeline.embed.dim = plan.pipeline.shape.dim;
}

std::string describe(const ExperimentPlan& plan) {
  ExperimentPlan copy = plan;
  std::string out;
  for (const auto& b : bindings(copy)) out += b.key + "=" + b.get() + "\n";
  return out;
}

}  // namespace stamo
