#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "stamo/stamo.hpp"

namespace stamo {
namespace {

namespace fs = std::filesystem;

std::size_t levenshtein_oracle(const std::string& a, const std::string& b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  std::function<std::size_t(std::size_t, std::size_t)> d = [&](std::size_t i, std::size_t j) -> std::size_t {
    if (i == 0) return j;
    if (j == 0) return i;
    auto it = memo.find({i, j});
    if (it != memo.end()) return it->second;
    const std::size_t r = std::min({d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] != b[j - 1])});
    memo[{i, j}] = r;
    return r;
  };
  return d(a.size(), b.size());
}

TEST(Surface, LevenshteinMatchesRecursiveDefinition) {
  Rng rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    std::string a, b;
    for (std::size_t i = test::pick(rng, 9); i > 0; --i) a += static_cast<char>('a' + test::pick(rng, 3));
    for (std::size_t i = test::pick(rng, 9); i > 0; --i) b += static_cast<char>('a' + test::pick(rng, 3));
    EXPECT_EQ(levenshtein(a, b), levenshtein_oracle(a, b)) << a << " / " << b;
  }
}

TEST(Surface, FeaturesOnKnownPairs) {
  const auto f = surface_features("new york city", "new york");
  EXPECT_DOUBLE_EQ(f[0], 1.0 - 5.0 / 13.0);
  EXPECT_EQ(f[1], 1.0);
  EXPECT_EQ(f[2], 1.0);
  const auto g = surface_features("paris", "texas");
  EXPECT_EQ(g[1], 0.0);
  EXPECT_EQ(g[2], 0.0);
  EXPECT_EQ(surface_features("abc", "abc")[0], 1.0);
  const auto mid = surface_features("xabcx", "abc");
  EXPECT_EQ(mid[1], 1.0);
  EXPECT_EQ(mid[2], 0.0);
}

TEST(Scores, CosineHandValues) {
  const std::vector<double> a{1, 0}, b{1, 1}, z{0, 0};
  EXPECT_NEAR(cosine(a, b), 1 / std::sqrt(2.0), 1e-15);
  EXPECT_EQ(cosine(a, z), 0.0);
}

// Property: weights are non-negative, sum to one, and cover min(H', |c|) positions.
TEST(Attention, SoftmaxOverTopPositions) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> support(test::pick(rng, 30));
    for (double& u : support) u = test::uniform(rng, -3, 3);
    const std::size_t keep = 1 + test::pick(rng, 25);
    const auto alpha = deeped_attention(support, keep);
    ASSERT_EQ(alpha.size(), support.size());
    std::size_t nonzero = 0;
    double sum = 0.0;
    for (double a : alpha) {
      EXPECT_GE(a, 0.0);
      nonzero += a > 0.0;
      sum += a;
    }
    EXPECT_EQ(nonzero, std::min(keep, support.size()));
    if (!support.empty()) EXPECT_NEAR(sum, 1.0, 1e-12);
    // Every kept position outranks every dropped one.
    double min_kept = INFINITY, max_dropped = -INFINITY;
    for (std::size_t p = 0; p < support.size(); ++p)
      (alpha[p] > 0 ? min_kept : max_dropped) =
          alpha[p] > 0 ? std::min(min_kept, support[p]) : std::max(max_dropped, support[p]);
    EXPECT_GE(min_kept, max_dropped);
    // Ratios follow exp(u_i - u_j).
    for (std::size_t p = 0; p + 1 < support.size(); ++p)
      if (alpha[p] > 0 && alpha[p + 1] > 0)
        EXPECT_NEAR(std::log(alpha[p] / alpha[p + 1]), support[p] - support[p + 1], 1e-9);
  }
}

TEST(Attention, TiesKeepEarlierPositions) {
  const std::vector<double> support{1.0, 2.0, 1.0, 1.0};
  const auto alpha = deeped_attention(support, 2);
  EXPECT_GT(alpha[0], 0.0);
  EXPECT_GT(alpha[1], 0.0);
  EXPECT_EQ(alpha[2], 0.0);
  EXPECT_EQ(alpha[3], 0.0);
}

TEST(ScoreNet, ForwardMatchesHandComputation) {
  ScoreNet net;
  net.in = 2;
  net.hidden = 2;
  net.w1 = {1.0, -1.0, 0.5, 0.5};
  net.b1 = {0.0, -10.0};
  net.w2 = {2.0, 3.0};
  net.b2 = 0.25;
  // h0 = relu(3 - 1) = 2, h1 = relu(1.5 + 0.5 - 10) = 0.
  EXPECT_DOUBLE_EQ(net.forward(std::vector<double>{3.0, 1.0}), 0.25 + 4.0);
}

class ModelsOnWorld : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const auto& p = test::small_pipeline_instance();
    task_ = &p.world.ees[0];
    dict_ = new AliasDictionary(build_alias_dictionary(task_->kb.entities()));
    ctx_ = new StamoContext(task_->kb, *dict_, p.features.store, p.model);
    const auto test = prepare_test_set(task_->test_web, *ctx_);
    pool_ = new std::vector<MentionInstance>(test.instances);
  }
  static void TearDownTestSuite() {
    delete pool_;
    delete ctx_;
    delete dict_;
  }

  static const EeTask* task_;
  static AliasDictionary* dict_;
  static StamoContext* ctx_;
  static std::vector<MentionInstance>* pool_;
};

const EeTask* ModelsOnWorld::task_ = nullptr;
AliasDictionary* ModelsOnWorld::dict_ = nullptr;
StamoContext* ModelsOnWorld::ctx_ = nullptr;
std::vector<MentionInstance>* ModelsOnWorld::pool_ = nullptr;

TEST_F(ModelsOnWorld, InstancesCarryTheEmergingEntityAsCandidate) {
  ASSERT_FALSE(pool_->empty());
  for (const auto& inst : *pool_) {
    EXPECT_TRUE(std::binary_search(inst.candidates.begin(), inst.candidates.end(), ctx_->layout.ee));
    EXPECT_EQ(inst.surface_scores.size(), inst.candidates.size());
    EXPECT_LE(inst.context.size(), ctx_->model.shape.window);
  }
}

using test::loss_oracle;

TEST_F(ModelsOnWorld, MarginLossMatchesDoubleLoopExactly) {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const auto kind = trial % 2 ? ModelKind::Yamada : ModelKind::DeepEd;
    const auto model = LinkingModel::create(kind, ctx_->model.shape, FeatureMask{}, rng());
    const auto theta = test::random_theta(rng, ctx_->layout);
    const FeatureView view(ctx_->store, theta);
    std::vector<MentionInstance> batch;
    for (std::size_t i = 1 + test::pick(rng, 6); i > 0; --i) {
      batch.push_back((*pool_)[test::pick(rng, pool_->size())]);
      if (test::pick(rng, 5) == 0) batch.back().gold = EntityId{999999};
    }
    const double margin = test::uniform(rng, 0.01, 1.0);
    std::size_t skipped = 0;
    const double expect = loss_oracle(model, view, batch, margin, skipped);
    const auto got = margin_loss(model, view, batch, margin);
    EXPECT_EQ(got.loss, expect);
    EXPECT_EQ(got.skipped, skipped);
  }
}

TEST_F(ModelsOnWorld, DeepEdScoresDecomposeIntoComponents) {
  Rng rng(9);
  const auto model = LinkingModel::create(ModelKind::DeepEd, ctx_->model.shape, FeatureMask{}, 5);
  const auto theta = test::random_theta(rng, ctx_->layout);
  const FeatureView view(ctx_->store, theta);
  for (std::size_t i = 0; i < std::min<std::size_t>(pool_->size(), 20); ++i) {
    const auto& inst = (*pool_)[i];
    const auto psi = candidate_scores(model, view, inst);
    const auto support = deeped_support_scores(inst.context, inst.candidates, view, model);
    const auto alpha = deeped_attention(support, model.shape.attention_keep);
    for (std::size_t c = 0; c < inst.candidates.size(); ++c) {
      const EntityId e = inst.candidates[c];
      EXPECT_EQ(psi[c][0], view.prior(e, inst.mention));
      EXPECT_NEAR(psi[c][1], deeped_context_score(e, inst.context, alpha, view, model), 1e-12);
      const auto [emb, rel] = deeped_coherence_scores(e, inst.entity_context, view, model);
      EXPECT_NEAR(psi[c][2], emb, 1e-12);
      EXPECT_NEAR(psi[c][3], rel, 1e-12);
    }
  }
}

TEST_F(ModelsOnWorld, YamadaScoresDecomposeIntoComponents) {
  Rng rng(10);
  const auto model = LinkingModel::create(ModelKind::Yamada, ctx_->model.shape, FeatureMask{}, 6);
  const auto theta = test::random_theta(rng, ctx_->layout);
  const FeatureView view(ctx_->store, theta);
  for (std::size_t i = 0; i < std::min<std::size_t>(pool_->size(), 20); ++i) {
    const auto& inst = (*pool_)[i];
    const auto psi = candidate_scores(model, view, inst);
    for (std::size_t c = 0; c < inst.candidates.size(); ++c) {
      const EntityId e = inst.candidates[c];
      EXPECT_EQ(psi[c][0], view.prior(e, inst.mention));
      EXPECT_NEAR(psi[c][1], yamada_context_similarity(view.embedding(e), inst.context, view.words()), 1e-12);
      EXPECT_NEAR(psi[c][2], yamada_topical_coherence(e, inst.entity_context, view), 1e-12);
      const auto s = surface_features(task_->kb.at(e).canonical_name, inst.surface);
      EXPECT_EQ(psi[c][3], s[0]);
      EXPECT_EQ(psi[c][4], s[1]);
      EXPECT_EQ(psi[c][5], s[2]);
    }
  }
}

TEST_F(ModelsOnWorld, MaskedGroupsContributeNothing) {
  Rng rng(11);
  const auto theta = test::random_theta(rng, ctx_->layout);
  const FeatureView view(ctx_->store, theta);
  for (auto kind : {ModelKind::DeepEd, ModelKind::Yamada}) {
    const auto model = LinkingModel::create(kind, ctx_->model.shape, FeatureMask{false, false, false}, 3);
    for (std::size_t i = 0; i < std::min<std::size_t>(pool_->size(), 10); ++i) {
      const auto psi = candidate_scores(model, view, (*pool_)[i]);
      for (const auto& row : psi)
        for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(row[k], 0.0);
      const auto grad = grad_wrt_ee_features(model, view, std::span(&(*pool_)[i], 1), 0.1).grad;
      for (double g : grad) EXPECT_EQ(g, 0.0);
    }
  }
}

TEST_F(ModelsOnWorld, ScoringIsDeterministic) {
  Rng rng(12);
  const auto theta = test::random_theta(rng, ctx_->layout);
  const FeatureView view(ctx_->store, theta);
  for (std::size_t i = 0; i < std::min<std::size_t>(pool_->size(), 10); ++i)
    EXPECT_EQ(score_candidates(ctx_->model, view, (*pool_)[i]), score_candidates(ctx_->model, view, (*pool_)[i]));
}

TEST_F(ModelsOnWorld, PredictBreaksTiesTowardLowerId) {
  // With every group masked and zeroed network weights all scores tie.
  auto model = LinkingModel::create(ModelKind::DeepEd, ctx_->model.shape, FeatureMask{false, false, false}, 1);
  std::fill(model.net.w2.begin(), model.net.w2.end(), 0.0);
  const FeatureView view(ctx_->store);
  for (std::size_t i = 0; i < std::min<std::size_t>(pool_->size(), 10); ++i) {
    const auto& inst = (*pool_)[i];
    EXPECT_EQ(predict(model, view, inst), *std::min_element(inst.candidates.begin(), inst.candidates.end()));
  }
}

class GradientCheck : public ModelsOnWorld, public ::testing::WithParamInterface<std::tuple<ModelKind, FeatureGroup>> {};

TEST_P(GradientCheck, EeGradientMatchesCentralDifferences) {
  const auto [kind, group] = GetParam();
  const auto r = test::sweep_group(kind, ctx_->model.shape, ctx_->store, ctx_->layout, *pool_, group, 15,
                                   static_cast<std::uint64_t>(group) * 7 + (kind == ModelKind::Yamada));
  EXPECT_EQ(r.points, 15u) << "too many kinks: " << r.kinks_skipped;
  EXPECT_LT(r.worst, 1e-4);
}

INSTANTIATE_TEST_SUITE_P(AllGroups, GradientCheck,
                         ::testing::Combine(::testing::Values(ModelKind::DeepEd, ModelKind::Yamada),
                                            ::testing::Values(FeatureGroup::Prior, FeatureGroup::Relatedness,
                                                              FeatureGroup::Embedding)),
                         [](const auto& info) {
                           return std::string(to_string(std::get<0>(info.param))) + "_" +
                                  to_string(std::get<1>(info.param));
                         });

TEST_F(ModelsOnWorld, ModelGradientMatchesCentralDifferences) {
  Rng rng(13);
  std::size_t checked = 0;
  for (int trial = 0; trial < 40 && checked < 6; ++trial) {
    const auto kind = trial % 2 ? ModelKind::Yamada : ModelKind::DeepEd;
    auto model = LinkingModel::create(kind, ctx_->model.shape, FeatureMask{}, rng());
    const auto theta = test::random_theta(rng, ctx_->layout);
    const FeatureView view(ctx_->store, theta);
    std::vector<MentionInstance> batch{(*pool_)[test::pick(rng, pool_->size())]};
    const auto analytic = grad_wrt_model(model, view, batch, 0.1);
    auto flat = flatten_params(model);
    ASSERT_EQ(analytic.size(), flat.size());
    const double h = 1e-5;
    std::vector<double> fd(flat.size()), gap(flat.size());
    const double f0 = margin_loss(model, view, batch, 0.1).loss;
    for (std::size_t i = 0; i < flat.size(); ++i) {
      const double x = flat[i];
      flat[i] = x + h;
      unflatten_params(model, flat);
      const double up = margin_loss(model, view, batch, 0.1).loss;
      flat[i] = x - h;
      unflatten_params(model, flat);
      const double down = margin_loss(model, view, batch, 0.1).loss;
      flat[i] = x;
      fd[i] = (up - down) / (2 * h);
      gap[i] = ((up - f0) - (f0 - down)) / h;
    }
    unflatten_params(model, flat);
    if (test::norm2(gap) / 2 > 1e-5 * std::max(test::norm2(fd), 1e-6)) continue;
    ++checked;
    EXPECT_LT(test::relative_error(analytic, fd), 1e-4);
  }
  EXPECT_GE(checked, 3u);
}

TEST_F(ModelsOnWorld, TrainingLowersLossAndLeavesFeaturesAlone) {
  const auto& p = test::small_pipeline_instance();
  const FeatureView view(p.features.store);
  InstanceOptions opt;
  opt.mode = LinkMode::Train;
  opt.candidates_only = false;
  opt.window = ctx_->model.shape.window;
  auto instances = build_instances(p.world.model_corpus, p.world.nee_kb, p.features.dict, view, opt);
  instances.resize(std::min<std::size_t>(instances.size(), 300));
  for (auto kind : {ModelKind::DeepEd, ModelKind::Yamada}) {
    auto model = LinkingModel::create(kind, ctx_->model.shape, FeatureMask{}, 21);
    const auto before = checksum(p.features.store);
    TrainConfig cfg;
    cfg.epochs = 4;
    const auto report = train_model(model, instances, view, cfg);
    ASSERT_EQ(report.loss_trace.size(), cfg.epochs + 1);
    EXPECT_LT(report.loss_trace.back(), report.loss_trace.front());
    EXPECT_EQ(checksum(p.features.store), before);

    auto again = LinkingModel::create(kind, ctx_->model.shape, FeatureMask{}, 21);
    train_model(again, instances, view, cfg);
    EXPECT_EQ(checksum(again), checksum(model));
  }
}

TEST(Checkpoint, RoundTripStoresFloat32) {
  ModelShape shape;
  shape.dim = 8;
  shape.hidden = 5;
  for (auto kind : {ModelKind::DeepEd, ModelKind::Yamada}) {
    const auto model = LinkingModel::create(kind, shape, FeatureMask{true, false, true}, 4);
    const auto path = fs::temp_directory_path() / "stamo_model.bin";
    save_model(model, path.string());
    const auto back = load_model(path.string());
    EXPECT_EQ(back.kind, model.kind);
    EXPECT_EQ(back.shape.dim, model.shape.dim);
    EXPECT_EQ(back.shape.hidden, model.shape.hidden);
    EXPECT_FLOAT_EQ(static_cast<float>(back.shape.dropout), static_cast<float>(model.shape.dropout));
    EXPECT_EQ(back.mask, model.mask);
    const auto a = flatten_params(model), b = flatten_params(back);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(b[i], static_cast<double>(static_cast<float>(a[i])));
    std::ofstream(path, std::ios::binary) << "junk";
    EXPECT_THROW(load_model(path.string()), DataError);
    fs::remove(path);
  }
}

}  // namespace
}  // namespace stamo
