#include <gtest/gtest.h>

#include <filesystem>

#include "fmc/ensemble.hpp"
#include "fmc/splitter.hpp"
#include "table_fixture.hpp"

using namespace fmc;
using namespace fmc::testing;

namespace {

ModelRegistry registry_for(const FeatureTable& t, std::initializer_list<LearnerKind> kinds) {
  ModelRegistry reg;
  for (auto kind : kinds) {
    for (auto key : {SegmentKey::Global, SegmentKey::Sctg, SegmentKey::Naics}) {
      reg.families.push_back(fit_segmented(t, key, small_spec(kind, 4), {.seed = 1}));
    }
  }
  return reg;
}

FoldAssignment folds_for(std::size_t n, std::uint64_t seed) {
  const auto recs = fixture_records(n, seed);
  return stratified_kfold(recs, 5, 3);
}

}  // namespace

TEST(Vote, AverageExample) {
  ProbVector a, b;
  a << 0.6, 0.4, 0, 0, 0;
  b << 0.2, 0.8, 0, 0, 0;
  const std::vector<ProbVector> pool{a, b};
  const ProbVector v = vote_average(pool);
  EXPECT_NEAR(v(0), 0.4, 1e-15);
  EXPECT_NEAR(v(1), 0.6, 1e-15);
  EXPECT_EQ(argmax(v), mode_index(ModeLabel::PrivateTruck));
  const std::vector<ProbVector> single{a};
  EXPECT_EQ(vote_average(single), a);
  EXPECT_THROW(vote_average(std::vector<ProbVector>{}), NoModelsAvailable);
}

TEST(Vote, PermutationInvariant) {
  Rng rng(3);
  std::vector<ProbVector> pool(7);
  for (auto& p : pool) {
    for (int c = 0; c < kNumModes; ++c) p(c) = rng.uniform();
    p /= p.sum();
  }
  const ProbVector before = vote_average(pool);
  rng.shuffle(pool);
  EXPECT_LT((vote_average(pool) - before).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_NEAR(before.sum(), 1.0, 1e-12);
}

TEST(Vote, PoolSizes) {
  const auto t = fixture_table(400, 1);
  const auto reg = registry_for(t, {LearnerKind::RF, LearnerKind::BAG});
  const auto rf = collect_models_for_record(t, 0, {LearnerKind::RF}, reg);
  ASSERT_EQ(rf.size(), 3u);
  EXPECT_EQ(rf[0].source, SegmentKey::Sctg);
  EXPECT_EQ(rf[1].source, SegmentKey::Naics);
  EXPECT_EQ(rf[2].source, SegmentKey::Global);
  EXPECT_EQ(rf[0].model, &reg.families[1].local.at(t.sctg[0]));
  EXPECT_EQ(collect_models_for_record(t, 0, {LearnerKind::RF, LearnerKind::BAG}, reg).size(), 6u);
  EXPECT_THROW(collect_models_for_record(t, 0, {LearnerKind::KNN}, reg), NoModelsAvailable);
}

TEST(Vote, UnseenCategoryContributesFallback) {
  auto t = fixture_table(300, 2);
  const auto reg = registry_for(t, {LearnerKind::RF});
  t.sctg[5] = "99";
  const auto pool = collect_models_for_record(t, 5, {LearnerKind::RF}, reg);
  EXPECT_EQ(pool[0].model, &reg.families[1].fallback);
}

TEST(Vote, RecordAndBatchAgree) {
  const auto t = fixture_table(300, 3);
  const auto reg = registry_for(t, {LearnerKind::RF, LearnerKind::Extra});
  const std::set<LearnerKind> types{LearnerKind::RF, LearnerKind::Extra};
  const auto batch = vote_predict(t, types, reg);
  for (std::size_t i = 0; i < t.rows(); i += 23) {
    const ProbVector row = batch.row(static_cast<Eigen::Index>(i));
    EXPECT_LT((vote_record(t, i, types, reg) - row).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Stack, LayoutWidth) {
  const std::vector<std::string> tags{"RF_global", "RF_sctg", "RF_naics", "BAG_global", "BAG_sctg", "BAG_naics"};
  const auto layout = meta_layout(tags, {"sw", "sv", "v2w", "gc_dist"});
  EXPECT_EQ(layout.size(), 34u);
  EXPECT_EQ(layout[0], "RF_p1_global");
  EXPECT_EQ(layout[9], "RF_p5_sctg");
  EXPECT_EQ(layout[30], "sw");
  EXPECT_EQ(default_roster().size(), 9u);
  EXPECT_EQ(meta_layout({"BAG_sctg"}, default_passthrough()).size(), 14u);
}

TEST(Stack, ParseFamily) {
  const auto f = parse_family("Extra_naics", small_spec(LearnerKind::RF, 3));
  EXPECT_EQ(f.learner.kind, LearnerKind::Extra);
  EXPECT_EQ(f.learner.forest.n_trees, 3);
  EXPECT_EQ(f.key, SegmentKey::Naics);
  EXPECT_EQ(f.tag(), "Extra_naics");
  EXPECT_THROW(parse_family("RF", {}), ConfigError);
  EXPECT_THROW(parse_family("RF_zip", {}), ConfigError);
}

TEST(Stack, OofProtocolAndNoLeakage) {
  const std::size_t n = 400;
  const auto t = fixture_table(n, 4);
  const auto folds = folds_for(n, 4);
  const Roster roster{{small_spec(LearnerKind::DT), SegmentKey::Global}, {small_spec(LearnerKind::RF, 4), SegmentKey::Sctg}};
  const StackOptions opts{.seed = 8};
  const auto meta = build_oof_meta_features(t, roster, {"sw", "gc_dist"}, folds, opts);
  EXPECT_EQ(meta.X.cols(), 12);
  EXPECT_EQ(meta.leakage_violations(), 0u);
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_EQ(meta.producer_folds[0][i], 0x1FULL & ~(1ULL << folds.folds[i]));
  }
  // Row of fold 0 gets probabilities from the global DT fit on the other folds.
  const auto held = folds.members(0);
  const auto dt = fit_bound(t, folds.non_members(0), select_columns(t.schema, {}, SegmentKey::Global),
                            roster[0].learner, derive_seed(derive_seed(8, "oof/DT_global", 0), "segment/fallback"));
  const auto P = dt.predict(t, held);
  for (std::size_t i = 0; i < held.size(); ++i) {
    EXPECT_EQ(ProbVector(meta.X.block<1, 5>(static_cast<Eigen::Index>(held[i]), 0)),
              ProbVector(P.row(static_cast<Eigen::Index>(i))));
  }
  EXPECT_EQ(meta.X.col(10), t.X.col(t.schema.index_of("sw")));
}

TEST(Stack, InstrumentationCatchesLeak) {
  MetaFeatures m;
  m.row_fold = {0, 1};
  m.producer_folds = {{0b10, 0b11}};
  EXPECT_EQ(m.leakage_violations(), 1u);
  m.producer_folds = {{0b10, 0}};
  EXPECT_EQ(m.leakage_violations(), 1u);
}

TEST(Stack, PerfectOneHotRosterFitsExactly) {
  auto t = fixture_table(300, 5);
  for (std::size_t i = 0; i < t.rows(); ++i) t.y[i] = t.sctg[i] == "01" ? 0 : t.sctg[i] == "07" ? 2 : 4;
  const auto folds = folds_for(300, 5);
  StackOptions opts{.seed = 2};
  opts.meta.n_rounds = 20;
  MetaFeatures oof;
  const auto s = fit_stacker(t, {{small_spec(LearnerKind::DT), SegmentKey::Global}}, {}, folds, opts, &oof);
  EXPECT_EQ(oof.leakage_violations(), 0u);
  for (Eigen::Index i = 0; i < oof.X.rows(); ++i) EXPECT_EQ(oof.X.row(i).maxCoeff(), 1.0);
  const auto P = s.predict(t);
  int correct = 0;
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    correct += argmax(P.row(i)) == t.y[static_cast<std::size_t>(i)];
    EXPECT_NEAR(P.row(i).sum(), 1.0, 1e-12);
  }
  EXPECT_EQ(correct, 300);
}

TEST(Stack, DeterministicAndLayoutGuard) {
  const auto t = fixture_table(300, 6);
  const auto folds = folds_for(300, 6);
  StackOptions opts{.seed = 4};
  opts.meta.n_rounds = 5;
  const Roster roster{{small_spec(LearnerKind::RF, 3), SegmentKey::Global}, {small_spec(LearnerKind::BAG, 3), SegmentKey::Naics}};
  auto a = fit_stacker(t, roster, default_passthrough(), folds, opts);
  const auto b = fit_stacker(t, roster, default_passthrough(), folds, opts);
  EXPECT_EQ(a.predict(t), b.predict(t));
  EXPECT_EQ(a.meta_features(t).cols(), 19);
  EXPECT_EQ(predict_stacked(a, t, 7), ProbVector(a.predict(t).row(7)));

  const auto dir = std::filesystem::temp_directory_path() / "fmc_stack_rt";
  std::filesystem::remove_all(dir);
  const auto back = StackedModel::load(a.save(dir));
  EXPECT_EQ(back.predict(t), a.predict(t));
  EXPECT_EQ(back.layout, a.layout);
  std::filesystem::remove_all(dir);

  std::swap(a.level1[0], a.level1[1]);
  EXPECT_THROW(a.predict(t), SchemaMismatch);
}

TEST(Stack, DuplicateRosterRejected) {
  const auto t = fixture_table(100, 7);
  const Roster roster{{small_spec(LearnerKind::DT), SegmentKey::Global}, {small_spec(LearnerKind::DT), SegmentKey::Global}};
  EXPECT_THROW(build_oof_meta_features(t, roster, {}, folds_for(100, 7), {}), ConfigError);
}
