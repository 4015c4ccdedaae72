// Copyright 2026 The Memaudit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#include "memaudit/shadowlab.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iterator>
#include <string>
#include <vector>

#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace memaudit {
namespace {

using ::testing::HasSubstr;

ShadowStats StatsFrom(std::vector<double> in, std::vector<double> out) {
  ShadowStats s;
  s.target_id = 7;
  s.label = 1;
  s.m = static_cast<int>(in.size());
  s.confs_in = std::move(in);
  s.confs_out = std::move(out);
  RefitMoments(s);
  return s;
}

Dataset SmallMixture(int n, int singletons, uint64_t seed) {
  MixtureOptions o;
  o.dim = 8;
  o.num_classes = 4;
  o.num_examples = n;
  o.alpha = 0.9;
  o.num_singletons = singletons;
  o.seed = seed;
  return *Generate(MakeMixtureSpec(o));
}

HarnessConfig FastHarness(int m) {
  HarnessConfig h;
  h.m = m;
  h.learner.arch = Arch::kLogisticRegression;
  h.learner.epochs = 10;
  h.master_seed = 42;
  return h;
}

TEST(MemorizationTest, CountArithmetic) {
  ShadowStats s = StatsFrom(std::vector<double>(64, 0), std::vector<double>(64, 0));
  s.correct_in = 48;
  s.correct_out = 16;
  ASSERT_OK_AND_ASSIGN(double mem, EstimateMemorization(s));
  EXPECT_DOUBLE_EQ(mem, 0.5);
  s.correct_in = 10;
  s.correct_out = 20;
  ASSERT_OK_AND_ASSIGN(mem, EstimateMemorization(s));
  EXPECT_DOUBLE_EQ(mem, -10.0 / 64);
  s.m = 0;
  EXPECT_FALSE(EstimateMemorization(s).ok());
}

TEST(PrivacyScoreTest, Examples) {
  ShadowStats s;
  s.mu_in = 3;
  s.mu_out = 1;
  s.sigma_in = 0.5;
  s.sigma_out = 0.5;
  EXPECT_DOUBLE_EQ(PrivacyScore(s), 2.0);
  std::swap(s.mu_in, s.mu_out);
  EXPECT_DOUBLE_EQ(PrivacyScore(s), 2.0);
  s.sigma_in = s.sigma_out = kSigmaFloor;
  EXPECT_DOUBLE_EQ(PrivacyScore(s), 2.0 / kPrivacyDenominatorFloor);
  s.mu_in = 100;
  EXPECT_DOUBLE_EQ(PrivacyScore(s), kPrivacyScoreCap);
}

TEST(PhiTest, LogitAndClamp) {
  EXPECT_DOUBLE_EQ(ApplyPhi(PhiKind::kLogitScale, 0.5), 0.0);
  EXPECT_NEAR(ApplyPhi(PhiKind::kLogitScale, 0.9), std::log(9.0), 1e-12);
  EXPECT_TRUE(std::isfinite(ApplyPhi(PhiKind::kLogitScale, 1.0)));
  EXPECT_TRUE(std::isfinite(ApplyPhi(PhiKind::kLogitScale, 0.0)));
  EXPECT_DOUBLE_EQ(ApplyPhi(PhiKind::kRawConfidence, 0.3), 0.3);
  for (double p = 0.01; p < 1; p += 0.01) {
    EXPECT_LT(ApplyPhi(PhiKind::kLogitScale, p), ApplyPhi(PhiKind::kLogitScale, p + 0.01));
  }
}

TEST(FitInOutGaussiansTest, UnbiasedMomentsAndFloor) {
  ASSERT_OK_AND_ASSIGN(auto fit, FitInOutGaussians(StatsFrom({0, 2}, {5, 5})));
  EXPECT_DOUBLE_EQ(fit.first.mean[0], 1.0);
  EXPECT_DOUBLE_EQ(fit.first.cov(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(fit.second.mean[0], 5.0);
  EXPECT_DOUBLE_EQ(fit.second.cov(0, 0), kSigmaFloor * kSigmaFloor);
  EXPECT_FALSE(FitInOutGaussians(StatsFrom({1}, {2})).ok());
}

TEST(MomentsTest, RefitAndGlobalPooling) {
  ShadowStats s = StatsFrom({0, 2, 4}, {1, 1, 1});
  EXPECT_DOUBLE_EQ(s.mu_in, 2.0);
  EXPECT_DOUBLE_EQ(s.sigma_in, 2.0);
  EXPECT_DOUBLE_EQ(s.sigma_out, kSigmaFloor);

  ShadowStatsMap map;
  map[1] = StatsFrom({0, 2}, {0, 0});
  map[2] = StatsFrom({5, 5}, {1, 3});
  map[2].target_id = 2;
  FinalizeMoments(map, VarianceMode::kGlobal);
  // Pooled within-target variance: IN (2 + 0) / 2, OUT (0 + 2) / 2.
  for (const auto& [id, st] : map) {
    EXPECT_DOUBLE_EQ(st.sigma_in, 1.0);
    EXPECT_DOUBLE_EQ(st.sigma_out, 1.0);
  }
  EXPECT_DOUBLE_EQ(map[2].mu_out, 2.0);

  // Global pooling is only used for small m.
  ShadowStatsMap large;
  large[1] = StatsFrom(std::vector<double>(8, 1), {0, 0, 0, 0, 0, 0, 0, 8});
  large[2] = StatsFrom(std::vector<double>(8, 1), std::vector<double>(8, 1));
  FinalizeMoments(large, VarianceMode::kGlobal);
  EXPECT_DOUBLE_EQ(large[2].sigma_out, kSigmaFloor);
}

TEST(ShadowStatsTest, Validation) {
  ShadowStats s = StatsFrom({0, 1}, {0, 1});
  EXPECT_OK(s.Validate());
  s.confs_out.pop_back();
  EXPECT_FALSE(s.Validate().ok());
  s = StatsFrom({0, 1}, {0, 1});
  s.correct_in = 3;
  EXPECT_FALSE(s.Validate().ok());
  s = StatsFrom({0, NAN}, {0, 1});
  EXPECT_FALSE(s.Validate().ok());
}

TEST(HarnessTest, PairsDifferOnlyInTheTarget) {
  Dataset ds = SmallMixture(120, 0, 3);
  HarnessConfig h = FastHarness(4);
  for (int pair = 0; pair < 4; ++pair) {
    ASSERT_OK_AND_ASSIGN(ShadowPair p, TrainShadowPair(ds, ds.examples[5], pair, h));
    std::vector<int64_t> diff;
    std::set_symmetric_difference(p.in.train_ids.begin(), p.in.train_ids.end(),
                                  p.out.train_ids.begin(), p.out.train_ids.end(),
                                  std::back_inserter(diff));
    EXPECT_EQ(diff, std::vector<int64_t>{ds.examples[5].id});
    EXPECT_TRUE(std::binary_search(p.in.train_ids.begin(), p.in.train_ids.end(),
                                   ds.examples[5].id));
    EXPECT_EQ(p.in.config.seed, p.out.config.seed);
  }
}

TEST(HarnessTest, NegligibleTrainingGivesEqualConfidences) {
  Dataset ds = SmallMixture(80, 0, 4);
  HarnessConfig h = FastHarness(1);
  h.learner.arch = Arch::kMlp;
  h.learner.hidden_units = 8;
  h.learner.epochs = 1;
  h.learner.learning_rate = 1e-12;
  ASSERT_OK_AND_ASSIGN(ShadowStatsMap stats, RunHarness(ds, {0, 1, 2}, h));
  for (const auto& [id, s] : stats) {
    EXPECT_NEAR(s.confs_in[0], s.confs_out[0], 1e-9);
    EXPECT_EQ(s.correct_in, s.correct_out);
  }
}

TEST(HarnessTest, DeterministicAcrossWorkerCounts) {
  Dataset ds = SmallMixture(100, 0, 5);
  HarnessConfig h = FastHarness(3);
  ASSERT_OK_AND_ASSIGN(ShadowStatsMap serial, RunHarness(ds, {0, 3, 9, 40}, h));
  h.workers = 3;
  ASSERT_OK_AND_ASSIGN(ShadowStatsMap parallel, RunHarness(ds, {0, 3, 9, 40}, h));
  EXPECT_EQ(StatsToJsonl(serial), StatsToJsonl(parallel));
  for (const auto& [id, s] : serial) {
    EXPECT_OK(s.Validate());
    EXPECT_EQ(s.probs_in.size(), 3u);
    EXPECT_EQ(s.hits_in.size(), 3u);
  }
  h.master_seed = 43;
  ASSERT_OK_AND_ASSIGN(ShadowStatsMap other, RunHarness(ds, {0, 3, 9, 40}, h));
  EXPECT_NE(StatsToJsonl(serial), StatsToJsonl(other));
}

TEST(HarnessTest, TruncatedPairsMatchFreshRun) {
  Dataset ds = SmallMixture(100, 0, 6);
  HarnessConfig h = FastHarness(5);
  ASSERT_OK_AND_ASSIGN(ShadowStatsMap full, RunHarness(ds, {11, 12}, h));
  h.m = 2;
  ASSERT_OK_AND_ASSIGN(ShadowStatsMap fresh, RunHarness(ds, {11, 12}, h));
  ShadowStatsMap truncated;
  for (const auto& [id, s] : full) {
    ASSERT_OK_AND_ASSIGN(truncated[id], TruncatePairs(s, 2));
  }
  EXPECT_EQ(StatsToJsonl(truncated), StatsToJsonl(fresh));
  EXPECT_FALSE(TruncatePairs(full[11], 0).ok());
  EXPECT_FALSE(TruncatePairs(full[11], 6).ok());
}

TEST(HarnessTest, PlantedSingletonIsMemorized) {
  MixtureOptions o;
  o.num_examples = 300;
  o.num_singletons = 1;
  o.seed = 7;
  ASSERT_OK_AND_ASSIGN(Dataset ds, Generate(MakeMixtureSpec(o)));
  const int64_t singleton = ds.examples.back().id;
  HarnessConfig h;
  h.m = 8;
  h.master_seed = 1;
  ASSERT_OK_AND_ASSIGN(ShadowStatsMap stats, RunHarness(ds, {singleton}, h));
  const ShadowStats& s = stats[singleton];
  EXPECT_GE(s.correct_in, 0.95 * s.m);
  EXPECT_LE(s.correct_out, 0.05 * s.m);
  ASSERT_OK_AND_ASSIGN(double mem, EstimateMemorization(s));
  EXPECT_GE(mem, 0.9);
  EXPECT_GT(s.mu_in, s.mu_out);
}

TEST(HarnessTest, ErrorsAreReported) {
  Dataset ds = SmallMixture(50, 0, 8);
  HarnessConfig h = FastHarness(2);
  EXPECT_EQ(RunHarness(ds, {999999}, h).status().code(), absl::StatusCode::kNotFound);
  h.m = 0;
  EXPECT_FALSE(RunHarness(ds, {0}, h).ok());
  h = FastHarness(2);
  h.subsample_fraction = 0;
  EXPECT_FALSE(RunHarness(ds, {0}, h).ok());

  h = FastHarness(2);
  Resampler leaky = [&](uint64_t) -> absl::StatusOr<Dataset> { return ds; };
  auto r = RunHarness(ds, {0}, h, &leaky);
  ASSERT_FALSE(r.ok());
  EXPECT_THAT(std::string(r.status().message()), HasSubstr("target id"));
}

TEST(HarnessTest, ResamplerSuppliesFreshData) {
  Dataset ds = SmallMixture(60, 0, 9);
  HarnessConfig h = FastHarness(2);
  Resampler fresh = [&](uint64_t seed) -> absl::StatusOr<Dataset> {
    MixtureOptions o;
    o.dim = 8;
    o.num_classes = 4;
    o.num_examples = 40;
    o.alpha = 0.9;
    o.seed = seed;
    absl::StatusOr<Dataset> d = Generate(MakeMixtureSpec(o));
    if (d.ok()) {
      for (auto& e : d->examples) e.id += 1000;
    }
    return d;
  };
  ASSERT_OK_AND_ASSIGN(ShadowPair p, TrainShadowPair(ds, ds.examples[0], 0, h, &fresh));
  EXPECT_EQ(p.in.train_ids.size(), 41u);
  EXPECT_EQ(p.out.train_ids.size(), 40u);
  EXPECT_EQ(p.in.train_ids.front(), ds.examples[0].id);
}

TEST(StatsJsonlTest, RoundTrip) {
  Dataset ds = SmallMixture(60, 0, 10);
  ASSERT_OK_AND_ASSIGN(ShadowStatsMap stats, RunHarness(ds, {1, 2, 3}, FastHarness(3)));
  const std::string text = StatsToJsonl(stats);
  ASSERT_OK_AND_ASSIGN(ShadowStatsMap back, ParseStatsJsonl(text));
  EXPECT_EQ(StatsToJsonl(back), text);
  for (const auto& [id, s] : stats) {
    EXPECT_EQ(back[id].confs_in, s.confs_in);
    EXPECT_EQ(back[id].probs_out, s.probs_out);
    EXPECT_DOUBLE_EQ(back[id].sigma_in, s.sigma_in);
  }

  const std::string path = ::testing::TempDir() + "/stats.jsonl";
  ASSERT_OK(ExportConfidenceMatrix(stats, path));
  ASSERT_OK_AND_ASSIGN(ShadowStatsMap imported, ImportConfidenceMatrix(path));
  EXPECT_EQ(StatsToJsonl(imported), text);
  std::remove(path.c_str());
}

TEST(StatsJsonlTest, ParseErrors) {
  ASSERT_OK_AND_ASSIGN(ShadowStatsMap empty, ParseStatsJsonl(""));
  EXPECT_TRUE(empty.empty());
  const std::string good =
      R"({"id":1,"m":2,"confs_in":[0.5,1],"confs_out":[0,0],"correct_in":1,"correct_out":0})";
  ASSERT_OK_AND_ASSIGN(ShadowStatsMap one, ParseStatsJsonl(good + "\n"));
  EXPECT_EQ(one.size(), 1u);
  EXPECT_EQ(one[1].label, -1);

  auto bad_value = ParseStatsJsonl(good + "\n" +
      R"({"id":2,"m":2,"confs_in":[NaN,1],"confs_out":[0,0],"correct_in":1,"correct_out":0})");
  ASSERT_FALSE(bad_value.ok());
  EXPECT_THAT(std::string(bad_value.status().message()), HasSubstr("line 2"));

  auto wrong_m = ParseStatsJsonl(
      R"({"id":1,"m":3,"confs_in":[0.5,1],"confs_out":[0,0],"correct_in":1,"correct_out":0})");
  EXPECT_FALSE(wrong_m.ok());
  auto dup = ParseStatsJsonl(good + "\n" + good + "\n");
  ASSERT_FALSE(dup.ok());
  EXPECT_THAT(std::string(dup.status().message()), HasSubstr("duplicate"));
  EXPECT_FALSE(ImportConfidenceMatrix("/nonexistent/x.jsonl").ok());
}

}  // namespace
}  // namespace memaudit
