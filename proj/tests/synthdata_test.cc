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
#include "memaudit/synthdata.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <string>

#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace memaudit {
namespace {

using ::testing::HasSubstr;

std::string Message(const absl::Status& s) { return std::string(s.message()); }

Dataset Mixture(int n, double alpha, uint64_t seed = 1, int singletons = 0,
                GeneratorKind kind = GeneratorKind::kCovariateShifted) {
  MixtureOptions o;
  o.num_examples = n;
  o.alpha = alpha;
  o.seed = seed;
  o.num_singletons = singletons;
  o.under_kind = kind;
  auto ds = Generate(MakeMixtureSpec(o));
  EXPECT_TRUE(ds.ok()) << ds.status();
  return *ds;
}

TEST(GenerateTest, GroupCounts) {
  Dataset all_over = Mixture(100, 1.0);
  EXPECT_EQ(all_over.IdsInGroup(Group::kOver).size(), 100u);
  EXPECT_TRUE(all_over.IdsInGroup(Group::kUnder).empty());

  Dataset mix = Mixture(1000, 0.99);
  EXPECT_EQ(mix.IdsInGroup(Group::kOver).size(), 990u);
  EXPECT_EQ(mix.IdsInGroup(Group::kUnder).size(), 10u);
  EXPECT_OK(mix.Validate());
}

TEST(GenerateTest, CompositionAndBalanceProperties) {
  for (int n : {37, 100, 451}) {
    for (double alpha : {0.0, 0.13, 0.5, 0.9, 0.99, 1.0}) {
      for (auto kind : {GeneratorKind::kGaussianBlobs, GeneratorKind::kCovariateShifted,
                        GeneratorKind::kSemanticShifted}) {
        Dataset ds = Mixture(n, alpha, 3, 0, kind);
        ASSERT_EQ(ds.size(), static_cast<size_t>(n));
        const double over = ds.IdsInGroup(Group::kOver).size();
        EXPECT_LE(std::abs(over / n - alpha), 1.0 / n);
        for (Group g : {Group::kOver, Group::kUnder}) {
          std::map<int, int> per_class;
          for (int c = 0; c < ds.num_classes; ++c) per_class[c] = 0;
          for (const auto& e : ds.examples) {
            if (e.group == g) ++per_class[e.label];
          }
          int lo = n, hi = 0;
          for (auto [c, k] : per_class) {
            lo = std::min(lo, k);
            hi = std::max(hi, k);
          }
          EXPECT_LE(hi - lo, 1);
        }
      }
    }
  }
}

TEST(GenerateTest, Deterministic) {
  EXPECT_EQ(Mixture(300, 0.9, 5, 3), Mixture(300, 0.9, 5, 3));
  EXPECT_EQ(FormatCsv(Mixture(300, 0.9, 5, 3)), FormatCsv(Mixture(300, 0.9, 5, 3)));
  EXPECT_FALSE(Mixture(300, 0.9, 5) == Mixture(300, 0.9, 6));
}

TEST(GenerateTest, InvalidSpecs) {
  MixtureSpec bad_alpha = MakeMixtureSpec(MixtureOptions{});
  bad_alpha.alpha = 1.5;
  EXPECT_FALSE(Generate(bad_alpha).ok());
  MixtureSpec zero = MakeMixtureSpec(MixtureOptions{});
  zero.per_class_counts.assign(zero.per_class_counts.size(), 0);
  EXPECT_FALSE(Generate(zero).ok());
}

TEST(GenerateTest, PlantedSingletonsAreIsolatedAndLabelInconsistent) {
  Dataset ds = Mixture(500, 0.99, 9, 4);
  ASSERT_EQ(ds.size(), 504u);
  for (int k = 0; k < 4; ++k) {
    const LabeledExample* s = &ds.examples[500 + k];
    EXPECT_EQ(s->group, Group::kUnder);
    // Nearest ordinary neighbour is far away and carries a different label.
    double best = 1e300;
    int nearest_label = -1;
    for (size_t i = 0; i < 500; ++i) {
      const double d = (ds.examples[i].features - s->features).norm();
      if (d < best) {
        best = d;
        nearest_label = ds.examples[i].label;
      }
    }
    EXPECT_NE(nearest_label, s->label);
    EXPECT_GT(best, 2.0);
  }
}

TEST(CsvTest, RoundTripIsExact) {
  Dataset ds = Mixture(200, 0.9, 2, 2);
  ASSERT_OK_AND_ASSIGN(Dataset back, ParseCsv(FormatCsv(ds), ds.num_classes));
  back.provenance = ds.provenance;
  EXPECT_EQ(back, ds);

  const std::string path = ::testing::TempDir() + "/roundtrip.csv";
  ASSERT_OK(SaveCsv(ds, path));
  ASSERT_OK_AND_ASSIGN(Dataset loaded, LoadCsv(path, ds.num_classes));
  loaded.provenance = ds.provenance;
  EXPECT_EQ(loaded, ds);
  std::remove(path.c_str());
}

TEST(CsvTest, DirectParse) {
  const std::string text =
      "id,group,label,f0,f1\n"
      "0,over,0,0.5,1\n"
      "1,over,1,-2,3.25\n"
      "2,under,0,1e-3,0\n"
      "3,under,1,7,8\n";
  ASSERT_OK_AND_ASSIGN(Dataset ds, ParseCsv(text));
  EXPECT_EQ(ds.size(), 4u);
  EXPECT_EQ(ds.dim, 2);
  EXPECT_EQ(ds.num_classes, 2);
  EXPECT_EQ(ds.examples[1].features[1], 3.25);
  EXPECT_EQ(ds.examples[2].group, Group::kUnder);
}

TEST(CsvTest, SchemaErrors) {
  auto missing = ParseCsv("id,group,f0\n0,over,1\n");
  ASSERT_FALSE(missing.ok());
  EXPECT_THAT(Message(missing.status()), HasSubstr("label"));

  auto short_row = ParseCsv("id,group,label,f0,f1\n0,over,0,1\n");
  ASSERT_FALSE(short_row.ok());
  EXPECT_THAT(Message(short_row.status()), HasSubstr("line 2"));

  EXPECT_FALSE(ParseCsv("id,group,label,f0\n0,over,3,1\n", 2).ok());
  EXPECT_FALSE(ParseCsv("id,group,label,f0\n0,middle,0,1\n").ok());
  EXPECT_FALSE(ParseCsv("id,group,label,f0\n0,over,0,1\n0,over,0,2\n").ok());
}

TEST(SubsampleTest, FullFractionKeepsEverything) {
  Dataset ds = Mixture(100, 0.9);
  ASSERT_OK_AND_ASSIGN(Dataset all, Subsample(ds, 1.0, 3));
  EXPECT_EQ(all.Ids(), ds.Ids());
}

TEST(SubsampleTest, SizeAndForcedIds) {
  Dataset ds = Mixture(1000, 0.99);
  ASSERT_OK_AND_ASSIGN(Dataset base, Subsample(ds, 0.7, 11));
  EXPECT_EQ(base.size(), 700u);
  ASSERT_OK_AND_ASSIGN(Dataset with, Subsample(ds, 0.7, 11, {}, {5}));
  ASSERT_OK_AND_ASSIGN(Dataset without, Subsample(ds, 0.7, 11, {5}, {}));
  EXPECT_NE(with.Find(5), nullptr);
  EXPECT_EQ(without.Find(5), nullptr);
  EXPECT_LE(std::abs(static_cast<int>(with.size()) - 700), 1);
  EXPECT_LE(std::abs(static_cast<int>(without.size()) - 700), 1);
  // The forced id is the only difference.
  const std::vector<int64_t> with_ids = with.Ids();
  std::set<int64_t> a(with_ids.begin(), with_ids.end());
  for (int64_t id : without.Ids()) a.erase(id);
  EXPECT_EQ(a, std::set<int64_t>({5}));
}

TEST(SubsampleTest, DeterministicBySeed) {
  Dataset ds = Mixture(300, 0.9);
  ASSERT_OK_AND_ASSIGN(Dataset a, Subsample(ds, 0.5, 77));
  ASSERT_OK_AND_ASSIGN(Dataset b, Subsample(ds, 0.5, 77));
  ASSERT_OK_AND_ASSIGN(Dataset c, Subsample(ds, 0.5, 78));
  EXPECT_EQ(a.Ids(), b.Ids());
  EXPECT_NE(a.Ids(), c.Ids());
}

TEST(SubsampleTest, Errors) {
  Dataset ds = Mixture(50, 0.9);
  EXPECT_FALSE(Subsample(ds, 0.0, 1).ok());
  EXPECT_FALSE(Subsample(ds, 1.5, 1).ok());
  EXPECT_FALSE(Subsample(ds, 0.5, 1, {}, {999}).ok());
  EXPECT_FALSE(Subsample(ds, 0.5, 1, {3}, {3}).ok());
}

}  // namespace
}  // namespace memaudit
