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
// Composite datasets: an over-represented group of Gaussian class blobs mixed
// with a small under-represented group, optionally with planted atypical
// points that any flexible learner must memorize to classify.

#ifndef MEMAUDIT_SYNTHDATA_H_
#define MEMAUDIT_SYNTHDATA_H_

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include "absl/strings/string_view.h"
#include <unordered_map>
#include <vector>

#include "Eigen/Dense"
#include "absl/status/status.h"
#include "absl/status/statusor.h"

namespace memaudit {

enum class Group { kOver, kUnder };

absl::string_view GroupName(Group g);
absl::StatusOr<Group> ParseGroup(absl::string_view name);

struct LabeledExample {
  int64_t id = 0;
  Eigen::VectorXd features;
  int label = 0;
  Group group = Group::kOver;

  friend bool operator==(const LabeledExample& a, const LabeledExample& b) {
    return a.id == b.id && a.label == b.label && a.group == b.group &&
           a.features.size() == b.features.size() &&
           a.features == b.features;
  }
};

struct Dataset {
  std::vector<LabeledExample> examples;
  int num_classes = 0;
  int dim = 0;
  std::string provenance;

  size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }

  // Checks id uniqueness, feature length and label range.
  absl::Status Validate() const;

  // Linear scan; returns nullptr when absent.
  const LabeledExample* Find(int64_t id) const;
  std::unordered_map<int64_t, size_t> IndexById() const;

  std::vector<int64_t> Ids() const;
  std::vector<int64_t> IdsInGroup(Group g) const;

  // Copy restricted to the given ids, preserving this dataset's order.
  Dataset Restrict(const std::set<int64_t>& ids) const;

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.num_classes == b.num_classes && a.dim == b.dim &&
           a.examples == b.examples;
  }
};

enum class GeneratorKind { kGaussianBlobs, kCovariateShifted, kSemanticShifted };

// Samples x = class_means[y] (+ shift) + class_scales[y] * N(0, I).
// For kSemanticShifted the means are fresh cluster centers; center i carries
// label i.
struct GroupGenerator {
  GeneratorKind kind = GeneratorKind::kGaussianBlobs;
  std::vector<Eigen::VectorXd> class_means;
  std::vector<double> class_scales;
  Eigen::VectorXd shift;  // kCovariateShifted only
};

struct MixtureSpec {
  double alpha = 0.99;
  GroupGenerator over_gen;
  GroupGenerator under_gen;
  // Class totals; N is their sum. Each group is split across classes as
  // evenly as possible.
  std::vector<int> per_class_counts;
  uint64_t seed = 0;
  // Planted atypical points, tagged kUnder and appended after the mixture.
  int num_singletons = 0;
  double singleton_radius = 8.0;

  absl::Status Validate() const;
};

// Knobs for MakeMixtureSpec; defaults give the d=16, C=10 desk-scale setup.
struct MixtureOptions {
  int dim = 16;
  int num_classes = 10;
  int num_examples = 1000;
  double alpha = 0.99;
  GeneratorKind under_kind = GeneratorKind::kCovariateShifted;
  double mean_spread = 2.0;   // class means ~ N(0, mean_spread^2 I)
  double noise = 1.0;         // over-group per-class scale
  double under_noise = 2.5;   // under-group per-class scale
  double shift_norm = 7.0;    // covariate shift length
  double semantic_offset = 12.0;
  int num_singletons = 0;
  double singleton_radius = -1.0;  // < 0: 2 * noise * sqrt(dim)
  uint64_t seed = 0;
};

MixtureSpec MakeMixtureSpec(const MixtureOptions& options);

// Deterministic in spec (including seed). Ids: over group first, then under,
// then planted singletons.
absl::StatusOr<Dataset> Generate(const MixtureSpec& spec);

// CSV with header id,group,label,f0,...,f{d-1}; features printed with 17
// significant digits. When num_classes is absent it is max label + 1.
absl::Status SaveCsv(const Dataset& dataset, const std::string& path);
absl::StatusOr<Dataset> LoadCsv(const std::string& path,
                                std::optional<int> num_classes = std::nullopt);
absl::StatusOr<Dataset> ParseCsv(absl::string_view text,
                                 std::optional<int> num_classes = std::nullopt);
std::string FormatCsv(const Dataset& dataset);

// Random round(fraction * N) subset with `include` forced in and `exclude`
// forced out. Two calls that differ only in forcing one id produce sets that
// differ only in that id.
absl::StatusOr<Dataset> Subsample(const Dataset& dataset, double fraction,
                                  uint64_t seed,
                                  const std::set<int64_t>& exclude = {},
                                  const std::set<int64_t>& include = {});

}  // namespace memaudit

#endif  // MEMAUDIT_SYNTHDATA_H_
