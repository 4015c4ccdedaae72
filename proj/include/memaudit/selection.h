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
// Target selection (random, subpopulation, singleton) and OOD scorers.

#ifndef MEMAUDIT_SELECTION_H_
#define MEMAUDIT_SELECTION_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "Eigen/Dense"
#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"
#include "memaudit/learner.h"
#include "memaudit/synthdata.h"

namespace memaudit {

enum class SelectionStrategy { kRandom, kSubpopulation, kSingleton };

absl::string_view StrategyName(SelectionStrategy s);
absl::StatusOr<SelectionStrategy> ParseStrategy(absl::string_view name);

struct SelectionSpec {
  SelectionStrategy strategy = SelectionStrategy::kRandom;
  std::string name;  // artifact key; defaults to the strategy name
  Group group = Group::kUnder;  // kRandom only
  int k = 10;                   // kRandom only
  int pca_dims = 10;
  int k_clusters = 5;
  double mem_threshold = 0.5;
  uint64_t seed = 0;

  absl::Status Validate() const;
};

// k distinct ids drawn uniformly from the group, returned sorted.
absl::StatusOr<std::vector<int64_t>> SelectRandom(const Dataset& dataset,
                                                  Group group, int k,
                                                  uint64_t seed);

// Centered principal components, ordered by descending eigenvalue.
struct PcaProjection {
  Eigen::VectorXd mean;
  Eigen::MatrixXd components;  // dim x kept, one component per column
  Eigen::VectorXd eigenvalues;

  // Rows of x are points.
  Eigen::MatrixXd Transform(const Eigen::MatrixXd& x) const;
};

// Directions with (relative) zero variance are dropped, so the result may
// keep fewer than dims components.
absl::StatusOr<PcaProjection> PcaFit(const Eigen::MatrixXd& x, int dims);

struct KMeansResult {
  std::vector<int> assignments;
  Eigen::MatrixXd centers;  // k x dim
  std::vector<double> inertia_history;  // after each Lloyd step
  int iterations = 0;

  double inertia() const { return inertia_history.back(); }
};

inline constexpr int kKMeansMaxIterations = 300;

// k-means++ seeding followed by Lloyd iterations.
absl::StatusOr<KMeansResult> KMeans(const Eigen::MatrixXd& points, int k,
                                    uint64_t seed);

// Under-group members of the smallest KMeans cluster of the feature
// model's penultimate activations (PCA-reduced).
absl::StatusOr<std::vector<int64_t>> SelectSubpopulation(
    const Dataset& dataset, const TrainedModel& feature_model, int pca_dims,
    int k_clusters, uint64_t seed);

// Same, on precomputed feature rows aligned with dataset.examples.
absl::StatusOr<std::vector<int64_t>> SelectSubpopulationFromFeatures(
    const Dataset& dataset, const Eigen::MatrixXd& features, int pca_dims,
    int k_clusters, uint64_t seed);

// Ids whose score is strictly above threshold, sorted.
std::vector<int64_t> SelectSingletons(const std::map<int64_t, double>& mem_scores,
                                      double threshold);

struct OodScore {
  int64_t example_id = 0;
  double msp = 0.0;
  double energy = 0.0;
};

// Higher means more out-of-distribution for both.
double MspOodFromLogits(const Eigen::VectorXd& logits);
double EnergyOodFromLogits(const Eigen::VectorXd& logits);
absl::StatusOr<double> MspOodScore(const TrainedModel& model,
                                   const Eigen::VectorXd& x);
absl::StatusOr<double> EnergyOodScore(const TrainedModel& model,
                                      const Eigen::VectorXd& x);
absl::StatusOr<OodScore> ScoreOod(const TrainedModel& model,
                                  const LabeledExample& example);

// {"strategy": ..., "ids": [...], "params": {...}}
std::string SelectionToJson(const SelectionSpec& spec,
                            const std::vector<int64_t>& ids);

}  // namespace memaudit

#endif  // MEMAUDIT_SELECTION_H_
