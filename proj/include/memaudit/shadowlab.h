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
// IN/OUT shadow-model harness. For every target z and pair index j the
// harness draws one training subsample, trains an IN model with z forced in
// and an OUT model with z forced out, and records the transformed
// true-class confidence and correctness of both. From these it derives the
// label-memorization estimate, the privacy score and the per-example IN/OUT
// Gaussians used by the likelihood-ratio attack.

#ifndef MEMAUDIT_SHADOWLAB_H_
#define MEMAUDIT_SHADOWLAB_H_

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "Eigen/Dense"
#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "memaudit/learner.h"
#include "memaudit/stats.h"
#include "memaudit/synthdata.h"

namespace memaudit {

enum class PhiKind { kLogitScale, kRawConfidence };
enum class VarianceMode { kPerExample, kGlobal };

// No fitted standard deviation goes below this (in phi units).
inline constexpr double kSigmaFloor = 1e-4;
inline constexpr double kPrivacyDenominatorFloor = 2e-4;
inline constexpr double kPrivacyScoreCap = 1e4;
// kGlobal pools variances only below this many pairs.
inline constexpr int kGlobalVarianceMaxPairs = 8;

// phi(p) on the clamped probability: log(p / (1 - p)) or p itself.
double ApplyPhi(PhiKind phi, double p);

struct HarnessConfig {
  int m = 16;
  double subsample_fraction = 0.7;
  LearnerConfig learner;
  uint64_t master_seed = 0;
  PhiKind phi = PhiKind::kLogitScale;
  VarianceMode variance_mode = VarianceMode::kPerExample;
  int workers = 1;
  // Keep the full softmax vectors of every shadow model on its target; the
  // loss-, entropy- and classifier-based attacks calibrate on them.
  bool record_probs = true;

  absl::Status Validate() const;
};

struct ShadowStats {
  int64_t target_id = 0;
  int label = -1;  // -1 when unknown (imported without labels)
  int m = 0;
  std::vector<double> confs_in, confs_out;  // phi-transformed
  int correct_in = 0, correct_out = 0;
  double mu_in = 0, mu_out = 0, sigma_in = kSigmaFloor, sigma_out = kSigmaFloor;
  // Optional per-pair detail. hits_* are 0/1 correctness flags.
  std::vector<int> hits_in, hits_out;
  std::vector<Eigen::VectorXd> probs_in, probs_out;

  absl::Status Validate() const;
};

using ShadowStatsMap = std::map<int64_t, ShadowStats>;

// Supplies a fresh shadow dataset for the draw-from-the-distribution variant.
// Returned ids must not collide with the target's id.
using Resampler = std::function<absl::StatusOr<Dataset>(uint64_t seed)>;

struct ShadowPair {
  TrainedModel in;
  TrainedModel out;
};

// Per-pair seeds depend only on (master_seed, target_id, pair_index), so any
// prefix of pairs is reproducible on its own. IN and OUT share the learner
// seed and the subsample; they differ only by the target.
uint64_t PairSubsampleSeed(uint64_t master_seed, int64_t target_id, int pair);
uint64_t PairLearnerSeed(uint64_t master_seed, int64_t target_id, int pair);

absl::StatusOr<ShadowPair> TrainShadowPair(const Dataset& dataset,
                                           const LabeledExample& target,
                                           int pair, const HarnessConfig& config,
                                           const Resampler* resampler = nullptr);

absl::StatusOr<ShadowStatsMap> RunHarness(const Dataset& dataset,
                                          const std::vector<int64_t>& target_ids,
                                          const HarnessConfig& config,
                                          const Resampler* resampler = nullptr);

// Fills mu/sigma from the confidence lists (unbiased variance, floored).
// With fewer than two pairs sigma is the floor.
void RefitMoments(ShadowStats& stats);

// Replaces every sigma with a pooled value: the pooled within-target
// variance when any target has two or more pairs, otherwise the spread of
// all confidences around their global mean.
void ApplyGlobalVariance(ShadowStatsMap& stats);

// Refit according to the mode (global pooling only below
// kGlobalVarianceMaxPairs pairs).
void FinalizeMoments(ShadowStatsMap& stats, VarianceMode mode);

// First k pairs of stats, refit. Needs per-pair hit flags unless k == m.
absl::StatusOr<ShadowStats> TruncatePairs(const ShadowStats& stats, int k);

// correct_in / m - correct_out / m.
absl::StatusOr<double> EstimateMemorization(const ShadowStats& stats);

// |mu_in - mu_out| / max(sigma_in + sigma_out, 2e-4), capped at 1e4.
double PrivacyScore(const ShadowStats& stats);

// (IN, OUT) one-dimensional Gaussians from the confidence lists.
absl::StatusOr<std::pair<GaussianParamsd, GaussianParamsd>> FitInOutGaussians(
    const ShadowStats& stats);

// JSONL, one object per target:
//   {"id":..,"m":..,"confs_in":[..],"confs_out":[..],"correct_in":..,
//    "correct_out":..}
// plus optional "label", "hits_in", "hits_out", "probs_in", "probs_out".
std::string StatsToJsonl(const ShadowStatsMap& stats);
absl::StatusOr<ShadowStatsMap> ParseStatsJsonl(const std::string& text);
absl::Status ExportConfidenceMatrix(const ShadowStatsMap& stats,
                                    const std::string& path);
absl::StatusOr<ShadowStatsMap> ImportConfidenceMatrix(const std::string& path);

}  // namespace memaudit

#endif  // MEMAUDIT_SHADOWLAB_H_
