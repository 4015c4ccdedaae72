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
// Reference membership-inference attacks, the membership-inference game
// and the bounded-statistic gap estimator.
//
// Every score is oriented so that higher means "more likely a member".

#ifndef MEMAUDIT_ATTACKS_H_
#define MEMAUDIT_ATTACKS_H_

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "Eigen/Dense"
#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "memaudit/learner.h"
#include "memaudit/metrics.h"
#include "memaudit/shadowlab.h"
#include "memaudit/stats.h"
#include "memaudit/synthdata.h"

namespace memaudit {

// Loss thresholding: score = -cross_entropy(model, example).
absl::StatusOr<AttackScore> YeomScore(const TrainedModel& model,
                                      const LabeledExample& example);

// --- Shokri: a classifier over (softmax vector, one-hot label) features.

Eigen::VectorXd ShokriFeatures(const Eigen::VectorXd& probs, int label);

struct ShokriSample {
  int64_t example_id = 0;
  Eigen::VectorXd features;
  int is_member = 0;
};

// Member samples from IN shadow outputs, non-members from OUT outputs.
// Needs recorded probabilities and labels.
absl::StatusOr<std::vector<ShokriSample>> ShokriTrainingSet(
    const ShadowStatsMap& stats);

// One hidden layer of 64 ReLU units with a 2-way softmax by default.
LearnerConfig DefaultShokriLearner(uint64_t seed = 0);

class ShokriModel {
 public:
  static absl::StatusOr<ShokriModel> Fit(std::span<const ShokriSample> samples,
                                         const LearnerConfig& config);
  // Member-class probability.
  double Score(const Eigen::VectorXd& features) const;
  const TrainedModel& model() const { return model_; }

 private:
  explicit ShokriModel(TrainedModel model) : model_(std::move(model)) {}
  TrainedModel model_;
};

// Fits on the shadow samples and scores each victim sample.
absl::StatusOr<std::vector<AttackScore>> ShokriAttack(
    std::span<const ShokriSample> shadow, std::span<const ShokriSample> victim,
    const LearnerConfig& config);

// --- Song: modified prediction entropy, standardized per class.

// -(1 - p_y) log p_y - sum_{i != y} p_i log(1 - p_i), probabilities clamped.
double ModifiedEntropy(const Eigen::VectorXd& probs, int label);

struct SongCalibration {
  struct Moments {
    double mean = 0.0;
    double stddev = 1.0;
  };
  std::map<int, Moments> per_class;  // OUT-shadow modified entropy
};

absl::StatusOr<SongCalibration> CalibrateSong(const ShadowStatsMap& stats);

// -(entropy - class mean) / class std.
absl::StatusOr<AttackScore> SongScore(const TrainedModel& model,
                                      const LabeledExample& example,
                                      const SongCalibration& calibration);

// --- Sablayrolles: per-example hardness threshold from OUT shadows.

enum class HardnessStat { kMean, kMedian };

// Mean (or median) OUT-model loss on the target.
absl::StatusOr<double> HardnessThreshold(const ShadowStats& stats,
                                         HardnessStat stat = HardnessStat::kMean);

// tau(z) - loss(model, z).
absl::StatusOr<AttackScore> SablayrollesScore(
    const TrainedModel& model, const LabeledExample& example,
    const ShadowStats& stats, HardnessStat stat = HardnessStat::kMean);

// --- LiRA: log N(obs; mu_in, sigma_in) - log N(obs; mu_out, sigma_out).

double LiraLogRatio(double obs, double mu_in, double sigma_in, double mu_out,
                    double sigma_out);

absl::StatusOr<AttackScore> LiraScore(const TrainedModel& model,
                                      const LabeledExample& example,
                                      const ShadowStats& stats,
                                      PhiKind phi = PhiKind::kLogitScale);

// Forms over a recorded softmax vector, for scoring stored victim outputs.
double YeomScoreFromProbs(const Eigen::VectorXd& probs, int label);  // clamped loss
absl::StatusOr<double> SongScoreFromProbs(const Eigen::VectorXd& probs,
                                          int label,
                                          const SongCalibration& calibration);
absl::StatusOr<double> SablayrollesScoreFromProbs(
    const Eigen::VectorXd& probs, int label, const ShadowStats& stats,
    HardnessStat stat = HardnessStat::kMean);
absl::StatusOr<double> LiraScoreFromProbs(const Eigen::VectorXd& probs,
                                          int label, const ShadowStats& stats,
                                          PhiKind phi = PhiKind::kLogitScale);

// --- Game.

// 1 iff the model predicts the example's label.
absl::StatusOr<int> IndicatorAdversary(const TrainedModel& model,
                                       const LabeledExample& example);

enum class AdversaryKind { kCoin, kIndicator, kLossGap, kOodGap, kLira };

absl::StatusOr<AdversaryKind> ParseAdversary(absl::string_view name);

struct GameConfig {
  int trials = 1000;
  AdversaryKind adversary = AdversaryKind::kIndicator;
  Dataset dataset;  // S plus the target; the target is removed for b = 0
  int64_t target_id = 0;
  LearnerConfig learner;
  uint64_t seed = 0;
  // 1.0 plays the strong game on the caller's fixed S. Smaller values let
  // the challenger draw a fresh subsample of S per trial.
  double subsample_fraction = 1.0;
  // Score-based adversaries threshold at the (1 - target_fpr) quantile of
  // their score over the OUT shadows in calibration.
  std::optional<ShadowStats> calibration;
  double target_fpr = 0.1;
  PhiKind phi = PhiKind::kLogitScale;
  int workers = 1;

  absl::Status Validate() const;
};

// Advantage = Pr(b_A = 0 | b_C = 0) - Pr(b_A = 0 | b_C = 1).
struct GameResult {
  double advantage_estimate = 0.0;
  double std_error = 0.0;
  int64_t trials = 0;
  int64_t trials_out = 0;  // b_C = 0
  int64_t trials_in = 0;   // b_C = 1
};

absl::StatusOr<GameResult> PlayMiGame(const GameConfig& config);

// --- Bounded statistic gap.

using BoundedStatistic =
    std::function<double(const TrainedModel&, const LabeledExample&)>;

// E[g | IN] - E[g | OUT] over the harness's IN/OUT pairs (config.m pairs,
// same seeds as RunHarness), with the paired standard error.
absl::StatusOr<McEstimate> BoundedGGap(const BoundedStatistic& g,
                                       const Dataset& dataset,
                                       int64_t target_id,
                                       const HarnessConfig& config,
                                       const Resampler* resampler = nullptr);

// Loss clipped to [0, bound].
BoundedStatistic ClampedLossStatistic(double bound);

// --- Score dump CSV: id,attack,score,is_member.

struct ScoreRow {
  AttackScore score;
  int is_member = 0;
};

std::string ScoresToCsv(std::span<const ScoreRow> rows);
absl::StatusOr<std::vector<ScoreRow>> ParseScoresCsv(const std::string& text);

}  // namespace memaudit

#endif  // MEMAUDIT_ATTACKS_H_
