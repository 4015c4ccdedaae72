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
// Config-driven pipeline: data, shadow farm, selection, victims, attacks,
// reports, game and shadow-count sweep. Each stage reads its inputs from and
// writes its outputs to the experiment's output directory.

#ifndef MEMAUDIT_EXPERIMENT_H_
#define MEMAUDIT_EXPERIMENT_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "Eigen/Dense"
#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"
#include "memaudit/attacks.h"
#include "memaudit/learner.h"
#include "memaudit/metrics.h"
#include "memaudit/selection.h"
#include "memaudit/shadowlab.h"
#include "memaudit/synthdata.h"

namespace memaudit {

struct AttackSpec {
  std::string name;  // lira | yeom | song | sablayrolles | shokri
  HardnessStat hardness = HardnessStat::kMean;  // sablayrolles only
};

inline constexpr const char* kAttackNames[] = {"lira", "yeom", "song",
                                               "sablayrolles", "shokri"};

struct ExperimentConfig {
  // Exactly one of the two sources.
  std::optional<MixtureOptions> mixture;
  bool mixture_seed_from_master = true;  // no explicit mixture seed given
  std::string dataset_csv;

  LearnerConfig learner;
  HarnessConfig harness;  // harness.learner mirrors learner

  // Draw each shadow dataset fresh from the mixture instead of subsampling
  // the training set (mixture sources only).
  bool resample_from_generator = false;

  // Shadow-farm targets: every under-group example plus a seeded sample of
  // over-group examples.
  int pool_over_sample = 20;

  std::vector<SelectionSpec> selections;
  std::vector<AttackSpec> attacks;
  std::vector<double> fpr_targets = {0.001};
  NegativesMode negatives = NegativesMode::kAll;

  int victims = 16;
  double victim_fraction = 0.7;

  // game
  int game_trials = 200;
  AdversaryKind game_adversary = AdversaryKind::kIndicator;
  std::optional<int64_t> game_target;  // default: first id of game_selection
  std::string game_selection = "singleton";
  double game_subsample_fraction = 1.0;
  double game_target_fpr = 0.1;

  std::vector<int> sweep_m = {1, 2, 4, 8, 16, 32, 64};

  std::string output_dir = "memaudit_out";
  int workers = 1;
  uint64_t master_seed = 0;

  // Copies seeds and worker counts into the nested configs.
  void Propagate();
  absl::Status Validate() const;
};

// Unknown keys and type errors are reported with their JSON path.
absl::StatusOr<ExperimentConfig> ParseExperimentConfig(absl::string_view text);
absl::StatusOr<ExperimentConfig> LoadExperimentConfig(const std::string& path);

// --- Library-level stages.

absl::StatusOr<Dataset> BuildDataset(const ExperimentConfig& config);

// Fresh draws of round(fraction * N) examples from the mixture's
// distribution (no planted singletons), ids shifted by id_offset.
Resampler MakeGeneratorResampler(const MixtureOptions& options, double fraction,
                                 int64_t id_offset);

std::vector<int64_t> TargetPool(const Dataset& dataset, int over_sample,
                                uint64_t seed);

// Softmax output of one victim on one target.
struct VictimObservation {
  int victim = 0;
  int64_t example_id = 0;
  int is_member = 0;
  Eigen::VectorXd probs;
};

uint64_t VictimSeed(uint64_t master_seed, int victim);

// Victim v trains on Subsample(dataset, fraction, VictimSeed(seed, v));
// membership is inclusion in that subsample.
absl::StatusOr<std::vector<VictimObservation>> ObserveVictims(
    const Dataset& dataset, const std::vector<int64_t>& target_ids,
    const LearnerConfig& learner, double fraction, int count, uint64_t seed,
    int workers);

std::string ObservationsToJsonl(const std::vector<VictimObservation>& obs);
absl::StatusOr<std::vector<VictimObservation>> ParseObservationsJsonl(
    const std::string& text);

// Calibrated state shared by all attacks for one shadow-stat map.
struct AttackContext {
  const ShadowStatsMap* stats = nullptr;
  PhiKind phi = PhiKind::kLogitScale;
  std::optional<SongCalibration> song;
  std::optional<ShokriModel> shokri;
};

absl::StatusOr<AttackContext> PrepareAttacks(const ShadowStatsMap& stats,
                                             const std::vector<AttackSpec>& attacks,
                                             PhiKind phi, uint64_t seed);

// Scores the observations whose target is in ids, one row per attack and
// observation, ordered by (attack, victim, id).
absl::StatusOr<std::vector<ScoreRow>> ScoreObservations(
    const std::vector<VictimObservation>& obs,
    const std::vector<int64_t>& ids, const Dataset& dataset,
    const std::vector<AttackSpec>& attacks, const AttackContext& context);

// All and under-represented reports per attack (the latter when the rows
// contain under-group members).
absl::StatusOr<std::vector<MetricsReport>> EvaluateRows(
    const std::vector<ScoreRow>& rows, const Dataset& dataset,
    const std::vector<double>& fpr_targets, NegativesMode negatives);

struct SweepRow {
  std::string selection;
  int m = 0;
  double auroc = 0.5;
  double tpr = 0.0;  // at the first fpr target
  double mean_memorization = 0.0;
};

// LiRA at each m, re-fitting Gaussians on the first m pairs of every target.
absl::StatusOr<std::vector<SweepRow>> SweepShadows(
    const ShadowStatsMap& stats,
    const std::map<std::string, std::vector<int64_t>>& selections,
    const std::vector<VictimObservation>& obs, const Dataset& dataset,
    const std::vector<int>& m_list, PhiKind phi, double fpr_target);

std::string SweepToCsv(const std::vector<SweepRow>& rows);

// --- Commands. Each returns InvalidArgument for config errors,
// FailedPrecondition for missing upstream artifacts.

absl::Status CmdGenData(const ExperimentConfig& config);
absl::Status CmdRunShadows(const ExperimentConfig& config);
absl::Status CmdSelect(const ExperimentConfig& config);
absl::Status CmdAttack(const ExperimentConfig& config);
absl::Status CmdEvaluate(const ExperimentConfig& config);
absl::Status CmdGame(const ExperimentConfig& config);
absl::Status CmdSweepShadows(const ExperimentConfig& config,
                             const std::vector<int>& m_list);

// Artifact names inside output_dir.
inline constexpr const char* kDatasetFile = "dataset.csv";
inline constexpr const char* kShadowStatsFile = "shadow_stats.jsonl";
inline constexpr const char* kSelectionsFile = "selections.json";
inline constexpr const char* kObservationsFile = "observations.jsonl";
inline constexpr const char* kReportJsonFile = "report.json";
inline constexpr const char* kReportCsvFile = "report.csv";
inline constexpr const char* kGameFile = "game.json";
inline constexpr const char* kSweepFile = "sweep.csv";
inline constexpr const char* kRunLogFile = "run.log";

std::string ScoresFile(const std::string& selection);

}  // namespace memaudit

#endif  // MEMAUDIT_EXPERIMENT_H_
