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
// Attack evaluation: ROC curves, AUROC, TPR at a fixed low FPR, and report
// assembly. Scores are oriented so that higher means "more likely member".

#ifndef MEMAUDIT_METRICS_H_
#define MEMAUDIT_METRICS_H_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"
#include "memaudit/synthdata.h"

namespace memaudit {

struct AttackScore {
  int64_t example_id = 0;
  double score = 0.0;
  std::string attack_name;
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

// points[i] is reached by predicting "member" for score >= thresholds[i].
// The first point is (0, 0) at threshold +inf.
struct RocCurve {
  std::vector<RocPoint> points;
  std::vector<double> thresholds;
};

absl::StatusOr<RocCurve> Roc(std::span<const double> scores,
                             std::span<const int> labels);
absl::StatusOr<RocCurve> Roc(std::span<const AttackScore> scores,
                             std::span<const int> labels);

// Trapezoidal area under a curve.
double TrapezoidArea(const RocCurve& curve);

// Mann-Whitney form with average ranks for ties.
absl::StatusOr<double> Auroc(std::span<const double> scores,
                             std::span<const int> labels);

// Largest TPR among thresholds whose empirical FPR is strictly below
// fpr_target; 0 when only the empty threshold qualifies.
absl::StatusOr<double> TprAtFpr(std::span<const double> scores,
                                std::span<const int> labels,
                                double fpr_target = 0.001);

// True when the negative pool is too small to resolve fpr_target.
inline bool GranularityLimited(int64_t n_nonmembers, double fpr_target) {
  return static_cast<double>(n_nonmembers) * fpr_target < 1.0;
}

enum class Population { kAll, kUnderRepresented };
enum class NegativesMode { kAll, kGroup };

absl::string_view PopulationName(Population p);

struct MetricsReport {
  std::string attack_name;
  Population population = Population::kAll;
  double auroc = 0.5;
  std::map<double, double> tpr_at_fpr;
  std::vector<double> granularity_limited;  // targets flagged as unresolvable
  double min_nonzero_fpr = 0.0;             // 1 / n_nonmembers
  double tpr_at_min_fpr = 0.0;              // largest TPR with FPR <= that
  int64_t n_members = 0;
  int64_t n_nonmembers = 0;
};

// Under kUnderRepresented, members are restricted to the under group; the
// negative pool stays whole unless negatives == kGroup.
absl::StatusOr<MetricsReport> BuildReport(
    const std::string& attack_name, Population population,
    std::span<const double> scores, std::span<const int> labels,
    std::span<const Group> groups, const std::vector<double>& fpr_targets,
    NegativesMode negatives = NegativesMode::kAll);

std::string ReportToJson(const MetricsReport& report);
absl::StatusOr<MetricsReport> ReportFromJson(const std::string& text);

// method,dataset,population,auroc,tpr_at_0.001
std::string ReportCsvHeader();
std::string ReportCsvRow(const MetricsReport& report, const std::string& dataset);

}  // namespace memaudit

#endif  // MEMAUDIT_METRICS_H_
