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
#include "memaudit/metrics.h"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <numeric>

#include "absl/strings/str_cat.h"
#include "json.hpp"
#include "memaudit/stats.h"

namespace memaudit {
namespace {

absl::Status CheckInputs(std::span<const double> scores,
                         std::span<const int> labels, int64_t* pos,
                         int64_t* neg) {
  if (scores.size() != labels.size()) {
    return absl::InvalidArgumentError("scores and labels differ in length");
  }
  *pos = std::count_if(labels.begin(), labels.end(), [](int l) { return l != 0; });
  *neg = static_cast<int64_t>(labels.size()) - *pos;
  if (*pos == 0 || *neg == 0) {
    return absl::InvalidArgumentError(
        "need at least one member and one non-member");
  }
  for (double s : scores) {
    if (std::isnan(s)) return absl::InvalidArgumentError("NaN score");
  }
  return absl::OkStatus();
}

std::string FormatDouble(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

absl::StatusOr<RocCurve> Roc(std::span<const double> scores,
                             std::span<const int> labels) {
  int64_t pos, neg;
  if (auto s = CheckInputs(scores, labels, &pos, &neg); !s.ok()) return s;
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  RocCurve curve;
  curve.points.push_back({0.0, 0.0});
  curve.thresholds.push_back(std::numeric_limits<double>::infinity());
  int64_t tp = 0, fp = 0;
  for (size_t i = 0; i < order.size();) {
    const double t = scores[order[i]];
    while (i < order.size() && scores[order[i]] == t) {
      (labels[order[i]] != 0 ? tp : fp) += 1;
      ++i;
    }
    curve.points.push_back({double(fp) / neg, double(tp) / pos});
    curve.thresholds.push_back(t);
  }
  return curve;
}

absl::StatusOr<RocCurve> Roc(std::span<const AttackScore> scores,
                             std::span<const int> labels) {
  std::vector<double> s;
  s.reserve(scores.size());
  for (const auto& a : scores) s.push_back(a.score);
  return Roc(s, labels);
}

double TrapezoidArea(const RocCurve& curve) {
  double area = 0.0;
  for (size_t i = 1; i < curve.points.size(); ++i) {
    const RocPoint& a = curve.points[i - 1];
    const RocPoint& b = curve.points[i];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  return area;
}

absl::StatusOr<double> Auroc(std::span<const double> scores,
                             std::span<const int> labels) {
  int64_t pos, neg;
  if (auto s = CheckInputs(scores, labels, &pos, &neg); !s.ok()) return s;
  std::vector<double> ranks = AverageRanks(scores);
  double rank_sum = 0.0;
  for (size_t i = 0; i < ranks.size(); ++i) {
    if (labels[i] != 0) rank_sum += ranks[i];
  }
  return (rank_sum - double(pos) * double(pos + 1) / 2.0) /
         (double(pos) * double(neg));
}

absl::StatusOr<double> TprAtFpr(std::span<const double> scores,
                                std::span<const int> labels,
                                double fpr_target) {
  auto curve = Roc(scores, labels);
  if (!curve.ok()) return curve.status();
  double best = 0.0;
  for (const RocPoint& p : curve->points) {
    if (p.fpr < fpr_target) best = std::max(best, p.tpr);
  }
  return best;
}

absl::string_view PopulationName(Population p) {
  return p == Population::kAll ? "all" : "under";
}

absl::StatusOr<MetricsReport> BuildReport(
    const std::string& attack_name, Population population,
    std::span<const double> scores, std::span<const int> labels,
    std::span<const Group> groups, const std::vector<double>& fpr_targets,
    NegativesMode negatives) {
  if (scores.size() != labels.size() || scores.size() != groups.size()) {
    return absl::InvalidArgumentError("scores, labels and groups differ in length");
  }
  std::vector<double> s;
  std::vector<int> l;
  for (size_t i = 0; i < scores.size(); ++i) {
    const bool under = groups[i] == Group::kUnder;
    if (population == Population::kUnderRepresented) {
      if (labels[i] != 0 && !under) continue;
      if (labels[i] == 0 && negatives == NegativesMode::kGroup && !under) continue;
    }
    s.push_back(scores[i]);
    l.push_back(labels[i] != 0);
  }
  MetricsReport r;
  r.attack_name = attack_name;
  r.population = population;
  auto auc = Auroc(s, l);
  if (!auc.ok()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "population ", PopulationName(population), ": ", auc.status().message()));
  }
  r.auroc = *auc;
  r.n_members = std::count(l.begin(), l.end(), 1);
  r.n_nonmembers = static_cast<int64_t>(l.size()) - r.n_members;
  for (double target : fpr_targets) {
    auto tpr = TprAtFpr(s, l, target);
    if (!tpr.ok()) return tpr.status();
    r.tpr_at_fpr[target] = *tpr;
    if (GranularityLimited(r.n_nonmembers, target)) {
      r.granularity_limited.push_back(target);
    }
  }
  r.min_nonzero_fpr = 1.0 / double(r.n_nonmembers);
  auto curve = Roc(s, l);
  for (const RocPoint& p : curve->points) {
    if (p.fpr <= r.min_nonzero_fpr) r.tpr_at_min_fpr = std::max(r.tpr_at_min_fpr, p.tpr);
  }
  return r;
}

std::string ReportToJson(const MetricsReport& r) {
  nlohmann::json j;
  j["attack"] = r.attack_name;
  j["population"] = std::string(PopulationName(r.population));
  j["auroc"] = r.auroc;
  nlohmann::json tprs = nlohmann::json::array();
  for (const auto& [fpr, tpr] : r.tpr_at_fpr) tprs.push_back({{"fpr", fpr}, {"tpr", tpr}});
  j["tpr_at_fpr"] = std::move(tprs);
  j["granularity_limited"] = r.granularity_limited;
  j["min_nonzero_fpr"] = r.min_nonzero_fpr;
  j["tpr_at_min_fpr"] = r.tpr_at_min_fpr;
  j["n_members"] = r.n_members;
  j["n_nonmembers"] = r.n_nonmembers;
  return j.dump();
}

absl::StatusOr<MetricsReport> ReportFromJson(const std::string& text) {
  try {
    nlohmann::json j = nlohmann::json::parse(text);
    MetricsReport r;
    r.attack_name = j.at("attack");
    const std::string pop = j.at("population");
    if (pop == "all") {
      r.population = Population::kAll;
    } else if (pop == "under") {
      r.population = Population::kUnderRepresented;
    } else {
      return absl::InvalidArgumentError(absl::StrCat("unknown population ", pop));
    }
    r.auroc = j.at("auroc");
    for (const auto& e : j.at("tpr_at_fpr")) {
      r.tpr_at_fpr[e.at("fpr").get<double>()] = e.at("tpr").get<double>();
    }
    r.granularity_limited = j.at("granularity_limited").get<std::vector<double>>();
    r.min_nonzero_fpr = j.at("min_nonzero_fpr");
    r.tpr_at_min_fpr = j.at("tpr_at_min_fpr");
    r.n_members = j.at("n_members");
    r.n_nonmembers = j.at("n_nonmembers");
    return r;
  } catch (const nlohmann::json::exception& e) {
    return absl::InvalidArgumentError(absl::StrCat("report JSON: ", e.what()));
  }
}

std::string ReportCsvHeader() { return "method,dataset,population,auroc,tpr_at_0.001\n"; }

std::string ReportCsvRow(const MetricsReport& r, const std::string& dataset) {
  auto it = r.tpr_at_fpr.find(0.001);
  const std::string tpr = it == r.tpr_at_fpr.end() ? "" : FormatDouble(it->second);
  return absl::StrCat(r.attack_name, ",", dataset, ",", PopulationName(r.population),
                      ",", FormatDouble(r.auroc), ",", tpr, "\n");
}

}  // namespace memaudit
