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
#include <fstream>
#include <numeric>
#include <sstream>

#include "absl/strings/str_cat.h"
#include "json.hpp"
#include "memaudit/random.h"
#include "memaudit/worker_pool.h"

namespace memaudit {
namespace {

struct PairOutcome {
  double conf_in = 0, conf_out = 0;
  int hit_in = 0, hit_out = 0;
  Eigen::VectorXd probs_in, probs_out;
};

double Mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double SumSquaredDeviation(const std::vector<double>& v, double mean) {
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s;
}

double FlooredSigma(double variance) {
  return std::max(std::sqrt(std::max(variance, 0.0)), kSigmaFloor);
}

absl::StatusOr<PairOutcome> RunPair(const Dataset& dataset,
                                    const LabeledExample& target, int pair,
                                    const HarnessConfig& config,
                                    const Resampler* resampler) {
  auto models = TrainShadowPair(dataset, target, pair, config, resampler);
  if (!models.ok()) return models.status();
  PairOutcome out;
  Eigen::VectorXd p_in = Softmax(ForwardLogits(models->in, target.features.transpose()).row(0));
  Eigen::VectorXd p_out = Softmax(ForwardLogits(models->out, target.features.transpose()).row(0));
  out.conf_in = ApplyPhi(config.phi, p_in[target.label]);
  out.conf_out = ApplyPhi(config.phi, p_out[target.label]);
  out.hit_in = ArgMax(p_in) == target.label;
  out.hit_out = ArgMax(p_out) == target.label;
  if (config.record_probs) {
    out.probs_in = std::move(p_in);
    out.probs_out = std::move(p_out);
  }
  return out;
}

nlohmann::json VectorsToJson(const std::vector<Eigen::VectorXd>& vs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& v : vs) arr.push_back(std::vector<double>(v.data(), v.data() + v.size()));
  return arr;
}

}  // namespace

double ApplyPhi(PhiKind phi, double p) {
  const double q = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  if (phi == PhiKind::kRawConfidence) return q;
  return std::log(q) - std::log1p(-q);
}

absl::Status HarnessConfig::Validate() const {
  if (m < 1) return absl::InvalidArgumentError("m must be >= 1");
  if (!(subsample_fraction > 0.0 && subsample_fraction <= 1.0)) {
    return absl::InvalidArgumentError("subsample_fraction must lie in (0, 1]");
  }
  if (workers < 1) return absl::InvalidArgumentError("workers must be >= 1");
  return learner.Validate();
}

absl::Status ShadowStats::Validate() const {
  if (m < 1) return absl::InvalidArgumentError("m must be >= 1");
  if (static_cast<int>(confs_in.size()) != m ||
      static_cast<int>(confs_out.size()) != m) {
    return absl::InvalidArgumentError(absl::StrCat(
        "target ", target_id, ": expected ", m, " IN and OUT confidences, got ",
        confs_in.size(), " and ", confs_out.size()));
  }
  if (correct_in < 0 || correct_in > m || correct_out < 0 || correct_out > m) {
    return absl::InvalidArgumentError(
        absl::StrCat("target ", target_id, ": correct counts out of [0, m]"));
  }
  for (double c : confs_in) {
    if (!std::isfinite(c)) return absl::InvalidArgumentError("non-finite confidence");
  }
  for (double c : confs_out) {
    if (!std::isfinite(c)) return absl::InvalidArgumentError("non-finite confidence");
  }
  return absl::OkStatus();
}

uint64_t PairSubsampleSeed(uint64_t master_seed, int64_t target_id, int pair) {
  return MixSeed(master_seed, {Tag(SeedTag::kSubsample),
                               static_cast<uint64_t>(target_id),
                               static_cast<uint64_t>(pair)});
}

uint64_t PairLearnerSeed(uint64_t master_seed, int64_t target_id, int pair) {
  return MixSeed(master_seed, {Tag(SeedTag::kLearnerInit),
                               static_cast<uint64_t>(target_id),
                               static_cast<uint64_t>(pair)});
}

absl::StatusOr<ShadowPair> TrainShadowPair(const Dataset& dataset,
                                           const LabeledExample& target,
                                           int pair, const HarnessConfig& config,
                                           const Resampler* resampler) {
  const uint64_t sub_seed =
      PairSubsampleSeed(config.master_seed, target.id, pair);
  absl::StatusOr<Dataset> out_set;
  absl::StatusOr<Dataset> in_set;
  if (resampler != nullptr) {
    out_set = (*resampler)(MixSeed(sub_seed, {Tag(SeedTag::kResample)}));
    if (!out_set.ok()) return out_set.status();
    if (out_set->Find(target.id) != nullptr) {
      return absl::InvalidArgumentError(
          "resampled dataset reuses the target id");
    }
    in_set = *out_set;
    in_set->examples.push_back(target);
  } else {
    out_set = Subsample(dataset, config.subsample_fraction, sub_seed,
                        {target.id}, {});
    if (!out_set.ok()) return out_set.status();
    in_set = Subsample(dataset, config.subsample_fraction, sub_seed, {},
                       {target.id});
    if (!in_set.ok()) return in_set.status();
  }
  LearnerConfig lc = config.learner;
  lc.seed = PairLearnerSeed(config.master_seed, target.id, pair);
  auto in = Train(*in_set, lc);
  if (!in.ok()) {
    return absl::Status(in.status().code(),
                        absl::StrCat("target ", target.id, " pair ", pair,
                                     " IN: ", in.status().message()));
  }
  auto out = Train(*out_set, lc);
  if (!out.ok()) {
    return absl::Status(out.status().code(),
                        absl::StrCat("target ", target.id, " pair ", pair,
                                     " OUT: ", out.status().message()));
  }
  return ShadowPair{*std::move(in), *std::move(out)};
}

absl::StatusOr<ShadowStatsMap> RunHarness(const Dataset& dataset,
                                          const std::vector<int64_t>& target_ids,
                                          const HarnessConfig& config,
                                          const Resampler* resampler) {
  if (auto s = config.Validate(); !s.ok()) return s;
  std::vector<const LabeledExample*> targets;
  for (int64_t id : target_ids) {
    const LabeledExample* e = dataset.Find(id);
    if (e == nullptr) {
      return absl::NotFoundError(absl::StrCat("target ", id, " not in dataset"));
    }
    targets.push_back(e);
  }
  const size_t m = static_cast<size_t>(config.m);
  auto outcomes = ParallelMap(targets.size() * m, config.workers, [&](size_t task) {
    return RunPair(dataset, *targets[task / m], static_cast<int>(task % m),
                   config, resampler);
  });

  ShadowStatsMap result;
  for (size_t t = 0; t < targets.size(); ++t) {
    ShadowStats s;
    s.target_id = targets[t]->id;
    s.label = targets[t]->label;
    s.m = config.m;
    for (size_t j = 0; j < m; ++j) {
      auto& o = outcomes[t * m + j];
      if (!o.ok()) return o.status();
      s.confs_in.push_back(o->conf_in);
      s.confs_out.push_back(o->conf_out);
      s.hits_in.push_back(o->hit_in);
      s.hits_out.push_back(o->hit_out);
      s.correct_in += o->hit_in;
      s.correct_out += o->hit_out;
      if (config.record_probs) {
        s.probs_in.push_back(std::move(o->probs_in));
        s.probs_out.push_back(std::move(o->probs_out));
      }
    }
    result[s.target_id] = std::move(s);
  }
  FinalizeMoments(result, config.variance_mode);
  return result;
}

void RefitMoments(ShadowStats& s) {
  s.mu_in = Mean(s.confs_in);
  s.mu_out = Mean(s.confs_out);
  if (s.m >= 2) {
    s.sigma_in = FlooredSigma(SumSquaredDeviation(s.confs_in, s.mu_in) / (s.m - 1));
    s.sigma_out = FlooredSigma(SumSquaredDeviation(s.confs_out, s.mu_out) / (s.m - 1));
  } else {
    s.sigma_in = s.sigma_out = kSigmaFloor;
  }
}

void ApplyGlobalVariance(ShadowStatsMap& stats) {
  if (stats.empty()) return;
  double ss_in = 0, ss_out = 0;
  int64_t dof = 0;
  for (auto& [id, s] : stats) {
    RefitMoments(s);
    ss_in += SumSquaredDeviation(s.confs_in, s.mu_in);
    ss_out += SumSquaredDeviation(s.confs_out, s.mu_out);
    dof += s.m - 1;
  }
  double var_in, var_out;
  if (dof > 0) {
    var_in = ss_in / dof;
    var_out = ss_out / dof;
  } else {
    std::vector<double> all_in, all_out;
    for (const auto& [id, s] : stats) {
      all_in.insert(all_in.end(), s.confs_in.begin(), s.confs_in.end());
      all_out.insert(all_out.end(), s.confs_out.begin(), s.confs_out.end());
    }
    const double n = static_cast<double>(all_in.size());
    var_in = n > 1 ? SumSquaredDeviation(all_in, Mean(all_in)) / (n - 1) : 0.0;
    var_out = n > 1 ? SumSquaredDeviation(all_out, Mean(all_out)) / (n - 1) : 0.0;
  }
  for (auto& [id, s] : stats) {
    s.sigma_in = FlooredSigma(var_in);
    s.sigma_out = FlooredSigma(var_out);
  }
}

void FinalizeMoments(ShadowStatsMap& stats, VarianceMode mode) {
  int max_m = 0;
  for (auto& [id, s] : stats) {
    RefitMoments(s);
    max_m = std::max(max_m, s.m);
  }
  if (mode == VarianceMode::kGlobal && max_m < kGlobalVarianceMaxPairs) {
    ApplyGlobalVariance(stats);
  }
}

absl::StatusOr<ShadowStats> TruncatePairs(const ShadowStats& stats, int k) {
  if (k < 1 || k > stats.m) {
    return absl::InvalidArgumentError(
        absl::StrCat("cannot keep ", k, " of ", stats.m, " pairs"));
  }
  if (k == stats.m) return stats;
  if (static_cast<int>(stats.hits_in.size()) != stats.m ||
      static_cast<int>(stats.hits_out.size()) != stats.m) {
    return absl::FailedPreconditionError(absl::StrCat(
        "target ", stats.target_id, ": per-pair hits needed to truncate"));
  }
  ShadowStats t;
  t.target_id = stats.target_id;
  t.label = stats.label;
  t.m = k;
  t.confs_in.assign(stats.confs_in.begin(), stats.confs_in.begin() + k);
  t.confs_out.assign(stats.confs_out.begin(), stats.confs_out.begin() + k);
  t.hits_in.assign(stats.hits_in.begin(), stats.hits_in.begin() + k);
  t.hits_out.assign(stats.hits_out.begin(), stats.hits_out.begin() + k);
  t.correct_in = std::accumulate(t.hits_in.begin(), t.hits_in.end(), 0);
  t.correct_out = std::accumulate(t.hits_out.begin(), t.hits_out.end(), 0);
  if (static_cast<int>(stats.probs_in.size()) == stats.m) {
    t.probs_in.assign(stats.probs_in.begin(), stats.probs_in.begin() + k);
    t.probs_out.assign(stats.probs_out.begin(), stats.probs_out.begin() + k);
  }
  RefitMoments(t);
  return t;
}

absl::StatusOr<double> EstimateMemorization(const ShadowStats& stats) {
  if (stats.m <= 0) return absl::InvalidArgumentError("m must be >= 1");
  return double(stats.correct_in) / stats.m - double(stats.correct_out) / stats.m;
}

double PrivacyScore(const ShadowStats& stats) {
  const double denom =
      std::max(stats.sigma_in + stats.sigma_out, kPrivacyDenominatorFloor);
  return std::min(std::abs(stats.mu_in - stats.mu_out) / denom, kPrivacyScoreCap);
}

absl::StatusOr<std::pair<GaussianParamsd, GaussianParamsd>> FitInOutGaussians(
    const ShadowStats& stats) {
  if (stats.m < 2) {
    return absl::InvalidArgumentError("fitting Gaussians needs m >= 2");
  }
  if (auto s = stats.Validate(); !s.ok()) return s;
  const double mu_in = Mean(stats.confs_in), mu_out = Mean(stats.confs_out);
  const double sd_in =
      FlooredSigma(SumSquaredDeviation(stats.confs_in, mu_in) / (stats.m - 1));
  const double sd_out =
      FlooredSigma(SumSquaredDeviation(stats.confs_out, mu_out) / (stats.m - 1));
  return std::pair{GaussianParamsd::Scalar1D(mu_in, sd_in * sd_in),
                   GaussianParamsd::Scalar1D(mu_out, sd_out * sd_out)};
}

std::string StatsToJsonl(const ShadowStatsMap& stats) {
  std::string out;
  for (const auto& [id, s] : stats) {
    nlohmann::json j;
    j["id"] = s.target_id;
    j["m"] = s.m;
    j["confs_in"] = s.confs_in;
    j["confs_out"] = s.confs_out;
    j["correct_in"] = s.correct_in;
    j["correct_out"] = s.correct_out;
    if (s.label >= 0) j["label"] = s.label;
    if (!s.hits_in.empty()) {
      j["hits_in"] = s.hits_in;
      j["hits_out"] = s.hits_out;
    }
    if (!s.probs_in.empty()) {
      j["probs_in"] = VectorsToJson(s.probs_in);
      j["probs_out"] = VectorsToJson(s.probs_out);
    }
    out += j.dump();
    out += "\n";
  }
  return out;
}

absl::StatusOr<ShadowStatsMap> ParseStatsJsonl(const std::string& text) {
  ShadowStatsMap result;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fail = [&](absl::string_view why) {
      return absl::InvalidArgumentError(absl::StrCat("line ", line_no, ": ", why));
    };
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      ShadowStats s;
      s.target_id = j.at("id").get<int64_t>();
      s.m = j.at("m").get<int>();
      s.confs_in = j.at("confs_in").get<std::vector<double>>();
      s.confs_out = j.at("confs_out").get<std::vector<double>>();
      s.correct_in = j.at("correct_in").get<int>();
      s.correct_out = j.at("correct_out").get<int>();
      if (j.contains("label")) s.label = j["label"].get<int>();
      if (j.contains("hits_in")) {
        s.hits_in = j["hits_in"].get<std::vector<int>>();
        s.hits_out = j.at("hits_out").get<std::vector<int>>();
        if (static_cast<int>(s.hits_in.size()) != s.m ||
            static_cast<int>(s.hits_out.size()) != s.m) {
          return fail("hits arrays must have m entries");
        }
      }
      if (j.contains("probs_in")) {
        for (const char* key : {"probs_in", "probs_out"}) {
          auto& dst = key[6] == 'i' ? s.probs_in : s.probs_out;
          for (const auto& v : j.at(key)) {
            std::vector<double> p = v.get<std::vector<double>>();
            dst.push_back(Eigen::Map<Eigen::VectorXd>(p.data(), p.size()));
          }
        }
        if (static_cast<int>(s.probs_in.size()) != s.m ||
            static_cast<int>(s.probs_out.size()) != s.m) {
          return fail("probs arrays must have m entries");
        }
      }
      if (auto st = s.Validate(); !st.ok()) return fail(st.message());
      RefitMoments(s);
      if (!result.emplace(s.target_id, std::move(s)).second) {
        return fail("duplicate target id");
      }
    } catch (const nlohmann::json::exception& e) {
      return fail(e.what());
    }
  }
  return result;
}

absl::Status ExportConfidenceMatrix(const ShadowStatsMap& stats,
                                    const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) return absl::UnavailableError(absl::StrCat("cannot write ", path));
  f << StatsToJsonl(stats);
  return f ? absl::OkStatus()
           : absl::DataLossError(absl::StrCat("write failed: ", path));
}

absl::StatusOr<ShadowStatsMap> ImportConfidenceMatrix(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  std::stringstream ss;
  ss << f.rdbuf();
  auto parsed = ParseStatsJsonl(ss.str());
  if (!parsed.ok()) {
    return absl::Status(parsed.status().code(),
                        absl::StrCat(path, ": ", parsed.status().message()));
  }
  return parsed;
}

}  // namespace memaudit
