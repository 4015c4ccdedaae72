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
#include "memaudit/attacks.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <sstream>

#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_split.h"
#include "absl/strings/strip.h"
#include "memaudit/random.h"
#include "memaudit/worker_pool.h"

namespace memaudit {
namespace {

double ClampedLossFromProbs(const Eigen::VectorXd& probs, int label) {
  return -std::log(std::max(probs[label], kProbClamp));
}

double NormalLogPdf(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
}

absl::Status NeedProbs(const ShadowStats& s) {
  if (static_cast<int>(s.probs_out.size()) != s.m ||
      static_cast<int>(s.probs_in.size()) != s.m) {
    return absl::FailedPreconditionError(absl::StrCat(
        "target ", s.target_id, ": shadow probabilities were not recorded"));
  }
  return absl::OkStatus();
}

// Upper (1 - fpr) empirical quantile: the smallest value that at most a
// fraction fpr of the sample strictly exceeds.
double UpperQuantile(std::vector<double> v, double fpr) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  size_t allowed = static_cast<size_t>(std::floor(fpr * n));
  if (allowed >= n) return -std::numeric_limits<double>::infinity();
  return v[n - 1 - allowed];
}

double MspOod(const Eigen::VectorXd& probs) { return 1.0 - probs.maxCoeff(); }

}  // namespace

double YeomScoreFromProbs(const Eigen::VectorXd& probs, int label) {
  return -ClampedLossFromProbs(probs, label);
}

absl::StatusOr<AttackScore> YeomScore(const TrainedModel& model,
                                      const LabeledExample& example) {
  auto loss = Loss(model, example);
  if (!loss.ok()) return loss.status();
  return AttackScore{example.id, -*loss, "yeom"};
}

Eigen::VectorXd ShokriFeatures(const Eigen::VectorXd& probs, int label) {
  const Eigen::Index c = probs.size();
  Eigen::VectorXd f = Eigen::VectorXd::Zero(2 * c);
  f.head(c) = probs;
  f[c + label] = 1.0;
  return f;
}

absl::StatusOr<std::vector<ShokriSample>> ShokriTrainingSet(
    const ShadowStatsMap& stats) {
  std::vector<ShokriSample> out;
  for (const auto& [id, s] : stats) {
    if (auto st = NeedProbs(s); !st.ok()) return st;
    if (s.label < 0) {
      return absl::FailedPreconditionError(
          absl::StrCat("target ", id, ": label unknown"));
    }
    for (int j = 0; j < s.m; ++j) {
      out.push_back({id, ShokriFeatures(s.probs_in[j], s.label), 1});
      out.push_back({id, ShokriFeatures(s.probs_out[j], s.label), 0});
    }
  }
  return out;
}

LearnerConfig DefaultShokriLearner(uint64_t seed) {
  LearnerConfig c;
  c.arch = Arch::kMlp;
  c.hidden_units = 64;
  c.epochs = 40;
  c.learning_rate = 0.1;
  c.batch_size = 32;
  c.seed = MixSeed(seed, {Tag(SeedTag::kAttackModel)});
  return c;
}

absl::StatusOr<ShokriModel> ShokriModel::Fit(std::span<const ShokriSample> samples,
                                             const LearnerConfig& config) {
  if (samples.empty()) return absl::InvalidArgumentError("no shadow samples");
  const bool any_member = std::any_of(samples.begin(), samples.end(),
                                      [](const auto& s) { return s.is_member; });
  const bool any_non = std::any_of(samples.begin(), samples.end(),
                                   [](const auto& s) { return !s.is_member; });
  if (!any_member || !any_non) {
    return absl::InvalidArgumentError(
        "attack training set must contain members and non-members");
  }
  Dataset d;
  d.num_classes = 2;
  d.dim = static_cast<int>(samples.front().features.size());
  d.provenance = "shokri shadow features";
  int64_t next = 0;
  for (const auto& s : samples) {
    d.examples.push_back({next++, s.features, s.is_member, Group::kOver});
  }
  auto model = Train(d, config);
  if (!model.ok()) return model.status();
  return ShokriModel(*std::move(model));
}

double ShokriModel::Score(const Eigen::VectorXd& features) const {
  return Softmax(ForwardLogits(model_, features.transpose()).row(0))[1];
}

absl::StatusOr<std::vector<AttackScore>> ShokriAttack(
    std::span<const ShokriSample> shadow, std::span<const ShokriSample> victim,
    const LearnerConfig& config) {
  auto model = ShokriModel::Fit(shadow, config);
  if (!model.ok()) return model.status();
  std::vector<AttackScore> out;
  out.reserve(victim.size());
  for (const auto& v : victim) {
    if (v.features.size() != model->model().dim()) {
      return absl::InvalidArgumentError("victim feature dimension mismatch");
    }
    out.push_back({v.example_id, model->Score(v.features), "shokri"});
  }
  return out;
}

double ModifiedEntropy(const Eigen::VectorXd& probs, int label) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], 0.0, 1.0);
    if (i == label) {
      h -= (1.0 - p) * std::log(std::max(p, kProbClamp));
    } else {
      h -= p * std::log(std::max(1.0 - p, kProbClamp));
    }
  }
  return h;
}

absl::StatusOr<SongCalibration> CalibrateSong(const ShadowStatsMap& stats) {
  std::map<int, std::vector<double>> values;
  for (const auto& [id, s] : stats) {
    if (auto st = NeedProbs(s); !st.ok()) return st;
    if (s.label < 0) {
      return absl::FailedPreconditionError(
          absl::StrCat("target ", id, ": label unknown"));
    }
    for (const auto& p : s.probs_out) values[s.label].push_back(ModifiedEntropy(p, s.label));
  }
  SongCalibration cal;
  for (auto& [label, v] : values) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(ss / (v.size() - 1)) : 0.0;
    cal.per_class[label] = {mean, std::max(sd, kSigmaFloor)};
  }
  return cal;
}

absl::StatusOr<double> SongScoreFromProbs(const Eigen::VectorXd& probs,
                                          int label,
                                          const SongCalibration& calibration) {
  auto it = calibration.per_class.find(label);
  if (it == calibration.per_class.end()) {
    return absl::FailedPreconditionError(
        absl::StrCat("no entropy calibration for class ", label));
  }
  const double h = ModifiedEntropy(probs, label);
  return -(h - it->second.mean) / it->second.stddev;
}

absl::StatusOr<AttackScore> SongScore(const TrainedModel& model,
                                      const LabeledExample& example,
                                      const SongCalibration& calibration) {
  auto probs = Probabilities(model, example.features);
  if (!probs.ok()) return probs.status();
  auto s = SongScoreFromProbs(*probs, example.label, calibration);
  if (!s.ok()) return s.status();
  return AttackScore{example.id, *s, "song"};
}

absl::StatusOr<double> HardnessThreshold(const ShadowStats& stats,
                                         HardnessStat stat) {
  if (auto st = NeedProbs(stats); !st.ok()) return st;
  if (stats.label < 0) return absl::FailedPreconditionError("label unknown");
  std::vector<double> losses;
  for (const auto& p : stats.probs_out) losses.push_back(ClampedLossFromProbs(p, stats.label));
  if (stat == HardnessStat::kMean) {
    return std::accumulate(losses.begin(), losses.end(), 0.0) / losses.size();
  }
  std::sort(losses.begin(), losses.end());
  const size_t n = losses.size();
  return n % 2 ? losses[n / 2] : 0.5 * (losses[n / 2 - 1] + losses[n / 2]);
}

absl::StatusOr<double> SablayrollesScoreFromProbs(const Eigen::VectorXd& probs,
                                                  int label,
                                                  const ShadowStats& stats,
                                                  HardnessStat stat) {
  auto tau = HardnessThreshold(stats, stat);
  if (!tau.ok()) return tau.status();
  return *tau - ClampedLossFromProbs(probs, label);
}

absl::StatusOr<AttackScore> SablayrollesScore(const TrainedModel& model,
                                              const LabeledExample& example,
                                              const ShadowStats& stats,
                                              HardnessStat stat) {
  if (stats.target_id != example.id) {
    return absl::InvalidArgumentError("shadow stats belong to another example");
  }
  auto probs = Probabilities(model, example.features);
  if (!probs.ok()) return probs.status();
  auto s = SablayrollesScoreFromProbs(*probs, example.label, stats, stat);
  if (!s.ok()) return s.status();
  return AttackScore{example.id, *s, "sablayrolles"};
}

double LiraLogRatio(double obs, double mu_in, double sigma_in, double mu_out,
                    double sigma_out) {
  return NormalLogPdf(obs, mu_in, sigma_in) - NormalLogPdf(obs, mu_out, sigma_out);
}

absl::StatusOr<double> LiraScoreFromProbs(const Eigen::VectorXd& probs,
                                          int label, const ShadowStats& stats,
                                          PhiKind phi) {
  if (stats.sigma_in < kSigmaFloor || stats.sigma_out < kSigmaFloor) {
    return absl::FailedPreconditionError("shadow sigma below the variance floor");
  }
  if (label < 0 || label >= probs.size()) {
    return absl::InvalidArgumentError(absl::StrCat("label ", label, " out of range"));
  }
  return LiraLogRatio(ApplyPhi(phi, probs[label]), stats.mu_in, stats.sigma_in,
                      stats.mu_out, stats.sigma_out);
}

absl::StatusOr<AttackScore> LiraScore(const TrainedModel& model,
                                      const LabeledExample& example,
                                      const ShadowStats& stats, PhiKind phi) {
  if (stats.target_id != example.id) {
    return absl::InvalidArgumentError("shadow stats belong to another example");
  }
  auto probs = Probabilities(model, example.features);
  if (!probs.ok()) return probs.status();
  auto s = LiraScoreFromProbs(*probs, example.label, stats, phi);
  if (!s.ok()) return s.status();
  return AttackScore{example.id, *s, "lira"};
}

absl::StatusOr<int> IndicatorAdversary(const TrainedModel& model,
                                       const LabeledExample& example) {
  auto pred = Predict(model, example.features);
  if (!pred.ok()) return pred.status();
  return *pred == example.label ? 1 : 0;
}

absl::StatusOr<AdversaryKind> ParseAdversary(absl::string_view name) {
  if (name == "coin") return AdversaryKind::kCoin;
  if (name == "indicator") return AdversaryKind::kIndicator;
  if (name == "loss_gap") return AdversaryKind::kLossGap;
  if (name == "ood_gap") return AdversaryKind::kOodGap;
  if (name == "lira") return AdversaryKind::kLira;
  return absl::InvalidArgumentError(absl::StrCat("unknown adversary ", name));
}

absl::Status GameConfig::Validate() const {
  if (trials < 1) return absl::InvalidArgumentError("trials must be >= 1");
  if (!(subsample_fraction > 0.0 && subsample_fraction <= 1.0)) {
    return absl::InvalidArgumentError("subsample_fraction must lie in (0, 1]");
  }
  if (dataset.Find(target_id) == nullptr) {
    return absl::NotFoundError(absl::StrCat("target ", target_id, " not in dataset"));
  }
  const bool score_based = adversary == AdversaryKind::kLossGap ||
                           adversary == AdversaryKind::kOodGap ||
                           adversary == AdversaryKind::kLira;
  if (score_based && !calibration.has_value()) {
    return absl::FailedPreconditionError(
        "score-based adversaries need shadow calibration");
  }
  if (score_based && adversary != AdversaryKind::kLira) {
    if (auto s = NeedProbs(*calibration); !s.ok()) return s;
  }
  return learner.Validate();
}

absl::StatusOr<GameResult> PlayMiGame(const GameConfig& config) {
  if (auto s = config.Validate(); !s.ok()) return s;
  const LabeledExample& z = *config.dataset.Find(config.target_id);

  // Score used by threshold adversaries, and its OUT-calibrated threshold.
  std::function<double(const Eigen::VectorXd&)> score;
  double threshold = 0.0;
  if (config.calibration.has_value()) {
    const ShadowStats& cal = *config.calibration;
    std::vector<double> out_scores;
    switch (config.adversary) {
      case AdversaryKind::kLossGap:
        score = [label = z.label](const Eigen::VectorXd& p) {
          return -ClampedLossFromProbs(p, label);
        };
        for (const auto& p : cal.probs_out) out_scores.push_back(score(p));
        break;
      case AdversaryKind::kOodGap:
        score = [](const Eigen::VectorXd& p) { return -MspOod(p); };
        for (const auto& p : cal.probs_out) out_scores.push_back(score(p));
        break;
      case AdversaryKind::kLira:
        score = [&cal, phi = config.phi, label = z.label](const Eigen::VectorXd& p) {
          return LiraLogRatio(ApplyPhi(phi, p[label]), cal.mu_in, cal.sigma_in,
                              cal.mu_out, cal.sigma_out);
        };
        for (double c : cal.confs_out) {
          out_scores.push_back(LiraLogRatio(c, cal.mu_in, cal.sigma_in,
                                            cal.mu_out, cal.sigma_out));
        }
        break;
      default:
        break;
    }
    if (score) threshold = UpperQuantile(out_scores, config.target_fpr);
  }

  struct Trial {
    int b_c = 0;
    int b_a = 0;
  };
  auto trials = ParallelMap(
      static_cast<size_t>(config.trials), config.workers,
      [&](size_t t) -> absl::StatusOr<Trial> {
        Rng coin(MixSeed(config.seed, {Tag(SeedTag::kGameCoin), t}));
        std::bernoulli_distribution fair(0.5);
        Trial trial;
        trial.b_c = fair(coin) ? 1 : 0;
        std::set<int64_t> include;
        if (trial.b_c == 1) include.insert(z.id);
        auto train_set = Subsample(
            config.dataset, config.subsample_fraction,
            MixSeed(config.seed, {Tag(SeedTag::kSubsample), t}),
            trial.b_c == 1 ? std::set<int64_t>{} : std::set<int64_t>{z.id},
            include);
        if (!train_set.ok()) return train_set.status();
        LearnerConfig lc = config.learner;
        lc.seed = MixSeed(config.seed, {Tag(SeedTag::kLearnerInit), t});
        auto model = Train(*train_set, lc);
        if (!model.ok()) {
          return absl::Status(model.status().code(),
                              absl::StrCat("game trial ", t, ": ",
                                           model.status().message()));
        }
        switch (config.adversary) {
          case AdversaryKind::kCoin:
            trial.b_a = fair(coin) ? 1 : 0;
            break;
          case AdversaryKind::kIndicator: {
            auto bit = IndicatorAdversary(*model, z);
            if (!bit.ok()) return bit.status();
            trial.b_a = *bit;
            break;
          }
          default: {
            Eigen::VectorXd p =
                Softmax(ForwardLogits(*model, z.features.transpose()).row(0));
            trial.b_a = score(p) > threshold ? 1 : 0;
            break;
          }
        }
        return trial;
      });

  int64_t n0 = 0, n1 = 0, guess0_given0 = 0, guess0_given1 = 0;
  for (const auto& t : trials) {
    if (!t.ok()) return t.status();
    if (t->b_c == 0) {
      ++n0;
      guess0_given0 += t->b_a == 0;
    } else {
      ++n1;
      guess0_given1 += t->b_a == 0;
    }
  }
  GameResult r;
  r.trials = config.trials;
  r.trials_out = n0;
  r.trials_in = n1;
  const double r0 = n0 ? double(guess0_given0) / n0 : 0.0;
  const double r1 = n1 ? double(guess0_given1) / n1 : 0.0;
  r.advantage_estimate = r0 - r1;
  r.std_error = std::sqrt((n0 ? r0 * (1 - r0) / n0 : 0.0) +
                          (n1 ? r1 * (1 - r1) / n1 : 0.0));
  return r;
}

absl::StatusOr<McEstimate> BoundedGGap(const BoundedStatistic& g,
                                       const Dataset& dataset,
                                       int64_t target_id,
                                       const HarnessConfig& config,
                                       const Resampler* resampler) {
  if (auto s = config.Validate(); !s.ok()) return s;
  const LabeledExample* z = dataset.Find(target_id);
  if (z == nullptr) {
    return absl::NotFoundError(absl::StrCat("target ", target_id, " not in dataset"));
  }
  auto diffs = ParallelMap(
      static_cast<size_t>(config.m), config.workers,
      [&](size_t j) -> absl::StatusOr<double> {
        auto pair = TrainShadowPair(dataset, *z, static_cast<int>(j), config, resampler);
        if (!pair.ok()) return pair.status();
        const double gi = g(pair->in, *z), go = g(pair->out, *z);
        if (!std::isfinite(gi) || !std::isfinite(go)) {
          return absl::InvalidArgumentError(
              absl::StrCat("statistic is not finite at pair ", j));
        }
        return gi - go;
      });
  std::vector<double> d;
  for (auto& x : diffs) {
    if (!x.ok()) return x.status();
    d.push_back(*x);
  }
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / d.size();
  double ss = 0.0;
  for (double x : d) ss += (x - mean) * (x - mean);
  const double se = d.size() > 1 ? std::sqrt(ss / (d.size() - 1) / d.size()) : 0.0;
  return McEstimate{mean, se, static_cast<int64_t>(d.size())};
}

BoundedStatistic ClampedLossStatistic(double bound) {
  return [bound](const TrainedModel& model, const LabeledExample& z) {
    auto loss = Loss(model, z);
    if (!loss.ok()) return std::numeric_limits<double>::quiet_NaN();
    return std::clamp(*loss, 0.0, bound);
  };
}

std::string ScoresToCsv(std::span<const ScoreRow> rows) {
  std::string out = "id,attack,score,is_member\n";
  char buf[40];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.score.score);
    absl::StrAppend(&out, r.score.example_id, ",", r.score.attack_name, ",", buf,
                    ",", r.is_member, "\n");
  }
  return out;
}

absl::StatusOr<std::vector<ScoreRow>> ParseScoresCsv(const std::string& text) {
  std::vector<absl::string_view> lines = absl::StrSplit(text, '\n', absl::SkipEmpty());
  if (lines.empty() || absl::StripSuffix(lines[0], "\r") != "id,attack,score,is_member") {
    return absl::InvalidArgumentError("score CSV header must be id,attack,score,is_member");
  }
  std::vector<ScoreRow> rows;
  for (size_t i = 1; i < lines.size(); ++i) {
    std::vector<absl::string_view> c = absl::StrSplit(absl::StripSuffix(lines[i], "\r"), ',');
    ScoreRow r;
    if (c.size() != 4 || !absl::SimpleAtoi(c[0], &r.score.example_id) ||
        !absl::SimpleAtod(c[2], &r.score.score) ||
        !absl::SimpleAtoi(c[3], &r.is_member)) {
      return absl::InvalidArgumentError(absl::StrCat("score CSV line ", i + 1, " is malformed"));
    }
    r.score.attack_name = std::string(c[1]);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace memaudit
