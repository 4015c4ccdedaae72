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
#include "memaudit/stats.h"

#include <algorithm>
#include <limits>
#include <numeric>

namespace memaudit {
namespace {

absl::Status CheckOutcome(int o, const DiscreteDist& p0, const DiscreteDist& p1) {
  if (p0.size() != p1.size()) {
    return absl::InvalidArgumentError("distributions have different alphabets");
  }
  if (o < 0 || o >= p0.size()) {
    return absl::InvalidArgumentError(absl::StrCat("outcome ", o, " out of range"));
  }
  if (p0(o) == 0.0 && p1(o) == 0.0) {
    return absl::InvalidArgumentError(
        absl::StrCat("outcome ", o, " has zero mass under both hypotheses"));
  }
  return absl::OkStatus();
}

double AcceptProb(double a, double b) {
  const double sa = std::sqrt(a), sb = std::sqrt(b);
  return sa / (sa + sb);
}

double Pearson(std::span<const double> a, std::span<const double> b) {
  const size_t n = a.size();
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

McEstimate DifferenceOfRates(int64_t hits0, int64_t hits1, int64_t trials) {
  const double r0 = double(hits0) / trials, r1 = double(hits1) / trials;
  return {r0 - r1,
          std::sqrt(r0 * (1 - r0) / trials + r1 * (1 - r1) / trials), trials};
}

}  // namespace

absl::StatusOr<DiscreteDist> DiscreteDist::Create(Eigen::VectorXd probs) {
  if (probs.size() == 0) return absl::InvalidArgumentError("empty distribution");
  if ((probs.array() < 0.0).any() || !probs.allFinite()) {
    return absl::InvalidArgumentError("probabilities must be finite and >= 0");
  }
  if (std::abs(probs.sum() - 1.0) > 1e-12) {
    return absl::InvalidArgumentError(
        absl::StrCat("probabilities sum to ", probs.sum(), ", not 1"));
  }
  return DiscreteDist(std::move(probs));
}

DiscreteDist DiscreteDist::Bernoulli(double p) {
  Eigen::VectorXd v(2);
  v << 1.0 - p, p;
  return DiscreteDist(std::move(v));
}

int DiscreteDist::Sample(Rng& rng) const {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = u(rng);
  for (int i = 0; i < size(); ++i) {
    r -= probs_[i];
    if (r < 0.0) return i;
  }
  // Rounding left r >= 0; return the last outcome with positive mass.
  for (int i = size() - 1; i >= 0; --i) {
    if (probs_[i] > 0.0) return i;
  }
  return size() - 1;
}

absl::StatusOr<double> Llr(std::span<const int> sequence, const DiscreteDist& p0,
                           const DiscreteDist& p1) {
  double sum = 0.0;
  for (int o : sequence) {
    if (auto s = CheckOutcome(o, p0, p1); !s.ok()) return s;
    sum += std::log(p0(o)) - std::log(p1(o));
  }
  return sum;
}

absl::StatusOr<double> SllrAcceptProb(int outcome, const DiscreteDist& p0,
                                      const DiscreteDist& p1) {
  if (auto s = CheckOutcome(outcome, p0, p1); !s.ok()) return s;
  return AcceptProb(p0(outcome), p1(outcome));
}

double SllrAdvantageAnalytic(const DiscreteDist& p0, const DiscreteDist& p1) {
  double adv = 0.0;
  for (int o = 0; o < p0.size(); ++o) {
    if (p0(o) == 0.0 && p1(o) == 0.0) continue;
    adv += (p0(o) - p1(o)) * AcceptProb(p0(o), p1(o));
  }
  return adv;
}

McEstimate SllrAdvantageMc(const DiscreteDist& p0, const DiscreteDist& p1,
                           int64_t trials, uint64_t seed) {
  return AdvantageMc(MakeSllrTest(p0, p1), p0, p1, 1, trials, seed);
}

HypothesisTest MakeLlrThresholdTest(DiscreteDist p0, DiscreteDist p1,
                                    double kappa) {
  return [p0 = std::move(p0), p1 = std::move(p1), kappa](
             std::span<const int> seq, Rng&) {
    auto llr = Llr(seq, p0, p1);
    return (llr.ok() && *llr >= kappa) ? 0 : 1;
  };
}

HypothesisTest MakeSllrTest(DiscreteDist p0, DiscreteDist p1) {
  return [p0 = std::move(p0), p1 = std::move(p1)](std::span<const int> seq,
                                                  Rng& rng) {
    auto llr = Llr(seq, p0, p1);
    if (!llr.ok()) return 1;
    double g;
    if (*llr == std::numeric_limits<double>::infinity()) {
      g = 1.0;
    } else if (*llr == -std::numeric_limits<double>::infinity()) {
      g = 0.0;
    } else {
      // e / (1 + e) with e = exp(llr / 2), written as a logistic.
      g = 1.0 / (1.0 + std::exp(-0.5 * *llr));
    }
    std::uniform_real_distribution<double> u(0.0, 1.0);
    return u(rng) < g ? 0 : 1;
  };
}

McEstimate AdvantageMc(const HypothesisTest& test, const DiscreteDist& p0,
                       const DiscreteDist& p1, int n, int64_t trials,
                       uint64_t seed) {
  if (trials < 1 || n < 1) return {0.0, 0.0, 0};
  Rng rng(seed);
  std::vector<int> seq(n);
  int64_t zero_under_p0 = 0, zero_under_p1 = 0;
  for (int64_t t = 0; t < trials; ++t) {
    for (int i = 0; i < n; ++i) seq[i] = p0.Sample(rng);
    zero_under_p0 += test(seq, rng) == 0;
    for (int i = 0; i < n; ++i) seq[i] = p1.Sample(rng);
    zero_under_p1 += test(seq, rng) == 0;
  }
  return DifferenceOfRates(zero_under_p0, zero_under_p1, trials);
}

double HellingerSqDiscrete(const DiscreteDist& p0, const DiscreteDist& p1) {
  double affinity = 0.0;
  for (int o = 0; o < p0.size(); ++o) affinity += std::sqrt(p0(o) * p1(o));
  return std::clamp(1.0 - affinity, 0.0, 1.0);
}

double HellingerSqBernoulliPair(double p0, double p1) {
  const double affinity =
      std::sqrt(p0 * p1) + std::sqrt((1.0 - p0) * (1.0 - p1));
  return std::clamp(1.0 - affinity, 0.0, 1.0);
}

absl::StatusOr<int64_t> SampleComplexity(double h2, double c) {
  if (!(h2 > 0.0)) {
    return absl::InvalidArgumentError(
        "h2 must be > 0: identical distributions cannot be told apart");
  }
  if (!(c > 0.0)) return absl::InvalidArgumentError("c must be > 0");
  const double h = std::min(h2, 1.0);
  // The slack keeps exact quotients such as 1 / 0.2 from rounding up.
  return static_cast<int64_t>(std::ceil(c / h - 1e-9));
}

absl::StatusOr<SampleComplexityRange> PlanSampleComplexity(double h2) {
  SampleComplexityRange r;
  for (auto [c, out] : {std::pair{0.5, &r.low}, {1.0, &r.mid}, {2.0, &r.high}}) {
    auto m = SampleComplexity(h2, c);
    if (!m.ok()) return m.status();
    *out = *m;
  }
  return r;
}

std::vector<double> AverageRanks(std::span<const double> values) {
  const size_t n = values.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (size_t i = 0; i < n;) {
    size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = 0.5 * double(i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

absl::StatusOr<SpearmanResult> Spearman(std::span<const double> xs,
                                        std::span<const double> ys,
                                        int permutations, uint64_t seed) {
  if (xs.size() != ys.size()) {
    return absl::InvalidArgumentError("spearman inputs differ in length");
  }
  if (xs.size() < 3) {
    return absl::InvalidArgumentError("spearman needs at least 3 points");
  }
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; });
  };
  if (constant(xs) || constant(ys)) {
    return absl::InvalidArgumentError("spearman input is constant");
  }
  std::vector<double> rx = AverageRanks(xs), ry = AverageRanks(ys);
  SpearmanResult result;
  result.rho = Pearson(rx, ry);
  result.permutations = std::max(permutations, 0);
  if (result.permutations == 0) return result;
  Rng rng(seed);
  int64_t extreme = 0;
  const double observed = std::abs(result.rho) - 1e-12;
  std::vector<double> shuffled = ry;
  for (int p = 0; p < result.permutations; ++p) {
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    if (std::abs(Pearson(rx, shuffled)) >= observed) ++extreme;
  }
  result.p_value = double(1 + extreme) / double(1 + result.permutations);
  return result;
}

}  // namespace memaudit
