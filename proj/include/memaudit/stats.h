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
// Hypothesis-testing core: likelihood-ratio tests and their soft variant,
// Monte-Carlo advantage estimation, Hellinger and total-variation distances,
// the Hellinger-driven sample-complexity planner, and rank correlation.

#ifndef MEMAUDIT_STATS_H_
#define MEMAUDIT_STATS_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "Eigen/Dense"
#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/str_cat.h"
#include "memaudit/random.h"

namespace memaudit {

// Probability vector over outcomes {0, ..., size-1}.
class DiscreteDist {
 public:
  // Requires non-negative entries summing to 1 within 1e-12.
  static absl::StatusOr<DiscreteDist> Create(Eigen::VectorXd probs);
  // Outcome 1 with probability p, outcome 0 otherwise.
  static DiscreteDist Bernoulli(double p);

  const Eigen::VectorXd& probs() const { return probs_; }
  int size() const { return static_cast<int>(probs_.size()); }
  double operator()(int outcome) const { return probs_[outcome]; }
  int Sample(Rng& rng) const;

 private:
  explicit DiscreteDist(Eigen::VectorXd probs) : probs_(std::move(probs)) {}
  Eigen::VectorXd probs_;
};

// Multivariate normal N(mean, cov); the 1-D case is a 1x1 covariance.
template <typename Scalar>
struct GaussianParams {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Vector mean;
  Matrix cov;

  static GaussianParams Scalar1D(Scalar mu, Scalar variance) {
    return {Vector::Constant(1, mu), Matrix::Constant(1, 1, variance)};
  }
  int dim() const { return static_cast<int>(mean.size()); }
};

using GaussianParamsd = GaussianParams<double>;

struct McEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  int64_t trials = 0;
};

// sum_i log P0(o_i) / P1(o_i). Returns +/-inf when exactly one side assigns
// zero mass to some outcome; an error when both do.
absl::StatusOr<double> Llr(std::span<const int> sequence, const DiscreteDist& p0,
                           const DiscreteDist& p1);

// Probability that the soft LLR test answers "P0" on one outcome:
// sqrt(P0(o)) / (sqrt(P0(o)) + sqrt(P1(o))).
absl::StatusOr<double> SllrAcceptProb(int outcome, const DiscreteDist& p0,
                                      const DiscreteDist& p1);

// Exact E_{P0}[g] - E_{P1}[g] for the single-sample soft LLR test.
double SllrAdvantageAnalytic(const DiscreteDist& p0, const DiscreteDist& p1);

McEstimate SllrAdvantageMc(const DiscreteDist& p0, const DiscreteDist& p1,
                           int64_t trials, uint64_t seed);

// A (possibly randomized) test maps an outcome sequence to 0 ("drawn from
// P0") or 1 ("drawn from P1").
using HypothesisTest = std::function<int(std::span<const int>, Rng&)>;

// Outputs 0 iff LLR(sequence) >= kappa.
HypothesisTest MakeLlrThresholdTest(DiscreteDist p0, DiscreteDist p1,
                                    double kappa = 0.0);
// Outputs 0 with probability e / (1 + e), e = exp(LLR(sequence) / 2).
HypothesisTest MakeSllrTest(DiscreteDist p0, DiscreteDist p1);

// Monte-Carlo estimate of Pr_{P0^n}[T = 0] - Pr_{P1^n}[T = 0].
McEstimate AdvantageMc(const HypothesisTest& test, const DiscreteDist& p0,
                       const DiscreteDist& p1, int n, int64_t trials,
                       uint64_t seed);

// (1/2) sum (sqrt p - sqrt q)^2, evaluated as 1 - sum sqrt(p q).
double HellingerSqDiscrete(const DiscreteDist& p0, const DiscreteDist& p1);

double HellingerSqBernoulliPair(double p0, double p1);
inline double TvBernoulliPair(double p0, double p1) { return std::abs(p1 - p0); }

// Closed-form squared Hellinger distance between two normals:
//   1 - (det G0 det G1)^(1/4) / det((G0 + G1) / 2)^(1/2) * zeta,
//   zeta = exp(-(1/8) d^T ((G0 + G1) / 2)^{-1} d),  d = mu0 - mu1.
// Determinants and the solve go through Cholesky; a failed factorization or
// an asymmetric covariance is reported as non-SPD.
template <typename Scalar>
absl::StatusOr<Scalar> HellingerSqGaussian(const GaussianParams<Scalar>& g0,
                                           const GaussianParams<Scalar>& g1) {
  using Matrix = typename GaussianParams<Scalar>::Matrix;
  const int dim = g0.dim();
  if (g1.dim() != dim || g0.cov.rows() != dim || g0.cov.cols() != dim ||
      g1.cov.rows() != dim || g1.cov.cols() != dim) {
    return absl::InvalidArgumentError("Gaussian dimensions disagree");
  }
  auto log_det = [](const Matrix& cov, const char* which) -> absl::StatusOr<Scalar> {
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-10)) {
      return absl::InvalidArgumentError(absl::StrCat(which, " covariance is not symmetric"));
    }
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success) {
      return absl::InvalidArgumentError(absl::StrCat(which, " covariance is not SPD"));
    }
    const typename GaussianParams<Scalar>::Vector diag = llt.matrixLLT().diagonal();
    if (diag.minCoeff() * diag.minCoeff() < Scalar(1e-12)) {
      return absl::InvalidArgumentError(absl::StrCat(which, " covariance is near-singular"));
    }
    return Scalar(2) * diag.array().log().sum();
  };
  auto ld0 = log_det(g0.cov, "first");
  if (!ld0.ok()) return ld0.status();
  auto ld1 = log_det(g1.cov, "second");
  if (!ld1.ok()) return ld1.status();
  const Matrix avg = (g0.cov + g1.cov) / Scalar(2);
  Eigen::LLT<Matrix> llt_avg(avg);
  if (llt_avg.info() != Eigen::Success) {
    return absl::InvalidArgumentError("averaged covariance is not SPD");
  }
  const Scalar ld_avg = Scalar(2) * llt_avg.matrixLLT().diagonal().array().log().sum();
  const typename GaussianParams<Scalar>::Vector diff = g0.mean - g1.mean;
  const Scalar mahalanobis = diff.dot(llt_avg.solve(diff));
  const Scalar log_affinity = (*ld0 + *ld1) / Scalar(4) - ld_avg / Scalar(2) -
                              mahalanobis / Scalar(8);
  const Scalar h2 = Scalar(1) - std::exp(log_affinity);
  return std::clamp(h2, Scalar(0), Scalar(1));
}

// ceil(c / h2): planned number of shadow pairs for an IN/OUT distance h2.
absl::StatusOr<int64_t> SampleComplexity(double h2, double c = 1.0);

struct SampleComplexityRange {
  int64_t low = 0;   // c = 0.5
  int64_t mid = 0;   // c = 1
  int64_t high = 0;  // c = 2
};
absl::StatusOr<SampleComplexityRange> PlanSampleComplexity(double h2);

// Average (1-based) ranks; tied values share the mean of their positions.
std::vector<double> AverageRanks(std::span<const double> values);

struct SpearmanResult {
  double rho = 0.0;
  double p_value = 1.0;  // two-sided, by permutation
  int permutations = 0;
};

// Pearson correlation of average ranks, with a seeded permutation p-value
// (1 + #{|rho_perm| >= |rho|}) / (1 + permutations).
absl::StatusOr<SpearmanResult> Spearman(std::span<const double> xs,
                                        std::span<const double> ys,
                                        int permutations = 10000,
                                        uint64_t seed = 0);

}  // namespace memaudit

#endif  // MEMAUDIT_STATS_H_
