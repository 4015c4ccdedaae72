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
#ifndef MEMAUDIT_TESTS_ORACLES_H_
#define MEMAUDIT_TESTS_ORACLES_H_

// Brute-force reference implementations shared by the unit tests and the
// acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "memaudit/random.h"

namespace memaudit::testing {

// Adaptive Simpson on [a, b].
inline double Simpson(const std::function<double(double)>& f, double a, double b,
               double fa, double fm, double fb, double whole, double eps,
               int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6 * (fa + 4 * flm + fm);
  const double right = (b - m) / 6 * (fm + 4 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15 * eps) {
    return left + right + (left + right - whole) / 15;
  }
  return Simpson(f, a, m, fa, flm, fm, left, eps / 2, depth - 1) +
         Simpson(f, m, b, fm, frm, fb, right, eps / 2, depth - 1);
}

inline double Integrate(const std::function<double(double)>& f, double a, double b) {
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return Simpson(f, a, b, fa, fm, fb, (b - a) / 6 * (fa + 4 * fm + fb), 1e-12, 50);
}

inline double NormalPdf(double x, double mu, double var) {
  return std::exp(-0.5 * (x - mu) * (x - mu) / var) / std::sqrt(2 * std::numbers::pi * var);
}

// Half the integral of (sqrt p - sqrt q)^2.
inline double HellingerSqQuadrature(double mu0, double var0, double mu1, double var1) {
  const double lo = std::min(mu0 - 40 * std::sqrt(var0), mu1 - 40 * std::sqrt(var1));
  const double hi = std::max(mu0 + 40 * std::sqrt(var0), mu1 + 40 * std::sqrt(var1));
  auto f = [&](double x) {
    const double d = std::sqrt(NormalPdf(x, mu0, var0)) - std::sqrt(NormalPdf(x, mu1, var1));
    return 0.5 * d * d;
  };
  // Split so the adaptive rule sees both modes.
  std::vector<double> cuts = {lo, std::min(mu0, mu1), std::max(mu0, mu1), hi};
  double total = 0;
  for (size_t i = 0; i + 1 < cuts.size(); ++i) {
    if (cuts[i + 1] > cuts[i]) total += Integrate(f, cuts[i], cuts[i + 1]);
  }
  return total;
}

// Concordant member/non-member pairs, ties counted as one half.
inline double PairCountAuroc(const std::vector<double>& s, const std::vector<int>& y) {
  double concordant = 0;
  int64_t pairs = 0;
  for (size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      ++pairs;
      if (s[i] > s[j]) concordant += 1;
      if (s[i] == s[j]) concordant += 0.5;
    }
  }
  return concordant / pairs;
}

// Every threshold t (each score plus +inf), members predicted by score >= t.
inline double SweepTprAtFpr(const std::vector<double>& s, const std::vector<int>& y, double target) {
  int64_t pos = std::count(y.begin(), y.end(), 1), neg = y.size() - pos;
  std::vector<double> thresholds(s.begin(), s.end());
  thresholds.push_back(std::numeric_limits<double>::infinity());
  double best = 0;
  for (double t : thresholds) {
    int64_t tp = 0, fp = 0;
    for (size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= t) (y[i] ? tp : fp)++;
    }
    if (static_cast<double>(fp) / neg < target) best = std::max(best, double(tp) / pos);
  }
  return best;
}

struct Instance {
  std::vector<double> scores;
  std::vector<int> labels;
};

inline Instance RandomInstance(Rng& rng) {
  std::uniform_int_distribution<int> size(2, 200);
  std::uniform_int_distribution<int> coarse(0, 9);
  std::normal_distribution<double> n01;
  Instance inst;
  const int n = size(rng);
  const bool ties = coarse(rng) < 5;
  for (int i = 0; i < n; ++i) {
    inst.labels.push_back(coarse(rng) < 4 ? 1 : 0);
    const double shift = inst.labels.back() ? 0.7 : 0.0;
    inst.scores.push_back(ties ? coarse(rng) + 3 * shift : n01(rng) + shift);
  }
  inst.labels[0] = 1;
  inst.labels[1] = 0;
  return inst;
}

}  // namespace memaudit::testing

#endif  // MEMAUDIT_TESTS_ORACLES_H_
