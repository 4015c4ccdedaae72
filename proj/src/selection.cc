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
#include "memaudit/selection.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "absl/strings/str_cat.h"
#include "json.hpp"
#include "memaudit/random.h"

namespace memaudit {

absl::string_view StrategyName(SelectionStrategy s) {
  switch (s) {
    case SelectionStrategy::kRandom:
      return "random";
    case SelectionStrategy::kSubpopulation:
      return "subpopulation";
    case SelectionStrategy::kSingleton:
      return "singleton";
  }
  return "unknown";
}

absl::StatusOr<SelectionStrategy> ParseStrategy(absl::string_view name) {
  if (name == "random") return SelectionStrategy::kRandom;
  if (name == "subpopulation") return SelectionStrategy::kSubpopulation;
  if (name == "singleton") return SelectionStrategy::kSingleton;
  return absl::InvalidArgumentError(absl::StrCat("unknown selection strategy ", name));
}

absl::Status SelectionSpec::Validate() const {
  if (k < 1) return absl::InvalidArgumentError("k must be >= 1");
  if (pca_dims < 1) return absl::InvalidArgumentError("pca_dims must be >= 1");
  if (k_clusters < 1) return absl::InvalidArgumentError("k_clusters must be >= 1");
  if (!(mem_threshold > 0.0 && mem_threshold <= 1.0)) {
    return absl::InvalidArgumentError("mem_threshold must lie in (0, 1]");
  }
  return absl::OkStatus();
}

absl::StatusOr<std::vector<int64_t>> SelectRandom(const Dataset& dataset,
                                                  Group group, int k,
                                                  uint64_t seed) {
  std::vector<int64_t> pool = dataset.IdsInGroup(group);
  if (pool.empty()) {
    return absl::FailedPreconditionError(
        absl::StrCat("group ", GroupName(group), " is empty"));
  }
  if (k < 1) return absl::InvalidArgumentError("k must be >= 1");
  if (static_cast<size_t>(k) > pool.size()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "k=", k, " exceeds group ", GroupName(group), " size ", pool.size()));
  }
  std::sort(pool.begin(), pool.end());
  Rng rng(MixSeed(seed, {Tag(SeedTag::kSelection)}));
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

Eigen::MatrixXd PcaProjection::Transform(const Eigen::MatrixXd& x) const {
  return (x.rowwise() - mean.transpose()) * components;
}

absl::StatusOr<PcaProjection> PcaFit(const Eigen::MatrixXd& x, int dims) {
  if (x.rows() < 1) return absl::InvalidArgumentError("no points");
  if (dims < 1 || dims > x.cols()) {
    return absl::InvalidArgumentError(
        absl::StrCat("dims=", dims, " outside [1, ", x.cols(), "]"));
  }
  PcaProjection p;
  p.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - p.mean.transpose();
  const Eigen::MatrixXd cov =
      centered.transpose() * centered / std::max<Eigen::Index>(x.rows() - 1, 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) {
    return absl::InternalError("covariance eigendecomposition failed");
  }
  const Eigen::VectorXd& values = solver.eigenvalues();  // ascending
  const double top = std::max(values.maxCoeff(), 0.0);
  const double tol = top * 1e-12 * x.cols();
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = values.size() - 1; i >= 0 && (int)keep.size() < dims; --i) {
    if (values[i] > tol) keep.push_back(i);
  }
  if (keep.empty()) return absl::InvalidArgumentError("features have zero variance");
  p.components.resize(x.cols(), keep.size());
  p.eigenvalues.resize(keep.size());
  for (size_t c = 0; c < keep.size(); ++c) {
    Eigen::VectorXd v = solver.eigenvectors().col(keep[c]);
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
    p.components.col(c) = v;
    p.eigenvalues[c] = values[keep[c]];
  }
  return p;
}

namespace {

void Assign(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centers,
            std::vector<int>& assignments, double& inertia) {
  inertia = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (Eigen::Index c = 0; c < centers.rows(); ++c) {
      const double d = (points.row(i) - centers.row(c)).squaredNorm();
      if (d < best) {
        best = d;
        arg = static_cast<int>(c);
      }
    }
    assignments[i] = arg;
    inertia += best;
  }
}

}  // namespace

absl::StatusOr<KMeansResult> KMeans(const Eigen::MatrixXd& points, int k,
                                    uint64_t seed) {
  const Eigen::Index n = points.rows();
  if (k < 1) return absl::InvalidArgumentError("k must be >= 1");
  if (n < k) {
    return absl::InvalidArgumentError(
        absl::StrCat("fewer points (", n, ") than clusters (", k, ")"));
  }
  Rng rng(MixSeed(seed, {Tag(SeedTag::kSelection), 1}));
  KMeansResult r;
  r.centers.resize(k, points.cols());

  // k-means++ seeding.
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  r.centers.row(0) = points.row(first(rng));
  Eigen::VectorXd d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2[i] = (points.row(i) - r.centers.row(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    Eigen::Index pick = c;  // all points already coincide with a center
    if (d2.sum() > 0.0) {
      std::discrete_distribution<Eigen::Index> weighted(d2.data(), d2.data() + n);
      pick = weighted(rng);
    }
    r.centers.row(c) = points.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (points.row(i) - r.centers.row(c)).squaredNorm());
    }
  }

  r.assignments.assign(n, -1);
  double inertia = 0.0;
  Assign(points, r.centers, r.assignments, inertia);
  r.inertia_history.push_back(inertia);
  for (r.iterations = 0; r.iterations < kKMeansMaxIterations; ++r.iterations) {
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
    std::vector<int> counts(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(r.assignments[i]) += points.row(i);
      ++counts[r.assignments[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) r.centers.row(c) = sums.row(c) / counts[c];
    }
    std::vector<int> next(n);
    Assign(points, r.centers, next, inertia);
    r.inertia_history.push_back(inertia);
    if (next == r.assignments) break;
    r.assignments = std::move(next);
  }
  return r;
}

absl::StatusOr<std::vector<int64_t>> SelectSubpopulationFromFeatures(
    const Dataset& dataset, const Eigen::MatrixXd& features, int pca_dims,
    int k_clusters, uint64_t seed) {
  if (features.rows() != static_cast<Eigen::Index>(dataset.size())) {
    return absl::InvalidArgumentError("feature rows do not match the dataset");
  }
  if (dataset.size() < static_cast<size_t>(k_clusters)) {
    return absl::InvalidArgumentError("fewer samples than clusters");
  }
  auto pca = PcaFit(features, std::min<int>(pca_dims, features.cols()));
  if (!pca.ok()) return pca.status();
  auto km = KMeans(pca->Transform(features), k_clusters, seed);
  if (!km.ok()) return km.status();
  std::vector<int> sizes(k_clusters, 0);
  for (int a : km->assignments) ++sizes[a];
  int smallest = 0;
  for (int c = 1; c < k_clusters; ++c) {
    if (sizes[c] < sizes[smallest]) smallest = c;
  }
  std::vector<int64_t> ids;
  for (size_t i = 0; i < dataset.size(); ++i) {
    if (km->assignments[i] == smallest && dataset.examples[i].group == Group::kUnder) {
      ids.push_back(dataset.examples[i].id);
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

absl::StatusOr<std::vector<int64_t>> SelectSubpopulation(
    const Dataset& dataset, const TrainedModel& feature_model, int pca_dims,
    int k_clusters, uint64_t seed) {
  if (dataset.dim != feature_model.dim()) {
    return absl::InvalidArgumentError("feature model dimension mismatch");
  }
  Eigen::MatrixXd feats;
  for (size_t i = 0; i < dataset.size(); ++i) {
    auto h = Penultimate(feature_model, dataset.examples[i].features);
    if (!h.ok()) return h.status();
    if (i == 0) feats.resize(dataset.size(), h->size());
    feats.row(i) = h->transpose();
  }
  return SelectSubpopulationFromFeatures(dataset, feats, pca_dims, k_clusters, seed);
}

std::vector<int64_t> SelectSingletons(const std::map<int64_t, double>& mem_scores,
                                      double threshold) {
  std::vector<int64_t> ids;
  for (const auto& [id, score] : mem_scores) {
    if (score > threshold) ids.push_back(id);
  }
  return ids;
}

double MspOodFromLogits(const Eigen::VectorXd& logits) {
  return 1.0 - Softmax(logits).maxCoeff();
}

double EnergyOodFromLogits(const Eigen::VectorXd& logits) {
  return -LogSumExp(logits);
}

absl::StatusOr<double> MspOodScore(const TrainedModel& model,
                                   const Eigen::VectorXd& x) {
  auto logits = Logits(model, x);
  if (!logits.ok()) return logits.status();
  return MspOodFromLogits(*logits);
}

absl::StatusOr<double> EnergyOodScore(const TrainedModel& model,
                                      const Eigen::VectorXd& x) {
  auto logits = Logits(model, x);
  if (!logits.ok()) return logits.status();
  return EnergyOodFromLogits(*logits);
}

absl::StatusOr<OodScore> ScoreOod(const TrainedModel& model,
                                  const LabeledExample& example) {
  auto logits = Logits(model, example.features);
  if (!logits.ok()) return logits.status();
  return OodScore{example.id, MspOodFromLogits(*logits), EnergyOodFromLogits(*logits)};
}

std::string SelectionToJson(const SelectionSpec& spec,
                            const std::vector<int64_t>& ids) {
  nlohmann::ordered_json j;
  j["strategy"] = std::string(StrategyName(spec.strategy));
  j["ids"] = ids;
  nlohmann::ordered_json params;
  switch (spec.strategy) {
    case SelectionStrategy::kRandom:
      params["group"] = std::string(GroupName(spec.group));
      params["k"] = spec.k;
      params["seed"] = spec.seed;
      break;
    case SelectionStrategy::kSubpopulation:
      params["pca_dims"] = spec.pca_dims;
      params["k_clusters"] = spec.k_clusters;
      params["seed"] = spec.seed;
      break;
    case SelectionStrategy::kSingleton:
      params["mem_threshold"] = spec.mem_threshold;
      break;
  }
  j["params"] = params;
  return j.dump(2);
}

}  // namespace memaudit
