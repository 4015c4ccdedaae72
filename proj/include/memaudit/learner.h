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
// Small deterministic classifiers trained with mini-batch SGD on softmax
// cross-entropy. These stand in for the shadow and target networks.

#ifndef MEMAUDIT_LEARNER_H_
#define MEMAUDIT_LEARNER_H_

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "Eigen/Dense"
#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "memaudit/synthdata.h"

namespace memaudit {

enum class Arch { kLogisticRegression, kMlp };

struct LearnerConfig {
  Arch arch = Arch::kMlp;
  int hidden_units = 64;  // kMlp only
  int epochs = 30;
  double learning_rate = 0.1;
  int batch_size = 32;
  double l2 = 0.0;
  uint64_t seed = 0;

  absl::Status Validate() const;
};

// weight is (out x in); y = weight * x + bias.
struct DenseLayer {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
};

struct TrainedModel {
  LearnerConfig config;
  // One layer for logistic regression; hidden (ReLU) + output for the MLP.
  std::vector<DenseLayer> layers;
  std::vector<int64_t> train_ids;  // sorted
  double final_train_loss = 0.0;

  int dim() const { return static_cast<int>(layers.front().weight.cols()); }
  int num_classes() const { return static_cast<int>(layers.back().weight.rows()); }
  bool AllFinite() const;
};

// Lower bound applied before taking logs of probabilities.
inline constexpr double kProbClamp = 1e-6;

template <typename Derived>
typename Derived::Scalar LogSumExp(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  const Scalar m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> Softmax(
    const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  const Scalar m = logits.maxCoeff();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> e = (logits.array() - m).exp();
  return e / e.sum();
}

// Index of the largest entry; ties go to the lowest index.
template <typename Derived>
int ArgMax(const Eigen::MatrixBase<Derived>& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization from config.seed.
TrainedModel InitModel(int dim, int num_classes, const LearnerConfig& config);

absl::StatusOr<TrainedModel> Train(const Dataset& dataset,
                                   const LearnerConfig& config);

absl::StatusOr<Eigen::VectorXd> Logits(const TrainedModel& model,
                                       const Eigen::VectorXd& x);
absl::StatusOr<Eigen::VectorXd> Probabilities(const TrainedModel& model,
                                              const Eigen::VectorXd& x);
// -log softmax[y], computed stably from the logits.
absl::StatusOr<double> Loss(const TrainedModel& model,
                            const LabeledExample& example);
absl::StatusOr<int> Predict(const TrainedModel& model, const Eigen::VectorXd& x);
// Hidden ReLU activations for the MLP; x itself for logistic regression.
absl::StatusOr<Eigen::VectorXd> Penultimate(const TrainedModel& model,
                                            const Eigen::VectorXd& x);

// Row-batched forward pass without dimension checks: rows of x are inputs,
// rows of the result are logits.
Eigen::MatrixXd ForwardLogits(const TrainedModel& model, const Eigen::MatrixXd& x);

// Mean cross-entropy over the rows of x plus 0.5 * l2 * |weights|^2
// (biases excluded). Fills *grad with one entry per layer when non-null.
double LossAndGradient(const TrainedModel& model, const Eigen::MatrixXd& x,
                       const std::vector<int>& labels, double l2,
                       std::vector<DenseLayer>* grad);

// JSON weight dump with config echo; doubles are written in shortest
// round-trip form so a save/load cycle is bit-exact.
std::string ModelToJson(const TrainedModel& model);
absl::StatusOr<TrainedModel> ModelFromJson(const std::string& text);
absl::Status SaveModel(const TrainedModel& model, const std::string& path);
absl::StatusOr<TrainedModel> LoadModel(const std::string& path);

}  // namespace memaudit

#endif  // MEMAUDIT_LEARNER_H_
