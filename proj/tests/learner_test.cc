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
#include "memaudit/learner.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <random>
#include <string>
#include <vector>

#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "memaudit/random.h"
#include "test_util.h"

namespace memaudit {
namespace {

using ::testing::HasSubstr;

// Two Gaussian blobs in 2-D, labels 0/1.
Dataset Blobs(int n, double separation, uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n01;
  Dataset ds;
  ds.num_classes = 2;
  ds.dim = 2;
  for (int i = 0; i < n; ++i) {
    const int y = i % 2;
    Eigen::VectorXd x(2);
    x << n01(rng) + (y ? separation : -separation), n01(rng);
    ds.examples.push_back({i, x, y, Group::kOver});
  }
  return ds;
}

Eigen::MatrixXd Features(const Dataset& ds) {
  Eigen::MatrixXd x(ds.size(), ds.dim);
  for (size_t i = 0; i < ds.size(); ++i) x.row(i) = ds.examples[i].features.transpose();
  return x;
}

std::vector<int> Labels(const Dataset& ds) {
  std::vector<int> y;
  for (const auto& e : ds.examples) y.push_back(e.label);
  return y;
}

// Newton's method on the binary logistic objective
//   mean log-loss + 0.5 * ridge * |w|^2   (intercept unpenalized).
struct NewtonFit {
  Eigen::VectorXd w;  // intercept last
  double objective = 0;
};

NewtonFit NewtonLogistic(const Eigen::MatrixXd& x, const std::vector<int>& y, double ridge) {
  const int n = x.rows(), d = x.cols();
  Eigen::MatrixXd a(n, d + 1);
  a << x, Eigen::VectorXd::Ones(n);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d + 1);
  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(d + 1, ridge);
  penalty[d] = 0;
  auto objective = [&](const Eigen::VectorXd& v) {
    double total = 0;
    for (int i = 0; i < n; ++i) {
      const double z = a.row(i).dot(v);
      total += y[i] ? std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    }
    return total / n + 0.5 * (penalty.array() * v.array().square()).sum();
  };
  for (int it = 0; it < 100; ++it) {
    Eigen::VectorXd grad = penalty.cwiseProduct(w);
    Eigen::MatrixXd hess = Eigen::MatrixXd(penalty.asDiagonal());
    for (int i = 0; i < n; ++i) {
      const double p = 1 / (1 + std::exp(-a.row(i).dot(w)));
      grad += (p - y[i]) * a.row(i).transpose() / n;
      hess += p * (1 - p) * a.row(i).transpose() * a.row(i) / n;
    }
    const Eigen::VectorXd step = hess.ldlt().solve(grad);
    w -= step;
    if (step.norm() < 1e-13) break;
  }
  return {w, objective(w)};
}

TEST(LearnerConfigTest, Validation) {
  LearnerConfig c;
  EXPECT_OK(c.Validate());
  c.epochs = 0;
  EXPECT_FALSE(c.Validate().ok());
  c = LearnerConfig{};
  c.learning_rate = 0;
  EXPECT_FALSE(c.Validate().ok());
  c = LearnerConfig{};
  c.batch_size = 0;
  EXPECT_FALSE(c.Validate().ok());
  c = LearnerConfig{};
  c.l2 = -1;
  EXPECT_FALSE(c.Validate().ok());
}

TEST(SoftmaxTest, UniformAndTies) {
  Eigen::VectorXd zeros = Eigen::VectorXd::Zero(10);
  Eigen::VectorXd p = Softmax(zeros);
  for (int i = 0; i < 10; ++i) EXPECT_DOUBLE_EQ(p[i], 0.1);
  EXPECT_EQ(ArgMax(Eigen::Vector3d(1, 3, 3)), 1);
  EXPECT_EQ(ArgMax(Eigen::Vector3d(2, 2, 2)), 0);
  Eigen::VectorXd big(3);
  big << 1000, 1001, -1000;
  EXPECT_NEAR(Softmax(big).sum(), 1.0, 1e-12);
  EXPECT_NEAR(LogSumExp(big), 1001 + std::log1p(std::exp(-1.0)), 1e-12);
}

TEST(LearnerTest, GradientMatchesFiniteDifferences) {
  Rng rng(3);
  std::normal_distribution<double> n01;
  for (Arch arch : {Arch::kLogisticRegression, Arch::kMlp}) {
    LearnerConfig cfg;
    cfg.arch = arch;
    cfg.hidden_units = 5;
    cfg.seed = 17;
    TrainedModel model = InitModel(4, 3, cfg);
    Eigen::MatrixXd x(6, 4);
    for (int i = 0; i < x.size(); ++i) x.data()[i] = n01(rng);
    std::vector<int> y = {0, 1, 2, 1, 0, 2};
    const double l2 = 0.03;
    std::vector<DenseLayer> grad;
    LossAndGradient(model, x, y, l2, &grad);
    const double h = 1e-5;
    for (size_t l = 0; l < model.layers.size(); ++l) {
      for (int k = 0; k < model.layers[l].weight.size() + model.layers[l].bias.size(); ++k) {
        const bool is_w = k < model.layers[l].weight.size();
        auto param = [&](TrainedModel& m) -> double& {
          return is_w ? m.layers[l].weight.data()[k]
                      : m.layers[l].bias.data()[k - m.layers[l].weight.size()];
        };
        TrainedModel plus = model, minus = model;
        param(plus) += h;
        param(minus) -= h;
        const double numeric = (LossAndGradient(plus, x, y, l2, nullptr) -
                                LossAndGradient(minus, x, y, l2, nullptr)) /
                               (2 * h);
        const double analytic = is_w ? grad[l].weight.data()[k]
                                     : grad[l].bias.data()[k - model.layers[l].weight.size()];
        EXPECT_LE(std::abs(numeric - analytic), 1e-4 * std::max(1.0, std::abs(numeric)))
            << "layer " << l << " param " << k;
      }
    }
  }
}

TEST(LearnerTest, SeparableBlobsAgreeWithConvexSolver) {
  Dataset ds = Blobs(200, 3.0, 5);
  NewtonFit oracle = NewtonLogistic(Features(ds), Labels(ds), 1e-3);
  int oracle_correct = 0;
  for (const auto& e : ds.examples) {
    const double z = oracle.w.head(2).dot(e.features) + oracle.w[2];
    oracle_correct += (z > 0) == (e.label == 1);
  }
  ASSERT_GE(oracle_correct, 198);

  LearnerConfig cfg;
  cfg.arch = Arch::kLogisticRegression;
  cfg.epochs = 50;
  cfg.seed = 2;
  ASSERT_OK_AND_ASSIGN(TrainedModel model, Train(ds, cfg));
  int correct = 0, agree = 0;
  for (const auto& e : ds.examples) {
    ASSERT_OK_AND_ASSIGN(int pred, Predict(model, e.features));
    correct += pred == e.label;
    const double z = oracle.w.head(2).dot(e.features) + oracle.w[2];
    agree += pred == (z > 0 ? 1 : 0);
  }
  EXPECT_GE(correct, 198);
  EXPECT_GE(agree, 198);
}

TEST(LearnerTest, FullBatchDescentReachesRegularizedOptimum) {
  // Overlapping blobs; a two-class softmax with penalty l2 on both weight
  // rows equals binary logistic regression with ridge l2 / 2.
  Dataset ds = Blobs(120, 0.8, 9);
  const double l2 = 0.05;
  NewtonFit oracle = NewtonLogistic(Features(ds), Labels(ds), l2 / 2);
  LearnerConfig cfg;
  cfg.arch = Arch::kLogisticRegression;
  cfg.epochs = 3000;
  cfg.batch_size = 120;
  cfg.learning_rate = 1.0;
  cfg.l2 = l2;
  ASSERT_OK_AND_ASSIGN(TrainedModel model, Train(ds, cfg));
  const double loss = LossAndGradient(model, Features(ds), Labels(ds), l2, nullptr);
  EXPECT_NEAR(loss, oracle.objective, 1e-6);
  const Eigen::VectorXd w = model.layers[0].weight.row(1) - model.layers[0].weight.row(0);
  EXPECT_NEAR(w[0], oracle.w[0], 1e-3);
  EXPECT_NEAR(w[1], oracle.w[1], 1e-3);
}

TEST(LearnerTest, SmallStepDoesNotIncreaseConvexLoss) {
  Dataset ds = Blobs(64, 1.0, 4);
  LearnerConfig cfg;
  cfg.arch = Arch::kLogisticRegression;
  cfg.seed = 8;
  cfg.epochs = 1;
  cfg.learning_rate = 1e-3;
  TrainedModel init = InitModel(2, 2, cfg);
  ASSERT_OK_AND_ASSIGN(TrainedModel after, Train(ds, cfg));
  EXPECT_LE(LossAndGradient(after, Features(ds), Labels(ds), 0, nullptr),
            LossAndGradient(init, Features(ds), Labels(ds), 0, nullptr));
}

TEST(LearnerTest, TinyLearningRateKeepsInitialization) {
  Dataset ds = Blobs(40, 1.0, 1);
  LearnerConfig cfg;
  cfg.hidden_units = 8;
  cfg.epochs = 1;
  cfg.learning_rate = 1e-12;
  TrainedModel init = InitModel(2, 2, cfg);
  ASSERT_OK_AND_ASSIGN(TrainedModel trained, Train(ds, cfg));
  for (size_t l = 0; l < init.layers.size(); ++l) {
    EXPECT_LT((trained.layers[l].weight - init.layers[l].weight).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(LearnerTest, InitializationRange) {
  LearnerConfig cfg;
  cfg.hidden_units = 50;
  TrainedModel m = InitModel(16, 10, cfg);
  EXPECT_LE(m.layers[0].weight.cwiseAbs().maxCoeff(), 1 / std::sqrt(16.0));
  EXPECT_LE(m.layers[1].weight.cwiseAbs().maxCoeff(), 1 / std::sqrt(50.0));
  EXPECT_EQ(m.dim(), 16);
  EXPECT_EQ(m.num_classes(), 10);
}

TEST(LearnerTest, DeterministicAndOrderInvariant) {
  Dataset ds = Blobs(100, 1.5, 2);
  LearnerConfig cfg;
  cfg.hidden_units = 16;
  cfg.epochs = 5;
  cfg.seed = 99;
  ASSERT_OK_AND_ASSIGN(TrainedModel a, Train(ds, cfg));
  ASSERT_OK_AND_ASSIGN(TrainedModel b, Train(ds, cfg));
  std::reverse(ds.examples.begin(), ds.examples.end());
  ASSERT_OK_AND_ASSIGN(TrainedModel c, Train(ds, cfg));
  for (size_t l = 0; l < a.layers.size(); ++l) {
    EXPECT_EQ(a.layers[l].weight, b.layers[l].weight);
    EXPECT_EQ(a.layers[l].weight, c.layers[l].weight);
    EXPECT_EQ(a.layers[l].bias, c.layers[l].bias);
  }
  EXPECT_TRUE(std::is_sorted(a.train_ids.begin(), a.train_ids.end()));
  EXPECT_EQ(a.train_ids.size(), 100u);
}

TEST(LearnerTest, PredictionInvariants) {
  Dataset ds = Blobs(60, 1.0, 6);
  LearnerConfig cfg;
  cfg.hidden_units = 8;
  cfg.epochs = 3;
  ASSERT_OK_AND_ASSIGN(TrainedModel model, Train(ds, cfg));
  EXPECT_TRUE(model.AllFinite());
  for (const auto& e : ds.examples) {
    ASSERT_OK_AND_ASSIGN(Eigen::VectorXd logits, Logits(model, e.features));
    ASSERT_OK_AND_ASSIGN(Eigen::VectorXd probs, Probabilities(model, e.features));
    ASSERT_OK_AND_ASSIGN(int pred, Predict(model, e.features));
    ASSERT_OK_AND_ASSIGN(double loss, Loss(model, e));
    EXPECT_NEAR(probs.sum(), 1.0, 1e-9);
    EXPECT_EQ(pred, ArgMax(logits));
    EXPECT_EQ(pred, ArgMax(probs));
    EXPECT_GE(loss, 0.0);
    EXPECT_NEAR(loss, -std::log(probs[e.label]), 1e-9);
    ASSERT_OK_AND_ASSIGN(Eigen::VectorXd h, Penultimate(model, e.features));
    EXPECT_EQ(h.size(), 8);
    EXPECT_GE(h.minCoeff(), 0.0);
  }
  EXPECT_FALSE(Logits(model, Eigen::VectorXd::Zero(3)).ok());

  LearnerConfig lr = cfg;
  lr.arch = Arch::kLogisticRegression;
  ASSERT_OK_AND_ASSIGN(TrainedModel linear, Train(ds, lr));
  ASSERT_OK_AND_ASSIGN(Eigen::VectorXd identity, Penultimate(linear, ds.examples[0].features));
  EXPECT_EQ(identity, ds.examples[0].features);
}

TEST(LearnerTest, ConfidentCorrectPredictionHasZeroLoss) {
  LearnerConfig cfg;
  cfg.arch = Arch::kLogisticRegression;
  TrainedModel m = InitModel(1, 2, cfg);
  m.layers[0].weight << 0, 0;
  m.layers[0].bias << 0, 800;
  ASSERT_OK_AND_ASSIGN(double loss, Loss(m, {0, Eigen::VectorXd::Zero(1), 1, Group::kOver}));
  EXPECT_EQ(loss, 0.0);
}

TEST(LearnerTest, DivergenceIsReportedWithEpochAndBatch) {
  Dataset ds = Blobs(40, 1.0, 1);
  for (auto& e : ds.examples) e.features *= 1e150;
  LearnerConfig cfg;
  cfg.arch = Arch::kLogisticRegression;
  cfg.learning_rate = 1e10;
  auto model = Train(ds, cfg);
  ASSERT_FALSE(model.ok());
  EXPECT_THAT(std::string(model.status().message()), HasSubstr("epoch"));
  EXPECT_THAT(std::string(model.status().message()), HasSubstr("batch"));
}

TEST(LearnerTest, JsonRoundTripIsBitExact) {
  Dataset ds = Blobs(50, 1.0, 3);
  LearnerConfig cfg;
  cfg.hidden_units = 7;
  cfg.epochs = 2;
  cfg.l2 = 1e-4;
  cfg.seed = 0xdeadbeefcafef00dULL;
  ASSERT_OK_AND_ASSIGN(TrainedModel model, Train(ds, cfg));
  ASSERT_OK_AND_ASSIGN(TrainedModel back, ModelFromJson(ModelToJson(model)));
  ASSERT_EQ(back.layers.size(), model.layers.size());
  for (size_t l = 0; l < model.layers.size(); ++l) {
    EXPECT_EQ(std::memcmp(back.layers[l].weight.data(), model.layers[l].weight.data(),
                          sizeof(double) * model.layers[l].weight.size()),
              0);
    EXPECT_EQ(back.layers[l].bias, model.layers[l].bias);
  }
  EXPECT_EQ(back.train_ids, model.train_ids);
  EXPECT_EQ(back.config.seed, cfg.seed);
  EXPECT_EQ(back.config.hidden_units, 7);
  EXPECT_EQ(back.config.l2, cfg.l2);
  EXPECT_EQ(back.final_train_loss, model.final_train_loss);

  const std::string path = ::testing::TempDir() + "/model.json";
  ASSERT_OK(SaveModel(model, path));
  ASSERT_OK_AND_ASSIGN(TrainedModel loaded, LoadModel(path));
  EXPECT_EQ(ModelToJson(loaded), ModelToJson(model));
  std::remove(path.c_str());

  EXPECT_FALSE(ModelFromJson("{}").ok());
  EXPECT_FALSE(ModelFromJson("not json").ok());
}

}  // namespace
}  // namespace memaudit
