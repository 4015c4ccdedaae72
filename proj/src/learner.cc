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
#include <fstream>
#include <numeric>
#include <sstream>

#include "absl/strings/str_cat.h"
#include "json.hpp"
#include "memaudit/random.h"

namespace memaudit {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

absl::Status CheckDim(const TrainedModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.dim()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "input has dimension ", x.size(), ", model expects ", model.dim()));
  }
  return absl::OkStatus();
}

// Pre-activations of every layer for a row batch.
std::vector<Eigen::MatrixXd> ForwardAll(const TrainedModel& model,
                                        const Eigen::MatrixXd& x) {
  std::vector<Eigen::MatrixXd> z;
  z.reserve(model.layers.size());
  Eigen::MatrixXd a = x;
  for (size_t l = 0; l < model.layers.size(); ++l) {
    const DenseLayer& layer = model.layers[l];
    Eigen::MatrixXd pre = a * layer.weight.transpose();
    pre.rowwise() += layer.bias.transpose();
    if (l + 1 < model.layers.size()) a = pre.cwiseMax(0.0);
    z.push_back(std::move(pre));
  }
  return z;
}

// Row-wise log-softmax.
Eigen::MatrixXd LogSoftmaxRows(const Eigen::MatrixXd& logits) {
  Eigen::VectorXd m = logits.rowwise().maxCoeff();
  Eigen::MatrixXd shifted = logits.colwise() - m;
  Eigen::VectorXd lse = shifted.array().exp().rowwise().sum().log();
  return shifted.colwise() - lse;
}

std::string ArchName(Arch a) {
  return a == Arch::kMlp ? "mlp" : "logistic_regression";
}

}  // namespace

absl::Status LearnerConfig::Validate() const {
  if (epochs < 1) return absl::InvalidArgumentError("epochs must be >= 1");
  if (batch_size < 1) {
    return absl::InvalidArgumentError("batch_size must be >= 1");
  }
  if (!(learning_rate > 0.0)) {
    return absl::InvalidArgumentError("learning_rate must be > 0");
  }
  if (!(l2 >= 0.0)) return absl::InvalidArgumentError("l2 must be >= 0");
  if (arch == Arch::kMlp && hidden_units < 1) {
    return absl::InvalidArgumentError("hidden_units must be >= 1");
  }
  return absl::OkStatus();
}

bool TrainedModel::AllFinite() const {
  for (const auto& l : layers) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

TrainedModel InitModel(int dim, int num_classes, const LearnerConfig& config) {
  TrainedModel model;
  model.config = config;
  Rng rng(MixSeed(config.seed, {Tag(SeedTag::kLearnerInit), 0}));
  auto make = [&](int in, int out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd(out)};
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) layer.weight(r, c) = u(rng);
    }
    for (int r = 0; r < out; ++r) layer.bias[r] = u(rng);
    return layer;
  };
  if (config.arch == Arch::kMlp) {
    model.layers.push_back(make(dim, config.hidden_units));
    model.layers.push_back(make(config.hidden_units, num_classes));
  } else {
    model.layers.push_back(make(dim, num_classes));
  }
  return model;
}

Eigen::MatrixXd ForwardLogits(const TrainedModel& model,
                              const Eigen::MatrixXd& x) {
  return ForwardAll(model, x).back();
}

double LossAndGradient(const TrainedModel& model, const Eigen::MatrixXd& x,
                       const std::vector<int>& labels, double l2,
                       std::vector<DenseLayer>* grad) {
  const Eigen::Index n = x.rows();
  std::vector<Eigen::MatrixXd> z = ForwardAll(model, x);
  Eigen::MatrixXd log_p = LogSoftmaxRows(z.back());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) loss -= log_p(i, labels[i]);
  loss /= static_cast<double>(n);
  for (const auto& layer : model.layers) {
    loss += 0.5 * l2 * layer.weight.squaredNorm();
  }
  if (grad == nullptr) return loss;

  const size_t num_layers = model.layers.size();
  grad->resize(num_layers);
  // d loss / d logits = (softmax - onehot) / n
  Eigen::MatrixXd delta = log_p.array().exp();
  for (Eigen::Index i = 0; i < n; ++i) delta(i, labels[i]) -= 1.0;
  delta /= static_cast<double>(n);
  for (size_t l = num_layers; l-- > 0;) {
    const Eigen::MatrixXd input =
        l == 0 ? x : Eigen::MatrixXd(z[l - 1].cwiseMax(0.0));
    (*grad)[l].weight = delta.transpose() * input + l2 * model.layers[l].weight;
    (*grad)[l].bias = delta.colwise().sum().transpose();
    if (l > 0) {
      Eigen::MatrixXd back = delta * model.layers[l].weight;
      delta = (z[l - 1].array() > 0.0).select(back, 0.0);
    }
  }
  return loss;
}

absl::StatusOr<TrainedModel> Train(const Dataset& dataset,
                                   const LearnerConfig& config) {
  if (auto s = config.Validate(); !s.ok()) return s;
  if (dataset.empty()) {
    return absl::InvalidArgumentError("cannot train on an empty dataset");
  }
  // Canonical order by id so the result does not depend on input order.
  std::vector<size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return dataset.examples[a].id < dataset.examples[b].id;
  });
  const Eigen::Index n = static_cast<Eigen::Index>(dataset.size());
  Eigen::MatrixXd x(n, dataset.dim);
  std::vector<int> y(n);
  TrainedModel model = InitModel(dataset.dim, dataset.num_classes, config);
  model.train_ids.reserve(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const LabeledExample& e = dataset.examples[order[i]];
    if (e.features.size() != dataset.dim) {
      return absl::InvalidArgumentError(
          absl::StrCat("example ", e.id, " has wrong feature dimension"));
    }
    x.row(i) = e.features.transpose();
    y[i] = e.label;
    model.train_ids.push_back(e.id);
  }

  Rng rng(MixSeed(config.seed, {Tag(SeedTag::kLearnerInit), 1}));
  std::vector<Eigen::Index> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<DenseLayer> grad;
  Eigen::MatrixXd xb;
  std::vector<int> yb;
  const Eigen::Index bs = std::min<Eigen::Index>(config.batch_size, n);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(perm.begin(), perm.end(), rng);
    int batch = 0;
    for (Eigen::Index start = 0; start < n; start += bs, ++batch) {
      const Eigen::Index len = std::min(bs, n - start);
      xb.resize(len, dataset.dim);
      yb.resize(len);
      for (Eigen::Index k = 0; k < len; ++k) {
        xb.row(k) = x.row(perm[start + k]);
        yb[k] = y[perm[start + k]];
      }
      const double loss = LossAndGradient(model, xb, yb, config.l2, &grad);
      if (!std::isfinite(loss)) {
        return absl::InternalError(absl::StrCat(
            "non-finite loss at epoch ", epoch, " batch ", batch));
      }
      for (size_t l = 0; l < model.layers.size(); ++l) {
        model.layers[l].weight.noalias() -= config.learning_rate * grad[l].weight;
        model.layers[l].bias.noalias() -= config.learning_rate * grad[l].bias;
      }
      if (!model.AllFinite()) {
        return absl::InternalError(absl::StrCat(
            "non-finite weights at epoch ", epoch, " batch ", batch));
      }
    }
  }
  model.final_train_loss = LossAndGradient(model, x, y, 0.0, nullptr);
  return model;
}

absl::StatusOr<Eigen::VectorXd> Logits(const TrainedModel& model,
                                       const Eigen::VectorXd& x) {
  if (auto s = CheckDim(model, x); !s.ok()) return s;
  return Eigen::VectorXd(ForwardLogits(model, x.transpose()).row(0).transpose());
}

absl::StatusOr<Eigen::VectorXd> Probabilities(const TrainedModel& model,
                                              const Eigen::VectorXd& x) {
  auto logits = Logits(model, x);
  if (!logits.ok()) return logits.status();
  return Softmax(*logits);
}

absl::StatusOr<double> Loss(const TrainedModel& model,
                            const LabeledExample& example) {
  auto logits = Logits(model, example.features);
  if (!logits.ok()) return logits.status();
  if (example.label < 0 || example.label >= logits->size()) {
    return absl::InvalidArgumentError("label out of range");
  }
  return LogSumExp(*logits) - (*logits)[example.label];
}

absl::StatusOr<int> Predict(const TrainedModel& model, const Eigen::VectorXd& x) {
  auto logits = Logits(model, x);
  if (!logits.ok()) return logits.status();
  return ArgMax(*logits);
}

absl::StatusOr<Eigen::VectorXd> Penultimate(const TrainedModel& model,
                                            const Eigen::VectorXd& x) {
  if (auto s = CheckDim(model, x); !s.ok()) return s;
  if (model.layers.size() == 1) return x;
  const DenseLayer& hidden = model.layers.front();
  return Eigen::VectorXd((hidden.weight * x + hidden.bias).cwiseMax(0.0));
}

std::string ModelToJson(const TrainedModel& model) {
  using nlohmann::json;
  json j;
  j["format"] = "memaudit-model";
  j["version"] = 1;
  const LearnerConfig& c = model.config;
  j["config"] = {{"arch", ArchName(c.arch)},   {"hidden_units", c.hidden_units},
                 {"epochs", c.epochs},         {"learning_rate", c.learning_rate},
                 {"batch_size", c.batch_size}, {"l2", c.l2},
                 {"seed", c.seed}};
  json layers = json::array();
  for (const auto& layer : model.layers) {
    RowMatrix w = layer.weight;
    layers.push_back({{"rows", w.rows()},
                      {"cols", w.cols()},
                      {"weight", std::vector<double>(w.data(), w.data() + w.size())},
                      {"bias", std::vector<double>(layer.bias.data(),
                                                   layer.bias.data() + layer.bias.size())}});
  }
  j["layers"] = std::move(layers);
  j["train_ids"] = model.train_ids;
  j["final_train_loss"] = model.final_train_loss;
  return j.dump();
}

absl::StatusOr<TrainedModel> ModelFromJson(const std::string& text) {
  using nlohmann::json;
  try {
    json j = json::parse(text);
    if (j.at("format") != "memaudit-model") {
      return absl::InvalidArgumentError("not a memaudit model file");
    }
    TrainedModel m;
    const json& c = j.at("config");
    const std::string arch = c.at("arch");
    if (arch == "mlp") {
      m.config.arch = Arch::kMlp;
    } else if (arch == "logistic_regression") {
      m.config.arch = Arch::kLogisticRegression;
    } else {
      return absl::InvalidArgumentError(absl::StrCat("unknown arch ", arch));
    }
    m.config.hidden_units = c.at("hidden_units");
    m.config.epochs = c.at("epochs");
    m.config.learning_rate = c.at("learning_rate");
    m.config.batch_size = c.at("batch_size");
    m.config.l2 = c.at("l2");
    m.config.seed = c.at("seed");
    for (const json& lj : j.at("layers")) {
      const Eigen::Index rows = lj.at("rows"), cols = lj.at("cols");
      std::vector<double> w = lj.at("weight"), b = lj.at("bias");
      if (static_cast<Eigen::Index>(w.size()) != rows * cols ||
          static_cast<Eigen::Index>(b.size()) != rows) {
        return absl::InvalidArgumentError("layer shape mismatch");
      }
      DenseLayer layer;
      layer.weight = Eigen::Map<RowMatrix>(w.data(), rows, cols);
      layer.bias = Eigen::Map<Eigen::VectorXd>(b.data(), rows);
      m.layers.push_back(std::move(layer));
    }
    if (m.layers.empty()) return absl::InvalidArgumentError("no layers");
    m.train_ids = j.at("train_ids").get<std::vector<int64_t>>();
    m.final_train_loss = j.at("final_train_loss");
    return m;
  } catch (const json::exception& e) {
    return absl::InvalidArgumentError(absl::StrCat("model JSON: ", e.what()));
  }
}

absl::Status SaveModel(const TrainedModel& model, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) return absl::UnavailableError(absl::StrCat("cannot write ", path));
  f << ModelToJson(model) << "\n";
  return f ? absl::OkStatus()
           : absl::DataLossError(absl::StrCat("write failed: ", path));
}

absl::StatusOr<TrainedModel> LoadModel(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  std::stringstream ss;
  ss << f.rdbuf();
  return ModelFromJson(ss.str());
}

}  // namespace memaudit
