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
#include "memaudit/synthdata.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_split.h"
#include "absl/strings/strip.h"
#include "memaudit/random.h"

namespace memaudit {
namespace {

std::vector<int> BalancedSplit(int total, int parts) {
  std::vector<int> out(parts, total / parts);
  for (int i = 0; i < total % parts; ++i) ++out[i];
  return out;
}

Eigen::VectorXd StandardNormal(int dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = normal(rng);
  return v;
}

absl::Status ValidateGenerator(const GroupGenerator& g, int classes, int dim,
                               absl::string_view which) {
  if (static_cast<int>(g.class_means.size()) != classes ||
      static_cast<int>(g.class_scales.size()) != classes) {
    return absl::InvalidArgumentError(
        absl::StrCat(which, " generator needs one mean and scale per class"));
  }
  for (int c = 0; c < classes; ++c) {
    if (g.class_means[c].size() != dim) {
      return absl::InvalidArgumentError(
          absl::StrCat(which, " generator mean ", c, " has wrong dimension"));
    }
    if (!(g.class_scales[c] > 0.0)) {
      return absl::InvalidArgumentError(
          absl::StrCat(which, " generator scale must be positive"));
    }
  }
  if (g.kind == GeneratorKind::kCovariateShifted && g.shift.size() != dim) {
    return absl::InvalidArgumentError(
        absl::StrCat(which, " covariate shift has wrong dimension"));
  }
  return absl::OkStatus();
}

Eigen::VectorXd Draw(const GroupGenerator& g, int label, Rng& rng) {
  const int dim = static_cast<int>(g.class_means[label].size());
  Eigen::VectorXd x =
      g.class_means[label] + g.class_scales[label] * StandardNormal(dim, rng);
  if (g.kind == GeneratorKind::kCovariateShifted) x += g.shift;
  return x;
}

// Unit direction orthogonal to every (mean_b - mean_a), so that a point moved
// along it keeps the same nearest-mean geometry as mean_a itself. Falls back
// to an unconstrained direction when the differences span the space.
Eigen::VectorXd IsolatingDirection(const std::vector<Eigen::VectorXd>& means,
                                   int anchor, Rng& rng) {
  const int dim = static_cast<int>(means[anchor].size());
  const int classes = static_cast<int>(means.size());
  Eigen::VectorXd u = StandardNormal(dim, rng);
  if (classes - 1 < dim) {
    Eigen::MatrixXd diffs(dim, classes - 1);
    int col = 0;
    for (int c = 0; c < classes; ++c) {
      if (c == anchor) continue;
      diffs.col(col++) = means[c] - means[anchor];
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(diffs);
    Eigen::MatrixXd q = qr.householderQ() *
                        Eigen::MatrixXd::Identity(dim, classes - 1);
    u -= q * (q.transpose() * u);
  }
  return u / u.norm();
}

bool ParseDouble(absl::string_view s, double* out) {
  return absl::SimpleAtod(s, out);
}

}  // namespace

absl::string_view GroupName(Group g) {
  return g == Group::kOver ? "over" : "under";
}

absl::StatusOr<Group> ParseGroup(absl::string_view name) {
  if (name == "over") return Group::kOver;
  if (name == "under") return Group::kUnder;
  return absl::InvalidArgumentError(absl::StrCat("unknown group: ", name));
}

absl::Status Dataset::Validate() const {
  if (num_classes < 1) return absl::InvalidArgumentError("num_classes < 1");
  if (dim < 1) return absl::InvalidArgumentError("dim < 1");
  std::set<int64_t> seen;
  for (const auto& e : examples) {
    if (!seen.insert(e.id).second) {
      return absl::InvalidArgumentError(absl::StrCat("duplicate id ", e.id));
    }
    if (e.features.size() != dim) {
      return absl::InvalidArgumentError(
          absl::StrCat("example ", e.id, " has ", e.features.size(),
                       " features, expected ", dim));
    }
    if (e.label < 0 || e.label >= num_classes) {
      return absl::InvalidArgumentError(
          absl::StrCat("example ", e.id, " label ", e.label, " out of range"));
    }
  }
  return absl::OkStatus();
}

const LabeledExample* Dataset::Find(int64_t id) const {
  for (const auto& e : examples) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

std::unordered_map<int64_t, size_t> Dataset::IndexById() const {
  std::unordered_map<int64_t, size_t> index;
  index.reserve(examples.size());
  for (size_t i = 0; i < examples.size(); ++i) index[examples[i].id] = i;
  return index;
}

std::vector<int64_t> Dataset::Ids() const {
  std::vector<int64_t> ids;
  ids.reserve(examples.size());
  for (const auto& e : examples) ids.push_back(e.id);
  return ids;
}

std::vector<int64_t> Dataset::IdsInGroup(Group g) const {
  std::vector<int64_t> ids;
  for (const auto& e : examples) {
    if (e.group == g) ids.push_back(e.id);
  }
  return ids;
}

Dataset Dataset::Restrict(const std::set<int64_t>& ids) const {
  Dataset out{{}, num_classes, dim, provenance};
  for (const auto& e : examples) {
    if (ids.count(e.id)) out.examples.push_back(e);
  }
  return out;
}

absl::Status MixtureSpec::Validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("alpha must lie in [0, 1], got ", alpha));
  }
  if (per_class_counts.empty()) {
    return absl::InvalidArgumentError("per_class_counts is empty");
  }
  for (int c : per_class_counts) {
    if (c <= 0) {
      return absl::InvalidArgumentError("per-class counts must be positive");
    }
  }
  if (num_singletons < 0) {
    return absl::InvalidArgumentError("num_singletons must be >= 0");
  }
  const int classes = static_cast<int>(per_class_counts.size());
  if (over_gen.class_means.empty()) {
    return absl::InvalidArgumentError("over generator has no class means");
  }
  const int dim = static_cast<int>(over_gen.class_means[0].size());
  if (auto s = ValidateGenerator(over_gen, classes, dim, "over"); !s.ok()) {
    return s;
  }
  return ValidateGenerator(under_gen, classes, dim, "under");
}

MixtureSpec MakeMixtureSpec(const MixtureOptions& o) {
  Rng rng(MixSeed(o.seed, {0x4d6978ULL}));
  MixtureSpec spec;
  spec.alpha = o.alpha;
  spec.seed = o.seed;
  spec.per_class_counts = BalancedSplit(o.num_examples, o.num_classes);
  spec.num_singletons = o.num_singletons;
  spec.singleton_radius = o.singleton_radius >= 0.0
                              ? o.singleton_radius
                              : 2.0 * o.noise * std::sqrt(double(o.dim));

  GroupGenerator& over = spec.over_gen;
  over.kind = GeneratorKind::kGaussianBlobs;
  for (int c = 0; c < o.num_classes; ++c) {
    over.class_means.push_back(o.mean_spread * StandardNormal(o.dim, rng));
    over.class_scales.push_back(o.noise);
  }

  GroupGenerator& under = spec.under_gen;
  under.kind = o.under_kind;
  under.class_scales.assign(o.num_classes, o.under_noise);
  switch (o.under_kind) {
    case GeneratorKind::kGaussianBlobs:
      under.class_means = over.class_means;
      break;
    case GeneratorKind::kCovariateShifted: {
      under.class_means = over.class_means;
      Eigen::VectorXd dir = StandardNormal(o.dim, rng);
      under.shift = o.shift_norm * dir / dir.norm();
      break;
    }
    case GeneratorKind::kSemanticShifted: {
      // Fresh centers placed semantic_offset away from the over-group
      // centroid along independent random directions.
      Eigen::VectorXd centroid = Eigen::VectorXd::Zero(o.dim);
      for (const auto& m : over.class_means) centroid += m;
      centroid /= o.num_classes;
      for (int c = 0; c < o.num_classes; ++c) {
        Eigen::VectorXd dir = StandardNormal(o.dim, rng);
        under.class_means.push_back(
            centroid + (o.semantic_offset + o.mean_spread * std::sqrt(double(o.dim))) *
                           dir / dir.norm());
      }
      break;
    }
  }
  return spec;
}

absl::StatusOr<Dataset> Generate(const MixtureSpec& spec) {
  if (auto s = spec.Validate(); !s.ok()) return s;
  const int classes = static_cast<int>(spec.per_class_counts.size());
  const int dim = static_cast<int>(spec.over_gen.class_means[0].size());
  const int n = std::accumulate(spec.per_class_counts.begin(),
                                spec.per_class_counts.end(), 0);
  const int n_over = static_cast<int>(std::floor(spec.alpha * n + 1e-9));
  const int n_under = n - n_over;

  Dataset out;
  out.num_classes = classes;
  out.dim = dim;
  out.provenance = absl::StrCat(
      "mixture alpha=", spec.alpha, " n=", n, " over=", n_over,
      " under=", n_under, " singletons=", spec.num_singletons,
      " seed=", spec.seed,
      spec.under_gen.kind == GeneratorKind::kSemanticShifted
          ? " under_labels=center_index"
          : "");
  out.examples.reserve(n + spec.num_singletons);

  Rng rng(spec.seed);
  int64_t next_id = 0;
  auto emit_group = [&](const GroupGenerator& gen, int count, Group group) {
    std::vector<int> per_class = BalancedSplit(count, classes);
    for (int c = 0; c < classes; ++c) {
      for (int k = 0; k < per_class[c]; ++k) {
        out.examples.push_back({next_id++, Draw(gen, c, rng), c, group});
      }
    }
  };
  emit_group(spec.over_gen, n_over, Group::kOver);
  emit_group(spec.under_gen, n_under, Group::kUnder);

  std::uniform_int_distribution<int> pick_class(0, classes - 1);
  std::uniform_int_distribution<int> pick_offset(1, std::max(1, classes - 1));
  for (int s = 0; s < spec.num_singletons; ++s) {
    const int anchor = pick_class(rng);
    Eigen::VectorXd u = IsolatingDirection(spec.over_gen.class_means, anchor, rng);
    Eigen::VectorXd x = spec.over_gen.class_means[anchor] +
                        spec.singleton_radius * u;
    const int label = classes > 1 ? (anchor + pick_offset(rng)) % classes : 0;
    out.examples.push_back({next_id++, std::move(x), label, Group::kUnder});
  }
  return out;
}

std::string FormatCsv(const Dataset& dataset) {
  std::string out = "id,group,label";
  for (int j = 0; j < dataset.dim; ++j) absl::StrAppend(&out, ",f", j);
  out += "\n";
  char buf[40];
  for (const auto& e : dataset.examples) {
    absl::StrAppend(&out, e.id, ",", GroupName(e.group), ",", e.label);
    for (int j = 0; j < e.features.size(); ++j) {
      std::snprintf(buf, sizeof(buf), ",%.17g", e.features[j]);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

absl::Status SaveCsv(const Dataset& dataset, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) return absl::UnavailableError(absl::StrCat("cannot write ", path));
  f << FormatCsv(dataset);
  if (!f) return absl::DataLossError(absl::StrCat("write failed: ", path));
  return absl::OkStatus();
}

absl::StatusOr<Dataset> ParseCsv(absl::string_view text,
                                 std::optional<int> num_classes) {
  std::vector<absl::string_view> lines =
      absl::StrSplit(text, '\n', absl::SkipEmpty());
  if (lines.empty()) return absl::InvalidArgumentError("empty CSV");
  std::vector<absl::string_view> header = absl::StrSplit(lines[0], ',');
  if (header.size() < 4 || header[0] != "id" || header[1] != "group" ||
      header[2] != "label") {
    return absl::InvalidArgumentError(
        "CSV header must start with id,group,label,f0");
  }
  const int dim = static_cast<int>(header.size()) - 3;
  for (int j = 0; j < dim; ++j) {
    if (header[3 + j] != absl::StrCat("f", j)) {
      return absl::InvalidArgumentError(
          absl::StrCat("CSV header column ", 3 + j, " must be f", j));
    }
  }

  Dataset out;
  out.dim = dim;
  int max_label = -1;
  for (size_t li = 1; li < lines.size(); ++li) {
    absl::string_view line = absl::StripSuffix(lines[li], "\r");
    std::vector<absl::string_view> cells = absl::StrSplit(line, ',');
    const size_t line_no = li + 1;
    if (static_cast<int>(cells.size()) != dim + 3) {
      return absl::InvalidArgumentError(
          absl::StrCat("line ", line_no, ": expected ", dim + 3,
                       " fields, got ", cells.size()));
    }
    LabeledExample e;
    if (!absl::SimpleAtoi(cells[0], &e.id) ||
        !absl::SimpleAtoi(cells[2], &e.label)) {
      return absl::InvalidArgumentError(
          absl::StrCat("line ", line_no, ": bad id or label"));
    }
    auto group = ParseGroup(cells[1]);
    if (!group.ok()) {
      return absl::InvalidArgumentError(
          absl::StrCat("line ", line_no, ": ", group.status().message()));
    }
    e.group = *group;
    e.features.resize(dim);
    for (int j = 0; j < dim; ++j) {
      if (!ParseDouble(cells[3 + j], &e.features[j])) {
        return absl::InvalidArgumentError(
            absl::StrCat("line ", line_no, ": bad feature f", j));
      }
    }
    max_label = std::max(max_label, e.label);
    out.examples.push_back(std::move(e));
  }
  out.num_classes = num_classes.value_or(max_label + 1);
  if (out.num_classes < 1) out.num_classes = 1;
  if (auto s = out.Validate(); !s.ok()) return s;
  return out;
}

absl::StatusOr<Dataset> LoadCsv(const std::string& path,
                                std::optional<int> num_classes) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  std::stringstream ss;
  ss << f.rdbuf();
  auto ds = ParseCsv(ss.str(), num_classes);
  if (!ds.ok()) {
    return absl::Status(ds.status().code(),
                        absl::StrCat(path, ": ", ds.status().message()));
  }
  ds->provenance = absl::StrCat("csv:", path);
  return ds;
}

absl::StatusOr<Dataset> Subsample(const Dataset& dataset, double fraction,
                                  uint64_t seed,
                                  const std::set<int64_t>& exclude,
                                  const std::set<int64_t>& include) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("fraction must lie in (0, 1], got ", fraction));
  }
  for (int64_t id : include) {
    if (exclude.count(id)) {
      return absl::InvalidArgumentError(
          absl::StrCat("id ", id, " both included and excluded"));
    }
  }
  std::vector<int64_t> ids = dataset.Ids();
  std::sort(ids.begin(), ids.end());
  for (int64_t id : include) {
    if (!std::binary_search(ids.begin(), ids.end(), id)) {
      return absl::NotFoundError(
          absl::StrCat("included id ", id, " is not in the dataset"));
    }
  }
  Rng rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  const size_t keep = static_cast<size_t>(std::llround(fraction * ids.size()));
  std::set<int64_t> chosen(ids.begin(), ids.begin() + keep);
  for (int64_t id : exclude) chosen.erase(id);
  chosen.insert(include.begin(), include.end());
  return dataset.Restrict(chosen);
}

}  // namespace memaudit
