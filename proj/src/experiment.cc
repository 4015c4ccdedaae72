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
#include "memaudit/experiment.h"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_split.h"
#include "json.hpp"
#include "memaudit/random.h"
#include "memaudit/worker_pool.h"

namespace memaudit {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// --- Config parsing.

std::string Child(const std::string& path, absl::string_view key) {
  return path.empty() ? std::string(key) : absl::StrCat(path, ".", key);
}

absl::Status PathError(const std::string& path, absl::string_view what) {
  return absl::InvalidArgumentError(absl::StrCat(path.empty() ? "<root>" : path, ": ", what));
}

absl::Status CheckKeys(const json& j, const std::string& path,
                       std::initializer_list<absl::string_view> allowed) {
  if (!j.is_object()) return PathError(path, "expected an object");
  for (const auto& item : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      return PathError(Child(path, item.key()), "unknown key");
    }
  }
  return absl::OkStatus();
}

template <typename T>
absl::Status Read(const json& v, const std::string& path, T& out) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) return PathError(path, "expected a boolean");
    out = v.get<bool>();
  } else if constexpr (std::is_same_v<T, uint64_t>) {
    if (!v.is_number_unsigned()) return PathError(path, "expected a non-negative integer");
    out = v.get<uint64_t>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) return PathError(path, "expected an integer");
    const int64_t x = v.get<int64_t>();
    if (x < std::numeric_limits<T>::min() || x > std::numeric_limits<T>::max()) {
      return PathError(path, "integer out of range");
    }
    out = static_cast<T>(x);
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) return PathError(path, "expected a number");
    out = v.get<double>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) return PathError(path, "expected a string");
    out = v.get<std::string>();
  } else {
    static_assert(sizeof(T) == 0, "unsupported field type");
  }
  return absl::OkStatus();
}

template <typename T>
absl::Status Field(const json& j, const std::string& path, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return absl::OkStatus();
  return Read(*it, Child(path, key), out);
}

// Enum field parsed from a string via parse.
template <typename E, typename Parse>
absl::Status EnumField(const json& j, const std::string& path, const char* key,
                       E& out, Parse parse) {
  std::string name;
  bool present = j.contains(key);
  if (auto s = Field(j, path, key, name); !s.ok()) return s;
  if (!present) return absl::OkStatus();
  auto e = parse(name);
  if (!e.ok()) return PathError(Child(path, key), e.status().message());
  out = *e;
  return absl::OkStatus();
}

absl::StatusOr<GeneratorKind> ParseGeneratorKind(absl::string_view s) {
  if (s == "gaussian_blobs") return GeneratorKind::kGaussianBlobs;
  if (s == "covariate_shifted") return GeneratorKind::kCovariateShifted;
  if (s == "semantic_shifted") return GeneratorKind::kSemanticShifted;
  return absl::InvalidArgumentError(absl::StrCat("unknown generator ", s));
}

absl::StatusOr<Arch> ParseArch(absl::string_view s) {
  if (s == "mlp") return Arch::kMlp;
  if (s == "logistic_regression") return Arch::kLogisticRegression;
  return absl::InvalidArgumentError(absl::StrCat("unknown arch ", s));
}

absl::StatusOr<PhiKind> ParsePhi(absl::string_view s) {
  if (s == "logit_scale") return PhiKind::kLogitScale;
  if (s == "raw_confidence") return PhiKind::kRawConfidence;
  return absl::InvalidArgumentError(absl::StrCat("unknown phi ", s));
}

absl::StatusOr<VarianceMode> ParseVarianceMode(absl::string_view s) {
  if (s == "per_example") return VarianceMode::kPerExample;
  if (s == "global") return VarianceMode::kGlobal;
  return absl::InvalidArgumentError(absl::StrCat("unknown variance mode ", s));
}

absl::StatusOr<NegativesMode> ParseNegatives(absl::string_view s) {
  if (s == "all") return NegativesMode::kAll;
  if (s == "group") return NegativesMode::kGroup;
  return absl::InvalidArgumentError(absl::StrCat("unknown negatives mode ", s));
}

absl::StatusOr<HardnessStat> ParseHardness(absl::string_view s) {
  if (s == "mean") return HardnessStat::kMean;
  if (s == "median") return HardnessStat::kMedian;
  return absl::InvalidArgumentError(absl::StrCat("unknown hardness statistic ", s));
}

absl::Status ParseDataset(const json& j, ExperimentConfig& c) {
  const std::string path = "dataset";
  if (auto s = CheckKeys(j, path, {"csv", "mixture"}); !s.ok()) return s;
  if (j.contains("csv") == j.contains("mixture")) {
    return PathError(path, "exactly one of csv or mixture is required");
  }
  if (j.contains("csv")) return Field(j, path, "csv", c.dataset_csv);
  const json& m = j["mixture"];
  const std::string mp = "dataset.mixture";
  if (auto s = CheckKeys(m, mp, {"dim", "num_classes", "num_examples", "alpha",
                                 "under_kind", "mean_spread", "noise",
                                 "under_noise", "shift_norm", "semantic_offset",
                                 "num_singletons", "singleton_radius", "seed"});
      !s.ok()) {
    return s;
  }
  MixtureOptions o;
  for (auto s : {Field(m, mp, "dim", o.dim), Field(m, mp, "num_classes", o.num_classes),
                 Field(m, mp, "num_examples", o.num_examples), Field(m, mp, "alpha", o.alpha),
                 EnumField(m, mp, "under_kind", o.under_kind, ParseGeneratorKind),
                 Field(m, mp, "mean_spread", o.mean_spread), Field(m, mp, "noise", o.noise),
                 Field(m, mp, "under_noise", o.under_noise),
                 Field(m, mp, "shift_norm", o.shift_norm),
                 Field(m, mp, "semantic_offset", o.semantic_offset),
                 Field(m, mp, "num_singletons", o.num_singletons),
                 Field(m, mp, "singleton_radius", o.singleton_radius),
                 Field(m, mp, "seed", o.seed)}) {
    if (!s.ok()) return s;
  }
  c.mixture = o;
  c.mixture_seed_from_master = !m.contains("seed");
  return absl::OkStatus();
}

absl::Status ParseLearner(const json& j, LearnerConfig& l) {
  const std::string p = "learner";
  if (auto s = CheckKeys(j, p, {"arch", "hidden_units", "epochs", "learning_rate",
                                "batch_size", "l2"});
      !s.ok()) {
    return s;
  }
  for (auto s : {EnumField(j, p, "arch", l.arch, ParseArch),
                 Field(j, p, "hidden_units", l.hidden_units), Field(j, p, "epochs", l.epochs),
                 Field(j, p, "learning_rate", l.learning_rate),
                 Field(j, p, "batch_size", l.batch_size), Field(j, p, "l2", l.l2)}) {
    if (!s.ok()) return s;
  }
  return absl::OkStatus();
}

absl::Status ParseHarness(const json& j, ExperimentConfig& c) {
  const std::string p = "harness";
  if (auto s = CheckKeys(j, p, {"m", "subsample_fraction", "phi", "variance_mode",
                                "record_probs", "pool_over_sample",
                                "resample_from_generator"});
      !s.ok()) {
    return s;
  }
  HarnessConfig& h = c.harness;
  for (auto s : {Field(j, p, "m", h.m), Field(j, p, "subsample_fraction", h.subsample_fraction),
                 EnumField(j, p, "phi", h.phi, ParsePhi),
                 EnumField(j, p, "variance_mode", h.variance_mode, ParseVarianceMode),
                 Field(j, p, "record_probs", h.record_probs),
                 Field(j, p, "pool_over_sample", c.pool_over_sample),
                 Field(j, p, "resample_from_generator", c.resample_from_generator)}) {
    if (!s.ok()) return s;
  }
  return absl::OkStatus();
}

absl::Status ParseSelections(const json& j, ExperimentConfig& c) {
  if (!j.is_array()) return PathError("selections", "expected an array");
  for (size_t i = 0; i < j.size(); ++i) {
    const std::string p = absl::StrCat("selections[", i, "]");
    const json& e = j[i];
    if (auto s = CheckKeys(e, p, {"name", "strategy", "group", "k", "pca_dims",
                                  "k_clusters", "mem_threshold", "seed"});
        !s.ok()) {
      return s;
    }
    if (!e.contains("strategy")) return PathError(Child(p, "strategy"), "required");
    SelectionSpec spec;
    for (auto s : {EnumField(e, p, "strategy", spec.strategy, ParseStrategy),
                   Field(e, p, "name", spec.name),
                   EnumField(e, p, "group", spec.group, ParseGroup), Field(e, p, "k", spec.k),
                   Field(e, p, "pca_dims", spec.pca_dims),
                   Field(e, p, "k_clusters", spec.k_clusters),
                   Field(e, p, "mem_threshold", spec.mem_threshold),
                   Field(e, p, "seed", spec.seed)}) {
      if (!s.ok()) return s;
    }
    if (spec.name.empty()) spec.name = std::string(StrategyName(spec.strategy));
    if (auto s = spec.Validate(); !s.ok()) return PathError(p, s.message());
    c.selections.push_back(spec);
  }
  return absl::OkStatus();
}

absl::Status ParseAttacks(const json& j, ExperimentConfig& c) {
  if (!j.is_array()) return PathError("attacks", "expected an array");
  for (size_t i = 0; i < j.size(); ++i) {
    const std::string p = absl::StrCat("attacks[", i, "]");
    AttackSpec a;
    if (j[i].is_string()) {
      a.name = j[i].get<std::string>();
    } else {
      if (auto s = CheckKeys(j[i], p, {"name", "hardness"}); !s.ok()) return s;
      if (auto s = Field(j[i], p, "name", a.name); !s.ok()) return s;
      if (auto s = EnumField(j[i], p, "hardness", a.hardness, ParseHardness); !s.ok()) {
        return s;
      }
    }
    if (std::find(std::begin(kAttackNames), std::end(kAttackNames), a.name) ==
        std::end(kAttackNames)) {
      return PathError(p, absl::StrCat("unknown attack '", a.name, "'"));
    }
    c.attacks.push_back(a);
  }
  return absl::OkStatus();
}

template <typename T>
absl::Status ReadList(const json& j, const std::string& path, std::vector<T>& out) {
  if (!j.is_array()) return PathError(path, "expected an array");
  out.clear();
  for (size_t i = 0; i < j.size(); ++i) {
    T v{};
    if (auto s = Read(j[i], absl::StrCat(path, "[", i, "]"), v); !s.ok()) return s;
    out.push_back(v);
  }
  return absl::OkStatus();
}

absl::Status ParseRoot(const json& j, ExperimentConfig& c) {
  if (auto s = CheckKeys(j, "", {"dataset", "learner", "harness", "selections",
                                 "attacks", "metrics", "victims", "game", "sweep",
                                 "output_dir", "workers", "master_seed"});
      !s.ok()) {
    return s;
  }
  if (!j.contains("dataset")) return PathError("dataset", "required");
  if (auto s = ParseDataset(j["dataset"], c); !s.ok()) return s;
  if (j.contains("learner")) {
    if (auto s = ParseLearner(j["learner"], c.learner); !s.ok()) return s;
  }
  if (j.contains("harness")) {
    if (auto s = ParseHarness(j["harness"], c); !s.ok()) return s;
  }
  if (j.contains("selections")) {
    if (auto s = ParseSelections(j["selections"], c); !s.ok()) return s;
  }
  if (j.contains("attacks")) {
    if (auto s = ParseAttacks(j["attacks"], c); !s.ok()) return s;
  } else {
    for (const char* name : kAttackNames) c.attacks.push_back({name});
  }
  if (j.contains("metrics")) {
    const json& m = j["metrics"];
    if (auto s = CheckKeys(m, "metrics", {"fpr_targets", "negatives"}); !s.ok()) return s;
    if (m.contains("fpr_targets")) {
      if (auto s = ReadList(m["fpr_targets"], "metrics.fpr_targets", c.fpr_targets); !s.ok()) {
        return s;
      }
    }
    if (auto s = EnumField(m, "metrics", "negatives", c.negatives, ParseNegatives); !s.ok()) {
      return s;
    }
  }
  if (j.contains("victims")) {
    const json& v = j["victims"];
    if (auto s = CheckKeys(v, "victims", {"count", "fraction"}); !s.ok()) return s;
    for (auto s : {Field(v, "victims", "count", c.victims),
                   Field(v, "victims", "fraction", c.victim_fraction)}) {
      if (!s.ok()) return s;
    }
  }
  if (j.contains("game")) {
    const json& g = j["game"];
    const std::string p = "game";
    if (auto s = CheckKeys(g, p, {"trials", "adversary", "target_id", "selection",
                                  "subsample_fraction", "target_fpr"});
        !s.ok()) {
      return s;
    }
    int64_t target = 0;
    if (g.contains("target_id")) {
      if (auto s = Field(g, p, "target_id", target); !s.ok()) return s;
      c.game_target = target;
    }
    for (auto s : {Field(g, p, "trials", c.game_trials),
                   EnumField(g, p, "adversary", c.game_adversary, ParseAdversary),
                   Field(g, p, "selection", c.game_selection),
                   Field(g, p, "subsample_fraction", c.game_subsample_fraction),
                   Field(g, p, "target_fpr", c.game_target_fpr)}) {
      if (!s.ok()) return s;
    }
  }
  if (j.contains("sweep")) {
    const json& sw = j["sweep"];
    if (auto s = CheckKeys(sw, "sweep", {"m_list"}); !s.ok()) return s;
    if (sw.contains("m_list")) {
      if (auto s = ReadList(sw["m_list"], "sweep.m_list", c.sweep_m); !s.ok()) return s;
    }
  }
  for (auto s : {Field(j, "", "output_dir", c.output_dir), Field(j, "", "workers", c.workers),
                 Field(j, "", "master_seed", c.master_seed)}) {
    if (!s.ok()) return s;
  }
  return absl::OkStatus();
}

// --- Files.

absl::StatusOr<std::string> ReadFile(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return absl::NotFoundError(absl::StrCat("cannot open ", path.string()));
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

absl::Status WriteFile(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) return absl::UnavailableError(absl::StrCat("cannot write ", path.string()));
  f << text;
  if (!f) return absl::DataLossError(absl::StrCat("write failed: ", path.string()));
  return absl::OkStatus();
}

absl::Status EnsureDir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) return absl::UnavailableError(absl::StrCat("cannot create ", dir, ": ", ec.message()));
  return absl::OkStatus();
}

// Missing upstream artifacts are a precondition failure naming the stage.
absl::StatusOr<fs::path> Artifact(const ExperimentConfig& c, const std::string& name,
                                  absl::string_view producer) {
  fs::path p = fs::path(c.output_dir) / name;
  if (!fs::exists(p)) {
    return absl::FailedPreconditionError(absl::StrCat(
        "missing artifact ", p.string(), "; run '", producer, "' first"));
  }
  return p;
}

void Log(const ExperimentConfig& c, absl::string_view message) {
  std::ofstream f(fs::path(c.output_dir) / kRunLogFile, std::ios::app);
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  f << stamp << " " << message << "\n";
}

absl::StatusOr<Dataset> LoadStageDataset(const ExperimentConfig& c) {
  auto p = Artifact(c, kDatasetFile, "gen-data");
  if (!p.ok()) return p.status();
  return LoadCsv(p->string());
}

absl::StatusOr<ShadowStatsMap> LoadStageStats(const ExperimentConfig& c) {
  auto p = Artifact(c, kShadowStatsFile, "run-shadows");
  if (!p.ok()) return p.status();
  auto text = ReadFile(*p);
  if (!text.ok()) return text.status();
  return ParseStatsJsonl(*text);
}

absl::StatusOr<std::map<std::string, std::vector<int64_t>>> LoadStageSelections(
    const ExperimentConfig& c) {
  auto p = Artifact(c, kSelectionsFile, "select");
  if (!p.ok()) return p.status();
  auto text = ReadFile(*p);
  if (!text.ok()) return text.status();
  std::map<std::string, std::vector<int64_t>> out;
  try {
    json j = json::parse(*text);
    for (const auto& item : j.items()) {
      out[item.key()] = item.value().at("ids").get<std::vector<int64_t>>();
    }
  } catch (const json::exception& e) {
    return absl::DataLossError(absl::StrCat(p->string(), ": ", e.what()));
  }
  return out;
}

absl::StatusOr<std::vector<VictimObservation>> LoadStageObservations(
    const ExperimentConfig& c) {
  auto p = Artifact(c, kObservationsFile, "attack");
  if (!p.ok()) return p.status();
  auto text = ReadFile(*p);
  if (!text.ok()) return text.status();
  return ParseObservationsJsonl(*text);
}

uint64_t SelectionSeed(const ExperimentConfig& c, const SelectionSpec& spec) {
  return MixSeed(c.master_seed, {Tag(SeedTag::kSelection), spec.seed});
}

std::map<int64_t, double> MemorizationScores(const ShadowStatsMap& stats) {
  std::map<int64_t, double> mem;
  for (const auto& [id, s] : stats) {
    auto m = EstimateMemorization(s);
    if (m.ok()) mem[id] = *m;
  }
  return mem;
}

}  // namespace

void ExperimentConfig::Propagate() {
  harness.learner = learner;
  harness.master_seed = master_seed;
  harness.workers = workers;
  learner.seed = master_seed;
  harness.learner.seed = master_seed;
  if (mixture.has_value() && mixture_seed_from_master) mixture->seed = master_seed;
}

absl::Status ExperimentConfig::Validate() const {
  if (workers < 1) return PathError("workers", "must be >= 1");
  if (output_dir.empty()) return PathError("output_dir", "must be non-empty");
  if (auto s = learner.Validate(); !s.ok()) return PathError("learner", s.message());
  if (auto s = harness.Validate(); !s.ok()) return PathError("harness", s.message());
  if (pool_over_sample < 0) return PathError("harness.pool_over_sample", "must be >= 0");
  if (victims < 1) return PathError("victims.count", "must be >= 1");
  if (!(victim_fraction > 0.0 && victim_fraction < 1.0)) {
    return PathError("victims.fraction", "must lie in (0, 1)");
  }
  if (fpr_targets.empty()) return PathError("metrics.fpr_targets", "must be non-empty");
  for (double f : fpr_targets) {
    if (!(f > 0.0 && f < 1.0)) return PathError("metrics.fpr_targets", "values must lie in (0, 1)");
  }
  std::set<std::string> names;
  for (size_t i = 0; i < selections.size(); ++i) {
    const std::string& n = selections[i].name;
    const bool safe = std::all_of(n.begin(), n.end(), [](char ch) {
      return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-';
    });
    if (n.empty() || !safe) {
      return PathError(absl::StrCat("selections[", i, "].name"),
                       "must be non-empty [A-Za-z0-9_-]");
    }
    if (!names.insert(n).second) {
      return PathError(absl::StrCat("selections[", i, "].name"), "duplicate name");
    }
  }
  if (resample_from_generator && !mixture.has_value()) {
    return PathError("harness.resample_from_generator", "needs a mixture dataset");
  }
  if (game_trials < 1) return PathError("game.trials", "must be >= 1");
  if (!(game_subsample_fraction > 0.0 && game_subsample_fraction <= 1.0)) {
    return PathError("game.subsample_fraction", "must lie in (0, 1]");
  }
  for (int m : sweep_m) {
    if (m < 1) return PathError("sweep.m_list", "values must be >= 1");
  }
  if (mixture.has_value()) {
    if (auto s = MakeMixtureSpec(*mixture).Validate(); !s.ok()) {
      return PathError("dataset.mixture", s.message());
    }
  }
  return absl::OkStatus();
}

absl::StatusOr<ExperimentConfig> ParseExperimentConfig(absl::string_view text) {
  json j;
  try {
    j = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    return absl::InvalidArgumentError(absl::StrCat("config is not valid JSON: ", e.what()));
  }
  ExperimentConfig c;
  if (auto s = ParseRoot(j, c); !s.ok()) return s;
  c.Propagate();
  return c;
}

absl::StatusOr<ExperimentConfig> LoadExperimentConfig(const std::string& path) {
  auto text = ReadFile(path);
  if (!text.ok()) return absl::InvalidArgumentError(text.status().message());
  return ParseExperimentConfig(*text);
}

absl::StatusOr<Dataset> BuildDataset(const ExperimentConfig& config) {
  if (config.mixture.has_value()) return Generate(MakeMixtureSpec(*config.mixture));
  return LoadCsv(config.dataset_csv);
}

Resampler MakeGeneratorResampler(const MixtureOptions& options, double fraction,
                                 int64_t id_offset) {
  MixtureOptions o = options;
  o.num_examples = static_cast<int>(std::llround(fraction * options.num_examples));
  o.num_singletons = 0;
  const MixtureSpec base = MakeMixtureSpec(o);
  return [base, id_offset](uint64_t seed) -> absl::StatusOr<Dataset> {
    MixtureSpec spec = base;
    spec.seed = seed;
    auto ds = Generate(spec);
    if (!ds.ok()) return ds.status();
    for (auto& e : ds->examples) e.id += id_offset;
    return ds;
  };
}

std::vector<int64_t> TargetPool(const Dataset& dataset, int over_sample,
                                uint64_t seed) {
  std::vector<int64_t> ids = dataset.IdsInGroup(Group::kUnder);
  std::vector<int64_t> over = dataset.IdsInGroup(Group::kOver);
  std::sort(over.begin(), over.end());
  Rng rng(MixSeed(seed, {Tag(SeedTag::kSelection), 0x706f6f6cULL}));
  std::shuffle(over.begin(), over.end(), rng);
  over.resize(std::min<size_t>(over.size(), over_sample));
  ids.insert(ids.end(), over.begin(), over.end());
  std::sort(ids.begin(), ids.end());
  return ids;
}

uint64_t VictimSeed(uint64_t master_seed, int victim) {
  return MixSeed(master_seed, {Tag(SeedTag::kVictim), static_cast<uint64_t>(victim)});
}

absl::StatusOr<std::vector<VictimObservation>> ObserveVictims(
    const Dataset& dataset, const std::vector<int64_t>& target_ids,
    const LearnerConfig& learner, double fraction, int count, uint64_t seed,
    int workers) {
  const auto index = dataset.IndexById();
  for (int64_t id : target_ids) {
    if (!index.count(id)) {
      return absl::NotFoundError(absl::StrCat("target ", id, " not in dataset"));
    }
  }
  auto per_victim = ParallelMap(
      static_cast<size_t>(count), workers,
      [&](size_t v) -> absl::StatusOr<std::vector<VictimObservation>> {
        const uint64_t vs = VictimSeed(seed, static_cast<int>(v));
        auto train_set = Subsample(dataset, fraction, vs);
        if (!train_set.ok()) return train_set.status();
        LearnerConfig lc = learner;
        lc.seed = MixSeed(vs, {Tag(SeedTag::kLearnerInit)});
        auto model = Train(*train_set, lc);
        if (!model.ok()) {
          return absl::Status(model.status().code(),
                              absl::StrCat("victim ", v, ": ", model.status().message()));
        }
        std::vector<VictimObservation> out;
        for (int64_t id : target_ids) {
          const LabeledExample& z = dataset.examples[index.at(id)];
          auto probs = Probabilities(*model, z.features);
          if (!probs.ok()) return probs.status();
          const bool member = std::binary_search(model->train_ids.begin(),
                                                 model->train_ids.end(), id);
          out.push_back({static_cast<int>(v), id, member ? 1 : 0, *std::move(probs)});
        }
        return out;
      });
  std::vector<VictimObservation> all;
  for (auto& r : per_victim) {
    if (!r.ok()) return r.status();
    for (auto& o : *r) all.push_back(std::move(o));
  }
  return all;
}

std::string ObservationsToJsonl(const std::vector<VictimObservation>& obs) {
  std::string out;
  for (const auto& o : obs) {
    nlohmann::ordered_json j;
    j["victim"] = o.victim;
    j["id"] = o.example_id;
    j["is_member"] = o.is_member;
    j["probs"] = std::vector<double>(o.probs.data(), o.probs.data() + o.probs.size());
    absl::StrAppend(&out, j.dump(), "\n");
  }
  return out;
}

absl::StatusOr<std::vector<VictimObservation>> ParseObservationsJsonl(
    const std::string& text) {
  std::vector<VictimObservation> out;
  int line_no = 0;
  for (absl::string_view line : absl::StrSplit(text, '\n')) {
    ++line_no;
    if (line.empty()) continue;
    try {
      json j = json::parse(line.begin(), line.end());
      VictimObservation o;
      o.victim = j.at("victim").get<int>();
      o.example_id = j.at("id").get<int64_t>();
      o.is_member = j.at("is_member").get<int>();
      auto p = j.at("probs").get<std::vector<double>>();
      o.probs = Eigen::Map<Eigen::VectorXd>(p.data(), p.size());
      out.push_back(std::move(o));
    } catch (const json::exception& e) {
      return absl::InvalidArgumentError(
          absl::StrCat("observations line ", line_no, ": ", e.what()));
    }
  }
  return out;
}

absl::StatusOr<AttackContext> PrepareAttacks(const ShadowStatsMap& stats,
                                             const std::vector<AttackSpec>& attacks,
                                             PhiKind phi, uint64_t seed) {
  AttackContext ctx;
  ctx.stats = &stats;
  ctx.phi = phi;
  for (const auto& a : attacks) {
    if (a.name == "song" && !ctx.song.has_value()) {
      auto cal = CalibrateSong(stats);
      if (!cal.ok()) return cal.status();
      ctx.song = *std::move(cal);
    } else if (a.name == "shokri" && !ctx.shokri.has_value()) {
      auto samples = ShokriTrainingSet(stats);
      if (!samples.ok()) return samples.status();
      auto model = ShokriModel::Fit(*samples, DefaultShokriLearner(seed));
      if (!model.ok()) return model.status();
      ctx.shokri = *std::move(model);
    }
  }
  return ctx;
}

absl::StatusOr<std::vector<ScoreRow>> ScoreObservations(
    const std::vector<VictimObservation>& obs, const std::vector<int64_t>& ids,
    const Dataset& dataset, const std::vector<AttackSpec>& attacks,
    const AttackContext& context) {
  const std::set<int64_t> wanted(ids.begin(), ids.end());
  std::vector<const VictimObservation*> chosen;
  for (const auto& o : obs) {
    if (wanted.count(o.example_id)) chosen.push_back(&o);
  }
  std::stable_sort(chosen.begin(), chosen.end(), [](auto* a, auto* b) {
    return std::tie(a->victim, a->example_id) < std::tie(b->victim, b->example_id);
  });
  std::vector<ScoreRow> rows;
  for (const auto& a : attacks) {
    for (const VictimObservation* o : chosen) {
      const LabeledExample* z = dataset.Find(o->example_id);
      if (z == nullptr) {
        return absl::NotFoundError(absl::StrCat("target ", o->example_id, " not in dataset"));
      }
      auto st = context.stats->find(o->example_id);
      const bool needs_stats = a.name == "lira" || a.name == "sablayrolles";
      if (needs_stats && st == context.stats->end()) {
        return absl::FailedPreconditionError(
            absl::StrCat("no shadow statistics for target ", o->example_id));
      }
      absl::StatusOr<double> score = 0.0;
      if (a.name == "lira") {
        score = LiraScoreFromProbs(o->probs, z->label, st->second, context.phi);
      } else if (a.name == "yeom") {
        score = YeomScoreFromProbs(o->probs, z->label);
      } else if (a.name == "song") {
        score = SongScoreFromProbs(o->probs, z->label, *context.song);
      } else if (a.name == "sablayrolles") {
        score = SablayrollesScoreFromProbs(o->probs, z->label, st->second, a.hardness);
      } else if (a.name == "shokri") {
        score = context.shokri->Score(ShokriFeatures(o->probs, z->label));
      } else {
        return absl::InvalidArgumentError(absl::StrCat("unknown attack ", a.name));
      }
      if (!score.ok()) return score.status();
      rows.push_back({{o->example_id, *score, a.name}, o->is_member});
    }
  }
  return rows;
}

absl::StatusOr<std::vector<MetricsReport>> EvaluateRows(
    const std::vector<ScoreRow>& rows, const Dataset& dataset,
    const std::vector<double>& fpr_targets, NegativesMode negatives) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const ScoreRow*>> by_attack;
  for (const auto& r : rows) {
    auto& bucket = by_attack[r.score.attack_name];
    if (bucket.empty()) order.push_back(r.score.attack_name);
    bucket.push_back(&r);
  }
  std::vector<MetricsReport> reports;
  for (const auto& name : order) {
    std::vector<double> scores;
    std::vector<int> labels;
    std::vector<Group> groups;
    bool any_under_member = false;
    for (const ScoreRow* r : by_attack[name]) {
      const LabeledExample* z = dataset.Find(r->score.example_id);
      if (z == nullptr) {
        return absl::NotFoundError(absl::StrCat("target ", r->score.example_id, " not in dataset"));
      }
      scores.push_back(r->score.score);
      labels.push_back(r->is_member);
      groups.push_back(z->group);
      any_under_member |= r->is_member && z->group == Group::kUnder;
    }
    auto all = BuildReport(name, Population::kAll, scores, labels, groups, fpr_targets, negatives);
    if (!all.ok()) return all.status();
    reports.push_back(*std::move(all));
    if (any_under_member) {
      auto under = BuildReport(name, Population::kUnderRepresented, scores, labels, groups,
                               fpr_targets, negatives);
      if (under.ok()) reports.push_back(*std::move(under));
    }
  }
  return reports;
}

absl::StatusOr<std::vector<SweepRow>> SweepShadows(
    const ShadowStatsMap& stats,
    const std::map<std::string, std::vector<int64_t>>& selections,
    const std::vector<VictimObservation>& obs, const Dataset& dataset,
    const std::vector<int>& m_list, PhiKind phi, double fpr_target) {
  std::vector<SweepRow> rows;
  for (int m : m_list) {
    ShadowStatsMap truncated;
    for (const auto& [id, s] : stats) {
      auto t = TruncatePairs(s, m);
      if (!t.ok()) {
        return absl::FailedPreconditionError(absl::StrCat(
            "sweep needs ", m, " shadow pairs but target ", id, " has ", s.m));
      }
      truncated[id] = *std::move(t);
    }
    FinalizeMoments(truncated, VarianceMode::kGlobal);
    AttackContext ctx;
    ctx.stats = &truncated;
    ctx.phi = phi;
    for (const auto& [name, ids] : selections) {
      auto scored = ScoreObservations(obs, ids, dataset, {{"lira"}}, ctx);
      if (!scored.ok()) return scored.status();
      std::vector<double> scores;
      std::vector<int> labels;
      for (const auto& r : *scored) {
        scores.push_back(r.score.score);
        labels.push_back(r.is_member);
      }
      SweepRow row;
      row.selection = name;
      row.m = m;
      auto auc = Auroc(scores, labels);
      if (!auc.ok()) return auc.status();
      row.auroc = *auc;
      row.tpr = *TprAtFpr(scores, labels, fpr_target);
      double mem = 0.0;
      for (int64_t id : ids) mem += *EstimateMemorization(truncated.at(id));
      row.mean_memorization = ids.empty() ? 0.0 : mem / ids.size();
      rows.push_back(row);
    }
  }
  return rows;
}

std::string SweepToCsv(const std::vector<SweepRow>& rows) {
  std::string out = "selection,m,auroc,tpr,mean_memorization\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g", r.m, r.auroc, r.tpr,
                  r.mean_memorization);
    absl::StrAppend(&out, r.selection, ",", buf, "\n");
  }
  return out;
}

std::string ScoresFile(const std::string& selection) {
  return absl::StrCat("scores_", selection, ".csv");
}

absl::Status CmdGenData(const ExperimentConfig& c) {
  if (auto s = EnsureDir(c.output_dir); !s.ok()) return s;
  auto ds = BuildDataset(c);
  if (!ds.ok()) return ds.status();
  Log(c, absl::StrCat("gen-data: ", ds->size(), " examples"));
  return SaveCsv(*ds, (fs::path(c.output_dir) / kDatasetFile).string());
}

absl::Status CmdRunShadows(const ExperimentConfig& c) {
  auto ds = LoadStageDataset(c);
  if (!ds.ok()) return ds.status();
  const auto pool = TargetPool(*ds, c.pool_over_sample, c.master_seed);
  Log(c, absl::StrCat("run-shadows: ", pool.size(), " targets x ", c.harness.m, " pairs"));
  std::optional<Resampler> resampler;
  if (c.resample_from_generator) {
    int64_t max_id = 0;
    for (const auto& e : ds->examples) max_id = std::max(max_id, e.id);
    resampler = MakeGeneratorResampler(*c.mixture, c.harness.subsample_fraction, max_id + 1);
  }
  auto stats = RunHarness(*ds, pool, c.harness, resampler ? &*resampler : nullptr);
  if (!stats.ok()) return stats.status();
  return WriteFile(fs::path(c.output_dir) / kShadowStatsFile, StatsToJsonl(*stats));
}

absl::Status CmdSelect(const ExperimentConfig& c) {
  auto ds = LoadStageDataset(c);
  if (!ds.ok()) return ds.status();
  auto stats = LoadStageStats(c);
  if (!stats.ok()) return stats.status();
  std::set<int64_t> pool;
  for (const auto& [id, s] : *stats) pool.insert(id);
  const Dataset pooled = ds->Restrict(pool);

  std::optional<TrainedModel> feature_model;
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (const SelectionSpec& spec : c.selections) {
    absl::StatusOr<std::vector<int64_t>> ids;
    switch (spec.strategy) {
      case SelectionStrategy::kRandom:
        ids = SelectRandom(pooled, spec.group, spec.k, SelectionSeed(c, spec));
        break;
      case SelectionStrategy::kSubpopulation: {
        if (!feature_model.has_value()) {
          LearnerConfig lc = c.learner;
          lc.seed = MixSeed(c.master_seed, {Tag(SeedTag::kSelection), 0x66656174ULL});
          auto m = Train(*ds, lc);
          if (!m.ok()) return m.status();
          feature_model = *std::move(m);
        }
        ids = SelectSubpopulation(*ds, *feature_model, spec.pca_dims, spec.k_clusters,
                                  SelectionSeed(c, spec));
        if (ids.ok()) {
          std::erase_if(*ids, [&](int64_t id) { return !pool.count(id); });
        }
        break;
      }
      case SelectionStrategy::kSingleton:
        ids = SelectSingletons(MemorizationScores(*stats), spec.mem_threshold);
        break;
    }
    if (!ids.ok()) {
      return absl::Status(ids.status().code(),
                          absl::StrCat("selection ", spec.name, ": ", ids.status().message()));
    }
    out[spec.name] = nlohmann::ordered_json::parse(SelectionToJson(spec, *ids));
    Log(c, absl::StrCat("select ", spec.name, ": ", ids->size(), " ids"));
  }
  return WriteFile(fs::path(c.output_dir) / kSelectionsFile, out.dump(2) + "\n");
}

absl::Status CmdAttack(const ExperimentConfig& c) {
  auto ds = LoadStageDataset(c);
  if (!ds.ok()) return ds.status();
  auto stats = LoadStageStats(c);
  if (!stats.ok()) return stats.status();
  auto selections = LoadStageSelections(c);
  if (!selections.ok()) return selections.status();
  std::set<int64_t> targets;
  for (const auto& [name, ids] : *selections) targets.insert(ids.begin(), ids.end());
  for (int64_t id : targets) {
    if (!stats->count(id)) {
      return absl::FailedPreconditionError(
          absl::StrCat("selected target ", id, " has no shadow statistics"));
    }
  }
  Log(c, absl::StrCat("attack: ", c.victims, " victims on ", targets.size(), " targets"));
  auto obs = ObserveVictims(*ds, std::vector<int64_t>(targets.begin(), targets.end()),
                            c.learner, c.victim_fraction, c.victims, c.master_seed,
                            c.workers);
  if (!obs.ok()) return obs.status();
  if (auto s = WriteFile(fs::path(c.output_dir) / kObservationsFile, ObservationsToJsonl(*obs));
      !s.ok()) {
    return s;
  }
  auto ctx = PrepareAttacks(*stats, c.attacks, c.harness.phi, c.master_seed);
  if (!ctx.ok()) return ctx.status();
  for (const auto& [name, ids] : *selections) {
    auto rows = ScoreObservations(*obs, ids, *ds, c.attacks, *ctx);
    if (!rows.ok()) return rows.status();
    if (auto s = WriteFile(fs::path(c.output_dir) / ScoresFile(name), ScoresToCsv(*rows));
        !s.ok()) {
      return s;
    }
  }
  return absl::OkStatus();
}

absl::Status CmdEvaluate(const ExperimentConfig& c) {
  auto ds = LoadStageDataset(c);
  if (!ds.ok()) return ds.status();
  if (auto p = Artifact(c, kShadowStatsFile, "run-shadows"); !p.ok()) return p.status();
  auto selections = LoadStageSelections(c);
  if (!selections.ok()) return selections.status();
  json reports = json::array();
  std::string csv = ReportCsvHeader();
  for (const auto& [name, ids] : *selections) {
    auto p = Artifact(c, ScoresFile(name), "attack");
    if (!p.ok()) return p.status();
    auto text = ReadFile(*p);
    if (!text.ok()) return text.status();
    auto rows = ParseScoresCsv(*text);
    if (!rows.ok()) return rows.status();
    if (rows->empty()) {
      Log(c, absl::StrCat("evaluate ", name, ": no scores, skipped"));
      continue;
    }
    auto rs = EvaluateRows(*rows, *ds, c.fpr_targets, c.negatives);
    if (!rs.ok()) {
      return absl::Status(rs.status().code(),
                          absl::StrCat("selection ", name, ": ", rs.status().message()));
    }
    for (const auto& r : *rs) {
      json entry;
      entry["selection"] = name;
      entry["report"] = json::parse(ReportToJson(r));
      reports.push_back(entry);
      csv += ReportCsvRow(r, name);
    }
  }
  if (auto s = WriteFile(fs::path(c.output_dir) / kReportJsonFile, reports.dump(2) + "\n");
      !s.ok()) {
    return s;
  }
  Log(c, absl::StrCat("evaluate: ", reports.size(), " reports"));
  return WriteFile(fs::path(c.output_dir) / kReportCsvFile, csv);
}

absl::Status CmdGame(const ExperimentConfig& c) {
  auto ds = LoadStageDataset(c);
  if (!ds.ok()) return ds.status();
  GameConfig g;
  g.trials = c.game_trials;
  g.adversary = c.game_adversary;
  g.learner = c.learner;
  g.seed = MixSeed(c.master_seed, {Tag(SeedTag::kGameCoin)});
  g.subsample_fraction = c.game_subsample_fraction;
  g.target_fpr = c.game_target_fpr;
  g.phi = c.harness.phi;
  g.workers = c.workers;
  if (c.game_target.has_value()) {
    g.target_id = *c.game_target;
  } else {
    auto selections = LoadStageSelections(c);
    if (!selections.ok()) return selections.status();
    auto it = selections->find(c.game_selection);
    if (it == selections->end() || it->second.empty()) {
      return absl::FailedPreconditionError(absl::StrCat(
          "selection '", c.game_selection, "' is missing or empty; set game.target_id"));
    }
    g.target_id = it->second.front();
  }
  if (g.adversary != AdversaryKind::kCoin && g.adversary != AdversaryKind::kIndicator) {
    auto stats = LoadStageStats(c);
    if (!stats.ok()) return stats.status();
    auto it = stats->find(g.target_id);
    if (it == stats->end()) {
      return absl::FailedPreconditionError(
          absl::StrCat("no shadow statistics for game target ", g.target_id));
    }
    g.calibration = it->second;
  }
  g.dataset = *std::move(ds);
  Log(c, absl::StrCat("game: target ", g.target_id, ", ", g.trials, " trials"));
  auto r = PlayMiGame(g);
  if (!r.ok()) return r.status();
  nlohmann::ordered_json j;
  j["target_id"] = g.target_id;
  j["adversary"] = c.game_adversary == AdversaryKind::kCoin        ? "coin"
                   : c.game_adversary == AdversaryKind::kIndicator ? "indicator"
                   : c.game_adversary == AdversaryKind::kLossGap   ? "loss_gap"
                   : c.game_adversary == AdversaryKind::kOodGap    ? "ood_gap"
                                                                   : "lira";
  j["advantage"] = r->advantage_estimate;
  j["std_error"] = r->std_error;
  j["trials"] = r->trials;
  j["trials_out"] = r->trials_out;
  j["trials_in"] = r->trials_in;
  return WriteFile(fs::path(c.output_dir) / kGameFile, j.dump(2) + "\n");
}

absl::Status CmdSweepShadows(const ExperimentConfig& c, const std::vector<int>& m_list) {
  auto ds = LoadStageDataset(c);
  if (!ds.ok()) return ds.status();
  auto stats = LoadStageStats(c);
  if (!stats.ok()) return stats.status();
  auto selections = LoadStageSelections(c);
  if (!selections.ok()) return selections.status();
  auto obs = LoadStageObservations(c);
  if (!obs.ok()) return obs.status();
  std::map<std::string, std::vector<int64_t>> nonempty;
  for (const auto& [name, ids] : *selections) {
    if (!ids.empty()) nonempty[name] = ids;
  }
  auto rows = SweepShadows(*stats, nonempty, *obs, *ds, m_list, c.harness.phi,
                           c.fpr_targets.front());
  if (!rows.ok()) return rows.status();
  Log(c, absl::StrCat("sweep-shadows: ", m_list.size(), " values of m"));
  return WriteFile(fs::path(c.output_dir) / kSweepFile, SweepToCsv(*rows));
}

}  // namespace memaudit
