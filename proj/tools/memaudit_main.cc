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
// memaudit: membership-inference audit pipeline.
//
//   memaudit --config exp.json gen-data
//   memaudit --config exp.json run-shadows --workers 4
//   memaudit --config exp.json select
//   memaudit --config exp.json attack
//   memaudit --config exp.json evaluate
//   memaudit --config exp.json game
//   memaudit --config exp.json sweep-shadows --m-list 1,2,4,8
//
// Exit codes: 0 success, 1 configuration error, 2 runtime failure.

#include <cstdint>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "memaudit/experiment.h"

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Membership-inference audit toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<int> workers;
  std::optional<uint64_t> seed;
  std::optional<std::string> output;
  std::vector<int> m_list;
  app.add_option("--config", config_path, "Experiment config (JSON)")->required();
  app.add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Master seed");
  app.add_option("--output", output, "Output directory");

  using Command = std::function<absl::Status(const memaudit::ExperimentConfig&)>;
  std::vector<std::pair<CLI::App*, Command>> commands = {
      {app.add_subcommand("gen-data", "Generate or load the dataset"), memaudit::CmdGenData},
      {app.add_subcommand("run-shadows", "Train shadow IN/OUT pairs"), memaudit::CmdRunShadows},
      {app.add_subcommand("select", "Select audit targets"), memaudit::CmdSelect},
      {app.add_subcommand("attack", "Train victims and score attacks"), memaudit::CmdAttack},
      {app.add_subcommand("evaluate", "Build metric reports"), memaudit::CmdEvaluate},
      {app.add_subcommand("game", "Play the membership game"), memaudit::CmdGame},
  };
  CLI::App* sweep = app.add_subcommand("sweep-shadows", "LiRA versus shadow count");
  sweep->add_option("--m-list", m_list, "Shadow counts (default: config sweep.m_list)")
      ->delimiter(',');
  commands.push_back({sweep, [&m_list](const memaudit::ExperimentConfig& c) {
                        return memaudit::CmdSweepShadows(c, m_list.empty() ? c.sweep_m : m_list);
                      }});

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  auto config = memaudit::LoadExperimentConfig(config_path);
  if (!config.ok()) {
    std::cerr << "config error: " << config.status().message() << "\n";
    return kExitConfig;
  }
  if (workers) config->workers = *workers;
  if (seed) config->master_seed = *seed;
  if (output) config->output_dir = *output;
  config->Propagate();
  if (auto s = config->Validate(); !s.ok()) {
    std::cerr << "config error: " << s.message() << "\n";
    return kExitConfig;
  }

  for (const auto& [sub, run] : commands) {
    if (!sub->parsed()) continue;
    absl::Status s = run(*config);
    if (!s.ok()) {
      std::cerr << sub->get_name() << ": " << s.message() << "\n";
      return kExitRuntime;
    }
  }
  return 0;
}
