// Copyright 2026 The Stepdistill Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// stepdistill: command-line driver for the pipeline stages.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "stepdistill/stages.h"

namespace {

using stepdistill::StageContext;

struct CommonFlags {
  std::string config;
  std::optional<uint64_t> seed;
  std::optional<int> workers;
  std::string out_dir = "run";
};

void AddCommon(CLI::App* cmd, CommonFlags* f) {
  cmd->add_option("--config", f->config, "JSON experiment config (defaults when omitted)");
  cmd->add_option("--seed", f->seed, "Override the config seed");
  cmd->add_option("--workers", f->workers, "Override the worker count")->check(CLI::PositiveNumber);
  cmd->add_option("--out-dir", f->out_dir, "Run directory")->capture_default_str();
}

StageContext MakeContext(const CommonFlags& f, const std::string& command_line) {
  StageContext ctx;
  ctx.config = stepdistill::LoadConfig(f.config);
  if (f.seed) ctx.config.seed = *f.seed;
  if (f.workers) ctx.config.workers = *f.workers;
  ctx.config.Validate();
  ctx.run_dir = f.out_dir;
  ctx.command_line = command_line;
  return ctx;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sub-module distillation pipeline over synthetic scene worlds"};
  app.require_subcommand(1);

  std::string command_line;
  for (int i = 0; i < argc; ++i) command_line += (i ? " " : "") + std::string(argv[i]);

  CommonFlags flags;
  std::function<void(const StageContext&)> action;
  auto add = [&](const char* name, const char* help,
                 std::function<void(const StageContext&)> fn) {
    CLI::App* cmd = app.add_subcommand(name, help);
    AddCommon(cmd, &flags);
    cmd->callback([&action, fn] { action = fn; });
    return cmd;
  };

  add("gen-world", "Generate training and evaluation scenes", stepdistill::StageGenWorld);
  add("gen-qa", "Generate question pools and grounding items", stepdistill::StageGenQA);
  add("build-dataset", "Balance and split the question pools", stepdistill::StageBuildDataset);

  std::string split = "train", source = "templates", registry = "baseline";
  bool service_fallback = false;
  CLI::App* run = add("run-programs", "Execute programs for a split and store traces",
                      [&](const StageContext& ctx) {
                        stepdistill::StageRunPrograms(
                            ctx, split,
                            source == "service" ? stepdistill::ProgramSource::kService
                                                : stepdistill::ProgramSource::kTemplates,
                            registry, service_fallback);
                      });
  run->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test"}))
      ->capture_default_str();
  run->add_option("--program-source", source)->check(CLI::IsMember({"templates", "service"}))
      ->capture_default_str();
  run->add_option("--registry", registry)
      ->check(CLI::IsMember({"baseline", "teacher", "oracle"}))->capture_default_str();
  run->add_flag("--service-fallback", service_fallback,
                "Use the template program when the service fails");

  add("harvest", "Collect teacher pseudo-labels from stored traces", stepdistill::StageHarvest);
  add("distill", "Train students on harvested triples", stepdistill::StageDistill);
  add("evaluate", "Score baseline, distilled, teacher and oracle registries",
      stepdistill::StageEvaluate);

  std::string axis = "distilled-count";
  CLI::App* ablate = add("ablate", "Run an ablation",
                         [&](const StageContext& ctx) { stepdistill::StageAblate(ctx, axis); });
  ablate->add_option("--axis", axis)
      ->check(CLI::IsMember({"distilled-count", "trainset-size"}))->capture_default_str();

  add("ground-eval", "Mean IoU on grounding items", stepdistill::StageGroundEval);
  add("report", "Render tables and curve data from stored reports", stepdistill::StageReport);
  add("recipe", "Run every stage in order", stepdistill::RunRecipe);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : stepdistill::kExitInvalidConfig;
  }

  try {
    action(MakeContext(flags, command_line));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return stepdistill::ExitCodeForCurrentException();
  }
  return stepdistill::kExitOk;
}
