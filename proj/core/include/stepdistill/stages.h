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

// File-based pipeline stages over a run directory. Every stage writes a
// manifest next to its outputs and verifies the manifests of its inputs.

#ifndef STEPDISTILL_STAGES_H_
#define STEPDISTILL_STAGES_H_

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "stepdistill/pipeline.h"

namespace stepdistill {

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitInvalidConfig = 2,
  kExitMissingArtifact = 3,
  kExitChecksumMismatch = 4,
  kExitServiceError = 5,
  kExitSplitOverlap = 6,
};

// Exit code for the exception currently being handled.
int ExitCodeForCurrentException();

// Hex FNV-1a 64 of the file's bytes. Throws MissingArtifactError.
std::string FileChecksum(const std::filesystem::path& path);

struct StageContext {
  ExperimentConfig config;
  std::filesystem::path run_dir;
  std::string command_line;  // recorded in manifests
};

// Reads a JSON config file; an empty path yields the defaults.
ExperimentConfig LoadConfig(const std::filesystem::path& path);

enum class ProgramSource { kTemplates, kService };

void StageGenWorld(const StageContext& ctx);
void StageGenQA(const StageContext& ctx);
void StageBuildDataset(const StageContext& ctx);
// `registry` is one of baseline, teacher, oracle. With the service source,
// questions the service fails on use their template program when
// `service_fallback` is set, and abort with ServiceError otherwise.
void StageRunPrograms(const StageContext& ctx, std::string_view split,
                      ProgramSource source, std::string_view registry,
                      bool service_fallback);
void StageHarvest(const StageContext& ctx);
void StageDistill(const StageContext& ctx);
void StageEvaluate(const StageContext& ctx);
// axis is distilled-count or trainset-size.
void StageAblate(const StageContext& ctx, std::string_view axis);
void StageGroundEval(const StageContext& ctx);
void StageReport(const StageContext& ctx);

// Every stage in order.
void RunRecipe(const StageContext& ctx);

// Report files written by StageReport, relative to the run directory.
std::vector<std::filesystem::path> ReportFiles();

}  // namespace stepdistill

#endif  // STEPDISTILL_STAGES_H_
