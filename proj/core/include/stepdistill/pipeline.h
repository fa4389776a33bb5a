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

// In-memory experiment assembly shared by the command-line stages and the
// acceptance suite.

#ifndef STEPDISTILL_PIPELINE_H_
#define STEPDISTILL_PIPELINE_H_

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stepdistill/dataset.h"
#include "stepdistill/distill.h"
#include "stepdistill/eval.h"
#include "stepdistill/quesgen.h"
#include "stepdistill/registry.h"
#include "stepdistill/world.h"

namespace stepdistill {

struct ServiceConfig {
  std::string endpoint;  // empty: read the environment variable
  int timeout_ms = 10000;
};

struct ExperimentConfig {
  uint64_t seed = 0;
  int eval_scenes = 1000;
  int train_scenes = 20000;
  int grounding_per_scene = 3;
  int workers = 1;
  WorldConfig world = WorldConfig::Default();
  GenConfig gen;
  RegistryConfig registry;
  SplitConfig splits;
  DistillConfig distill;
  ServiceConfig service;

  // Throws ConfigError.
  void Validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
// Missing keys keep their defaults; unknown top-level keys are rejected.
void from_json(const nlohmann::json& j, ExperimentConfig& c);

// Scene seeds of the two pools never collide for seeds below 1e10.
uint64_t EvalSceneSeed(uint64_t experiment_seed, int index);
uint64_t TrainSceneSeed(uint64_t experiment_seed, int index);

std::vector<SceneGraph> GenerateScenes(const WorldConfig& world, uint64_t experiment_seed,
                                       int count, bool train_pool, int workers);

std::vector<QAPair> GenerateQuestionPool(const std::vector<SceneGraph>& scenes,
                                         const WorldConfig& world, const GenConfig& gen,
                                         uint64_t seed, int workers);

std::vector<GroundingItem> GenerateGroundingSet(const std::vector<SceneGraph>& scenes,
                                                const WorldConfig& world, uint64_t seed,
                                                int per_scene);

// Scenes, question pools (with coarse and no-pointer renderings of the eval
// pool) and splits.
struct Corpus {
  SceneStore scenes;
  std::vector<SceneGraph> train_scenes;
  std::vector<SceneGraph> eval_scenes;
  std::vector<QAPair> train_pool;
  std::vector<QAPair> eval_pool;
  Splits splits;
};

Corpus BuildCorpus(const ExperimentConfig& config);

// Same questions as `split` rendered under another generation config.
std::vector<QAPair> Rerender(const std::vector<QAPair>& split, const SceneStore& scenes,
                             const WorldConfig& world, const GenConfig& gen, uint64_t seed);

std::map<std::string, std::string> QuestionTypes(const std::vector<QAPair>& questions);

struct DistillOutcome {
  std::vector<ExecutionTrace> traces;
  HarvestResult harvest;
  TrainResult trained;
};

// Runs the training questions on the baseline registry, harvests teacher
// pseudo-labels over every distillable step, and trains fresh students.
DistillOutcome DistillFromQuestions(const std::vector<QAPair>& train, const SceneStore& scenes,
                                    const Toolkit& kit, const ExperimentConfig& config);

ModuleRegistry DistilledRegistry(const Toolkit& kit, const RegistryConfig& config,
                                 const StudentSet& students);

}  // namespace stepdistill

#endif  // STEPDISTILL_PIPELINE_H_
