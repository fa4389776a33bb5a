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

#include "stepdistill/pipeline.h"

#include <set>

#include "stepdistill/errors.h"
#include "stepdistill/parallel.h"

namespace stepdistill {

void ExperimentConfig::Validate() const {
  if (eval_scenes < 2) throw ConfigError("eval_scenes must be at least 2");
  if (train_scenes < 1) throw ConfigError("train_scenes must be positive");
  if (grounding_per_scene < 0) throw ConfigError("grounding_per_scene must be >= 0");
  if (workers < 1) throw ConfigError("workers must be positive");
  if (seed >= 10'000'000'000ULL) throw ConfigError("seed must be below 1e10");
  if (service.timeout_ms <= 0) throw ConfigError("service timeout must be positive");
  if (!(registry.corruption_rate >= 0.0 && registry.corruption_rate <= 1.0))
    throw ConfigError("corruption_rate outside [0,1]");
  if (!(registry.miss_rate >= 0.0 && registry.miss_rate <= 1.0))
    throw ConfigError("miss_rate outside [0,1]");
  if (!(registry.alpha > 0.0)) throw ConfigError("alpha must be positive");
  if (!(registry.min_count >= 0.0)) throw ConfigError("min_count must be non-negative");
  world.Validate();
  gen.Validate();
  splits.Validate();
  distill.Validate();
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json::object();
  j["seed"] = c.seed;
  j["eval_scenes"] = c.eval_scenes;
  j["train_scenes"] = c.train_scenes;
  j["grounding_per_scene"] = c.grounding_per_scene;
  j["workers"] = c.workers;
  j["world"] = c.world;
  j["gen"] = c.gen;
  j["registry"] = c.registry;
  j["splits"] = c.splits;
  j["distill"] = c.distill;
  j["service"] = {{"endpoint", c.service.endpoint}, {"timeout_ms", c.service.timeout_ms}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  static const std::set<std::string> kKnown = {
      "seed", "eval_scenes", "train_scenes", "grounding_per_scene", "workers", "world",
      "gen",  "registry",    "splits",       "distill",             "service"};
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!kKnown.count(key)) throw ConfigError("unknown config key '" + key + "'");
  try {
    c = ExperimentConfig{};
    c.seed = j.value("seed", c.seed);
    c.eval_scenes = j.value("eval_scenes", c.eval_scenes);
    c.train_scenes = j.value("train_scenes", c.train_scenes);
    c.grounding_per_scene = j.value("grounding_per_scene", c.grounding_per_scene);
    c.workers = j.value("workers", c.workers);
    if (j.contains("world")) c.world = j.at("world").get<WorldConfig>();
    if (j.contains("gen")) c.gen = j.at("gen").get<GenConfig>();
    if (j.contains("registry")) c.registry = j.at("registry").get<RegistryConfig>();
    if (j.contains("splits")) c.splits = j.at("splits").get<SplitConfig>();
    if (j.contains("distill")) c.distill = j.at("distill").get<DistillConfig>();
    if (j.contains("service")) {
      c.service.endpoint = j.at("service").value("endpoint", c.service.endpoint);
      c.service.timeout_ms = j.at("service").value("timeout_ms", c.service.timeout_ms);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

uint64_t EvalSceneSeed(uint64_t experiment_seed, int index) {
  return experiment_seed * 1'000'000'000ULL + static_cast<uint64_t>(index);
}

uint64_t TrainSceneSeed(uint64_t experiment_seed, int index) {
  return experiment_seed * 1'000'000'000ULL + 500'000'000ULL + static_cast<uint64_t>(index);
}

std::vector<SceneGraph> GenerateScenes(const WorldConfig& world, uint64_t experiment_seed,
                                       int count, bool train_pool, int workers) {
  return ParallelMap<SceneGraph>(static_cast<size_t>(count), workers, [&](size_t i) {
    const int idx = static_cast<int>(i);
    return GenerateWorld(train_pool ? TrainSceneSeed(experiment_seed, idx)
                                    : EvalSceneSeed(experiment_seed, idx),
                         world);
  });
}

std::vector<QAPair> GenerateQuestionPool(const std::vector<SceneGraph>& scenes,
                                         const WorldConfig& world, const GenConfig& gen,
                                         uint64_t seed, int workers) {
  auto per_scene = ParallelMap<std::vector<QAPair>>(
      scenes.size(), workers, [&](size_t i) { return GenerateQA(scenes[i], world, gen, seed); });
  std::vector<QAPair> out;
  for (auto& qs : per_scene)
    for (auto& q : qs) out.push_back(std::move(q));
  return out;
}

std::vector<GroundingItem> GenerateGroundingSet(const std::vector<SceneGraph>& scenes,
                                                const WorldConfig& world, uint64_t seed,
                                                int per_scene) {
  std::vector<GroundingItem> out;
  for (const auto& s : scenes)
    for (auto& item : GenerateGrounding(s, world, seed, per_scene)) out.push_back(std::move(item));
  return out;
}

Corpus BuildCorpus(const ExperimentConfig& config) {
  config.Validate();
  Corpus c;
  c.eval_scenes = GenerateScenes(config.world, config.seed, config.eval_scenes, false,
                                 config.workers);
  c.train_scenes = GenerateScenes(config.world, config.seed, config.train_scenes, true,
                                  config.workers);
  for (const auto& s : c.eval_scenes) c.scenes.Add(s);
  for (const auto& s : c.train_scenes) c.scenes.Add(s);
  c.eval_pool =
      GenerateQuestionPool(c.eval_scenes, config.world, config.gen, config.seed, config.workers);
  c.train_pool = GenerateQuestionPool(c.train_scenes, config.world, config.gen, config.seed,
                                      config.workers);
  c.splits = MakeSplits(c.train_pool, c.eval_pool, config.splits, config.seed);
  return c;
}

std::vector<QAPair> Rerender(const std::vector<QAPair>& split, const SceneStore& scenes,
                             const WorldConfig& world, const GenConfig& gen, uint64_t seed) {
  std::map<std::string, QAPair> by_id;
  std::set<std::string> done;
  for (const auto& q : split) {
    if (!done.insert(q.scene_id).second) continue;
    SceneRef scene = scenes.Get(q.scene_id);
    if (!scene) throw MissingArtifactError("no scene '" + q.scene_id + "'");
    for (auto& r : GenerateQA(*scene, world, gen, seed)) by_id[r.question_id] = std::move(r);
  }
  std::vector<QAPair> out;
  for (const auto& q : split) {
    auto it = by_id.find(q.question_id);
    if (it == by_id.end() || it->second.question != q.question)
      throw ConfigError("question " + q.question_id +
                        " does not re-render under the given generation config");
    out.push_back(it->second);
  }
  return out;
}

std::map<std::string, std::string> QuestionTypes(const std::vector<QAPair>& questions) {
  std::map<std::string, std::string> types;
  for (const auto& q : questions) types[q.question_id] = q.question_type;
  return types;
}

DistillOutcome DistillFromQuestions(const std::vector<QAPair>& train, const SceneStore& scenes,
                                    const Toolkit& kit, const ExperimentConfig& config) {
  DistillOutcome out;
  const ModuleRegistry baseline = MakeBaselineRegistry(kit, config.registry);
  out.traces = RunPrograms(train, scenes, baseline, config.workers);
  const OracleBackend teacher(kit.reader);
  out.harvest =
      Harvest(out.traces, QuestionTypes(train), teacher, *kit.adapter, config.workers);
  out.trained = Train(MakeStudents(kit, config.registry), out.harvest.triples, config.distill);
  return out;
}

ModuleRegistry DistilledRegistry(const Toolkit& kit, const RegistryConfig& config,
                                 const StudentSet& students) {
  std::set<ModuleKind> kinds;
  for (const auto& [k, s] : students) kinds.insert(k);
  return BindStudents(MakeBaselineRegistry(kit, config), students, kinds);
}

}  // namespace stepdistill
