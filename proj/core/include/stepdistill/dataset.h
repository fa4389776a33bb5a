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

// Question-type balancing, per-scene supplementing, and disjoint splits.

#ifndef STEPDISTILL_DATASET_H_
#define STEPDISTILL_DATASET_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stepdistill/distill.h"
#include "stepdistill/quesgen.h"

namespace stepdistill {

inline constexpr int kDefaultTypeCap = 160;

struct SplitSpec {
  std::string name;
  int type_cap = kDefaultTypeCap;
  int per_scene_min = 1;
  int per_scene_max = 2;

  // Throws ConfigError.
  void Validate() const;
};

struct BalanceResult {
  std::vector<QAPair> selected;  // in pool order
  std::map<std::string, size_t> phase_one_by_type;
  size_t phase_one = 0;
  size_t phase_two = 0;  // per-scene supplements
};

// Phase one keeps up to type_cap questions of each type; phase two adds
// per_scene_min..per_scene_max questions from every scene phase one left
// unrepresented. Deterministic in seed.
BalanceResult Balance(const std::vector<QAPair>& pool, const SplitSpec& spec, uint64_t seed);

struct DisjointnessProof {
  size_t val_scenes = 0;
  size_t test_scenes = 0;
  size_t train_scenes = 0;
  size_t shared_val_test_scenes = 0;
  size_t shared_val_test_questions = 0;
  size_t shared_train_eval_scenes = 0;
  size_t shared_train_eval_questions = 0;

  bool Disjoint() const {
    return shared_val_test_scenes == 0 && shared_val_test_questions == 0 &&
           shared_train_eval_scenes == 0 && shared_train_eval_questions == 0;
  }
};

struct Splits {
  std::vector<QAPair> train;
  std::vector<QAPair> val;
  std::vector<QAPair> test;
  std::map<std::string, BalanceResult> balance;  // by split name, selections moved out
  DisjointnessProof proof;
};

struct SplitConfig {
  SplitSpec train{"train"};
  SplitSpec val{"val"};
  SplitSpec test{"test"};
  double val_fraction = 0.5;  // of the common pool's scenes

  void Validate() const;
};

void to_json(nlohmann::json& j, const SplitConfig& c);
void from_json(const nlohmann::json& j, SplitConfig& c);

// Counts shared scene ids and question ids between the splits.
DisjointnessProof VerifyDisjoint(const std::vector<QAPair>& train,
                                 const std::vector<QAPair>& val,
                                 const std::vector<QAPair>& test);

// Train from `train_pool`; val and test from a scene partition of
// `common_pool`. Throws SplitOverlapError if any overlap survives.
Splits MakeSplits(const std::vector<QAPair>& train_pool,
                  const std::vector<QAPair>& common_pool, const SplitConfig& config,
                  uint64_t seed);

struct SplitStats {
  size_t questions = 0;
  size_t scenes = 0;
  std::map<std::string, size_t> by_type;
  std::map<std::string, size_t> by_module_kind;  // triples only
  size_t triples = 0;
};

SplitStats Stats(const std::vector<QAPair>& split);
SplitStats Stats(const std::vector<QAPair>& split, const std::vector<Triple>& triples);
nlohmann::ordered_json StatsToJson(const SplitStats& stats);

// Question ids per split plus the disjointness proof counts.
nlohmann::ordered_json SplitManifest(const Splits& splits);

}  // namespace stepdistill

#endif  // STEPDISTILL_DATASET_H_
