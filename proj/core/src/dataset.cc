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

#include "stepdistill/dataset.h"

#include <algorithm>
#include <set>

#include "stepdistill/errors.h"
#include "stepdistill/rng.h"

namespace stepdistill {

void SplitSpec::Validate() const {
  if (type_cap < 1) throw ConfigError("split '" + name + "': type cap must be >= 1");
  if (per_scene_min < 0 || per_scene_max < per_scene_min)
    throw ConfigError("split '" + name + "': bad per-scene range");
}

BalanceResult Balance(const std::vector<QAPair>& pool, const SplitSpec& spec,
                      uint64_t seed) {
  spec.Validate();
  BalanceResult result;
  Rng rng(HashCombine(seed, Fnv1a64("balance:" + spec.name)));

  std::map<std::string, std::vector<size_t>> by_type;
  for (size_t i = 0; i < pool.size(); ++i) by_type[pool[i].question_type].push_back(i);
  std::vector<bool> chosen(pool.size(), false);
  for (auto& [type, idx] : by_type) {
    rng.Shuffle(idx);
    const size_t take = std::min(idx.size(), static_cast<size_t>(spec.type_cap));
    for (size_t i = 0; i < take; ++i) chosen[idx[i]] = true;
    result.phase_one_by_type[type] = take;
    result.phase_one += take;
  }

  std::set<std::string> represented;
  std::map<std::string, std::vector<size_t>> by_scene;
  for (size_t i = 0; i < pool.size(); ++i) {
    if (chosen[i]) represented.insert(pool[i].scene_id);
    by_scene[pool[i].scene_id].push_back(i);
  }
  for (auto& [scene, idx] : by_scene) {
    if (represented.count(scene)) continue;
    rng.Shuffle(idx);
    const size_t want = static_cast<size_t>(rng.UniformInt(spec.per_scene_min,
                                                           spec.per_scene_max));
    const size_t take = std::min(want, idx.size());
    for (size_t i = 0; i < take; ++i) chosen[idx[i]] = true;
    result.phase_two += take;
  }

  for (size_t i = 0; i < pool.size(); ++i)
    if (chosen[i]) result.selected.push_back(pool[i]);
  return result;
}

void SplitConfig::Validate() const {
  train.Validate();
  val.Validate();
  test.Validate();
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw ConfigError("val_fraction must be in (0,1)");
}

namespace {

void SpecToJson(nlohmann::json& j, const SplitSpec& s) {
  j = {{"type_cap", s.type_cap},
       {"per_scene_min", s.per_scene_min},
       {"per_scene_max", s.per_scene_max}};
}

void SpecFromJson(const nlohmann::json& j, SplitSpec& s) {
  s.type_cap = j.value("type_cap", s.type_cap);
  s.per_scene_min = j.value("per_scene_min", s.per_scene_min);
  s.per_scene_max = j.value("per_scene_max", s.per_scene_max);
}

}  // namespace

void to_json(nlohmann::json& j, const SplitConfig& c) {
  SpecToJson(j["train"], c.train);
  SpecToJson(j["val"], c.val);
  SpecToJson(j["test"], c.test);
  j["val_fraction"] = c.val_fraction;
}

void from_json(const nlohmann::json& j, SplitConfig& c) {
  c = SplitConfig{};
  if (j.contains("train")) SpecFromJson(j.at("train"), c.train);
  if (j.contains("val")) SpecFromJson(j.at("val"), c.val);
  if (j.contains("test")) SpecFromJson(j.at("test"), c.test);
  c.val_fraction = j.value("val_fraction", c.val_fraction);
}

DisjointnessProof VerifyDisjoint(const std::vector<QAPair>& train,
                                 const std::vector<QAPair>& val,
                                 const std::vector<QAPair>& test) {
  auto scenes = [](const std::vector<QAPair>& s) {
    std::set<std::string> out;
    for (const auto& q : s) out.insert(q.scene_id);
    return out;
  };
  auto questions = [](const std::vector<QAPair>& s) {
    std::set<std::string> out;
    for (const auto& q : s) out.insert(q.question_id);
    return out;
  };
  auto shared = [](const std::set<std::string>& a, const std::set<std::string>& b) {
    size_t n = 0;
    for (const auto& x : a) n += b.count(x);
    return n;
  };
  const auto ts = scenes(train), vs = scenes(val), es = scenes(test);
  const auto tq = questions(train), vq = questions(val), eq = questions(test);
  DisjointnessProof p;
  p.train_scenes = ts.size();
  p.val_scenes = vs.size();
  p.test_scenes = es.size();
  p.shared_val_test_scenes = shared(vs, es);
  p.shared_val_test_questions = shared(vq, eq);
  p.shared_train_eval_scenes = shared(ts, vs) + shared(ts, es);
  p.shared_train_eval_questions = shared(tq, vq) + shared(tq, eq);
  return p;
}

Splits MakeSplits(const std::vector<QAPair>& train_pool,
                  const std::vector<QAPair>& common_pool, const SplitConfig& config,
                  uint64_t seed) {
  config.Validate();
  Splits splits;

  std::vector<std::string> scene_ids;
  {
    std::set<std::string> seen;
    for (const auto& q : common_pool)
      if (seen.insert(q.scene_id).second) scene_ids.push_back(q.scene_id);
  }
  std::sort(scene_ids.begin(), scene_ids.end());
  Rng rng(HashCombine(seed, Fnv1a64("partition")));
  rng.Shuffle(scene_ids);
  const size_t n_val = static_cast<size_t>(
      static_cast<double>(scene_ids.size()) * config.val_fraction + 0.5);
  const std::set<std::string> val_scenes(scene_ids.begin(),
                                         scene_ids.begin() + static_cast<long>(n_val));
  std::vector<QAPair> val_pool, test_pool;
  for (const auto& q : common_pool)
    (val_scenes.count(q.scene_id) ? val_pool : test_pool).push_back(q);

  auto run = [&](const std::vector<QAPair>& pool, const SplitSpec& spec,
                 std::vector<QAPair>* out) {
    BalanceResult r = Balance(pool, spec, seed);
    *out = std::move(r.selected);
    r.selected.clear();
    splits.balance[spec.name] = std::move(r);
  };
  run(train_pool, config.train, &splits.train);
  run(val_pool, config.val, &splits.val);
  run(test_pool, config.test, &splits.test);

  splits.proof = VerifyDisjoint(splits.train, splits.val, splits.test);
  if (!splits.proof.Disjoint()) {
    throw SplitOverlapError(
        "splits overlap: val/test share " +
        std::to_string(splits.proof.shared_val_test_scenes) + " scenes and " +
        std::to_string(splits.proof.shared_val_test_questions) +
        " questions; train/eval share " +
        std::to_string(splits.proof.shared_train_eval_scenes) + " scenes and " +
        std::to_string(splits.proof.shared_train_eval_questions) + " questions");
  }
  return splits;
}

SplitStats Stats(const std::vector<QAPair>& split) {
  SplitStats s;
  std::set<std::string> scenes;
  for (const auto& q : split) {
    ++s.by_type[q.question_type];
    scenes.insert(q.scene_id);
  }
  s.questions = split.size();
  s.scenes = scenes.size();
  return s;
}

SplitStats Stats(const std::vector<QAPair>& split, const std::vector<Triple>& triples) {
  SplitStats s = Stats(split);
  for (const auto& t : triples) ++s.by_module_kind[std::string(ModuleKindName(t.module_kind))];
  s.triples = triples.size();
  return s;
}

nlohmann::ordered_json StatsToJson(const SplitStats& stats) {
  nlohmann::ordered_json j;
  j["questions"] = stats.questions;
  j["scenes"] = stats.scenes;
  j["by_type"] = stats.by_type;
  if (stats.triples > 0 || !stats.by_module_kind.empty()) {
    j["triples"] = stats.triples;
    j["by_module_kind"] = stats.by_module_kind;
  }
  return j;
}

nlohmann::ordered_json SplitManifest(const Splits& splits) {
  auto ids = [](const std::vector<QAPair>& s) {
    std::vector<std::string> out;
    for (const auto& q : s) out.push_back(q.question_id);
    return out;
  };
  nlohmann::ordered_json j;
  j["train"] = ids(splits.train);
  j["val"] = ids(splits.val);
  j["test"] = ids(splits.test);
  nlohmann::ordered_json balance;
  for (const auto& [name, r] : splits.balance) {
    balance[name] = {{"phase_one", r.phase_one},
                     {"phase_two", r.phase_two},
                     {"phase_one_by_type", r.phase_one_by_type}};
  }
  j["balance"] = balance;
  const DisjointnessProof& p = splits.proof;
  j["proof"] = {{"train_scenes", p.train_scenes},
                {"val_scenes", p.val_scenes},
                {"test_scenes", p.test_scenes},
                {"shared_val_test_scenes", p.shared_val_test_scenes},
                {"shared_val_test_questions", p.shared_val_test_questions},
                {"shared_train_eval_scenes", p.shared_train_eval_scenes},
                {"shared_train_eval_questions", p.shared_train_eval_questions}};
  return j;
}

}  // namespace stepdistill
