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

#include <set>

#include <gtest/gtest.h>

#include "stepdistill/dataset.h"
#include "stepdistill/errors.h"

namespace stepdistill {
namespace {

QAPair Q(std::string scene, int k, std::string type, std::string text = "") {
  QAPair q;
  q.scene_id = std::move(scene);
  q.question_id = q.scene_id + "-q" + std::to_string(k);
  q.question_type = std::move(type);
  q.question = text.empty() ? q.question_id : text;
  q.ground_truth = "yes";
  return q;
}

TEST(BalanceTest, CapsEachType) {
  std::vector<QAPair> pool;
  for (int i = 0; i < 300; ++i) pool.push_back(Q("s" + std::to_string(i % 30), i, "exist"));
  for (int i = 0; i < 40; ++i) pool.push_back(Q("s" + std::to_string(i % 30), 1000 + i, "two_hop"));
  SplitSpec spec{"test", 160, 1, 2};
  const BalanceResult r = Balance(pool, spec, 7);
  EXPECT_EQ(r.phase_one_by_type.at("exist"), 160u);
  EXPECT_EQ(r.phase_one_by_type.at("two_hop"), 40u);
  EXPECT_EQ(r.phase_one, 200u);
  EXPECT_EQ(r.selected.size(), r.phase_one + r.phase_two);
  // Output keeps pool order.
  std::map<std::string, size_t> pos;
  for (size_t i = 0; i < pool.size(); ++i) pos[pool[i].question_id] = i;
  for (size_t i = 1; i < r.selected.size(); ++i)
    EXPECT_LT(pos[r.selected[i - 1].question_id], pos[r.selected[i].question_id]);
}

TEST(BalanceTest, LargeCapSelectsEverything) {
  std::vector<QAPair> pool;
  for (int i = 0; i < 50; ++i) pool.push_back(Q("s" + std::to_string(i / 5), i, i % 2 ? "a" : "b"));
  const BalanceResult r = Balance(pool, SplitSpec{"x", 1000}, 1);
  EXPECT_EQ(r.selected, pool);
  EXPECT_EQ(r.phase_two, 0u);
  EXPECT_TRUE(Balance({}, SplitSpec{"x"}, 1).selected.empty());
}

TEST(BalanceTest, UnrepresentedSceneGetsOneOrTwo) {
  // Cap 1 over a single type: phase one keeps one question, from scene A or
  // scene B; the other scene then contributes one or two.
  const std::vector<QAPair> pool = {Q("A", 0, "t"), Q("B", 0, "t"), Q("B", 1, "t"), Q("B", 2, "t")};
  std::set<size_t> phase_two;
  for (uint64_t seed = 0; seed < 200; ++seed) {
    const BalanceResult r = Balance(pool, SplitSpec{"x", 1, 1, 2}, seed);
    ASSERT_EQ(r.phase_one, 1u);
    std::map<std::string, size_t> per_scene;
    for (const auto& q : r.selected) ++per_scene[q.scene_id];
    ASSERT_EQ(per_scene.size(), 2u);  // both scenes represented
    ASSERT_EQ(per_scene["A"], 1u);
    ASSERT_GE(r.phase_two, 1u);
    ASSERT_LE(r.phase_two, 2u);
    phase_two.insert(r.phase_two);
    EXPECT_EQ(r.selected, Balance(pool, SplitSpec{"x", 1, 1, 2}, seed).selected);
  }
  EXPECT_EQ(phase_two, (std::set<size_t>{1, 2}));
}

TEST(BalanceTest, SpecValidation) {
  EXPECT_THROW((SplitSpec{"x", 0}).Validate(), ConfigError);
  EXPECT_THROW((SplitSpec{"x", 5, 3, 2}).Validate(), ConfigError);
}

std::vector<QAPair> Pool(const std::string& prefix, int scenes, int per_scene) {
  std::vector<QAPair> out;
  for (int s = 0; s < scenes; ++s)
    for (int k = 0; k < per_scene; ++k)
      out.push_back(Q(prefix + std::to_string(s), k, k % 2 ? "exist" : "verify_attr"));
  return out;
}

TEST(SplitTest, ValTestPartitionIsDisjoint) {
  SplitConfig c;
  c.val_fraction = 0.7;
  c.val.type_cap = c.test.type_cap = 1000;
  for (uint64_t seed = 0; seed < 50; ++seed) {
    const Splits s = MakeSplits(Pool("train", 20, 3), Pool("eval", 10, 3), c, seed);
    std::set<std::string> val_scenes, test_scenes;
    for (const auto& q : s.val) val_scenes.insert(q.scene_id);
    for (const auto& q : s.test) test_scenes.insert(q.scene_id);
    EXPECT_EQ(val_scenes.size(), 7u);
    EXPECT_EQ(test_scenes.size(), 3u);
    for (const auto& id : val_scenes) EXPECT_EQ(test_scenes.count(id), 0u);
    EXPECT_TRUE(s.proof.Disjoint());
    EXPECT_EQ(s.proof.val_scenes, 7u);
    EXPECT_EQ(s.proof.test_scenes, 3u);
    EXPECT_EQ(s.val.size() + s.test.size(), 30u);
  }
}

TEST(SplitTest, DuplicateQuestionTextIsAllowed) {
  std::vector<QAPair> common;
  for (int s = 0; s < 6; ++s) common.push_back(Q("e" + std::to_string(s), 0, "exist", "Is there a car?"));
  EXPECT_NO_THROW(MakeSplits(Pool("t", 2, 1), common, SplitConfig{}, 1));
}

TEST(SplitTest, OverlapIsAHardFailure) {
  // The train pool reuses an evaluation scene.
  std::vector<QAPair> train = Pool("t", 3, 2);
  train.push_back(Q("e1", 99, "exist"));
  EXPECT_THROW(MakeSplits(train, Pool("e", 6, 2), SplitConfig{}, 3), SplitOverlapError);

  const auto proof = VerifyDisjoint(Pool("t", 2, 1), {Q("e1", 0, "x")}, {Q("e1", 0, "x")});
  EXPECT_EQ(proof.shared_val_test_scenes, 1u);
  EXPECT_EQ(proof.shared_val_test_questions, 1u);
  EXPECT_FALSE(proof.Disjoint());
}

TEST(StatsTest, CountsByTypeSceneAndKind) {
  const auto split = Pool("s", 4, 3);
  const SplitStats s = Stats(split);
  EXPECT_EQ(s.questions, 12u);
  EXPECT_EQ(s.scenes, 4u);
  EXPECT_EQ(s.by_type.at("exist"), 4u);
  EXPECT_EQ(s.by_type.at("verify_attr"), 8u);
  Triple t;
  t.module_kind = ModuleKind::kVerifyProperty;
  const SplitStats with = Stats(split, {t, t});
  EXPECT_EQ(with.triples, 2u);
  EXPECT_EQ(with.by_module_kind.at("verify_property"), 2u);
}

TEST(SplitTest, ManifestListsIdsAndProof) {
  const Splits s = MakeSplits(Pool("t", 4, 2), Pool("e", 8, 2), SplitConfig{}, 5);
  const auto m = SplitManifest(s);
  EXPECT_EQ(m.at("test").size(), s.test.size());
  EXPECT_EQ(m.at("proof").at("shared_val_test_scenes"), 0);
  EXPECT_EQ(m.at("balance").at("test").at("phase_one").get<size_t>() +
                m.at("balance").at("test").at("phase_two").get<size_t>(),
            s.test.size());
}

}  // namespace
}  // namespace stepdistill
