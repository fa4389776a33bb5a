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

// Hand-built scenes and small configs shared by the unit tests.

#ifndef STEPDISTILL_TESTS_TEST_UTIL_H_
#define STEPDISTILL_TESTS_TEST_UTIL_H_

#include <memory>
#include <string>
#include <vector>

#include "stepdistill/pipeline.h"
#include "stepdistill/world.h"

namespace stepdistill::testing {

inline SceneObject Obj(ObjectId id, std::string name, std::vector<std::string> attrs,
                       Rect box) {
  SceneObject o;
  o.id = id;
  o.name = std::move(name);
  std::sort(attrs.begin(), attrs.end());
  o.attributes = std::move(attrs);
  o.bbox = box;
  return o;
}

// A red wooden table with a small blue cookie on it, a green car, and two
// flowers (one red, one white).
inline SceneRef KitchenScene() {
  auto s = std::make_shared<SceneGraph>();
  s->scene_id = "kitchen";
  s->width = 640;
  s->height = 480;
  s->objects = {
      Obj(1, "table", {"red", "large", "wooden"}, {0, 0, 200, 200}),
      Obj(2, "cookie", {"blue", "small", "metal"}, {50, 50, 40, 40}),
      Obj(3, "car", {"green", "large", "metal"}, {300, 0, 200, 150}),
      Obj(4, "flower", {"red", "small", "wooden"}, {0, 300, 100, 100}),
      Obj(5, "flower", {"white", "small", "wooden"}, {400, 300, 100, 100}),
  };
  s->objects[1].relations.push_back({"on", 1});
  return s;
}

// Desk-scale config small enough for unit tests.
inline ExperimentConfig SmallConfig(int eval_scenes = 60, int train_scenes = 400) {
  ExperimentConfig c;
  c.eval_scenes = eval_scenes;
  c.train_scenes = train_scenes;
  c.splits.train.type_cap = 1000;
  c.splits.val.type_cap = 20;
  c.splits.test.type_cap = 20;
  return c;
}

}  // namespace stepdistill::testing

#endif  // STEPDISTILL_TESTS_TEST_UTIL_H_
