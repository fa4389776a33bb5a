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

// Synthetic scene worlds: the scene-graph stand-in for an image, the crop
// operation that turns a region into a patch, and JSONL serialization.

#ifndef STEPDISTILL_WORLD_H_
#define STEPDISTILL_WORLD_H_

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace stepdistill {

struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  int64_t Area() const { return static_cast<int64_t>(w) * h; }
  bool Empty() const { return w <= 0 || h <= 0; }
  Rect Intersect(const Rect& other) const;
  bool operator==(const Rect&) const = default;
};

double IntersectionOverUnion(const Rect& a, const Rect& b);

using ObjectId = int64_t;

struct Relation {
  std::string name;
  ObjectId target = 0;
  bool operator==(const Relation&) const = default;
};

struct SceneObject {
  ObjectId id = 0;
  std::string name;
  std::vector<std::string> attributes;  // sorted, unique
  Rect bbox;
  std::vector<Relation> relations;

  bool HasAttribute(std::string_view attribute) const;
  bool operator==(const SceneObject&) const = default;
};

struct SceneGraph {
  std::string scene_id;
  int width = 0;
  int height = 0;
  std::vector<SceneObject> objects;  // sorted by id
  uint64_t seed = 0;

  const SceneObject* Find(ObjectId id) const;
  Rect Canvas() const { return Rect{0, 0, width, height}; }
  bool operator==(const SceneGraph&) const = default;
};

using SceneRef = std::shared_ptr<const SceneGraph>;

struct NounCategory {
  std::string name;
  std::vector<std::string> nouns;
};

struct AttributeFamily {
  std::string name;
  std::vector<std::string> values;
};

struct WorldConfig {
  std::vector<NounCategory> categories;
  std::vector<AttributeFamily> families;
  std::vector<std::string> relations;
  int min_objects = 3;
  int max_objects = 8;
  // Probability that an object gets a small companion placed inside its box,
  // so the object's crop shows two objects.
  double ambiguity_rate = 0.2;
  int canvas_width = 640;
  int canvas_height = 480;

  static WorldConfig Default();

  // Throws ConfigError.
  void Validate() const;

  std::vector<std::string> Nouns() const;
  std::vector<std::string> Attributes() const;
  bool IsNoun(std::string_view token) const;
  bool IsCategory(std::string_view token) const;
  bool IsAttribute(std::string_view token) const;
  // Category of a noun; empty when the noun is unknown.
  std::string CategoryOf(std::string_view noun) const;
  // Family of an attribute; nullptr when unknown.
  const AttributeFamily* FamilyOf(std::string_view attribute) const;
  const AttributeFamily* Family(std::string_view family_name) const;
  const NounCategory* Category(std::string_view category_name) const;
};

void to_json(nlohmann::json& j, const WorldConfig& c);
void from_json(const nlohmann::json& j, WorldConfig& c);

// Object visible in a region iff intersection / object area >= this.
inline constexpr double kVisibilityThreshold = 0.5;

// A view of a scene restricted to a region. visible_objects is derived from
// the region at construction and cannot be set independently.
class ScenePatch {
 public:
  ScenePatch() = default;

  const SceneRef& scene() const { return scene_; }
  const std::string& scene_id() const;
  const Rect& region() const { return region_; }
  const std::optional<std::string>& origin_label() const {
    return origin_label_;
  }
  const std::vector<ObjectId>& visible_objects() const {
    return visible_objects_;
  }
  std::vector<const SceneObject*> VisibleObjects() const;
  bool IsFullImage() const;

  bool operator==(const ScenePatch& other) const;

 private:
  friend ScenePatch Crop(SceneRef scene, const Rect& region,
                         std::optional<std::string> origin_label);
  SceneRef scene_;
  Rect region_;
  std::optional<std::string> origin_label_;
  std::vector<ObjectId> visible_objects_;
};

ScenePatch Crop(SceneRef scene, const Rect& region,
                std::optional<std::string> origin_label = std::nullopt);
ScenePatch FullImage(SceneRef scene);

// Deterministic in (seed, config). Throws ConfigError on invalid config.
SceneGraph GenerateWorld(uint64_t seed, const WorldConfig& config);

nlohmann::ordered_json SceneToJson(const SceneGraph& scene);
SceneGraph SceneFromJson(const nlohmann::json& j);
// Accepts GQA scene-graph records: {"image_id", "width", "height",
// "objects": {"<id>": {"name", "attributes", "x", "y", "w", "h",
// "relations": [{"name", "object"}]}}}.
SceneGraph SceneFromGqaJson(const nlohmann::json& j,
                            std::string_view fallback_scene_id = "");

std::string SerializeScene(const SceneGraph& scene);

void WriteScenes(std::ostream& out, const std::vector<SceneGraph>& scenes);
// Detects the record shape per line.
std::vector<SceneGraph> ReadScenes(std::istream& in);

// Plural detection and singularization used by the adapter and the question
// reader: trailing "s" with an irregulars table.
bool IsPluralWord(std::string_view word);
std::string Singularize(std::string_view word);

}  // namespace stepdistill

#endif  // STEPDISTILL_WORLD_H_
