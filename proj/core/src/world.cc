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

#include "stepdistill/world.h"

#include <algorithm>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include "stepdistill/errors.h"
#include "stepdistill/rng.h"

namespace stepdistill {

namespace {

constexpr int kGridCols = 4;
constexpr int kGridRows = 3;

bool Contains(const std::vector<std::string>& v, std::string_view s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

}  // namespace

Rect Rect::Intersect(const Rect& other) const {
  const int x0 = std::max(x, other.x);
  const int y0 = std::max(y, other.y);
  const int x1 = std::min(x + w, other.x + other.w);
  const int y1 = std::min(y + h, other.y + other.h);
  if (x1 <= x0 || y1 <= y0) return Rect{x0, y0, 0, 0};
  return Rect{x0, y0, x1 - x0, y1 - y0};
}

double IntersectionOverUnion(const Rect& a, const Rect& b) {
  const Rect i = a.Intersect(b);
  const int64_t inter = i.Empty() ? 0 : i.Area();
  const int64_t uni = a.Area() + b.Area() - inter;
  if (uni <= 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

bool SceneObject::HasAttribute(std::string_view attribute) const {
  return std::binary_search(attributes.begin(), attributes.end(), attribute);
}

const SceneObject* SceneGraph::Find(ObjectId id) const {
  auto it = std::lower_bound(
      objects.begin(), objects.end(), id,
      [](const SceneObject& o, ObjectId v) { return o.id < v; });
  if (it == objects.end() || it->id != id) return nullptr;
  return &*it;
}

// ---------------------------------------------------------------------------
// WorldConfig

WorldConfig WorldConfig::Default() {
  WorldConfig c;
  c.categories = {
      {"food", {"bread", "sandwich", "cookie"}},
      {"furniture", {"table", "chair", "bench"}},
      {"plant", {"flower", "tree", "bush"}},
      {"vehicle", {"car", "bicycle", "bus"}},
  };
  c.families = {
      {"color", {"red", "blue", "green", "white"}},
      {"size", {"small", "large"}},
      {"material", {"wooden", "metal"}},
  };
  c.relations = {"left of", "right of", "on"};
  return c;
}

void WorldConfig::Validate() const {
  if (categories.empty()) throw ConfigError("world: no noun categories");
  if (families.empty()) throw ConfigError("world: no attribute families");
  std::set<std::string> nouns;
  std::set<std::string> cats;
  for (const auto& cat : categories) {
    if (cat.name.empty()) throw ConfigError("world: unnamed category");
    if (cat.nouns.empty())
      throw ConfigError("world: category '" + cat.name + "' has no nouns");
    if (!cats.insert(cat.name).second)
      throw ConfigError("world: duplicate category '" + cat.name + "'");
    for (const auto& n : cat.nouns) {
      if (n.empty()) throw ConfigError("world: empty noun");
      if (!nouns.insert(n).second)
        throw ConfigError("world: duplicate noun '" + n + "'");
    }
  }
  std::set<std::string> attrs;
  std::set<std::string> fams;
  for (const auto& fam : families) {
    if (fam.values.empty())
      throw ConfigError("world: family '" + fam.name + "' has no values");
    if (!fams.insert(fam.name).second)
      throw ConfigError("world: duplicate family '" + fam.name + "'");
    for (const auto& v : fam.values) {
      if (v.empty()) throw ConfigError("world: empty attribute");
      if (!attrs.insert(v).second)
        throw ConfigError("world: duplicate attribute '" + v + "'");
      if (nouns.count(v) || cats.count(v))
        throw ConfigError("world: '" + v + "' is both noun and attribute");
    }
  }
  for (const auto& n : nouns) {
    if (cats.count(n))
      throw ConfigError("world: '" + n + "' is both noun and category");
  }
  if (min_objects < 1 || max_objects < min_objects)
    throw ConfigError("world: invalid objects-per-scene range");
  if (max_objects > 2 * kGridCols * kGridRows)
    throw ConfigError("world: max_objects exceeds layout capacity");
  if (ambiguity_rate < 0.0 || ambiguity_rate > 1.0)
    throw ConfigError("world: ambiguity_rate outside [0,1]");
  if (canvas_width < 8 * kGridCols || canvas_height < 8 * kGridRows)
    throw ConfigError("world: canvas too small");
}

std::vector<std::string> WorldConfig::Nouns() const {
  std::vector<std::string> out;
  for (const auto& cat : categories)
    out.insert(out.end(), cat.nouns.begin(), cat.nouns.end());
  return out;
}

std::vector<std::string> WorldConfig::Attributes() const {
  std::vector<std::string> out;
  for (const auto& fam : families)
    out.insert(out.end(), fam.values.begin(), fam.values.end());
  return out;
}

bool WorldConfig::IsNoun(std::string_view token) const {
  for (const auto& cat : categories)
    if (Contains(cat.nouns, token)) return true;
  return false;
}

bool WorldConfig::IsCategory(std::string_view token) const {
  return Category(token) != nullptr;
}

bool WorldConfig::IsAttribute(std::string_view token) const {
  return FamilyOf(token) != nullptr;
}

std::string WorldConfig::CategoryOf(std::string_view noun) const {
  for (const auto& cat : categories)
    if (Contains(cat.nouns, noun)) return cat.name;
  return {};
}

const AttributeFamily* WorldConfig::FamilyOf(std::string_view attribute) const {
  for (const auto& fam : families)
    if (Contains(fam.values, attribute)) return &fam;
  return nullptr;
}

const AttributeFamily* WorldConfig::Family(std::string_view family_name) const {
  for (const auto& fam : families)
    if (fam.name == family_name) return &fam;
  return nullptr;
}

const NounCategory* WorldConfig::Category(std::string_view category_name) const {
  for (const auto& cat : categories)
    if (cat.name == category_name) return &cat;
  return nullptr;
}

void to_json(nlohmann::json& j, const WorldConfig& c) {
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& cat : c.categories)
    cats.push_back({{"name", cat.name}, {"nouns", cat.nouns}});
  nlohmann::json fams = nlohmann::json::array();
  for (const auto& fam : c.families)
    fams.push_back({{"name", fam.name}, {"values", fam.values}});
  j = {{"categories", cats},
       {"families", fams},
       {"relations", c.relations},
       {"min_objects", c.min_objects},
       {"max_objects", c.max_objects},
       {"ambiguity_rate", c.ambiguity_rate},
       {"canvas_width", c.canvas_width},
       {"canvas_height", c.canvas_height}};
}

void from_json(const nlohmann::json& j, WorldConfig& c) {
  c = WorldConfig::Default();
  if (j.contains("categories")) {
    c.categories.clear();
    for (const auto& cat : j.at("categories"))
      c.categories.push_back(
          {cat.at("name").get<std::string>(),
           cat.at("nouns").get<std::vector<std::string>>()});
  }
  if (j.contains("families")) {
    c.families.clear();
    for (const auto& fam : j.at("families"))
      c.families.push_back(
          {fam.at("name").get<std::string>(),
           fam.at("values").get<std::vector<std::string>>()});
  }
  c.relations = j.value("relations", c.relations);
  c.min_objects = j.value("min_objects", c.min_objects);
  c.max_objects = j.value("max_objects", c.max_objects);
  c.ambiguity_rate = j.value("ambiguity_rate", c.ambiguity_rate);
  c.canvas_width = j.value("canvas_width", c.canvas_width);
  c.canvas_height = j.value("canvas_height", c.canvas_height);
}

// ---------------------------------------------------------------------------
// ScenePatch

const std::string& ScenePatch::scene_id() const {
  static const std::string kEmpty;
  return scene_ ? scene_->scene_id : kEmpty;
}

std::vector<const SceneObject*> ScenePatch::VisibleObjects() const {
  std::vector<const SceneObject*> out;
  out.reserve(visible_objects_.size());
  for (ObjectId id : visible_objects_) out.push_back(scene_->Find(id));
  return out;
}

bool ScenePatch::IsFullImage() const {
  return scene_ && region_ == scene_->Canvas();
}

bool ScenePatch::operator==(const ScenePatch& other) const {
  return scene_id() == other.scene_id() && region_ == other.region_ &&
         origin_label_ == other.origin_label_ &&
         visible_objects_ == other.visible_objects_;
}

ScenePatch Crop(SceneRef scene, const Rect& region,
                std::optional<std::string> origin_label) {
  ScenePatch p;
  p.region_ = region.Intersect(scene->Canvas());
  p.origin_label_ = std::move(origin_label);
  if (!p.region_.Empty()) {
    for (const auto& obj : scene->objects) {
      const Rect inter = obj.bbox.Intersect(p.region_);
      if (inter.Empty() || obj.bbox.Area() == 0) continue;
      if (static_cast<double>(inter.Area()) >=
          kVisibilityThreshold * static_cast<double>(obj.bbox.Area()))
        p.visible_objects_.push_back(obj.id);
    }
  }
  p.scene_ = std::move(scene);
  return p;
}

ScenePatch FullImage(SceneRef scene) {
  const Rect canvas = scene->Canvas();
  return Crop(std::move(scene), canvas, std::nullopt);
}

// ---------------------------------------------------------------------------
// Generation

namespace {

std::vector<std::string> DrawAttributes(const WorldConfig& config, Rng& rng) {
  std::vector<std::string> attrs;
  for (const auto& fam : config.families) attrs.push_back(rng.Pick(fam.values));
  std::sort(attrs.begin(), attrs.end());
  return attrs;
}

int DrawSpan(Rng& rng, int lo, int hi) {
  if (hi < lo) hi = lo;
  return static_cast<int>(rng.UniformInt(lo, hi));
}

}  // namespace

SceneGraph GenerateWorld(uint64_t seed, const WorldConfig& config) {
  config.Validate();
  Rng rng(HashCombine(seed, 0x776f726c64ULL));
  const std::vector<std::string> nouns = config.Nouns();

  SceneGraph scene;
  scene.scene_id = "scene-" + std::to_string(seed);
  scene.width = config.canvas_width;
  scene.height = config.canvas_height;
  scene.seed = seed;

  const int target = static_cast<int>(
      rng.UniformInt(config.min_objects, config.max_objects));
  const int cell_w = config.canvas_width / kGridCols;
  const int cell_h = config.canvas_height / kGridRows;
  std::vector<int> cells(kGridCols * kGridRows);
  for (size_t i = 0; i < cells.size(); ++i) cells[i] = static_cast<int>(i);
  rng.Shuffle(cells);

  struct Placed {
    SceneObject obj;
    int host = -1;  // index of the host for companions
  };
  std::vector<Placed> placed;
  size_t next_cell = 0;
  while (static_cast<int>(placed.size()) < target && next_cell < cells.size()) {
    const int cell = cells[next_cell++];
    const int cx = (cell % kGridCols) * cell_w;
    const int cy = (cell / kGridCols) * cell_h;
    SceneObject host;
    host.name = rng.Pick(nouns);
    host.attributes = DrawAttributes(config, rng);
    host.bbox.w = DrawSpan(rng, cell_w * 2 / 5, cell_w * 9 / 10);
    host.bbox.h = DrawSpan(rng, cell_h * 2 / 5, cell_h * 9 / 10);
    host.bbox.x = cx + DrawSpan(rng, 0, cell_w - host.bbox.w);
    host.bbox.y = cy + DrawSpan(rng, 0, cell_h - host.bbox.h);
    const int host_index = static_cast<int>(placed.size());
    placed.push_back({host, -1});

    if (static_cast<int>(placed.size()) < target &&
        rng.Bernoulli(config.ambiguity_rate)) {
      // Companion from a different category, at most a quarter of the host's
      // area so the host stays invisible in the companion's crop.
      const std::string host_cat = config.CategoryOf(host.name);
      std::vector<std::string> others;
      for (const auto& n : nouns)
        if (config.CategoryOf(n) != host_cat) others.push_back(n);
      if (others.empty()) others = nouns;
      SceneObject comp;
      comp.name = rng.Pick(others);
      comp.attributes = DrawAttributes(config, rng);
      comp.bbox.w = DrawSpan(rng, std::max(1, host.bbox.w / 4), host.bbox.w / 2);
      comp.bbox.h = DrawSpan(rng, std::max(1, host.bbox.h / 4), host.bbox.h / 2);
      comp.bbox.x = host.bbox.x + DrawSpan(rng, 0, host.bbox.w - comp.bbox.w);
      comp.bbox.y = host.bbox.y + DrawSpan(rng, 0, host.bbox.h - comp.bbox.h);
      placed.push_back({comp, host_index});
    }
  }

  // Opaque ids: a random permutation so id order carries no placement order.
  std::vector<ObjectId> ids(placed.size());
  for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<ObjectId>(i + 1);
  rng.Shuffle(ids);
  for (size_t i = 0; i < placed.size(); ++i) placed[i].obj.id = ids[i];

  for (size_t i = 0; i < placed.size(); ++i) {
    auto& a = placed[i];
    if (a.host >= 0) {
      a.obj.relations.push_back({"on", placed[static_cast<size_t>(a.host)].obj.id});
      continue;
    }
    const int acx = a.obj.bbox.x + a.obj.bbox.w / 2;
    for (size_t k = 0; k < placed.size(); ++k) {
      const auto& b = placed[k];
      if (k == i || b.host >= 0) continue;
      const int bcx = b.obj.bbox.x + b.obj.bbox.w / 2;
      if (acx < bcx) a.obj.relations.push_back({"left of", b.obj.id});
      if (acx > bcx) a.obj.relations.push_back({"right of", b.obj.id});
    }
  }

  for (auto& p : placed) {
    std::sort(p.obj.relations.begin(), p.obj.relations.end(),
              [](const Relation& x, const Relation& y) {
                return std::tie(x.target, x.name) < std::tie(y.target, y.name);
              });
    scene.objects.push_back(std::move(p.obj));
  }
  std::sort(scene.objects.begin(), scene.objects.end(),
            [](const SceneObject& x, const SceneObject& y) { return x.id < y.id; });
  return scene;
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::ordered_json SceneToJson(const SceneGraph& scene) {
  nlohmann::ordered_json objects = nlohmann::ordered_json::array();
  for (const auto& obj : scene.objects) {
    nlohmann::ordered_json rels = nlohmann::ordered_json::array();
    for (const auto& r : obj.relations)
      rels.push_back(nlohmann::ordered_json::array({r.name, r.target}));
    nlohmann::ordered_json o;
    o["id"] = obj.id;
    o["name"] = obj.name;
    o["attributes"] = obj.attributes;
    o["bbox"] = {obj.bbox.x, obj.bbox.y, obj.bbox.w, obj.bbox.h};
    o["relations"] = rels;
    objects.push_back(std::move(o));
  }
  nlohmann::ordered_json j;
  j["scene_id"] = scene.scene_id;
  j["canvas"] = {scene.width, scene.height};
  j["objects"] = objects;
  j["seed"] = scene.seed;
  return j;
}

namespace {

void Normalize(SceneGraph& scene) {
  for (auto& obj : scene.objects) {
    std::sort(obj.attributes.begin(), obj.attributes.end());
    obj.attributes.erase(
        std::unique(obj.attributes.begin(), obj.attributes.end()),
        obj.attributes.end());
  }
  std::sort(scene.objects.begin(), scene.objects.end(),
            [](const SceneObject& x, const SceneObject& y) { return x.id < y.id; });
  for (size_t i = 1; i < scene.objects.size(); ++i) {
    if (scene.objects[i].id == scene.objects[i - 1].id)
      throw FormatError("scene '" + scene.scene_id + "': duplicate object id");
  }
  if (scene.objects.empty())
    throw FormatError("scene '" + scene.scene_id + "': no objects");
}

}  // namespace

SceneGraph SceneFromJson(const nlohmann::json& j) {
  SceneGraph scene;
  try {
    scene.scene_id = j.at("scene_id").get<std::string>();
    scene.width = j.at("canvas").at(0).get<int>();
    scene.height = j.at("canvas").at(1).get<int>();
    scene.seed = j.value("seed", uint64_t{0});
    for (const auto& o : j.at("objects")) {
      SceneObject obj;
      obj.id = o.at("id").get<ObjectId>();
      obj.name = o.at("name").get<std::string>();
      obj.attributes = o.at("attributes").get<std::vector<std::string>>();
      const auto& b = o.at("bbox");
      obj.bbox = Rect{b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(),
                      b.at(3).get<int>()};
      for (const auto& r : o.value("relations", nlohmann::json::array()))
        obj.relations.push_back({r.at(0).get<std::string>(), r.at(1).get<ObjectId>()});
      scene.objects.push_back(std::move(obj));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed scene record: ") + e.what());
  }
  Normalize(scene);
  return scene;
}

SceneGraph SceneFromGqaJson(const nlohmann::json& j,
                            std::string_view fallback_scene_id) {
  SceneGraph scene;
  try {
    scene.scene_id = j.contains("image_id") ? j.at("image_id").get<std::string>()
                                            : std::string(fallback_scene_id);
    scene.width = j.at("width").get<int>();
    scene.height = j.at("height").get<int>();
    for (const auto& [key, o] : j.at("objects").items()) {
      SceneObject obj;
      obj.id = std::stoll(key);
      obj.name = o.at("name").get<std::string>();
      obj.attributes =
          o.value("attributes", std::vector<std::string>{});
      obj.bbox = Rect{o.at("x").get<int>(), o.at("y").get<int>(),
                      o.at("w").get<int>(), o.at("h").get<int>()};
      for (const auto& r : o.value("relations", nlohmann::json::array()))
        obj.relations.push_back(
            {r.at("name").get<std::string>(),
             std::stoll(r.at("object").get<std::string>())});
      scene.objects.push_back(std::move(obj));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed GQA scene record: ") + e.what());
  } catch (const std::logic_error& e) {
    throw FormatError(std::string("non-numeric GQA object id: ") + e.what());
  }
  Normalize(scene);
  return scene;
}

std::string SerializeScene(const SceneGraph& scene) {
  return SceneToJson(scene).dump();
}

void WriteScenes(std::ostream& out, const std::vector<SceneGraph>& scenes) {
  for (const auto& s : scenes) out << SerializeScene(s) << '\n';
}

std::vector<SceneGraph> ReadScenes(std::istream& in) {
  std::vector<SceneGraph> scenes;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(std::string("scene line is not JSON: ") + e.what());
    }
    if (j.contains("objects") && j.at("objects").is_object())
      scenes.push_back(SceneFromGqaJson(j));
    else
      scenes.push_back(SceneFromJson(j));
  }
  return scenes;
}

// ---------------------------------------------------------------------------
// Lexicon

namespace {

const std::unordered_map<std::string_view, std::string_view>& Irregulars() {
  static const std::unordered_map<std::string_view, std::string_view> kTable = {
      {"people", "person"}, {"children", "child"}, {"men", "man"},
      {"women", "woman"},   {"mice", "mouse"},     {"feet", "foot"},
      {"teeth", "tooth"},   {"geese", "goose"},    {"leaves", "leaf"},
      {"knives", "knife"},  {"shelves", "shelf"},  {"benches", "bench"},
      {"buses", "bus"},     {"sandwiches", "sandwich"}, {"bushes", "bush"},
      {"glasses", "glass"}, {"dishes", "dish"},    {"boxes", "box"},
  };
  return kTable;
}

bool IsSingularEndingInS(std::string_view w) {
  static const std::set<std::string_view> kSingular = {
      "bus", "gas", "lens", "glass", "grass", "dress", "class", "bus",
      "cactus", "canvas", "this", "is", "news"};
  return kSingular.count(w) > 0 || (w.size() >= 2 && w.substr(w.size() - 2) == "ss");
}

}  // namespace

bool IsPluralWord(std::string_view word) {
  if (Irregulars().count(word)) return true;
  if (word.size() < 2 || word.back() != 's') return false;
  return !IsSingularEndingInS(word);
}

std::string Singularize(std::string_view word) {
  auto it = Irregulars().find(word);
  if (it != Irregulars().end()) return std::string(it->second);
  if (IsPluralWord(word)) return std::string(word.substr(0, word.size() - 1));
  return std::string(word);
}

}  // namespace stepdistill
