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

#include "stepdistill/trace.h"

#include <charconv>

#include "stepdistill/errors.h"

namespace stepdistill {

std::string_view ValueTypeName(const Value& value) {
  static constexpr std::string_view kNames[] = {"nan",  "patch", "patch_list", "str",
                                                "bool", "num",   "list"};
  return kNames[value.v.index()];
}

namespace {

std::string FormatNum(double d) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), d);
  return std::string(buf, p);
}

std::string RegionString(const Rect& r) {
  return "[" + std::to_string(r.x) + "," + std::to_string(r.y) + "," +
         std::to_string(r.w) + "," + std::to_string(r.h) + "]";
}

}  // namespace

std::string AnswerString(const Value& value) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, NanValue>) {
          return "NaN";
        } else if constexpr (std::is_same_v<T, ScenePatch>) {
          return "patch" + RegionString(x.region());
        } else if constexpr (std::is_same_v<T, Value::PatchList>) {
          return "patches(" + std::to_string(x.size()) + ")";
        } else if constexpr (std::is_same_v<T, std::string>) {
          return x;
        } else if constexpr (std::is_same_v<T, bool>) {
          return x ? "yes" : "no";
        } else if constexpr (std::is_same_v<T, double>) {
          return FormatNum(x);
        } else {
          std::string out;
          for (size_t i = 0; i < x.size(); ++i) {
            if (i) out += ",";
            out += AnswerString(x[i]);
          }
          return out;
        }
      },
      value.v);
}

std::string_view TraceStatusName(TraceStatus status) {
  switch (status) {
    case TraceStatus::kOk: return "ok";
    case TraceStatus::kParseErrorFallback: return "parse_error_fallback";
    case TraceStatus::kRuntimeNan: return "runtime_nan";
  }
  return "?";
}

std::optional<TraceStatus> ParseTraceStatus(std::string_view name) {
  for (TraceStatus s : {TraceStatus::kOk, TraceStatus::kParseErrorFallback,
                        TraceStatus::kRuntimeNan})
    if (TraceStatusName(s) == name) return s;
  return std::nullopt;
}

nlohmann::ordered_json PatchToJson(const ScenePatch& patch) {
  nlohmann::ordered_json j;
  j["scene_id"] = patch.scene_id();
  const Rect& r = patch.region();
  j["region"] = {r.x, r.y, r.w, r.h};
  j["origin_label"] = patch.origin_label() ? nlohmann::ordered_json(*patch.origin_label())
                                           : nlohmann::ordered_json(nullptr);
  return j;
}

ScenePatch PatchFromJson(const nlohmann::json& j, const SceneLookup& scenes) {
  const std::string scene_id = j.at("scene_id").get<std::string>();
  SceneRef scene = scenes(scene_id);
  if (!scene) throw FormatError("unknown scene '" + scene_id + "'");
  const auto& r = j.at("region");
  std::optional<std::string> origin;
  if (j.contains("origin_label") && !j.at("origin_label").is_null())
    origin = j.at("origin_label").get<std::string>();
  return Crop(std::move(scene),
              Rect{r.at(0).get<int>(), r.at(1).get<int>(), r.at(2).get<int>(),
                   r.at(3).get<int>()},
              std::move(origin));
}

nlohmann::ordered_json ValueToJson(const Value& value) {
  nlohmann::ordered_json j;
  j["type"] = ValueTypeName(value);
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, NanValue>) {
          j["value"] = nullptr;
        } else if constexpr (std::is_same_v<T, ScenePatch>) {
          j["value"] = PatchToJson(x);
        } else if constexpr (std::is_same_v<T, Value::PatchList>) {
          nlohmann::ordered_json arr = nlohmann::ordered_json::array();
          for (const auto& p : x) arr.push_back(PatchToJson(p));
          j["value"] = arr;
        } else if constexpr (std::is_same_v<T, Value::List>) {
          nlohmann::ordered_json arr = nlohmann::ordered_json::array();
          for (const auto& v : x) arr.push_back(ValueToJson(v));
          j["value"] = arr;
        } else {
          j["value"] = x;
        }
      },
      value.v);
  return j;
}

Value ValueFromJson(const nlohmann::json& j, const SceneLookup& scenes) {
  const std::string type = j.at("type").get<std::string>();
  const auto& v = j.at("value");
  if (type == "nan") return Value::Nan();
  if (type == "patch") return Value{PatchFromJson(v, scenes)};
  if (type == "patch_list") {
    Value::PatchList list;
    for (const auto& p : v) list.push_back(PatchFromJson(p, scenes));
    return Value{std::move(list)};
  }
  if (type == "str") return Value{v.get<std::string>()};
  if (type == "bool") return Value{v.get<bool>()};
  if (type == "num") return Value{v.get<double>()};
  if (type == "list") {
    Value::List list;
    for (const auto& x : v) list.push_back(ValueFromJson(x, scenes));
    return Value{std::move(list)};
  }
  throw FormatError("unknown value type '" + type + "'");
}

nlohmann::ordered_json TraceToJson(const ExecutionTrace& trace) {
  nlohmann::ordered_json steps = nlohmann::ordered_json::array();
  for (const auto& s : trace.steps) {
    nlohmann::ordered_json js;
    js["step_index"] = s.step_index;
    js["module_kind"] = ModuleKindName(s.module_kind);
    js["receiver"] = PatchToJson(s.receiver);
    if (s.receiver_list) {
      nlohmann::ordered_json arr = nlohmann::ordered_json::array();
      for (const auto& p : *s.receiver_list) arr.push_back(PatchToJson(p));
      js["receiver_list"] = arr;
    }
    nlohmann::ordered_json args = nlohmann::ordered_json::array();
    for (const auto& a : s.args) args.push_back(ValueToJson(a));
    js["args"] = args;
    js["output"] = ValueToJson(s.output);
    js["center_word"] = s.center_word ? nlohmann::ordered_json(*s.center_word)
                                      : nlohmann::ordered_json(nullptr);
    steps.push_back(std::move(js));
  }
  nlohmann::ordered_json j;
  j["question_id"] = trace.question_id;
  j["program"] = trace.program_source;
  j["steps"] = steps;
  j["answer"] = ValueToJson(trace.answer);
  j["status"] = TraceStatusName(trace.status);
  j["detail"] = trace.detail;
  return j;
}

ExecutionTrace TraceFromJson(const nlohmann::json& j, const SceneLookup& scenes) {
  ExecutionTrace t;
  try {
    t.question_id = j.at("question_id").get<std::string>();
    t.program_source = j.at("program").get<std::string>();
    for (const auto& js : j.at("steps")) {
      StepRecord s;
      s.step_index = js.at("step_index").get<int>();
      auto kind = ParseModuleKind(js.at("module_kind").get<std::string>());
      if (!kind) throw FormatError("unknown module kind in trace");
      s.module_kind = *kind;
      s.receiver = PatchFromJson(js.at("receiver"), scenes);
      if (js.contains("receiver_list")) {
        Value::PatchList list;
        for (const auto& p : js.at("receiver_list")) list.push_back(PatchFromJson(p, scenes));
        s.receiver_list = std::move(list);
      }
      for (const auto& a : js.at("args")) s.args.push_back(ValueFromJson(a, scenes));
      s.output = ValueFromJson(js.at("output"), scenes);
      if (!js.at("center_word").is_null())
        s.center_word = js.at("center_word").get<std::string>();
      t.steps.push_back(std::move(s));
    }
    t.answer = ValueFromJson(j.at("answer"), scenes);
    auto status = ParseTraceStatus(j.at("status").get<std::string>());
    if (!status) throw FormatError("unknown trace status");
    t.status = *status;
    t.detail = j.value("detail", "");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed trace record: ") + e.what());
  }
  return t;
}

}  // namespace stepdistill
