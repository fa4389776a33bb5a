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

// Runtime values and execution traces of visual programs.

#ifndef STEPDISTILL_TRACE_H_
#define STEPDISTILL_TRACE_H_

#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "stepdistill/dsl.h"
#include "stepdistill/world.h"

namespace stepdistill {

struct NanValue {
  bool operator==(const NanValue&) const = default;
};

struct Value {
  using PatchList = std::vector<ScenePatch>;
  using List = std::vector<Value>;
  std::variant<NanValue, ScenePatch, PatchList, std::string, bool, double, List> v;

  static Value Nan() { return Value{NanValue{}}; }
  bool IsNan() const { return std::holds_alternative<NanValue>(v); }
  bool operator==(const Value& other) const { return v == other.v; }
};

std::string_view ValueTypeName(const Value& value);

// The string a program's final value is graded as: booleans become yes/no.
std::string AnswerString(const Value& value);

enum class TraceStatus { kOk, kParseErrorFallback, kRuntimeNan };
std::string_view TraceStatusName(TraceStatus status);
std::optional<TraceStatus> ParseTraceStatus(std::string_view name);

struct StepRecord {
  int step_index = 0;
  ModuleKind module_kind = ModuleKind::kFind;
  ScenePatch receiver;
  // Set only when the receiver was a patch list (exists on a find result).
  std::optional<Value::PatchList> receiver_list;
  std::vector<Value> args;
  Value output;
  // origin_label of the receiver at call time.
  std::optional<std::string> center_word;
};

struct ExecutionTrace {
  std::string question_id;
  std::string program_source;
  std::vector<StepRecord> steps;
  Value answer;
  TraceStatus status = TraceStatus::kOk;
  std::string detail;  // parse or runtime failure message
};

using SceneLookup = std::function<SceneRef(const std::string& scene_id)>;

nlohmann::ordered_json PatchToJson(const ScenePatch& patch);
ScenePatch PatchFromJson(const nlohmann::json& j, const SceneLookup& scenes);
nlohmann::ordered_json ValueToJson(const Value& value);
Value ValueFromJson(const nlohmann::json& j, const SceneLookup& scenes);
nlohmann::ordered_json TraceToJson(const ExecutionTrace& trace);
ExecutionTrace TraceFromJson(const nlohmann::json& j, const SceneLookup& scenes);

}  // namespace stepdistill

#endif  // STEPDISTILL_TRACE_H_
