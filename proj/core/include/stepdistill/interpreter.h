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

// Tree-walking interpreter for visual programs, with trace capture and the
// parse-error fallback.

#ifndef STEPDISTILL_INTERPRETER_H_
#define STEPDISTILL_INTERPRETER_H_

#include <string>
#include <string_view>

#include "stepdistill/dsl.h"
#include "stepdistill/registry.h"
#include "stepdistill/trace.h"
#include "stepdistill/world.h"

namespace stepdistill {

// Never throws. `image` is bound to the full scene. A call whose receiver and
// arguments type-check appends exactly one StepRecord, even when the backend
// then fails. Any runtime failure stops execution with status runtime_nan.
ExecutionTrace Execute(const Program& program, SceneRef scene,
                       const ModuleRegistry& registry, std::string question_id = "");

// `return image.simple_query("<question>")`
std::string FallbackSource(std::string_view question);
Program FallbackProgram(std::string_view question);

// Parses `source`; on ParseError runs FallbackProgram(question) instead and
// marks the trace parse_error_fallback (the answer is NaN if the fallback
// call itself fails).
ExecutionTrace RunWithFallback(std::string_view source, std::string_view question,
                               SceneRef scene, const ModuleRegistry& registry,
                               std::string question_id = "");

}  // namespace stepdistill

#endif  // STEPDISTILL_INTERPRETER_H_
