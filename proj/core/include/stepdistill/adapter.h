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

// Teacher input adapter: turns a distillable module call into the
// (sub-question, sub-image) pair a whole-question model can answer.

#ifndef STEPDISTILL_ADAPTER_H_
#define STEPDISTILL_ADAPTER_H_

#include <iosfwd>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stepdistill/trace.h"
#include "stepdistill/world.h"

namespace stepdistill {

enum class OptionClass { kNoun, kAdjective };

// "Is this {object_name} {attribute}?". Throws AdapterError on empty tokens.
std::string AdaptVerifyProperty(std::string_view object_name,
                                std::string_view attribute);

// Nouns:      "Is this a/an {o0} or {o1}?" / "Are these {o0} or {o1}?"
// Adjectives: "Is this {center} {o0} or {o1}?" / "Are these {center} {o0} or {o1}?"
// The article agrees with the first option only. Throws AdapterError for
// fewer than two options.
std::string AdaptBestTextMatch(std::span<const std::string> options,
                               std::string_view center_word, bool plural,
                               OptionClass option_class);

struct AdaptedQuestion {
  std::string text;
  bool empty_warning = false;
};

// Passes the question through with exactly one trailing '?'. An empty
// question is returned empty with empty_warning set.
AdaptedQuestion AdaptSimpleQuery(std::string_view question);

struct TeacherInput {
  std::string sub_question;
  ScenePatch sub_image;
  std::string question_id;
  int step_index = 0;
  ModuleKind module_kind = ModuleKind::kSimpleQuery;
};

class TeacherInputAdapter {
 public:
  explicit TeacherInputAdapter(WorldConfig world);

  // Adjective iff every option is in the attribute vocabulary; noun iff none
  // is. Mixed lists throw AdapterError.
  OptionClass ClassifyOptions(std::span<const std::string> options) const;

  // Sub-question for a call, from its raw arguments and the receiver's
  // provenance. Throws AdapterError for non-distillable kinds, malformed
  // arguments, or an empty simple_query question.
  std::string SubQuestion(ModuleKind kind, const std::vector<Value>& args,
                          const std::optional<std::string>& center_word) const;

  TeacherInput AdaptStep(const StepRecord& step, std::string_view question_id) const;

  const WorldConfig& world() const { return world_; }

 private:
  WorldConfig world_;
};

// Optional JSONL record of every adapted step. Thread-safe.
class AdapterAuditLog {
 public:
  explicit AdapterAuditLog(std::ostream& out) : out_(out) {}

  void Record(const TeacherInput& input);
  void RecordRejection(std::string_view question_id, int step_index,
                       ModuleKind kind, std::string_view reason);

 private:
  std::ostream& out_;
  std::mutex mu_;
};

}  // namespace stepdistill

#endif  // STEPDISTILL_ADAPTER_H_
