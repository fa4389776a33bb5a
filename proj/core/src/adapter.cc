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

#include "stepdistill/adapter.h"

#include <ostream>

#include "stepdistill/errors.h"

namespace stepdistill {

namespace {

bool StartsWithVowel(std::string_view word) {
  if (word.empty()) return false;
  switch (word.front()) {
    case 'a': case 'e': case 'i': case 'o': case 'u':
    case 'A': case 'E': case 'I': case 'O': case 'U':
      return true;
    default:
      return false;
  }
}

std::string JoinOr(std::span<const std::string> options) {
  std::string out;
  for (size_t i = 0; i < options.size(); ++i) {
    if (i) out += " or ";
    out += options[i];
  }
  return out;
}

const std::string& StringArg(const Value& v, std::string_view what) {
  const auto* s = std::get_if<std::string>(&v.v);
  if (!s) throw AdapterError(std::string(what) + " must be a string");
  return *s;
}

}  // namespace

std::string AdaptVerifyProperty(std::string_view object_name,
                                std::string_view attribute) {
  if (object_name.empty() || attribute.empty())
    throw AdapterError("verify_property needs an object name and an attribute");
  std::string out = "Is this ";
  out += object_name;
  out += ' ';
  out += attribute;
  out += '?';
  return out;
}

std::string AdaptBestTextMatch(std::span<const std::string> options,
                               std::string_view center_word, bool plural,
                               OptionClass option_class) {
  if (options.size() < 2)
    throw AdapterError("best_text_match needs at least two options");
  for (const auto& o : options)
    if (o.empty()) throw AdapterError("best_text_match option is empty");
  std::string out = plural ? "Are these " : "Is this ";
  if (option_class == OptionClass::kNoun) {
    if (!plural) out += StartsWithVowel(options[0]) ? "an " : "a ";
  } else {
    if (center_word.empty())
      throw AdapterError("adjective options need a center word");
    out += center_word;
    out += ' ';
  }
  out += JoinOr(options);
  out += '?';
  return out;
}

AdaptedQuestion AdaptSimpleQuery(std::string_view question) {
  size_t end = question.size();
  while (end > 0 && (question[end - 1] == '?' || question[end - 1] == ' ')) --end;
  size_t begin = 0;
  while (begin < end && question[begin] == ' ') ++begin;
  if (begin == end) return AdaptedQuestion{"", true};
  AdaptedQuestion out;
  out.text = std::string(question.substr(begin, end - begin)) + "?";
  return out;
}

TeacherInputAdapter::TeacherInputAdapter(WorldConfig world) : world_(std::move(world)) {}

OptionClass TeacherInputAdapter::ClassifyOptions(std::span<const std::string> options) const {
  size_t adjectives = 0;
  for (const auto& o : options)
    if (world_.IsAttribute(o)) ++adjectives;
  if (adjectives == 0) return OptionClass::kNoun;
  if (adjectives == options.size()) return OptionClass::kAdjective;
  throw AdapterError("best_text_match options mix nouns and adjectives");
}

std::string TeacherInputAdapter::SubQuestion(
    ModuleKind kind, const std::vector<Value>& args,
    const std::optional<std::string>& center_word) const {
  switch (kind) {
    case ModuleKind::kVerifyProperty:
      if (args.size() != 2) throw AdapterError("verify_property takes 2 arguments");
      return AdaptVerifyProperty(StringArg(args[0], "object_name"),
                                 StringArg(args[1], "attribute"));
    case ModuleKind::kBestTextMatch: {
      if (args.size() != 1) throw AdapterError("best_text_match takes 1 argument");
      const auto* list = std::get_if<Value::List>(&args[0].v);
      if (!list) throw AdapterError("best_text_match options must be a list");
      std::vector<std::string> options;
      for (const auto& v : *list) options.push_back(StringArg(v, "option"));
      const OptionClass cls = ClassifyOptions(options);
      const std::string center = center_word.value_or("object");
      return AdaptBestTextMatch(options, center, IsPluralWord(center), cls);
    }
    case ModuleKind::kSimpleQuery: {
      if (args.size() != 1) throw AdapterError("simple_query takes 1 argument");
      AdaptedQuestion q = AdaptSimpleQuery(StringArg(args[0], "question"));
      if (q.empty_warning) throw AdapterError("simple_query question is empty");
      return q.text;
    }
    case ModuleKind::kFind:
    case ModuleKind::kExists:
      break;
  }
  throw AdapterError(std::string(ModuleKindName(kind)) + " is not distillable");
}

TeacherInput TeacherInputAdapter::AdaptStep(const StepRecord& step,
                                            std::string_view question_id) const {
  TeacherInput input;
  input.sub_question = SubQuestion(step.module_kind, step.args, step.center_word);
  input.sub_image = step.receiver;
  input.question_id = std::string(question_id);
  input.step_index = step.step_index;
  input.module_kind = step.module_kind;
  return input;
}

void AdapterAuditLog::Record(const TeacherInput& input) {
  nlohmann::ordered_json j;
  j["source_qid"] = input.question_id;
  j["step_index"] = input.step_index;
  j["module_kind"] = ModuleKindName(input.module_kind);
  j["sub_question"] = input.sub_question;
  j["sub_image"] = PatchToJson(input.sub_image);
  std::lock_guard<std::mutex> lock(mu_);
  out_ << j.dump() << '\n';
}

void AdapterAuditLog::RecordRejection(std::string_view question_id, int step_index,
                                      ModuleKind kind, std::string_view reason) {
  nlohmann::ordered_json j;
  j["source_qid"] = question_id;
  j["step_index"] = step_index;
  j["module_kind"] = ModuleKindName(kind);
  j["rejected"] = reason;
  std::lock_guard<std::mutex> lock(mu_);
  out_ << j.dump() << '\n';
}

}  // namespace stepdistill
