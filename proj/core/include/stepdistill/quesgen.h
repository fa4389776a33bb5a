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

// Template question/program generation over scene worlds, fault injection,
// and the client for an external program-generation service.

#ifndef STEPDISTILL_QUESGEN_H_
#define STEPDISTILL_QUESGEN_H_

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "stepdistill/world.h"

namespace stepdistill {

enum class QuestionType {
  kQueryColor,
  kQuerySize,
  kQueryMaterial,
  kVerifyAttr,
  kChooseAttr,
  kChooseName,
  kQueryName,
  kExist,
  kBothExist,
  kTwoHop,
  kCompareAttr,
  kVerifyBoth,
  kExistAttr,
};

inline constexpr QuestionType kAllQuestionTypes[] = {
    QuestionType::kQueryColor, QuestionType::kQuerySize,  QuestionType::kQueryMaterial,
    QuestionType::kVerifyAttr, QuestionType::kChooseAttr, QuestionType::kChooseName,
    QuestionType::kQueryName,  QuestionType::kExist,      QuestionType::kBothExist,
    QuestionType::kTwoHop,     QuestionType::kCompareAttr, QuestionType::kVerifyBoth,
    QuestionType::kExistAttr};

std::string_view QuestionTypeName(QuestionType type);
std::optional<QuestionType> ParseQuestionType(std::string_view name);

// Fine programs use verify_property/best_text_match; coarse programs only
// find, exists and simple_query.
enum class Framework { kFine, kCoarse };
std::string_view FrameworkName(Framework f);
std::optional<Framework> ParseFramework(std::string_view name);

struct QAPair {
  std::string question_id;
  std::string scene_id;
  std::string question;
  std::string ground_truth;
  std::string program;
  std::string question_type;
  bool faulty = false;  // program was corrupted by fault injection

  bool operator==(const QAPair&) const = default;
};

nlohmann::ordered_json QAPairToJson(const QAPair& qa);
QAPair QAPairFromJson(const nlohmann::json& j);
void WriteQAPairs(std::ostream& out, const std::vector<QAPair>& pairs);
std::vector<QAPair> ReadQAPairs(std::istream& in);

struct GenConfig {
  std::vector<QuestionType> templates{std::begin(kAllQuestionTypes),
                                      std::end(kAllQuestionTypes)};
  int min_questions = 8;
  int max_questions = 12;
  double fault_rate = 0.0;
  bool visual_pointer = true;
  Framework framework = Framework::kFine;

  // Throws ConfigError.
  void Validate() const;
};

void to_json(nlohmann::json& j, const GenConfig& c);
void from_json(const nlohmann::json& j, GenConfig& c);

// Deterministic in (scene, config, seed). Which questions are drawn does not
// depend on visual_pointer, framework or fault_rate; those only change the
// emitted strings. Templates whose preconditions fail are skipped.
std::vector<QAPair> GenerateQA(const SceneGraph& scene, const WorldConfig& world,
                               const GenConfig& config, uint64_t seed);

// Deletes one token of `source` (retrying other tokens) so the result no
// longer parses. Returns the corrupted source.
std::string CorruptProgram(std::string_view source, uint64_t seed);

// A referring expression with its ground-truth target box.
struct GroundingItem {
  std::string item_id;
  std::string scene_id;
  std::string expression;
  std::string program;  // returns a patch
  Rect target;

  bool operator==(const GroundingItem&) const = default;
};

nlohmann::ordered_json GroundingItemToJson(const GroundingItem& item);
GroundingItem GroundingItemFromJson(const nlohmann::json& j);

// "the {noun}" for unique nouns and "the {attribute} {category}" for
// categories with exactly two members that one attribute tells apart.
std::vector<GroundingItem> GenerateGrounding(const SceneGraph& scene,
                                             const WorldConfig& world, uint64_t seed,
                                             int max_items = 3);

// Client for an external program generator. Request body
// {"question", "prompt_profile"} is POSTed to {endpoint}/generate and the
// response must carry {"program_text"}. Failures throw ServiceError.
class ProgramServiceClient {
 public:
  // Environment variable naming the default endpoint.
  static constexpr const char* kEndpointEnv = "STEPDISTILL_PROGRAM_SERVICE";

  ProgramServiceClient(std::string endpoint, std::chrono::milliseconds timeout);

  // prompt_profile is "pointer" or "plain".
  std::string Generate(std::string_view question, std::string_view prompt_profile) const;

  const std::string& endpoint() const { return endpoint_; }

 private:
  std::string endpoint_;
  std::chrono::milliseconds timeout_;
};

std::string_view PromptProfile(bool visual_pointer);

}  // namespace stepdistill

#endif  // STEPDISTILL_QUESGEN_H_
