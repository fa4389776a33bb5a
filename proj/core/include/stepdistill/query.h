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

// Structured queries over a scene patch, the reader that maps question text
// onto them, and the ground-truth oracle that answers them.

#ifndef STEPDISTILL_QUERY_H_
#define STEPDISTILL_QUERY_H_

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "stepdistill/world.h"

namespace stepdistill {

inline constexpr std::string_view kYes = "yes";
inline constexpr std::string_view kNo = "no";
inline constexpr std::string_view kUnknown = "unknown";

// "Is this flower red?"; subject may be absent ("Is this red?").
struct VerifyAttribute {
  std::optional<std::string> subject;
  std::string attribute;
  bool operator==(const VerifyAttribute&) const = default;
};

// "Is this a bread or sandwich?" / "Is this flower red or blue?"
struct ChooseOption {
  std::vector<std::string> options;
  std::optional<std::string> center;
  bool adjective = false;
  bool plural = false;
  bool operator==(const ChooseOption&) const = default;
};

// "What color is this flower?"
struct AskAttributeFamily {
  std::string family;
  std::optional<std::string> center;
  bool operator==(const AskAttributeFamily&) const = default;
};

// "What kind of food is this?" / "What is this?"
struct AskName {
  std::optional<std::string> center;
  bool operator==(const AskName&) const = default;
};

// "Is there a flower?" / "Is there a red flower?"
struct Exists {
  std::string name;
  std::optional<std::string> attribute;
  bool operator==(const Exists&) const = default;
};

// Composite forms only reachable through whole-question answering.

// "Are there both a door and a window in the image?"
struct BothExist {
  std::string first;
  std::string second;
  bool operator==(const BothExist&) const = default;
};

// "What kind of food is red?"
struct KindWithAttribute {
  std::string category;
  std::string attribute;
  bool operator==(const KindWithAttribute&) const = default;
};

// "Do the flower and the car have the same color?"
struct SameAttribute {
  std::string family;
  std::string first;
  std::string second;
  bool operator==(const SameAttribute&) const = default;
};

// "Is the flower red and the car small?"
struct VerifyBoth {
  std::string first;
  std::string first_attribute;
  std::string second;
  std::string second_attribute;
  bool operator==(const VerifyBoth&) const = default;
};

using StructuredQuery =
    std::variant<VerifyAttribute, ChooseOption, AskAttributeFamily, AskName,
                 Exists, BothExist, KindWithAttribute, SameAttribute,
                 VerifyBoth>;

// Stable textual form, e.g. "verify:flower:red". Used in student keys.
std::string CanonicalForm(const StructuredQuery& query);

// Parses the closed question grammar produced by templates and the adapter.
// Returns nullopt for anything outside it.
class QuestionReader {
 public:
  explicit QuestionReader(WorldConfig config);

  std::optional<StructuredQuery> Read(std::string_view question) const;

  const WorldConfig& world() const { return config_; }

  // Answer labels a query can take. Deterministic order.
  std::vector<std::string> Candidates(const StructuredQuery& query) const;

 private:
  // Longest vocabulary phrase starting at words[pos]; returns word count.
  size_t MatchNounPhrase(const std::vector<std::string>& words, size_t pos,
                         std::string* out) const;
  size_t MatchAttributePhrase(const std::vector<std::string>& words, size_t pos,
                              std::string* out) const;
  std::optional<StructuredQuery> ReadIsThis(const std::vector<std::string>& body,
                                            bool plural, bool definite) const;
  std::optional<StructuredQuery> ReadChoice(
      const std::vector<std::vector<std::string>>& segments, bool plural) const;

  WorldConfig config_;
};

// Ground-truth answer restricted to patch.visible_objects(). Target
// resolution: objects matching the center token (noun, category, or their
// plural), else the unique visible object; ties go to the smallest id.
// Unresolvable targets answer "unknown".
std::string OracleAnswer(const ScenePatch& patch, const StructuredQuery& query,
                         const WorldConfig& world);

// Whether an object is denoted by a noun or category token.
bool ObjectMatches(const SceneObject& obj, std::string_view token,
                   const WorldConfig& world);

}  // namespace stepdistill

#endif  // STEPDISTILL_QUERY_H_
