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

#include "stepdistill/quesgen.h"

#include <algorithm>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <set>

#include <httplib.h>

#include "stepdistill/dsl.h"
#include "stepdistill/errors.h"
#include "stepdistill/rng.h"

namespace stepdistill {

namespace {

constexpr std::string_view kTypeNames[] = {
    "query_color", "query_size",  "query_material", "verify_attr", "choose_attr",
    "choose_name", "query_name",  "exist",          "both_exist",  "two_hop",
    "compare_attr", "verify_both", "exist_attr"};

}  // namespace

std::string_view QuestionTypeName(QuestionType type) {
  return kTypeNames[static_cast<size_t>(type)];
}

std::optional<QuestionType> ParseQuestionType(std::string_view name) {
  for (QuestionType t : kAllQuestionTypes)
    if (QuestionTypeName(t) == name) return t;
  return std::nullopt;
}

std::string_view FrameworkName(Framework f) {
  return f == Framework::kFine ? "fine" : "coarse";
}

std::optional<Framework> ParseFramework(std::string_view name) {
  if (name == "fine") return Framework::kFine;
  if (name == "coarse") return Framework::kCoarse;
  return std::nullopt;
}

nlohmann::ordered_json QAPairToJson(const QAPair& qa) {
  nlohmann::ordered_json j;
  j["question_id"] = qa.question_id;
  j["scene_id"] = qa.scene_id;
  j["question"] = qa.question;
  j["ground_truth"] = qa.ground_truth;
  j["program"] = qa.program;
  j["question_type"] = qa.question_type;
  j["faulty"] = qa.faulty;
  return j;
}

QAPair QAPairFromJson(const nlohmann::json& j) {
  try {
    QAPair qa;
    qa.question_id = j.at("question_id").get<std::string>();
    qa.scene_id = j.at("scene_id").get<std::string>();
    qa.question = j.at("question").get<std::string>();
    qa.ground_truth = j.at("ground_truth").get<std::string>();
    qa.program = j.at("program").get<std::string>();
    qa.question_type = j.at("question_type").get<std::string>();
    qa.faulty = j.value("faulty", false);
    return qa;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed question record: ") + e.what());
  }
}

void WriteQAPairs(std::ostream& out, const std::vector<QAPair>& pairs) {
  for (const auto& qa : pairs) out << QAPairToJson(qa).dump() << '\n';
}

std::vector<QAPair> ReadQAPairs(std::istream& in) {
  std::vector<QAPair> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("bad question line: ") + e.what());
    }
    out.push_back(QAPairFromJson(j));
  }
  return out;
}

void GenConfig::Validate() const {
  if (templates.empty()) throw ConfigError("no question templates enabled");
  if (min_questions < 1 || max_questions < min_questions)
    throw ConfigError("questions per scene range must satisfy 1 <= min <= max");
  if (!(fault_rate >= 0.0 && fault_rate <= 1.0))
    throw ConfigError("fault_rate outside [0,1]");
}

void to_json(nlohmann::json& j, const GenConfig& c) {
  std::vector<std::string> names;
  for (QuestionType t : c.templates) names.emplace_back(QuestionTypeName(t));
  j = {{"templates", names},
       {"min_questions", c.min_questions},
       {"max_questions", c.max_questions},
       {"fault_rate", c.fault_rate},
       {"visual_pointer", c.visual_pointer},
       {"framework", FrameworkName(c.framework)}};
}

void from_json(const nlohmann::json& j, GenConfig& c) {
  c = GenConfig{};
  if (j.contains("templates")) {
    c.templates.clear();
    for (const auto& n : j.at("templates")) {
      auto t = ParseQuestionType(n.get<std::string>());
      if (!t) throw ConfigError("unknown question template '" + n.get<std::string>() + "'");
      c.templates.push_back(*t);
    }
  }
  c.min_questions = j.value("min_questions", c.min_questions);
  c.max_questions = j.value("max_questions", c.max_questions);
  c.fault_rate = j.value("fault_rate", c.fault_rate);
  c.visual_pointer = j.value("visual_pointer", c.visual_pointer);
  if (j.contains("framework")) {
    auto f = ParseFramework(j.at("framework").get<std::string>());
    if (!f) throw ConfigError("framework must be fine or coarse");
    c.framework = *f;
  }
}

namespace {

std::string IndefiniteArticle(std::string_view word) {
  return !word.empty() && std::string_view("aeiou").find(word[0]) != std::string_view::npos
             ? "an"
             : "a";
}

std::string Q(std::string_view s) { return QuoteString(s); }

struct Draft {
  std::string question;
  std::string answer;
  std::string program;
};

struct Style {
  bool visual_pointer = true;
  Framework framework = Framework::kFine;
  bool fine() const { return framework == Framework::kFine; }
};

// Scene facts shared by all templates.
class SceneFacts {
 public:
  SceneFacts(const SceneGraph& scene, const WorldConfig& world)
      : scene_(scene), world_(world) {
    for (const auto& o : scene.objects) {
      by_noun_[o.name].push_back(&o);
      const std::string cat = world.CategoryOf(o.name);
      if (!cat.empty()) by_category_[cat].push_back(&o);
    }
    for (const auto& [noun, objs] : by_noun_)
      if (objs.size() == 1 && world.IsNoun(noun)) unique_nouns_.push_back(noun);
    for (const auto& [cat, objs] : by_category_)
      if (objs.size() == 1) unique_categories_.push_back(cat);
    for (const auto& n : world.Nouns())
      (by_noun_.count(n) ? present_nouns_ : absent_nouns_).push_back(n);
  }

  const WorldConfig& world() const { return world_; }
  const std::vector<std::string>& unique_nouns() const { return unique_nouns_; }
  const std::vector<std::string>& unique_categories() const { return unique_categories_; }
  const std::vector<std::string>& present_nouns() const { return present_nouns_; }
  const std::vector<std::string>& absent_nouns() const { return absent_nouns_; }

  const std::vector<const SceneObject*>& Noun(const std::string& n) const {
    static const std::vector<const SceneObject*> kNone;
    auto it = by_noun_.find(n);
    return it == by_noun_.end() ? kNone : it->second;
  }
  const std::vector<const SceneObject*>& InCategory(const std::string& c) const {
    static const std::vector<const SceneObject*> kNone;
    auto it = by_category_.find(c);
    return it == by_category_.end() ? kNone : it->second;
  }
  const std::map<std::string, std::vector<const SceneObject*>>& categories() const {
    return by_category_;
  }

  std::optional<std::string> Value(const SceneObject& o, const AttributeFamily& fam) const {
    for (const auto& v : fam.values)
      if (o.HasAttribute(v)) return v;
    return std::nullopt;
  }

 private:
  const SceneGraph& scene_;
  const WorldConfig& world_;
  std::map<std::string, std::vector<const SceneObject*>> by_noun_;
  std::map<std::string, std::vector<const SceneObject*>> by_category_;
  std::vector<std::string> unique_nouns_;
  std::vector<std::string> unique_categories_;
  std::vector<std::string> present_nouns_;
  std::vector<std::string> absent_nouns_;
};

// A value of `fam` other than `value`.
std::string OtherValue(const AttributeFamily& fam, const std::string& value, Rng& rng) {
  std::vector<std::string> others;
  for (const auto& v : fam.values)
    if (v != value) others.push_back(v);
  return rng.Pick(others);
}

std::string FindLine(const std::string& var, const std::string& name) {
  return var + " = image.find(" + Q(name) + ")\n";
}

std::string AskSub(const std::string& family, const std::string& noun, const Style& s) {
  return s.visual_pointer ? "What " + family + " is this " + noun + "?"
                          : "What " + family + " is this?";
}

std::string VerifySub(const std::string& noun, const std::string& attr, const Style& s) {
  return s.visual_pointer ? "Is this " + noun + " " + attr + "?" : "Is this " + attr + "?";
}

std::string KindSub(const std::string& cat, const Style& s) {
  return s.visual_pointer ? "What kind of " + cat + " is this?" : "What is this?";
}

// Call that yields a yes/no Bool in the fine framework, or the same test via
// simple_query in the coarse one.
std::string VerifyCall(const std::string& patch, const std::string& noun,
                       const std::string& attr, const Style& s) {
  if (s.fine()) return patch + ".verify_property(" + Q(noun) + ", " + Q(attr) + ")";
  return patch + ".simple_query(" + Q(VerifySub(noun, attr, s)) + ") == \"yes\"";
}

using Template = std::function<std::optional<Draft>(const SceneFacts&, Rng&, const Style&)>;

std::optional<Draft> QueryFamily(const SceneFacts& f, Rng& rng, const Style& s,
                                 const std::string& family) {
  const AttributeFamily* fam = f.world().Family(family);
  if (!fam || f.unique_nouns().empty()) return std::nullopt;
  const std::string noun = rng.Pick(f.unique_nouns());
  auto value = f.Value(*f.Noun(noun)[0], *fam);
  if (!value) return std::nullopt;
  Draft d;
  d.question = "What " + family + " is the " + noun + "?";
  d.answer = *value;
  d.program = FindLine("patches", noun) + "return patches[0].simple_query(" +
              Q(AskSub(family, noun, s)) + ")";
  return d;
}

std::optional<Draft> VerifyAttr(const SceneFacts& f, Rng& rng, const Style& s) {
  if (f.unique_nouns().empty() || f.world().families.empty()) return std::nullopt;
  const std::string noun = rng.Pick(f.unique_nouns());
  const AttributeFamily& fam = rng.Pick(f.world().families);
  const bool truthful = rng.Bernoulli(0.5);
  auto value = f.Value(*f.Noun(noun)[0], fam);
  if (!value || fam.values.size() < 2) return std::nullopt;
  const std::string attr = truthful ? *value : OtherValue(fam, *value, rng);
  Draft d;
  d.question = "Is the " + noun + " " + attr + "?";
  d.answer = truthful ? "yes" : "no";
  const std::string call =
      s.fine() ? VerifyCall("patches[0]", noun, attr, s)
               : "patches[0].simple_query(" + Q(VerifySub(noun, attr, s)) + ")";
  d.program = FindLine("patches", noun) + "return " + call;
  return d;
}

std::optional<Draft> ChooseAttr(const SceneFacts& f, Rng& rng, const Style& s) {
  if (f.unique_nouns().empty() || f.world().families.empty()) return std::nullopt;
  const std::string noun = rng.Pick(f.unique_nouns());
  const AttributeFamily& fam = rng.Pick(f.world().families);
  const bool true_first = rng.Bernoulli(0.5);
  auto value = f.Value(*f.Noun(noun)[0], fam);
  if (!value || fam.values.size() < 2) return std::nullopt;
  const std::string other = OtherValue(fam, *value, rng);
  const std::string a = true_first ? *value : other;
  const std::string b = true_first ? other : *value;
  Draft d;
  d.question = "Is the " + noun + " " + a + " or " + b + "?";
  d.answer = *value;
  const std::string call =
      s.fine() ? "best_text_match([" + Q(a) + ", " + Q(b) + "])"
               : "simple_query(" +
                     Q(s.visual_pointer ? "Is this " + noun + " " + a + " or " + b + "?"
                                        : "Is this " + a + " or " + b + "?") +
                     ")";
  d.program = FindLine("patches", noun) + "return patches[0]." + call;
  return d;
}

std::optional<Draft> ChooseName(const SceneFacts& f, Rng& rng, const Style& s) {
  if (f.unique_categories().empty()) return std::nullopt;
  const std::string cat = rng.Pick(f.unique_categories());
  const bool true_first = rng.Bernoulli(0.5);
  const std::string noun = f.InCategory(cat)[0]->name;
  const NounCategory* category = f.world().Category(cat);
  std::vector<std::string> others;
  for (const auto& n : category->nouns)
    if (n != noun) others.push_back(n);
  if (others.empty()) return std::nullopt;
  const std::string other = rng.Pick(others);
  const std::string a = true_first ? noun : other;
  const std::string b = true_first ? other : noun;
  Draft d;
  d.question = "Is the " + cat + " " + IndefiniteArticle(a) + " " + a + " or " +
               IndefiniteArticle(b) + " " + b + "?";
  d.answer = noun;
  const std::string call =
      s.fine() ? "best_text_match([" + Q(a) + ", " + Q(b) + "])"
               : "simple_query(" +
                     Q("Is this " + IndefiniteArticle(a) + " " + a + " or " + b + "?") +
                     ")";
  d.program = FindLine("patches", cat) + "return patches[0]." + call;
  return d;
}

std::optional<Draft> QueryName(const SceneFacts& f, Rng& rng, const Style& s) {
  if (f.unique_categories().empty()) return std::nullopt;
  const std::string cat = rng.Pick(f.unique_categories());
  Draft d;
  d.question = "What kind of " + cat + " is in the image?";
  d.answer = f.InCategory(cat)[0]->name;
  d.program = FindLine("patches", cat) + "return patches[0].simple_query(" +
              Q(KindSub(cat, s)) + ")";
  return d;
}

// A noun that is present with probability 1/2 when both kinds exist.
std::string DrawExistNoun(const SceneFacts& f, Rng& rng) {
  const bool want_present = rng.Bernoulli(0.5);
  const auto& pool = (want_present && !f.present_nouns().empty()) || f.absent_nouns().empty()
                         ? f.present_nouns()
                         : f.absent_nouns();
  return rng.Pick(pool);
}

std::optional<Draft> Exist(const SceneFacts& f, Rng& rng, const Style&) {
  if (f.present_nouns().empty()) return std::nullopt;
  const std::string noun = DrawExistNoun(f, rng);
  Draft d;
  d.question = "Is there " + IndefiniteArticle(noun) + " " + noun + "?";
  d.answer = f.Noun(noun).empty() ? "no" : "yes";
  d.program = "return image.exists(" + Q(noun) + ")";
  return d;
}

std::optional<Draft> BothExist(const SceneFacts& f, Rng& rng, const Style&) {
  if (f.present_nouns().empty()) return std::nullopt;
  const std::string first = DrawExistNoun(f, rng);
  std::string second = DrawExistNoun(f, rng);
  if (second == first) return std::nullopt;
  Draft d;
  d.question = "Are there both " + IndefiniteArticle(first) + " " + first + " and " +
               IndefiniteArticle(second) + " " + second + " in the image?";
  d.answer = !f.Noun(first).empty() && !f.Noun(second).empty() ? "yes" : "no";
  d.program = "has_first = image.exists(" + Q(first) + ")\n" +
              "has_second = image.exists(" + Q(second) + ")\n" +
              "if has_first and has_second:\n    return \"yes\"\nelse:\n    return \"no\"";
  return d;
}

std::optional<Draft> TwoHop(const SceneFacts& f, Rng& rng, const Style& s) {
  // Categories with exactly two members told apart by some family.
  std::vector<std::string> cats;
  for (const auto& [cat, objs] : f.categories()) {
    if (objs.size() != 2) continue;
    for (const auto& fam : f.world().families)
      if (f.Value(*objs[0], fam) != f.Value(*objs[1], fam)) {
        cats.push_back(cat);
        break;
      }
  }
  if (cats.empty()) return std::nullopt;
  const std::string cat = rng.Pick(cats);
  const auto& objs = f.InCategory(cat);
  std::vector<const AttributeFamily*> fams;
  for (const auto& fam : f.world().families)
    if (f.Value(*objs[0], fam) != f.Value(*objs[1], fam)) fams.push_back(&fam);
  const AttributeFamily* fam = rng.Pick(fams);
  const SceneObject* target = objs[static_cast<size_t>(rng.UniformInt(0, 1))];
  const std::string attr = *f.Value(*target, *fam);
  Draft d;
  d.question = "What kind of " + cat + " is " + attr + "?";
  d.answer = target->name;
  const std::string sub = Q(KindSub(cat, s));
  d.program = FindLine("patches", cat) + "if " + VerifyCall("patches[0]", cat, attr, s) +
              ":\n    return patches[0].simple_query(" + sub +
              ")\nelse:\n    return patches[1].simple_query(" + sub + ")";
  return d;
}

std::optional<Draft> CompareAttr(const SceneFacts& f, Rng& rng, const Style& s) {
  if (f.unique_nouns().size() < 2 || f.world().families.empty()) return std::nullopt;
  const std::string first = rng.Pick(f.unique_nouns());
  const AttributeFamily& fam = rng.Pick(f.world().families);
  const bool want_same = rng.Bernoulli(0.5);
  auto v1 = f.Value(*f.Noun(first)[0], fam);
  if (!v1) return std::nullopt;
  std::vector<std::string> matching, others;
  for (const auto& n : f.unique_nouns()) {
    if (n == first) continue;
    others.push_back(n);
    if ((f.Value(*f.Noun(n)[0], fam) == v1) == want_same) matching.push_back(n);
  }
  const std::string second = rng.Pick(matching.empty() ? others : matching);
  auto v2 = f.Value(*f.Noun(second)[0], fam);
  if (!v2) return std::nullopt;
  Draft d;
  d.question = "Do the " + first + " and the " + second + " have the same " + fam.name + "?";
  d.answer = *v1 == *v2 ? "yes" : "no";
  d.program = FindLine("first", first) + FindLine("second", second) +
              "if first[0].simple_query(" + Q(AskSub(fam.name, first, s)) +
              ") == second[0].simple_query(" + Q(AskSub(fam.name, second, s)) +
              "):\n    return \"yes\"\nelse:\n    return \"no\"";
  return d;
}

std::optional<Draft> VerifyBoth(const SceneFacts& f, Rng& rng, const Style& s) {
  if (f.unique_nouns().size() < 2 || f.world().families.empty()) return std::nullopt;
  std::vector<std::string> nouns = f.unique_nouns();
  rng.Shuffle(nouns);
  std::string attrs[2];
  bool truthful[2];
  for (int i = 0; i < 2; ++i) {
    const AttributeFamily& fam = rng.Pick(f.world().families);
    truthful[i] = rng.Bernoulli(0.65);
    auto value = f.Value(*f.Noun(nouns[i])[0], fam);
    if (!value || fam.values.size() < 2) return std::nullopt;
    attrs[i] = truthful[i] ? *value : OtherValue(fam, *value, rng);
  }
  Draft d;
  d.question = "Is the " + nouns[0] + " " + attrs[0] + " and the " + nouns[1] + " " +
               attrs[1] + "?";
  d.answer = truthful[0] && truthful[1] ? "yes" : "no";
  d.program = FindLine("first", nouns[0]) + FindLine("second", nouns[1]) + "return " +
              VerifyCall("first[0]", nouns[0], attrs[0], s) + " and " +
              VerifyCall("second[0]", nouns[1], attrs[1], s);
  return d;
}

std::optional<Draft> ExistAttr(const SceneFacts& f, Rng& rng, const Style& s) {
  if (f.world().families.empty()) return std::nullopt;
  const bool want_present = rng.Bernoulli(0.5);
  const AttributeFamily& fam = rng.Pick(f.world().families);
  const bool truthful = rng.Bernoulli(0.5);
  const bool present =
      (want_present && !f.unique_nouns().empty()) || f.absent_nouns().empty();
  if (present && f.unique_nouns().empty()) return std::nullopt;
  const std::string noun = rng.Pick(present ? f.unique_nouns() : f.absent_nouns());
  std::string attr;
  std::string answer = "no";
  if (present) {
    auto value = f.Value(*f.Noun(noun)[0], fam);
    if (!value || fam.values.size() < 2) return std::nullopt;
    attr = truthful ? *value : OtherValue(fam, *value, rng);
    if (truthful) answer = "yes";
  } else {
    attr = rng.Pick(fam.values);
  }
  Draft d;
  d.question = "Is there " + IndefiniteArticle(attr) + " " + attr + " " + noun + "?";
  d.answer = answer;
  std::string verify = s.fine() ? VerifyCall("patches[0]", noun, attr, s)
                                : "patches[0].simple_query(" +
                                      Q(VerifySub(noun, attr, s)) + ")";
  d.program = FindLine("patches", noun) +
              "if len(patches) == 0:\n    return \"no\"\nelse:\n    return " + verify;
  return d;
}

std::optional<Draft> Instantiate(QuestionType type, const SceneFacts& f, Rng& rng,
                                 const Style& s) {
  switch (type) {
    case QuestionType::kQueryColor: return QueryFamily(f, rng, s, "color");
    case QuestionType::kQuerySize: return QueryFamily(f, rng, s, "size");
    case QuestionType::kQueryMaterial: return QueryFamily(f, rng, s, "material");
    case QuestionType::kVerifyAttr: return VerifyAttr(f, rng, s);
    case QuestionType::kChooseAttr: return ChooseAttr(f, rng, s);
    case QuestionType::kChooseName: return ChooseName(f, rng, s);
    case QuestionType::kQueryName: return QueryName(f, rng, s);
    case QuestionType::kExist: return Exist(f, rng, s);
    case QuestionType::kBothExist: return BothExist(f, rng, s);
    case QuestionType::kTwoHop: return TwoHop(f, rng, s);
    case QuestionType::kCompareAttr: return CompareAttr(f, rng, s);
    case QuestionType::kVerifyBoth: return VerifyBoth(f, rng, s);
    case QuestionType::kExistAttr: return ExistAttr(f, rng, s);
  }
  return std::nullopt;
}

}  // namespace

std::vector<QAPair> GenerateQA(const SceneGraph& scene, const WorldConfig& world,
                               const GenConfig& config, uint64_t seed) {
  config.Validate();
  std::vector<QAPair> out;
  if (scene.objects.empty()) return out;
  const SceneFacts facts(scene, world);
  const Style style{config.visual_pointer, config.framework};
  Rng rng(HashCombine(seed, Fnv1a64(scene.scene_id)));

  const int wanted = static_cast<int>(rng.UniformInt(config.min_questions,
                                                     config.max_questions));
  std::set<std::string> asked;
  int misses = 0;
  while (static_cast<int>(out.size()) < wanted && misses < 4) {
    std::vector<QuestionType> order = config.templates;
    rng.Shuffle(order);
    bool produced = false;
    for (QuestionType type : order) {
      auto draft = Instantiate(type, facts, rng, style);
      if (!draft || !asked.insert(draft->question).second) continue;
      QAPair qa;
      qa.question_id = scene.scene_id + "-q" + std::to_string(out.size());
      qa.scene_id = scene.scene_id;
      qa.question = std::move(draft->question);
      qa.ground_truth = std::move(draft->answer);
      qa.program = std::move(draft->program);
      qa.question_type = std::string(QuestionTypeName(type));
      out.push_back(std::move(qa));
      produced = true;
      break;
    }
    misses = produced ? 0 : misses + 1;
  }

  // Fault injection draws from its own stream so it never shifts questions.
  for (QAPair& qa : out) {
    Rng fault(HashCombine(seed, Fnv1a64(qa.question_id + "#fault")));
    if (fault.Bernoulli(config.fault_rate)) {
      qa.program = CorruptProgram(qa.program, fault.Next());
      qa.faulty = true;
    }
  }
  return out;
}

std::string CorruptProgram(std::string_view source, uint64_t seed) {
  const LexResult lexed = Lex(source);
  if (lexed.error) return std::string(source);
  std::vector<const Token*> candidates;
  for (const Token& t : lexed.tokens) {
    if (t.kind == Token::Kind::kNewline || t.kind == Token::Kind::kIndent ||
        t.kind == Token::Kind::kDedent || t.kind == Token::Kind::kEnd || t.length == 0)
      continue;
    candidates.push_back(&t);
  }
  Rng rng(seed);
  rng.Shuffle(candidates);
  for (const Token* t : candidates) {
    std::string cut(source);
    cut.erase(t->offset, t->length);
    if (!Parse(cut).ok()) return cut;
  }
  // No single deletion breaks it; an unbalanced paren always does.
  return std::string(source) + "\n(";
}

nlohmann::ordered_json GroundingItemToJson(const GroundingItem& item) {
  nlohmann::ordered_json j;
  j["item_id"] = item.item_id;
  j["scene_id"] = item.scene_id;
  j["expression"] = item.expression;
  j["program"] = item.program;
  j["target"] = {item.target.x, item.target.y, item.target.w, item.target.h};
  return j;
}

GroundingItem GroundingItemFromJson(const nlohmann::json& j) {
  try {
    GroundingItem item;
    item.item_id = j.at("item_id").get<std::string>();
    item.scene_id = j.at("scene_id").get<std::string>();
    item.expression = j.at("expression").get<std::string>();
    item.program = j.at("program").get<std::string>();
    const auto& t = j.at("target");
    item.target = Rect{t.at(0).get<int>(), t.at(1).get<int>(), t.at(2).get<int>(),
                       t.at(3).get<int>()};
    return item;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed grounding record: ") + e.what());
  }
}

std::vector<GroundingItem> GenerateGrounding(const SceneGraph& scene,
                                             const WorldConfig& world, uint64_t seed,
                                             int max_items) {
  const SceneFacts facts(scene, world);
  Rng rng(HashCombine(seed, Fnv1a64(scene.scene_id + "#ground")));
  std::vector<GroundingItem> attributed, plain;

  for (const auto& [cat, objs] : facts.categories()) {
    if (objs.size() != 2) continue;
    for (const auto& fam : world.families) {
      auto v0 = facts.Value(*objs[0], fam);
      auto v1 = facts.Value(*objs[1], fam);
      if (!v0 || !v1 || *v0 == *v1) continue;
      for (int which = 0; which < 2; ++which) {
        const std::string attr = which == 0 ? *v0 : *v1;
        GroundingItem item;
        item.scene_id = scene.scene_id;
        item.expression = "the " + attr + " " + cat;
        item.program = FindLine("patches", cat) + "if patches[0].verify_property(" +
                       Q(cat) + ", " + Q(attr) +
                       "):\n    return patches[0]\nelse:\n    return patches[1]";
        item.target = objs[which]->bbox;
        attributed.push_back(std::move(item));
      }
    }
  }
  for (const auto& noun : facts.unique_nouns()) {
    GroundingItem item;
    item.scene_id = scene.scene_id;
    item.expression = "the " + noun;
    item.program = FindLine("patches", noun) + "return patches[0]";
    item.target = facts.Noun(noun)[0]->bbox;
    plain.push_back(std::move(item));
  }
  rng.Shuffle(attributed);
  rng.Shuffle(plain);

  std::vector<GroundingItem> out;
  for (auto* pool : {&attributed, &plain})
    for (auto& item : *pool) {
      if (static_cast<int>(out.size()) >= max_items) break;
      item.item_id = scene.scene_id + "-g" + std::to_string(out.size());
      out.push_back(std::move(item));
    }
  return out;
}

std::string_view PromptProfile(bool visual_pointer) {
  return visual_pointer ? "pointer" : "plain";
}

ProgramServiceClient::ProgramServiceClient(std::string endpoint,
                                           std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)), timeout_(timeout) {
  while (!endpoint_.empty() && endpoint_.back() == '/') endpoint_.pop_back();
  if (endpoint_.rfind("http://", 0) != 0)
    throw ConfigError("program service endpoint must be an http:// URL: '" + endpoint_ + "'");
  if (timeout_.count() <= 0) throw ConfigError("program service timeout must be positive");
}

std::string ProgramServiceClient::Generate(std::string_view question,
                                           std::string_view prompt_profile) const {
  const size_t host_start = std::string_view("http://").size();
  const size_t path_start = endpoint_.find('/', host_start);
  const std::string origin = endpoint_.substr(0, path_start);
  const std::string base_path =
      path_start == std::string::npos ? "" : endpoint_.substr(path_start);

  httplib::Client client(origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  nlohmann::json body = {{"question", question}, {"prompt_profile", prompt_profile}};
  auto res = client.Post(base_path + "/generate", body.dump(), "application/json");
  if (!res)
    throw ServiceError("program service request failed: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw ServiceError("program service answered HTTP " + std::to_string(res->status));
  try {
    return nlohmann::json::parse(res->body).at("program_text").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ServiceError(std::string("program service response malformed: ") + e.what());
  }
}

}  // namespace stepdistill
