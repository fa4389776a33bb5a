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

#include <gtest/gtest.h>

#include "stepdistill/interpreter.h"
#include "stepdistill/quesgen.h"
#include "stepdistill/registry.h"
#include "test_util.h"

namespace stepdistill {
namespace {

using testing::KitchenScene;

// Reference evaluator written against the language rules, sharing only the
// module calls with the interpreter under test. nullopt is a runtime failure.
class Reference {
 public:
  Reference(SceneRef scene, const ModuleRegistry& registry) : scene_(scene), reg_(registry) {
    env_.emplace_back("image", Value{FullImage(scene)});
  }

  std::optional<Value> Run(const Block& block) {
    for (const Statement& s : block) {
      if (const auto* a = std::get_if<AssignStmt>(&s.node)) {
        auto v = Eval(*a->value);
        if (!v) return std::nullopt;
        env_.emplace_back(a->var, *v);
      } else if (const auto* r = std::get_if<ReturnStmt>(&s.node)) {
        done_ = true;
        return Eval(*r->value);
      } else {
        const auto& f = std::get<IfStmt>(s.node);
        auto c = Eval(*f.cond);
        if (!c || !std::holds_alternative<bool>(c->v)) return std::nullopt;
        auto out = Run(std::get<bool>(c->v) ? f.then_block : f.else_block);
        if (done_ || !out) return out;
      }
    }
    return done_ ? std::nullopt : std::optional<Value>(Value{std::string("<fell through>")});
  }

  int calls = 0;

 private:
  std::optional<Value> Lookup(const std::string& name) const {
    for (auto it = env_.rbegin(); it != env_.rend(); ++it)
      if (it->first == name) return it->second;
    return std::nullopt;
  }

  std::optional<Value> Eval(const Expr& e) {
    if (const auto* s = std::get_if<StringLit>(&e.node)) return Value{s->value};
    if (const auto* b = std::get_if<BoolLit>(&e.node)) return Value{b->value};
    if (const auto* n = std::get_if<NumberLit>(&e.node)) return Value{n->value};
    if (const auto* v = std::get_if<VarExpr>(&e.node)) return Lookup(v->name);
    if (const auto* l = std::get_if<ListExpr>(&e.node)) {
      Value::List items;
      for (const auto& item : l->items) {
        auto x = Eval(*item);
        if (!x) return std::nullopt;
        items.push_back(*x);
      }
      return Value{items};
    }
    if (const auto* l = std::get_if<LenExpr>(&e.node)) {
      auto x = Eval(*l->arg);
      if (!x) return std::nullopt;
      if (auto* p = std::get_if<Value::PatchList>(&x->v)) return Value{double(p->size())};
      return std::nullopt;
    }
    if (const auto* ix = std::get_if<IndexExpr>(&e.node)) {
      auto x = Eval(*ix->target);
      if (!x) return std::nullopt;
      const auto* p = std::get_if<Value::PatchList>(&x->v);
      if (!p) return std::nullopt;
      long i = ix->index < 0 ? ix->index + long(p->size()) : ix->index;
      if (i < 0 || i >= long(p->size())) return std::nullopt;
      return Value{(*p)[size_t(i)]};
    }
    if (const auto* c = std::get_if<CompareExpr>(&e.node)) {
      auto a = Eval(*c->lhs), b = Eval(*c->rhs);
      if (!a || !b || a->v.index() != b->v.index()) return std::nullopt;
      return Value{(c->op == CompareOp::kEq) == (*a == *b)};
    }
    if (const auto* b = std::get_if<BoolOpExpr>(&e.node)) {
      if (b->op == BoolOpKind::kNot) {
        auto x = Eval(*b->operands[0]);
        if (!x || !std::holds_alternative<bool>(x->v)) return std::nullopt;
        return Value{!std::get<bool>(x->v)};
      }
      const bool stop_on = b->op == BoolOpKind::kOr;
      for (const auto& o : b->operands) {
        auto x = Eval(*o);
        if (!x || !std::holds_alternative<bool>(x->v)) return std::nullopt;
        if (std::get<bool>(x->v) == stop_on) return Value{stop_on};
      }
      return Value{!stop_on};
    }
    const auto& call = std::get<CallExpr>(e.node);
    auto recv = Eval(*call.receiver);
    if (!recv) return std::nullopt;
    std::vector<Value> args;
    for (const auto& a : call.args) {
      auto v = Eval(*a);
      if (!v) return std::nullopt;
      args.push_back(*v);
    }
    const auto kind = ParseModuleKind(call.method);
    if (!kind) return std::nullopt;
    ++calls;
    const auto* name_arg = std::get_if<std::string>(&args[0].v);
    const std::string name = name_arg ? *name_arg : "";
    if (*kind == ModuleKind::kExists) {
      if (auto* list = std::get_if<Value::PatchList>(&recv->v))
        return Value{reg_.detector().Exists(*list, name)};
    }
    if (!std::holds_alternative<ScenePatch>(recv->v)) return std::nullopt;
    const ScenePatch& patch = std::get<ScenePatch>(recv->v);
    if (*kind == ModuleKind::kExists) return Value{reg_.detector().Exists(patch, name)};
    if (*kind == ModuleKind::kFind) return Value{reg_.detector().Find(patch, name)};
    const std::string answer = reg_.Invoke(*kind, patch, args, patch.origin_label()).answer;
    if (*kind == ModuleKind::kVerifyProperty) {
      if (answer != "yes" && answer != "no") return std::nullopt;
      return Value{answer == "yes"};
    }
    return Value{answer};
  }

  SceneRef scene_;
  const ModuleRegistry& reg_;
  std::vector<std::pair<std::string, Value>> env_;
  bool done_ = false;
};

TEST(InterpreterTest, AgreesWithReferenceOnTemplatePrograms) {
  const Toolkit kit(WorldConfig::Default());
  for (const ModuleRegistry& reg :
       {MakeBaselineRegistry(kit, {}), MakeTeacherRegistry(kit, {})}) {
    size_t checked = 0, nan = 0;
    for (uint64_t seed = 0; seed < 200; ++seed) {
      const auto scene = std::make_shared<SceneGraph>(GenerateWorld(seed, kit.world));
      for (Framework fw : {Framework::kFine, Framework::kCoarse}) {
        GenConfig gen;
        gen.framework = fw;
        for (const QAPair& qa : GenerateQA(*scene, kit.world, gen, 1)) {
          const ParseResult parsed = Parse(qa.program);
          ASSERT_TRUE(parsed.ok()) << qa.program;
          const ExecutionTrace t = Execute(parsed.program(), scene, reg, qa.question_id);
          Reference ref(scene, reg);
          const auto expected = ref.Run(parsed.program().statements);
          if (expected) {
            ASSERT_EQ(t.status, TraceStatus::kOk) << qa.program << t.detail;
            ASSERT_EQ(t.answer, *expected) << qa.program;
            ASSERT_EQ(static_cast<int>(t.steps.size()), ref.calls) << qa.program;
          } else {
            ++nan;
            ASSERT_EQ(t.status, TraceStatus::kRuntimeNan) << qa.program;
            ASSERT_TRUE(t.answer.IsNan());
          }
          for (size_t i = 0; i < t.steps.size(); ++i)
            ASSERT_EQ(t.steps[i].step_index, static_cast<int>(i));
          ++checked;
        }
      }
    }
    EXPECT_GT(checked, 4000u);
    EXPECT_LT(nan, checked / 5);
  }
}

ExecutionTrace RunSource(const std::string& src, const ModuleRegistry& reg) {
  const ParseResult r = Parse(src);
  EXPECT_TRUE(r.ok()) << src << (r.ok() ? "" : r.error().ToString());
  return Execute(r.program(), KitchenScene(), reg, "q");
}

TEST(InterpreterTest, RuntimeSemantics) {
  const Toolkit kit(WorldConfig::Default());
  const ModuleRegistry reg = MakeOracleRegistry(kit, {});
  struct Case {
    std::string src;
    std::optional<std::string> answer;  // nullopt: NaN
    size_t steps;
  };
  const Case cases[] = {
      {"ps = image.find(\"flower\")\nreturn ps[-1].simple_query(\"What color is this flower?\")\n",
       "white", 2},
      {"ps = image.find(\"flower\")\nreturn ps[2].simple_query(\"What is this?\")\n", std::nullopt, 1},
      {"ps = image.find(\"bus\")\nif len(ps) == 0:\n    return \"none\"\nreturn \"some\"\n", "none", 1},
      {"return image.exists(\"car\") and image.exists(\"bus\")\n", "no", 2},
      {"return image.exists(\"bus\") and image.exists(\"car\")\n", "no", 1},  // short circuit
      {"return image.exists(\"car\") or image.exists(\"bus\")\n", "yes", 1},
      {"return not image.exists(\"bus\")\n", "yes", 1},
      {"if \"yes\":\n    return 1\nreturn 2\n", std::nullopt, 0},
      {"return \"a\" == True\n", std::nullopt, 0},
      {"return len(\"abc\") == 3\n", "yes", 0},
      {"return image.zoom(\"x\")\n", std::nullopt, 0},
      {"return image.find(\"car\").simple_query(\"What is this?\")\n", std::nullopt, 1},
      {"ps = image.find(\"table\")\nreturn ps.exists(\"table\")\n", "yes", 2},
      {"return image.find(5)\n", std::nullopt, 0},
      {"return [\"a\", \"b\"][1]\n", "b", 0},
  };
  for (const Case& c : cases) {
    const ExecutionTrace t = RunSource(c.src, reg);
    if (c.answer) {
      EXPECT_EQ(t.status, TraceStatus::kOk) << c.src << t.detail;
      EXPECT_EQ(AnswerString(t.answer), *c.answer) << c.src;
    } else {
      EXPECT_EQ(t.status, TraceStatus::kRuntimeNan) << c.src;
      EXPECT_TRUE(t.answer.IsNan()) << c.src;
      EXPECT_FALSE(t.detail.empty());
    }
    EXPECT_EQ(t.steps.size(), c.steps) << c.src;
  }
}

TEST(InterpreterTest, StepRecordsCarryProvenance) {
  const Toolkit kit(WorldConfig::Default());
  const ExecutionTrace t = RunSource(
      "ps = image.find(\"table\")\n"
      "ok = ps.exists(\"table\")\n"
      "return ps[0].verify_property(\"table\", \"red\")\n",
      MakeOracleRegistry(kit, {}));
  ASSERT_EQ(t.steps.size(), 3u);
  EXPECT_TRUE(t.steps[0].receiver.IsFullImage());
  EXPECT_FALSE(t.steps[0].center_word.has_value());
  EXPECT_TRUE(t.steps[1].receiver_list.has_value());
  EXPECT_EQ(t.steps[1].receiver_list->size(), 1u);
  EXPECT_EQ(t.steps[2].center_word, "table");
  EXPECT_EQ(t.steps[2].receiver.region(), (Rect{0, 0, 200, 200}));
  EXPECT_EQ(t.steps[2].output, Value{true});
  EXPECT_EQ(AnswerString(t.answer), "yes");
}

// A backend that always fails, or answers outside yes/no.
class BrokenBackend : public Backend {
 public:
  explicit BrokenBackend(std::string answer) : answer_(std::move(answer)) {}
  Prediction Predict(const SubTaskInput&) const override {
    if (answer_.empty()) throw std::runtime_error("backend down");
    return {answer_, {{answer_, 1.0}}};
  }
  BackendDescriptor Descriptor() const override { return {"broken", false}; }
  nlohmann::ordered_json Describe() const override { return {{"type", "broken"}}; }

 private:
  std::string answer_;
};

TEST(InterpreterTest, BackendFailuresBecomeNanWithARecordedStep) {
  const Toolkit kit(WorldConfig::Default());
  const ModuleRegistry base = MakeOracleRegistry(kit, {});
  const std::string src =
      "ps = image.find(\"table\")\nreturn ps[0].verify_property(\"table\", \"red\")\n";
  for (const char* answer : {"", "maybe"}) {
    const auto reg = base.Replace(ModuleKind::kVerifyProperty, std::make_shared<BrokenBackend>(answer));
    const ExecutionTrace t = RunSource(src, reg);
    EXPECT_EQ(t.status, TraceStatus::kRuntimeNan);
    ASSERT_EQ(t.steps.size(), 2u);
    EXPECT_TRUE(t.steps[1].output.IsNan());
  }
}

TEST(FallbackTest, CorruptedProgramsRunOneSimpleQuery) {
  const Toolkit kit(WorldConfig::Default());
  const ModuleRegistry reg = MakeOracleRegistry(kit, {});
  size_t runs = 0;
  for (uint64_t seed = 0; seed < 300; ++seed) {
    const auto scene = std::make_shared<SceneGraph>(GenerateWorld(seed, kit.world));
    for (const QAPair& qa : GenerateQA(*scene, kit.world, GenConfig{}, 2)) {
      const std::string bad = CorruptProgram(qa.program, seed);
      ASSERT_FALSE(Parse(bad).ok()) << bad;
      const ExecutionTrace t = RunWithFallback(bad, qa.question, scene, reg, qa.question_id);
      ASSERT_EQ(t.status, TraceStatus::kParseErrorFallback);
      ASSERT_EQ(t.steps.size(), 1u);
      EXPECT_EQ(t.steps[0].module_kind, ModuleKind::kSimpleQuery);
      EXPECT_TRUE(t.steps[0].receiver.IsFullImage());
      EXPECT_EQ(t.steps[0].args, (std::vector<Value>{Value{qa.question}}));
      EXPECT_EQ(AnswerString(t.answer), qa.ground_truth);
      EXPECT_FALSE(t.detail.empty());
      ++runs;
    }
  }
  EXPECT_GT(runs, 2000u);
}

TEST(FallbackTest, FailingFallbackKeepsStatus) {
  const Toolkit kit(WorldConfig::Default());
  const auto reg = MakeOracleRegistry(kit, {}).Replace(ModuleKind::kSimpleQuery,
                                                       std::make_shared<BrokenBackend>(""));
  const ExecutionTrace t = RunWithFallback("return (", "Is there a car?", KitchenScene(), reg);
  EXPECT_EQ(t.status, TraceStatus::kParseErrorFallback);
  EXPECT_TRUE(t.answer.IsNan());
  EXPECT_NE(t.detail.find("backend down"), std::string::npos);
}

TEST(FallbackTest, SourceQuotesTheQuestion) {
  EXPECT_EQ(FallbackSource("Is the \"red\" car big?"),
            "return image.simple_query(\"Is the \\\"red\\\" car big?\")");
  EXPECT_TRUE(Parse(FallbackSource("a\\b")).ok());
}

TEST(TraceJsonTest, RoundTrip) {
  const Toolkit kit(WorldConfig::Default());
  const SceneRef s = KitchenScene();
  const ExecutionTrace t = RunSource(
      "ps = image.find(\"flower\")\nok = ps.exists(\"flower\")\n"
      "return ps[0].best_text_match([\"red\", \"white\"])\n",
      MakeBaselineRegistry(kit, {}));
  const SceneLookup lookup = [&](const std::string& id) { return id == s->scene_id ? s : nullptr; };
  const ExecutionTrace back = TraceFromJson(nlohmann::json::parse(TraceToJson(t).dump()), lookup);
  EXPECT_EQ(TraceToJson(back).dump(), TraceToJson(t).dump());
  EXPECT_EQ(back.steps.size(), 3u);
  EXPECT_EQ(back.steps[1].receiver_list, t.steps[1].receiver_list);
}

}  // namespace
}  // namespace stepdistill
