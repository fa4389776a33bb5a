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

#include "stepdistill/interpreter.h"

#include <map>
#include <stdexcept>
#include <utility>

namespace stepdistill {
namespace {

struct RuntimeFailure {
  std::string message;
};

struct Returned {
  Value value;
};

class Interpreter {
 public:
  Interpreter(SceneRef scene, const ModuleRegistry& registry, ExecutionTrace* trace)
      : scene_(std::move(scene)), registry_(registry), trace_(trace) {
    env_[std::string(kImageVariable)] = Value{FullImage(scene_)};
  }

  // Returns the value of the first return statement reached.
  Value Run(const Block& block) {
    try {
      RunBlock(block);
    } catch (Returned& r) {
      return std::move(r.value);
    }
    throw RuntimeFailure{"program ended without returning"};
  }

 private:
  void RunBlock(const Block& block) {
    for (const Statement& s : block) RunStatement(s);
  }

  void RunStatement(const Statement& s) {
    if (const auto* a = std::get_if<AssignStmt>(&s.node)) {
      env_[a->var] = Eval(*a->value);
    } else if (const auto* i = std::get_if<IfStmt>(&s.node)) {
      const Value cond = Eval(*i->cond);
      const bool* b = std::get_if<bool>(&cond.v);
      if (!b) Fail(s.line, "if condition is " + std::string(ValueTypeName(cond)));
      RunBlock(*b ? i->then_block : i->else_block);
    } else {
      throw Returned{Eval(*std::get<ReturnStmt>(s.node).value)};
    }
  }

  [[noreturn]] static void Fail(int line, const std::string& message) {
    throw RuntimeFailure{"line " + std::to_string(line) + ": " + message};
  }

  Value Eval(const Expr& e) {
    return std::visit([&](const auto& n) { return EvalNode(n, e.line); }, e.node);
  }

  Value EvalNode(const StringLit& n, int) { return Value{n.value}; }
  Value EvalNode(const BoolLit& n, int) { return Value{n.value}; }
  Value EvalNode(const NumberLit& n, int) { return Value{n.value}; }

  Value EvalNode(const ListExpr& n, int) {
    Value::List items;
    for (const auto& item : n.items) items.push_back(Eval(*item));
    return Value{std::move(items)};
  }

  Value EvalNode(const VarExpr& n, int line) {
    auto it = env_.find(n.name);
    if (it == env_.end()) Fail(line, "undefined variable '" + n.name + "'");
    return it->second;
  }

  Value EvalNode(const IndexExpr& n, int line) {
    Value target = Eval(*n.target);
    auto pick = [&](auto& seq) -> Value {
      const long size = static_cast<long>(seq.size());
      const long i = n.index < 0 ? n.index + size : n.index;
      if (i < 0 || i >= size)
        Fail(line, "index " + std::to_string(n.index) + " out of range for length " +
                       std::to_string(size));
      return Value{seq[static_cast<size_t>(i)]};
    };
    if (auto* list = std::get_if<Value::PatchList>(&target.v)) return pick(*list);
    if (auto* list = std::get_if<Value::List>(&target.v)) return pick(*list);
    Fail(line, "cannot index a " + std::string(ValueTypeName(target)));
  }

  Value EvalNode(const LenExpr& n, int line) {
    Value arg = Eval(*n.arg);
    if (auto* l = std::get_if<Value::PatchList>(&arg.v)) return Value{double(l->size())};
    if (auto* l = std::get_if<Value::List>(&arg.v)) return Value{double(l->size())};
    if (auto* s = std::get_if<std::string>(&arg.v)) return Value{double(s->size())};
    Fail(line, "len of a " + std::string(ValueTypeName(arg)));
  }

  Value EvalNode(const CompareExpr& n, int line) {
    Value lhs = Eval(*n.lhs);
    Value rhs = Eval(*n.rhs);
    if (lhs.v.index() != rhs.v.index())
      Fail(line, "cannot compare " + std::string(ValueTypeName(lhs)) + " with " +
                     std::string(ValueTypeName(rhs)));
    const bool equal = lhs == rhs;
    return Value{n.op == CompareOp::kEq ? equal : !equal};
  }

  bool Truth(const Expr& e) {
    Value v = Eval(e);
    const bool* b = std::get_if<bool>(&v.v);
    if (!b) Fail(e.line, "boolean operand is " + std::string(ValueTypeName(v)));
    return *b;
  }

  Value EvalNode(const BoolOpExpr& n, int) {
    switch (n.op) {
      case BoolOpKind::kNot:
        return Value{!Truth(*n.operands.at(0))};
      case BoolOpKind::kAnd:
        for (const auto& o : n.operands)
          if (!Truth(*o)) return Value{false};
        return Value{true};
      case BoolOpKind::kOr:
        for (const auto& o : n.operands)
          if (Truth(*o)) return Value{true};
        return Value{false};
    }
    return Value{false};
  }

  static const std::string& StrArg(const Value& v, int line, std::string_view what) {
    const auto* s = std::get_if<std::string>(&v.v);
    if (!s) Fail(line, std::string(what) + " must be a string, got " +
                           std::string(ValueTypeName(v)));
    return *s;
  }

  Value EvalNode(const CallExpr& n, int line) {
    const auto kind = ParseModuleKind(n.method);
    if (!kind) Fail(line, "unknown module '" + n.method + "'");
    Value receiver = Eval(*n.receiver);
    std::vector<Value> args;
    for (const auto& a : n.args) args.push_back(Eval(*a));
    if (static_cast<int>(args.size()) != ModuleArity(*kind))
      Fail(line, n.method + " takes " + std::to_string(ModuleArity(*kind)) + " arguments");

    StepRecord step;
    step.step_index = static_cast<int>(trace_->steps.size());
    step.module_kind = *kind;
    step.args = args;

    if (*kind == ModuleKind::kExists) {
      const std::string& name = StrArg(args[0], line, "exists name");
      if (auto* list = std::get_if<Value::PatchList>(&receiver.v)) {
        step.receiver = FullImage(scene_);
        step.receiver_list = *list;
        step.output = Value{registry_.detector().Exists(*list, name)};
      } else if (auto* patch = std::get_if<ScenePatch>(&receiver.v)) {
        step.receiver = *patch;
        step.center_word = patch->origin_label();
        step.output = Value{registry_.detector().Exists(*patch, name)};
      } else {
        Fail(line, "exists receiver is " + std::string(ValueTypeName(receiver)));
      }
      return Record(std::move(step));
    }

    const auto* patch = std::get_if<ScenePatch>(&receiver.v);
    if (!patch)
      Fail(line, n.method + " receiver is " + std::string(ValueTypeName(receiver)));
    step.receiver = *patch;
    step.center_word = patch->origin_label();

    if (*kind == ModuleKind::kFind) {
      const std::string& name = StrArg(args[0], line, "find name");
      step.output = Value{registry_.detector().Find(*patch, name)};
      return Record(std::move(step));
    }

    std::string answer;
    std::string failure;
    try {
      answer = registry_.Invoke(*kind, *patch, args, step.center_word).answer;
    } catch (const std::exception& ex) {
      failure = ex.what();
    }
    if (!failure.empty()) {
      step.output = Value::Nan();
      Record(std::move(step));
      Fail(line, n.method + " failed: " + failure);
    }
    if (*kind == ModuleKind::kVerifyProperty) {
      if (answer != kYes && answer != kNo) {
        step.output = Value::Nan();
        Record(std::move(step));
        Fail(line, "verify_property answered '" + answer + "'");
      }
      step.output = Value{answer == kYes};
    } else {
      step.output = Value{std::move(answer)};
    }
    return Record(std::move(step));
  }

  Value Record(StepRecord step) {
    Value out = step.output;
    trace_->steps.push_back(std::move(step));
    return out;
  }

  SceneRef scene_;
  const ModuleRegistry& registry_;
  ExecutionTrace* trace_;
  std::map<std::string, Value> env_;
};

}  // namespace

ExecutionTrace Execute(const Program& program, SceneRef scene,
                       const ModuleRegistry& registry, std::string question_id) {
  ExecutionTrace trace;
  trace.question_id = std::move(question_id);
  trace.program_source =
      program.source_text.empty() ? Unparse(program) : program.source_text;
  if (!scene) {
    trace.status = TraceStatus::kRuntimeNan;
    trace.answer = Value::Nan();
    trace.detail = "no scene";
    return trace;
  }
  try {
    Interpreter interp(scene, registry, &trace);
    trace.answer = interp.Run(program.statements);
    trace.status = TraceStatus::kOk;
  } catch (const RuntimeFailure& f) {
    trace.status = TraceStatus::kRuntimeNan;
    trace.answer = Value::Nan();
    trace.detail = f.message;
  } catch (const std::exception& ex) {
    trace.status = TraceStatus::kRuntimeNan;
    trace.answer = Value::Nan();
    trace.detail = ex.what();
  }
  return trace;
}

std::string FallbackSource(std::string_view question) {
  return "return image.simple_query(" + QuoteString(question) + ")";
}

Program FallbackProgram(std::string_view question) {
  ParseResult r = Parse(FallbackSource(question));
  // The fallback is a fixed well-formed template.
  if (!r.ok()) throw std::logic_error("fallback program failed to parse");
  return std::move(r.program());
}

ExecutionTrace RunWithFallback(std::string_view source, std::string_view question,
                               SceneRef scene, const ModuleRegistry& registry,
                               std::string question_id) {
  ParseResult parsed = Parse(source);
  if (parsed.ok()) return Execute(parsed.program(), std::move(scene), registry,
                                  std::move(question_id));
  ExecutionTrace trace =
      Execute(FallbackProgram(question), std::move(scene), registry, std::move(question_id));
  // The status records the path taken; a fallback that itself fails keeps
  // its NaN answer.
  trace.detail = trace.detail.empty() ? parsed.error().ToString()
                                      : parsed.error().ToString() + "; " + trace.detail;
  trace.status = TraceStatus::kParseErrorFallback;
  return trace;
}

}  // namespace stepdistill
