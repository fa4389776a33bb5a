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

// The visual-program language: a line-oriented, indentation-structured subset
// of Python with method-style module calls.
//
//   ps = image.find("food")
//   if ps[0].verify_property("food", "red"):
//       return ps[0].simple_query("What kind of food is this?")
//   else:
//       return ps[1].simple_query("What kind of food is this?")

#ifndef STEPDISTILL_DSL_H_
#define STEPDISTILL_DSL_H_

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace stepdistill {

enum class ModuleKind {
  kFind,
  kExists,
  kVerifyProperty,
  kBestTextMatch,
  kSimpleQuery,
};

inline constexpr ModuleKind kDistillableKinds[] = {
    ModuleKind::kVerifyProperty, ModuleKind::kBestTextMatch,
    ModuleKind::kSimpleQuery};

std::string_view ModuleKindName(ModuleKind kind);
std::optional<ModuleKind> ParseModuleKind(std::string_view name);
bool IsDistillable(ModuleKind kind);
// Fixed argument count per module kind.
int ModuleArity(ModuleKind kind);

// Name bound to the full input image in every program.
inline constexpr std::string_view kImageVariable = "image";

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct CallExpr {
  std::string method;  // may name no known module; fails at run time
  ExprPtr receiver;
  std::vector<ExprPtr> args;
};
struct VarExpr {
  std::string name;
};
struct IndexExpr {
  ExprPtr target;
  long index = 0;
};
struct ListExpr {
  std::vector<ExprPtr> items;
};
struct StringLit {
  std::string value;
};
struct BoolLit {
  bool value = false;
};
struct NumberLit {
  double value = 0.0;
};
enum class CompareOp { kEq, kNe };
struct CompareExpr {
  CompareOp op = CompareOp::kEq;
  ExprPtr lhs;
  ExprPtr rhs;
};
enum class BoolOpKind { kAnd, kOr, kNot };
struct BoolOpExpr {
  BoolOpKind op = BoolOpKind::kAnd;
  std::vector<ExprPtr> operands;  // one for kNot
};
struct LenExpr {
  ExprPtr arg;
};

struct Expr {
  std::variant<CallExpr, VarExpr, IndexExpr, ListExpr, StringLit, BoolLit,
               NumberLit, CompareExpr, BoolOpExpr, LenExpr>
      node;
  int line = 0;
  int column = 0;
};

struct Statement;
using Block = std::vector<Statement>;

struct AssignStmt {
  std::string var;
  ExprPtr value;
};
struct IfStmt {
  ExprPtr cond;
  Block then_block;
  Block else_block;  // empty when there is no else
};
struct ReturnStmt {
  ExprPtr value;
};

struct Statement {
  std::variant<AssignStmt, IfStmt, ReturnStmt> node;
  int line = 0;
};

struct Program {
  Block statements;
  std::string source_text;
};

enum class ParseErrorKind { kLexical, kSyntactic, kArity, kUndefinedVariable };
std::string_view ParseErrorKindName(ParseErrorKind kind);

struct ParseError {
  ParseErrorKind kind = ParseErrorKind::kSyntactic;
  int line = 0;
  int column = 0;
  std::string message;

  std::string ToString() const;
};

// Either a Program or a ParseError; never throws on bad input.
class ParseResult {
 public:
  ParseResult(Program p) : value_(std::move(p)) {}  // NOLINT
  ParseResult(ParseError e) : value_(std::move(e)) {}  // NOLINT

  bool ok() const { return std::holds_alternative<Program>(value_); }
  explicit operator bool() const { return ok(); }
  const Program& program() const { return std::get<Program>(value_); }
  Program& program() { return std::get<Program>(value_); }
  const ParseError& error() const { return std::get<ParseError>(value_); }

 private:
  std::variant<Program, ParseError> value_;
};

ParseResult Parse(std::string_view source);

// Canonical source text; Parse(Unparse(p)) is structurally equal to p.
std::string Unparse(const Program& program);

// Double-quoted DSL string literal for `s`.
std::string QuoteString(std::string_view s);

// Structural equality ignoring positions and source text.
bool StructurallyEqual(const Program& a, const Program& b);

// Lexical tokens, exposed for fault injection.
struct Token {
  enum class Kind {
    kIdent, kString, kNumber, kKeyword, kPunct, kNewline, kIndent, kDedent, kEnd
  };
  Kind kind = Kind::kEnd;
  std::string text;
  int line = 0;
  int column = 0;
  size_t offset = 0;  // byte offset in source
  size_t length = 0;  // byte length in source
};

struct LexResult {
  std::vector<Token> tokens;
  std::optional<ParseError> error;
};

LexResult Lex(std::string_view source);

}  // namespace stepdistill

#endif  // STEPDISTILL_DSL_H_
