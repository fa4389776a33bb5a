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

#include <string>

#include <gtest/gtest.h>

#include "stepdistill/dsl.h"
#include "stepdistill/rng.h"

namespace stepdistill {
namespace {

constexpr const char* kBranching = R"(ps = image.find("food")
if ps[0].verify_property("food", "red"):
    return ps[0].simple_query("What kind of food is this?")
else:
    return ps[1].simple_query("What kind of food is this?")
)";

TEST(ParseTest, AcceptsBranchingProgram) {
  const ParseResult r = Parse(kBranching);
  ASSERT_TRUE(r.ok()) << r.error().ToString();
  const Block& b = r.program().statements;
  ASSERT_EQ(b.size(), 2u);
  const auto& assign = std::get<AssignStmt>(b[0].node);
  EXPECT_EQ(assign.var, "ps");
  const auto& call = std::get<CallExpr>(assign.value->node);
  EXPECT_EQ(call.method, "find");
  EXPECT_EQ(std::get<VarExpr>(call.receiver->node).name, "image");
  const auto& branch = std::get<IfStmt>(b[1].node);
  EXPECT_EQ(branch.then_block.size(), 1u);
  EXPECT_EQ(branch.else_block.size(), 1u);
  EXPECT_EQ(r.program().source_text, kBranching);
}

TEST(ParseTest, OperatorsAndLiterals) {
  const ParseResult r = Parse(
      "a = [image.find(\"x\"), \"y\"]\n"
      "# comment\n"
      "if len(a) != 0 and not (a[-1] == 'y') or False:\n"
      "    return 2.5\n"
      "return True\n");
  ASSERT_TRUE(r.ok()) << r.error().ToString();
  const auto& branch = std::get<IfStmt>(r.program().statements[1].node);
  const auto& top = std::get<BoolOpExpr>(branch.cond->node);
  EXPECT_EQ(top.op, BoolOpKind::kOr);
  ASSERT_EQ(top.operands.size(), 2u);
  EXPECT_EQ(std::get<BoolOpExpr>(top.operands[0]->node).op, BoolOpKind::kAnd);
  EXPECT_EQ(std::get<IndexExpr>(std::get<CompareExpr>(
                std::get<BoolOpExpr>(std::get<BoolOpExpr>(top.operands[0]->node)
                                         .operands[1]->node).operands[0]->node)
                                    .lhs->node).index, -1);
}

struct BadCase {
  const char* source;
  ParseErrorKind kind;
  int line;
};

TEST(ParseTest, ErrorKindsAndPositions) {
  const BadCase cases[] = {
      {"return \"abc\n", ParseErrorKind::kLexical, 1},
      {"x = 1\n\treturn x\n", ParseErrorKind::kLexical, 2},
      {"return image.find(\"a\", \"b\")\n", ParseErrorKind::kArity, 1},
      {"return image.verify_property(\"a\")\n", ParseErrorKind::kArity, 1},
      {"return ps\n", ParseErrorKind::kUndefinedVariable, 1},
      {"if True:\n    x = 1\nelse:\n    y = 2\nreturn x\n", ParseErrorKind::kUndefinedVariable, 5},
      {"return image.find(\"a\"\n", ParseErrorKind::kSyntactic, 1},
      {"x = image\n", ParseErrorKind::kSyntactic, 1},
      {"return 1\nreturn 2\n", ParseErrorKind::kSyntactic, 2},
      {"if True:\n    if True:\n        return 1\nreturn 2\n", ParseErrorKind::kSyntactic, 2},
      {"image = 1\nreturn image\n", ParseErrorKind::kSyntactic, 1},
      {"return 1 == 2 == 3\n", ParseErrorKind::kSyntactic, 1},
      {"return a[b]\n", ParseErrorKind::kSyntactic, 1},
      {"", ParseErrorKind::kSyntactic, 1},
  };
  for (const BadCase& c : cases) {
    const ParseResult r = Parse(c.source);
    ASSERT_FALSE(r.ok()) << c.source;
    EXPECT_EQ(r.error().kind, c.kind) << c.source << " -> " << r.error().ToString();
    EXPECT_EQ(r.error().line, c.line) << c.source << " -> " << r.error().ToString();
  }
}

TEST(ParseTest, IfWithoutElseThenReturn) {
  const ParseResult r = Parse(
      "if image.exists(\"car\"):\n    return \"yes\"\nreturn \"no\"\n");
  ASSERT_TRUE(r.ok()) << r.error().ToString();
}

TEST(ParseTest, UnknownMethodParses) {
  // Unknown modules are a run-time failure, not a parse error.
  const ParseResult r = Parse("return image.crop_left(1, 2, 3)\n");
  ASSERT_TRUE(r.ok());
}

TEST(QuoteTest, EscapesRoundTrip) {
  for (std::string s : {"plain", "with \"quotes\"", "back\\slash", "tab\tnew\nline", "'#'"}) {
    const ParseResult r = Parse("return " + QuoteString(s) + "\n");
    ASSERT_TRUE(r.ok()) << s;
    const auto& ret = std::get<ReturnStmt>(r.program().statements[0].node);
    EXPECT_EQ(std::get<StringLit>(ret.value->node).value, s);
  }
}

// Random well-formed programs for the round-trip property.
class ProgramGen {
 public:
  explicit ProgramGen(uint64_t seed) : rng_(seed) {}

  Program Make() {
    Program p;
    std::vector<std::string> vars = {"image"};
    const int assigns = static_cast<int>(rng_.UniformInt(0, 3));
    for (int i = 0; i < assigns; ++i) {
      Statement s;
      s.node = AssignStmt{"v" + std::to_string(i), GenExpr(vars, 3)};
      vars.push_back("v" + std::to_string(i));
      p.statements.push_back(std::move(s));
    }
    const int shape = static_cast<int>(rng_.UniformInt(0, 2));
    if (shape == 0) {
      p.statements.push_back(Return(vars));
      return p;
    }
    IfStmt f;
    f.cond = GenExpr(vars, 3);
    std::vector<std::string> inner = vars;
    if (rng_.Bernoulli(0.5)) {
      Statement s;
      s.node = AssignStmt{"t", GenExpr(inner, 2)};
      f.then_block.push_back(std::move(s));
      inner.push_back("t");
    }
    f.then_block.push_back(Return(inner));
    if (shape == 2) f.else_block.push_back(Return(vars));
    Statement s;
    s.node = std::move(f);
    p.statements.push_back(std::move(s));
    if (shape == 1) p.statements.push_back(Return(vars));
    return p;
  }

 private:
  Statement Return(const std::vector<std::string>& vars) {
    Statement s;
    s.node = ReturnStmt{GenExpr(vars, 3)};
    return s;
  }

  ExprPtr Node(decltype(Expr::node) n) {
    auto e = std::make_shared<Expr>();
    e->node = std::move(n);
    return e;
  }

  std::string RandomString() {
    static const std::string kChars = "abc XYZ?\"'\\#\t\n.,()";
    std::string s;
    const int n = static_cast<int>(rng_.UniformInt(0, 8));
    for (int i = 0; i < n; ++i)
      s.push_back(kChars[static_cast<size_t>(rng_.UniformInt(0, kChars.size() - 1))]);
    return s;
  }

  // Receivers avoid numeric literals, which would lex as "3." + name.
  ExprPtr GenReceiver(const std::vector<std::string>& vars, int depth) {
    if (depth <= 0 || rng_.Bernoulli(0.5)) return Node(VarExpr{rng_.Pick(vars)});
    return rng_.Bernoulli(0.5) ? GenCall(vars, depth - 1)
                               : Node(StringLit{RandomString()});
  }

  ExprPtr GenCall(const std::vector<std::string>& vars, int depth) {
    static const std::vector<std::string> kMethods = {
        "find", "exists", "verify_property", "best_text_match", "simple_query", "crop", "zoom"};
    const std::string m = rng_.Pick(kMethods);
    const auto kind = ParseModuleKind(m);
    const int arity = kind ? ModuleArity(*kind) : static_cast<int>(rng_.UniformInt(0, 3));
    CallExpr c{m, GenReceiver(vars, depth), {}};
    for (int i = 0; i < arity; ++i) c.args.push_back(GenExpr(vars, depth - 1));
    return Node(std::move(c));
  }

  ExprPtr GenExpr(const std::vector<std::string>& vars, int depth) {
    const int choice = static_cast<int>(rng_.UniformInt(0, depth <= 0 ? 3 : 10));
    switch (choice) {
      case 0: return Node(VarExpr{rng_.Pick(vars)});
      case 1: return Node(StringLit{RandomString()});
      case 2: return Node(BoolLit{rng_.Bernoulli(0.5)});
      case 3: return Node(NumberLit{static_cast<double>(rng_.UniformInt(-20, 20)) / 2.0});
      case 4: return GenCall(vars, depth);
      case 5: return Node(IndexExpr{GenReceiver(vars, depth - 1), static_cast<long>(rng_.UniformInt(-3, 3))});
      case 6: {
        ListExpr l;
        const int n = static_cast<int>(rng_.UniformInt(0, 3));
        for (int i = 0; i < n; ++i) l.items.push_back(GenExpr(vars, depth - 1));
        return Node(std::move(l));
      }
      case 7:
        return Node(CompareExpr{rng_.Bernoulli(0.5) ? CompareOp::kEq : CompareOp::kNe,
                                GenExpr(vars, depth - 1), GenExpr(vars, depth - 1)});
      case 8: return Node(BoolOpExpr{BoolOpKind::kNot, {GenExpr(vars, depth - 1)}});
      case 9: {
        BoolOpExpr b{rng_.Bernoulli(0.5) ? BoolOpKind::kAnd : BoolOpKind::kOr, {}};
        const int n = static_cast<int>(rng_.UniformInt(2, 3));
        for (int i = 0; i < n; ++i) b.operands.push_back(GenExpr(vars, depth - 1));
        return Node(std::move(b));
      }
      default: return Node(LenExpr{GenExpr(vars, depth - 1)});
    }
  }

  Rng rng_;
};

TEST(UnparseTest, RoundTripProperty) {
  for (uint64_t seed = 0; seed < 2000; ++seed) {
    const Program p = ProgramGen(seed).Make();
    const std::string text = Unparse(p);
    const ParseResult r = Parse(text);
    ASSERT_TRUE(r.ok()) << "seed " << seed << "\n" << text << r.error().ToString();
    ASSERT_TRUE(StructurallyEqual(p, r.program())) << "seed " << seed << "\n" << text;
    // Canonical text is a fixed point.
    ASSERT_EQ(Unparse(r.program()), text) << "seed " << seed;
  }
}

TEST(ParseTest, NeverThrowsOnMutatedInput) {
  Rng rng(99);
  const std::string base = kBranching;
  for (int i = 0; i < 5000; ++i) {
    std::string s = base;
    const int edits = static_cast<int>(rng.UniformInt(1, 4));
    for (int e = 0; e < edits && !s.empty(); ++e) {
      const size_t at = static_cast<size_t>(rng.UniformInt(0, s.size() - 1));
      switch (rng.UniformInt(0, 2)) {
        case 0: s.erase(at, 1); break;
        case 1: s.insert(at, 1, static_cast<char>(rng.UniformInt(1, 126))); break;
        default: s[at] = static_cast<char>(rng.UniformInt(1, 126));
      }
    }
    EXPECT_NO_THROW({
      const ParseResult r = Parse(s);
      if (!r.ok()) EXPECT_FALSE(r.error().message.empty());
    });
  }
}

TEST(LexTest, TokenOffsetsCoverSource) {
  const std::string src = "x = image.find(\"a b\")\nreturn x[0]\n";
  const LexResult lex = Lex(src);
  ASSERT_FALSE(lex.error.has_value());
  for (const Token& t : lex.tokens) {
    if (t.length == 0) continue;
    const std::string piece = src.substr(t.offset, t.length);
    if (t.kind == Token::Kind::kString)
      EXPECT_EQ(piece, "\"" + t.text + "\"");
    else
      EXPECT_EQ(piece, t.text);
  }
}

TEST(ModuleKindTest, NamesAndArity) {
  for (ModuleKind k : {ModuleKind::kFind, ModuleKind::kExists, ModuleKind::kVerifyProperty,
                       ModuleKind::kBestTextMatch, ModuleKind::kSimpleQuery})
    EXPECT_EQ(ParseModuleKind(ModuleKindName(k)), k);
  EXPECT_FALSE(ParseModuleKind("crop").has_value());
  EXPECT_EQ(ModuleArity(ModuleKind::kVerifyProperty), 2);
  EXPECT_EQ(ModuleArity(ModuleKind::kBestTextMatch), 1);
  EXPECT_FALSE(IsDistillable(ModuleKind::kFind));
  EXPECT_TRUE(IsDistillable(ModuleKind::kSimpleQuery));
}

}  // namespace
}  // namespace stepdistill
