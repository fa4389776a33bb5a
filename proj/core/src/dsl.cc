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

#include "stepdistill/dsl.h"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <set>
#include <sstream>

namespace stepdistill {

std::string_view ModuleKindName(ModuleKind kind) {
  switch (kind) {
    case ModuleKind::kFind: return "find";
    case ModuleKind::kExists: return "exists";
    case ModuleKind::kVerifyProperty: return "verify_property";
    case ModuleKind::kBestTextMatch: return "best_text_match";
    case ModuleKind::kSimpleQuery: return "simple_query";
  }
  return "?";
}

std::optional<ModuleKind> ParseModuleKind(std::string_view name) {
  for (ModuleKind k : {ModuleKind::kFind, ModuleKind::kExists,
                       ModuleKind::kVerifyProperty, ModuleKind::kBestTextMatch,
                       ModuleKind::kSimpleQuery}) {
    if (ModuleKindName(k) == name) return k;
  }
  return std::nullopt;
}

bool IsDistillable(ModuleKind kind) {
  return kind == ModuleKind::kVerifyProperty ||
         kind == ModuleKind::kBestTextMatch || kind == ModuleKind::kSimpleQuery;
}

int ModuleArity(ModuleKind kind) {
  return kind == ModuleKind::kVerifyProperty ? 2 : 1;
}

std::string_view ParseErrorKindName(ParseErrorKind kind) {
  switch (kind) {
    case ParseErrorKind::kLexical: return "lexical";
    case ParseErrorKind::kSyntactic: return "syntactic";
    case ParseErrorKind::kArity: return "arity";
    case ParseErrorKind::kUndefinedVariable: return "undefined_variable";
  }
  return "?";
}

std::string ParseError::ToString() const {
  std::ostringstream os;
  os << ParseErrorKindName(kind) << " error at " << line << ":" << column << ": "
     << message;
  return os.str();
}

// ---------------------------------------------------------------------------
// Lexer

namespace {

const std::set<std::string_view>& Keywords() {
  static const std::set<std::string_view> kKeywords = {
      "if", "else", "return", "and", "or", "not", "len", "True", "False",
      "true", "false"};
  return kKeywords;
}

bool IsIdentStart(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}
bool IsIdentChar(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}
bool IsDigit(char c) { return std::isdigit(static_cast<unsigned char>(c)); }

}  // namespace

LexResult Lex(std::string_view source) {
  LexResult out;
  std::vector<int> indents = {0};
  size_t pos = 0;
  int line_no = 0;
  auto fail = [&](int line, int col, std::string msg) {
    out.error = ParseError{ParseErrorKind::kLexical, line, col, std::move(msg)};
  };

  while (pos <= source.size() && !out.error) {
    if (pos == source.size()) break;
    const size_t line_start = pos;
    size_t line_end = source.find('\n', pos);
    if (line_end == std::string_view::npos) line_end = source.size();
    ++line_no;
    pos = line_end + 1;
    std::string_view line = source.substr(line_start, line_end - line_start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    size_t i = 0;
    while (i < line.size() && line[i] == ' ') ++i;
    if (i < line.size() && line[i] == '\t') {
      fail(line_no, static_cast<int>(i) + 1, "tab in indentation");
      break;
    }
    if (i == line.size() || line[i] == '#') continue;  // blank or comment

    const int indent = static_cast<int>(i);
    if (indent > indents.back()) {
      indents.push_back(indent);
      out.tokens.push_back({Token::Kind::kIndent, "", line_no, 1, line_start, 0});
    } else {
      while (indent < indents.back()) {
        indents.pop_back();
        out.tokens.push_back({Token::Kind::kDedent, "", line_no, 1, line_start, 0});
      }
      if (indent != indents.back()) {
        fail(line_no, indent + 1, "inconsistent dedent");
        break;
      }
    }

    while (i < line.size() && !out.error) {
      const char c = line[i];
      const int col = static_cast<int>(i) + 1;
      const size_t off = line_start + i;
      if (c == ' ') {
        ++i;
        continue;
      }
      if (c == '#') break;
      if (IsIdentStart(c)) {
        size_t j = i;
        while (j < line.size() && IsIdentChar(line[j])) ++j;
        std::string text(line.substr(i, j - i));
        const auto kind =
            Keywords().count(text) ? Token::Kind::kKeyword : Token::Kind::kIdent;
        out.tokens.push_back({kind, std::move(text), line_no, col, off, j - i});
        i = j;
        continue;
      }
      if (IsDigit(c) || (c == '-' && i + 1 < line.size() && IsDigit(line[i + 1]))) {
        size_t j = i + 1;
        while (j < line.size() && IsDigit(line[j])) ++j;
        if (j < line.size() && line[j] == '.') {
          ++j;
          while (j < line.size() && IsDigit(line[j])) ++j;
        }
        out.tokens.push_back(
            {Token::Kind::kNumber, std::string(line.substr(i, j - i)), line_no, col, off, j - i});
        i = j;
        continue;
      }
      if (c == '"' || c == '\'') {
        std::string value;
        size_t j = i + 1;
        bool closed = false;
        while (j < line.size()) {
          if (line[j] == '\\' && j + 1 < line.size()) {
            const char e = line[j + 1];
            value.push_back(e == 'n' ? '\n' : e == 't' ? '\t' : e);
            j += 2;
            continue;
          }
          if (line[j] == c) {
            closed = true;
            ++j;
            break;
          }
          value.push_back(line[j++]);
        }
        if (!closed) {
          fail(line_no, col, "unterminated string literal");
          break;
        }
        out.tokens.push_back({Token::Kind::kString, std::move(value), line_no, col, off, j - i});
        i = j;
        continue;
      }
      if ((c == '=' || c == '!') && i + 1 < line.size() && line[i + 1] == '=') {
        out.tokens.push_back(
            {Token::Kind::kPunct, std::string(line.substr(i, 2)), line_no, col, off, 2});
        i += 2;
        continue;
      }
      if (std::string_view("()[],.:=").find(c) != std::string_view::npos) {
        out.tokens.push_back({Token::Kind::kPunct, std::string(1, c), line_no, col, off, 1});
        ++i;
        continue;
      }
      fail(line_no, col, std::string("unexpected character '") + c + "'");
    }
    if (out.error) break;
    out.tokens.push_back({Token::Kind::kNewline, "", line_no,
                          static_cast<int>(line.size()) + 1, line_end, 0});
  }
  if (!out.error) {
    while (indents.size() > 1) {
      indents.pop_back();
      out.tokens.push_back({Token::Kind::kDedent, "", line_no + 1, 1, source.size(), 0});
    }
    out.tokens.push_back({Token::Kind::kEnd, "", line_no + 1, 1, source.size(), 0});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parser

namespace {

struct ParseFailure {
  ParseError error;
};

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : tokens_(std::move(tokens)) {}

  Block ParseProgram() {
    Block block = ParseBlock(0);
    if (Peek().kind != Token::Kind::kEnd) Fail("unexpected indentation");
    return block;
  }

 private:
  const Token& Peek(size_t ahead = 0) const {
    return tokens_[std::min(pos_ + ahead, tokens_.size() - 1)];
  }
  const Token& Advance() {
    const Token& t = tokens_[pos_];
    if (pos_ + 1 < tokens_.size()) ++pos_;
    return t;
  }
  bool IsPunct(std::string_view p, size_t ahead = 0) const {
    const Token& t = Peek(ahead);
    return t.kind == Token::Kind::kPunct && t.text == p;
  }
  bool IsKeyword(std::string_view k) const {
    return Peek().kind == Token::Kind::kKeyword && Peek().text == k;
  }
  [[noreturn]] void Fail(std::string msg,
                         ParseErrorKind kind = ParseErrorKind::kSyntactic) const {
    throw ParseFailure{ParseError{kind, Peek().line, Peek().column, std::move(msg)}};
  }
  void ExpectPunct(std::string_view p) {
    if (!IsPunct(p)) Fail("expected '" + std::string(p) + "'");
    Advance();
  }
  void Expect(Token::Kind kind, std::string_view what) {
    if (Peek().kind != kind) Fail("expected " + std::string(what));
    Advance();
  }

  Block ParseBlock(int depth) {
    Block block;
    while (Peek().kind != Token::Kind::kEnd && Peek().kind != Token::Kind::kDedent) {
      if (Peek().kind == Token::Kind::kIndent) Fail("unexpected indentation");
      block.push_back(ParseStatement(depth));
    }
    return block;
  }

  Block ParseIndentedBlock(int depth) {
    ExpectPunct(":");
    Expect(Token::Kind::kNewline, "end of line after ':'");
    Expect(Token::Kind::kIndent, "indented block");
    Block block = ParseBlock(depth);
    if (block.empty()) Fail("empty block");
    Expect(Token::Kind::kDedent, "end of block");
    return block;
  }

  Statement ParseStatement(int depth) {
    Statement stmt;
    stmt.line = Peek().line;
    if (IsKeyword("if")) {
      if (depth > 0) Fail("nested if is not supported");
      Advance();
      IfStmt s;
      s.cond = ParseExpr();
      s.then_block = ParseIndentedBlock(depth + 1);
      if (IsKeyword("else")) {
        Advance();
        s.else_block = ParseIndentedBlock(depth + 1);
      }
      stmt.node = std::move(s);
      return stmt;
    }
    if (IsKeyword("else")) Fail("'else' without 'if'");
    if (IsKeyword("return")) {
      Advance();
      ReturnStmt s{ParseExpr()};
      Expect(Token::Kind::kNewline, "end of line");
      stmt.node = std::move(s);
      return stmt;
    }
    if (Peek().kind == Token::Kind::kIdent && IsPunct("=", 1)) {
      AssignStmt s;
      s.var = Advance().text;
      if (s.var == kImageVariable) Fail("cannot assign to 'image'");
      Advance();  // '='
      s.value = ParseExpr();
      Expect(Token::Kind::kNewline, "end of line");
      stmt.node = std::move(s);
      return stmt;
    }
    Fail("expected a statement");
  }

  ExprPtr Make(decltype(Expr::node) node, const Token& at) {
    auto e = std::make_shared<Expr>();
    e->node = std::move(node);
    e->line = at.line;
    e->column = at.column;
    return e;
  }

  ExprPtr ParseExpr() { return ParseOr(); }

  ExprPtr ParseOr() {
    const Token start = Peek();
    ExprPtr first = ParseAnd();
    if (!IsKeyword("or")) return first;
    BoolOpExpr op{BoolOpKind::kOr, {first}};
    while (IsKeyword("or")) {
      Advance();
      op.operands.push_back(ParseAnd());
    }
    return Make(std::move(op), start);
  }

  ExprPtr ParseAnd() {
    const Token start = Peek();
    ExprPtr first = ParseNot();
    if (!IsKeyword("and")) return first;
    BoolOpExpr op{BoolOpKind::kAnd, {first}};
    while (IsKeyword("and")) {
      Advance();
      op.operands.push_back(ParseNot());
    }
    return Make(std::move(op), start);
  }

  ExprPtr ParseNot() {
    if (IsKeyword("not")) {
      const Token start = Advance();
      return Make(BoolOpExpr{BoolOpKind::kNot, {ParseNot()}}, start);
    }
    return ParseCompare();
  }

  ExprPtr ParseCompare() {
    const Token start = Peek();
    ExprPtr lhs = ParsePostfix();
    if (IsPunct("==") || IsPunct("!=")) {
      const CompareOp op = Advance().text == "==" ? CompareOp::kEq : CompareOp::kNe;
      ExprPtr rhs = ParsePostfix();
      if (IsPunct("==") || IsPunct("!=")) Fail("chained comparison");
      return Make(CompareExpr{op, lhs, rhs}, start);
    }
    return lhs;
  }

  ExprPtr ParsePostfix() {
    ExprPtr e = ParsePrimary();
    while (true) {
      if (IsPunct(".")) {
        const Token dot = Advance();
        if (Peek().kind != Token::Kind::kIdent) Fail("expected method name");
        const Token name = Advance();
        ExpectPunct("(");
        std::vector<ExprPtr> args = ParseArgs(")");
        if (auto kind = ParseModuleKind(name.text)) {
          if (static_cast<int>(args.size()) != ModuleArity(*kind)) {
            throw ParseFailure{ParseError{
                ParseErrorKind::kArity, name.line, name.column,
                name.text + " takes " + std::to_string(ModuleArity(*kind)) +
                    " argument(s), got " + std::to_string(args.size())}};
          }
        }
        e = Make(CallExpr{name.text, e, std::move(args)}, dot);
      } else if (IsPunct("[")) {
        const Token open = Advance();
        if (Peek().kind != Token::Kind::kNumber) Fail("expected integer index");
        const Token num = Advance();
        long index = 0;
        auto [p, ec] = std::from_chars(num.text.data(), num.text.data() + num.text.size(), index);
        if (ec != std::errc() || p != num.text.data() + num.text.size())
          Fail("index must be an integer");
        ExpectPunct("]");
        e = Make(IndexExpr{e, index}, open);
      } else {
        return e;
      }
    }
  }

  std::vector<ExprPtr> ParseArgs(std::string_view close) {
    std::vector<ExprPtr> args;
    if (IsPunct(close)) {
      Advance();
      return args;
    }
    while (true) {
      args.push_back(ParseExpr());
      if (IsPunct(",")) {
        Advance();
        continue;
      }
      ExpectPunct(close);
      return args;
    }
  }

  ExprPtr ParsePrimary() {
    const Token t = Peek();
    switch (t.kind) {
      case Token::Kind::kIdent:
        Advance();
        return Make(VarExpr{t.text}, t);
      case Token::Kind::kString:
        Advance();
        return Make(StringLit{t.text}, t);
      case Token::Kind::kNumber: {
        Advance();
        double v = 0.0;
        std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
        return Make(NumberLit{v}, t);
      }
      case Token::Kind::kKeyword:
        if (t.text == "True" || t.text == "true") {
          Advance();
          return Make(BoolLit{true}, t);
        }
        if (t.text == "False" || t.text == "false") {
          Advance();
          return Make(BoolLit{false}, t);
        }
        if (t.text == "len") {
          Advance();
          ExpectPunct("(");
          ExprPtr arg = ParseExpr();
          ExpectPunct(")");
          return Make(LenExpr{arg}, t);
        }
        Fail("unexpected keyword '" + t.text + "'");
      case Token::Kind::kPunct:
        if (t.text == "(") {
          Advance();
          ExprPtr e = ParseExpr();
          ExpectPunct(")");
          return e;
        }
        if (t.text == "[") {
          Advance();
          return Make(ListExpr{ParseArgs("]")}, t);
        }
        Fail("unexpected '" + t.text + "'");
      default:
        Fail("expected an expression");
    }
  }

  std::vector<Token> tokens_;
  size_t pos_ = 0;
};

// Flow-sensitive definition check plus return reachability.
class Checker {
 public:
  void CheckProgram(const Block& block) {
    std::set<std::string> defined = {std::string(kImageVariable)};
    if (!CheckBlock(block, defined)) {
      const int line = block.empty() ? 1 : block.back().line;
      throw ParseFailure{ParseError{ParseErrorKind::kSyntactic, line, 1,
                                    "not every path ends in a return"}};
    }
  }

 private:
  // Returns true when every path through the block returns.
  bool CheckBlock(const Block& block, std::set<std::string>& defined) {
    for (size_t i = 0; i < block.size(); ++i) {
      const Statement& s = block[i];
      const bool returns = CheckStatement(s, defined);
      if (returns) {
        if (i + 1 < block.size()) {
          throw ParseFailure{ParseError{ParseErrorKind::kSyntactic,
                                        block[i + 1].line, 1,
                                        "unreachable statement after return"}};
        }
        return true;
      }
    }
    return false;
  }

  bool CheckStatement(const Statement& s, std::set<std::string>& defined) {
    if (const auto* a = std::get_if<AssignStmt>(&s.node)) {
      CheckExpr(*a->value, defined);
      defined.insert(a->var);
      return false;
    }
    if (const auto* r = std::get_if<ReturnStmt>(&s.node)) {
      CheckExpr(*r->value, defined);
      return true;
    }
    const auto& f = std::get<IfStmt>(s.node);
    CheckExpr(*f.cond, defined);
    std::set<std::string> then_defs = defined;
    std::set<std::string> else_defs = defined;
    const bool then_returns = CheckBlock(f.then_block, then_defs);
    const bool else_returns = !f.else_block.empty() && CheckBlock(f.else_block, else_defs);
    if (then_returns && else_returns) return true;
    if (then_returns) {
      defined = else_defs;
    } else if (else_returns) {
      defined = then_defs;
    } else {
      std::set<std::string> both;
      std::set_intersection(then_defs.begin(), then_defs.end(), else_defs.begin(),
                            else_defs.end(), std::inserter(both, both.begin()));
      defined = std::move(both);
    }
    return false;
  }

  void CheckExpr(const Expr& e, const std::set<std::string>& defined) {
    std::visit(
        [&](const auto& n) {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, VarExpr>) {
            if (!defined.count(n.name)) {
              throw ParseFailure{ParseError{ParseErrorKind::kUndefinedVariable,
                                            e.line, e.column,
                                            "undefined variable '" + n.name + "'"}};
            }
          } else if constexpr (std::is_same_v<T, CallExpr>) {
            CheckExpr(*n.receiver, defined);
            for (const auto& a : n.args) CheckExpr(*a, defined);
          } else if constexpr (std::is_same_v<T, IndexExpr>) {
            CheckExpr(*n.target, defined);
          } else if constexpr (std::is_same_v<T, ListExpr>) {
            for (const auto& a : n.items) CheckExpr(*a, defined);
          } else if constexpr (std::is_same_v<T, CompareExpr>) {
            CheckExpr(*n.lhs, defined);
            CheckExpr(*n.rhs, defined);
          } else if constexpr (std::is_same_v<T, BoolOpExpr>) {
            for (const auto& a : n.operands) CheckExpr(*a, defined);
          } else if constexpr (std::is_same_v<T, LenExpr>) {
            CheckExpr(*n.arg, defined);
          }
        },
        e.node);
  }
};

}  // namespace

ParseResult Parse(std::string_view source) {
  LexResult lexed = Lex(source);
  if (lexed.error) return *lexed.error;
  try {
    Parser parser(std::move(lexed.tokens));
    Program program;
    program.statements = parser.ParseProgram();
    program.source_text = std::string(source);
    Checker().CheckProgram(program.statements);
    return program;
  } catch (const ParseFailure& f) {
    return f.error;
  }
}

// ---------------------------------------------------------------------------
// Unparse

std::string QuoteString(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') {
      out.push_back('\\');
      out.push_back(c);
    } else if (c == '\n') {
      out += "\\n";
    } else if (c == '\t') {
      out += "\\t";
    } else {
      out.push_back(c);
    }
  }
  out.push_back('"');
  return out;
}

namespace {

std::string FormatNumber(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

int Precedence(const Expr& e) {
  if (const auto* b = std::get_if<BoolOpExpr>(&e.node)) {
    switch (b->op) {
      case BoolOpKind::kOr: return 1;
      case BoolOpKind::kAnd: return 2;
      case BoolOpKind::kNot: return 3;
    }
  }
  if (std::holds_alternative<CompareExpr>(e.node)) return 4;
  return 5;
}

std::string UnparseExpr(const Expr& e, int min_prec = 0);

std::string Wrap(const Expr& e, int min_prec) {
  std::string s = UnparseExpr(e);
  if (Precedence(e) < min_prec) return "(" + s + ")";
  return s;
}

std::string JoinExprs(const std::vector<ExprPtr>& items) {
  std::string out;
  for (size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += UnparseExpr(*items[i]);
  }
  return out;
}

std::string UnparseExpr(const Expr& e, int min_prec) {
  std::string s = std::visit(
      [&](const auto& n) -> std::string {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, CallExpr>) {
          return Wrap(*n.receiver, 5) + "." + n.method + "(" + JoinExprs(n.args) + ")";
        } else if constexpr (std::is_same_v<T, VarExpr>) {
          return n.name;
        } else if constexpr (std::is_same_v<T, IndexExpr>) {
          return Wrap(*n.target, 5) + "[" + std::to_string(n.index) + "]";
        } else if constexpr (std::is_same_v<T, ListExpr>) {
          return "[" + JoinExprs(n.items) + "]";
        } else if constexpr (std::is_same_v<T, StringLit>) {
          return QuoteString(n.value);
        } else if constexpr (std::is_same_v<T, BoolLit>) {
          return n.value ? "True" : "False";
        } else if constexpr (std::is_same_v<T, NumberLit>) {
          return FormatNumber(n.value);
        } else if constexpr (std::is_same_v<T, CompareExpr>) {
          return Wrap(*n.lhs, 5) + (n.op == CompareOp::kEq ? " == " : " != ") +
                 Wrap(*n.rhs, 5);
        } else if constexpr (std::is_same_v<T, BoolOpExpr>) {
          if (n.op == BoolOpKind::kNot) return "not " + Wrap(*n.operands[0], 3);
          const int self = n.op == BoolOpKind::kOr ? 1 : 2;
          const char* sep = n.op == BoolOpKind::kOr ? " or " : " and ";
          std::string out;
          for (size_t i = 0; i < n.operands.size(); ++i) {
            if (i) out += sep;
            out += Wrap(*n.operands[i], self + 1);
          }
          return out;
        } else {
          return "len(" + UnparseExpr(*n.arg) + ")";
        }
      },
      e.node);
  if (Precedence(e) < min_prec) return "(" + s + ")";
  return s;
}

void UnparseBlock(const Block& block, int indent, std::string& out) {
  const std::string pad(static_cast<size_t>(indent) * 4, ' ');
  for (const Statement& s : block) {
    if (const auto* a = std::get_if<AssignStmt>(&s.node)) {
      out += pad + a->var + " = " + UnparseExpr(*a->value) + "\n";
    } else if (const auto* r = std::get_if<ReturnStmt>(&s.node)) {
      out += pad + "return " + UnparseExpr(*r->value) + "\n";
    } else {
      const auto& f = std::get<IfStmt>(s.node);
      out += pad + "if " + UnparseExpr(*f.cond) + ":\n";
      UnparseBlock(f.then_block, indent + 1, out);
      if (!f.else_block.empty()) {
        out += pad + "else:\n";
        UnparseBlock(f.else_block, indent + 1, out);
      }
    }
  }
}

bool ExprEqual(const Expr& a, const Expr& b);

bool ExprListEqual(const std::vector<ExprPtr>& a, const std::vector<ExprPtr>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (!ExprEqual(*a[i], *b[i])) return false;
  return true;
}

bool ExprEqual(const Expr& a, const Expr& b) {
  if (a.node.index() != b.node.index()) return false;
  return std::visit(
      [&](const auto& x) -> bool {
        using T = std::decay_t<decltype(x)>;
        const T& y = std::get<T>(b.node);
        if constexpr (std::is_same_v<T, CallExpr>) {
          return x.method == y.method && ExprEqual(*x.receiver, *y.receiver) &&
                 ExprListEqual(x.args, y.args);
        } else if constexpr (std::is_same_v<T, VarExpr>) {
          return x.name == y.name;
        } else if constexpr (std::is_same_v<T, IndexExpr>) {
          return x.index == y.index && ExprEqual(*x.target, *y.target);
        } else if constexpr (std::is_same_v<T, ListExpr>) {
          return ExprListEqual(x.items, y.items);
        } else if constexpr (std::is_same_v<T, CompareExpr>) {
          return x.op == y.op && ExprEqual(*x.lhs, *y.lhs) && ExprEqual(*x.rhs, *y.rhs);
        } else if constexpr (std::is_same_v<T, BoolOpExpr>) {
          return x.op == y.op && ExprListEqual(x.operands, y.operands);
        } else if constexpr (std::is_same_v<T, LenExpr>) {
          return ExprEqual(*x.arg, *y.arg);
        } else {
          return x.value == y.value;
        }
      },
      a.node);
}

bool BlockEqual(const Block& a, const Block& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].node.index() != b[i].node.index()) return false;
    if (const auto* x = std::get_if<AssignStmt>(&a[i].node)) {
      const auto& y = std::get<AssignStmt>(b[i].node);
      if (x->var != y.var || !ExprEqual(*x->value, *y.value)) return false;
    } else if (const auto* x = std::get_if<ReturnStmt>(&a[i].node)) {
      if (!ExprEqual(*x->value, *std::get<ReturnStmt>(b[i].node).value)) return false;
    } else {
      const auto& x2 = std::get<IfStmt>(a[i].node);
      const auto& y2 = std::get<IfStmt>(b[i].node);
      if (!ExprEqual(*x2.cond, *y2.cond) || !BlockEqual(x2.then_block, y2.then_block) ||
          !BlockEqual(x2.else_block, y2.else_block))
        return false;
    }
  }
  return true;
}

}  // namespace

std::string Unparse(const Program& program) {
  std::string out;
  UnparseBlock(program.statements, 0, out);
  return out;
}

bool StructurallyEqual(const Program& a, const Program& b) {
  return BlockEqual(a.statements, b.statements);
}

}  // namespace stepdistill
