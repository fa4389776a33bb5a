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

#include "stepdistill/query.h"

#include <algorithm>
#include <cctype>

namespace stepdistill {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

constexpr std::string_view kWildcard = "*";

std::string OrWild(const std::optional<std::string>& s) {
  return s ? *s : std::string(kWildcard);
}

std::string Join(const std::vector<std::string>& words, size_t begin, size_t end,
                 std::string_view sep = " ") {
  std::string out;
  for (size_t i = begin; i < end; ++i) {
    if (i > begin) out += sep;
    out += words[i];
  }
  return out;
}

std::vector<std::string> Tokenize(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c) || ch == '?' || ch == ',' || ch == '.' || ch == '!') {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

bool IsArticle(std::string_view w) { return w == "a" || w == "an"; }

bool IsGenericNoun(std::string_view w) {
  return w == "object" || w == "thing";
}

std::optional<std::string> CenterOrNone(std::string s) {
  if (IsGenericNoun(s)) return std::nullopt;
  return s;
}

}  // namespace

std::string CanonicalForm(const StructuredQuery& query) {
  return std::visit(
      Overloaded{
          [](const VerifyAttribute& q) {
            return "verify:" + OrWild(q.subject) + ":" + q.attribute;
          },
          [](const ChooseOption& q) {
            std::string out = "choose:";
            out += q.adjective ? "adj:" : "noun:";
            out += q.plural ? "pl:" : "sg:";
            out += OrWild(q.center) + ":" + Join(q.options, 0, q.options.size(), ",");
            return out;
          },
          [](const AskAttributeFamily& q) {
            return "ask_attr:" + q.family + ":" + OrWild(q.center);
          },
          [](const AskName& q) { return "ask_name:" + OrWild(q.center); },
          [](const Exists& q) {
            return "exists:" + q.name + ":" + OrWild(q.attribute);
          },
          [](const BothExist& q) {
            return "both_exist:" + q.first + ":" + q.second;
          },
          [](const KindWithAttribute& q) {
            return "kind_with_attr:" + q.category + ":" + q.attribute;
          },
          [](const SameAttribute& q) {
            return "same_attr:" + q.family + ":" + q.first + ":" + q.second;
          },
          [](const VerifyBoth& q) {
            return "verify_both:" + q.first + ":" + q.first_attribute + ":" +
                   q.second + ":" + q.second_attribute;
          },
      },
      query);
}

// ---------------------------------------------------------------------------
// QuestionReader

QuestionReader::QuestionReader(WorldConfig config) : config_(std::move(config)) {}

size_t QuestionReader::MatchNounPhrase(const std::vector<std::string>& words,
                                       size_t pos, std::string* out) const {
  for (size_t len = std::min<size_t>(3, words.size() - std::min(pos, words.size()));
       len >= 1; --len) {
    const std::string phrase = Join(words, pos, pos + len);
    for (const std::string& cand : {phrase, Singularize(phrase)}) {
      if (config_.IsNoun(cand) || config_.IsCategory(cand) ||
          IsGenericNoun(cand)) {
        *out = cand;
        return len;
      }
    }
  }
  return 0;
}

size_t QuestionReader::MatchAttributePhrase(const std::vector<std::string>& words,
                                            size_t pos, std::string* out) const {
  for (size_t len = std::min<size_t>(3, words.size() - std::min(pos, words.size()));
       len >= 1; --len) {
    const std::string phrase = Join(words, pos, pos + len);
    if (config_.IsAttribute(phrase)) {
      *out = phrase;
      return len;
    }
  }
  return 0;
}

std::optional<StructuredQuery> QuestionReader::ReadChoice(
    const std::vector<std::vector<std::string>>& segments, bool plural) const {
  const auto& first = segments[0];
  if (first.empty()) return std::nullopt;
  ChooseOption q;
  q.plural = plural;
  std::string opt0;

  auto article = std::find_if(first.begin(), first.end(),
                              [](const std::string& w) { return IsArticle(w); });
  if (article != first.end()) {
    const size_t k = static_cast<size_t>(article - first.begin());
    if (k + 1 >= first.size()) return std::nullopt;
    if (k > 0) {
      std::string center;
      if (MatchNounPhrase(first, 0, &center) != k) return std::nullopt;
      q.center = CenterOrNone(center);
    }
    opt0 = Join(first, k + 1, first.size());
  } else {
    std::string center;
    std::string attr;
    const size_t n = MatchNounPhrase(first, 0, &center);
    if (n > 0 && n < first.size() &&
        MatchAttributePhrase(first, n, &attr) == first.size() - n) {
      q.center = CenterOrNone(center);
      opt0 = attr;
    } else {
      opt0 = Join(first, 0, first.size());
    }
  }
  q.options.push_back(opt0);
  for (size_t i = 1; i < segments.size(); ++i) {
    const auto& seg = segments[i];
    const size_t skip = (!seg.empty() && IsArticle(seg[0])) ? 1 : 0;
    if (seg.size() <= skip) return std::nullopt;
    q.options.push_back(Join(seg, skip, seg.size()));
  }
  q.adjective = config_.IsAttribute(opt0);
  return q;
}

std::optional<StructuredQuery> QuestionReader::ReadIsThis(
    const std::vector<std::string>& body, bool plural, bool definite) const {
  if (body.empty()) return std::nullopt;
  std::vector<std::vector<std::string>> segments(1);
  for (const auto& w : body) {
    if (w == "or") {
      segments.emplace_back();
    } else {
      segments.back().push_back(w);
    }
  }
  if (segments.size() > 1) return ReadChoice(segments, plural);

  auto and_it = std::find(body.begin(), body.end(), "and");
  if (definite && and_it != body.end()) {
    const std::vector<std::string> left(body.begin(), and_it);
    std::vector<std::string> right(and_it + 1, body.end());
    if (right.empty() || right[0] != "the") return std::nullopt;
    right.erase(right.begin());
    VerifyBoth q;
    size_t n = MatchNounPhrase(left, 0, &q.first);
    if (n == 0 || MatchAttributePhrase(left, n, &q.first_attribute) != left.size() - n)
      return std::nullopt;
    n = MatchNounPhrase(right, 0, &q.second);
    if (n == 0 ||
        MatchAttributePhrase(right, n, &q.second_attribute) != right.size() - n)
      return std::nullopt;
    return q;
  }

  VerifyAttribute q;
  std::string subject;
  const size_t n = MatchNounPhrase(body, 0, &subject);
  if (n > 0 && n < body.size() &&
      MatchAttributePhrase(body, n, &q.attribute) == body.size() - n) {
    q.subject = CenterOrNone(subject);
    return q;
  }
  if (MatchAttributePhrase(body, 0, &q.attribute) == body.size()) return q;
  return std::nullopt;
}

std::optional<StructuredQuery> QuestionReader::Read(std::string_view question) const {
  const std::vector<std::string> w = Tokenize(question);
  if (w.size() < 2) return std::nullopt;
  auto tail = [&](size_t from) {
    return std::vector<std::string>(w.begin() + static_cast<long>(std::min(from, w.size())),
                                    w.end());
  };
  auto strip_in_image = [](std::vector<std::string> v) {
    if (v.size() >= 3 && v[v.size() - 3] == "in" && v[v.size() - 2] == "the" &&
        v.back() == "image")
      v.resize(v.size() - 3);
    return v;
  };

  if (w[0] == "is" && (w[1] == "this" || w[1] == "the"))
    return ReadIsThis(tail(2), false, w[1] == "the");
  if (w[0] == "are" && w[1] == "these") return ReadIsThis(tail(2), true, false);

  if (w[0] == "is" && w[1] == "there" && w.size() >= 4 && IsArticle(w[2])) {
    const auto rest = strip_in_image(tail(3));
    Exists q;
    std::string attr;
    size_t pos = MatchAttributePhrase(rest, 0, &attr);
    if (pos > 0) q.attribute = attr;
    if (MatchNounPhrase(rest, pos, &q.name) + pos != rest.size() || pos == rest.size())
      return std::nullopt;
    return q;
  }

  if (w[0] == "are" && w[1] == "there" && w.size() >= 3 && w[2] == "both") {
    const auto rest = strip_in_image(tail(3));
    BothExist q;
    size_t pos = 0;
    if (pos < rest.size() && IsArticle(rest[pos])) ++pos;
    size_t n = MatchNounPhrase(rest, pos, &q.first);
    if (n == 0) return std::nullopt;
    pos += n;
    if (pos >= rest.size() || rest[pos] != "and") return std::nullopt;
    ++pos;
    if (pos < rest.size() && IsArticle(rest[pos])) ++pos;
    n = MatchNounPhrase(rest, pos, &q.second);
    if (n == 0 || pos + n != rest.size()) return std::nullopt;
    return q;
  }

  if (w[0] == "what" && w.size() >= 3) {
    if (config_.Family(w[1]) != nullptr && w[2] == "is" && w.size() >= 4 &&
        (w[3] == "this" || w[3] == "the" || w[3] == "these")) {
      AskAttributeFamily q;
      q.family = w[1];
      const auto rest = tail(4);
      if (!rest.empty()) {
        std::string center;
        if (MatchNounPhrase(rest, 0, &center) != rest.size()) return std::nullopt;
        q.center = CenterOrNone(center);
      }
      return q;
    }
    if (w[1] == "kind" && w[2] == "of") {
      const auto rest = tail(3);
      std::string center;
      const size_t n = MatchNounPhrase(rest, 0, &center);
      if (n == 0 || n >= rest.size() || (rest[n] != "is" && rest[n] != "are"))
        return std::nullopt;
      const std::vector<std::string> after = strip_in_image(
          std::vector<std::string>(rest.begin() + static_cast<long>(n) + 1, rest.end()));
      if (after.empty() ||
          (after.size() == 1 && (after[0] == "this" || after[0] == "these" ||
                                 after[0] == "there" || after[0] == "it"))) {
        return AskName{CenterOrNone(center)};
      }
      std::string attr;
      if (MatchAttributePhrase(after, 0, &attr) == after.size())
        return KindWithAttribute{center, attr};
      return std::nullopt;
    }
    if (w[1] == "is" && (w[2] == "this" || w[2] == "the")) {
      const auto rest = tail(3);
      if (rest.empty()) return AskName{std::nullopt};
      std::string center;
      if (MatchNounPhrase(rest, 0, &center) != rest.size()) return std::nullopt;
      return AskName{CenterOrNone(center)};
    }
    return std::nullopt;
  }

  if (w[0] == "do" && w[1] == "the") {
    SameAttribute q;
    size_t pos = 2;
    size_t n = MatchNounPhrase(w, pos, &q.first);
    if (n == 0) return std::nullopt;
    pos += n;
    if (pos + 2 > w.size() || w[pos] != "and" || w[pos + 1] != "the")
      return std::nullopt;
    pos += 2;
    n = MatchNounPhrase(w, pos, &q.second);
    if (n == 0) return std::nullopt;
    pos += n;
    if (pos + 4 != w.size() || w[pos] != "have" || w[pos + 1] != "the" ||
        w[pos + 2] != "same" || config_.Family(w[pos + 3]) == nullptr)
      return std::nullopt;
    q.family = w[pos + 3];
    return q;
  }
  return std::nullopt;
}

std::vector<std::string> QuestionReader::Candidates(const StructuredQuery& query) const {
  const std::vector<std::string> yes_no = {std::string(kNo), std::string(kYes)};
  auto nouns_for = [&](const std::optional<std::string>& center) {
    if (center) {
      if (const NounCategory* cat = config_.Category(*center)) return cat->nouns;
    }
    return config_.Nouns();
  };
  return std::visit(
      Overloaded{
          [&](const ChooseOption& q) { return q.options; },
          [&](const AskAttributeFamily& q) {
            const AttributeFamily* fam = config_.Family(q.family);
            return fam ? fam->values : std::vector<std::string>{};
          },
          [&](const AskName& q) { return nouns_for(q.center); },
          [&](const KindWithAttribute& q) {
            return nouns_for(std::optional<std::string>(q.category));
          },
          [&](const auto&) { return yes_no; },
      },
      query);
}

// ---------------------------------------------------------------------------
// Oracle

bool ObjectMatches(const SceneObject& obj, std::string_view token,
                   const WorldConfig& world) {
  if (obj.name == token) return true;
  const std::string cat = world.CategoryOf(obj.name);
  if (!cat.empty() && cat == token) return true;
  const std::string singular = Singularize(token);
  return singular != token && (obj.name == singular || cat == singular);
}

namespace {

class Resolver {
 public:
  Resolver(const ScenePatch& patch, const WorldConfig& world)
      : visible_(patch.VisibleObjects()), world_(world) {}

  const SceneObject* Resolve(const std::optional<std::string>& center) const {
    if (center && !IsGenericNoun(*center)) {
      for (const SceneObject* o : visible_)
        if (ObjectMatches(*o, *center, world_)) return o;
      return nullptr;
    }
    return visible_.empty() ? nullptr : visible_.front();
  }

  const std::vector<const SceneObject*>& visible() const { return visible_; }

 private:
  std::vector<const SceneObject*> visible_;  // ascending id
  const WorldConfig& world_;
};

std::string YesNo(bool b) { return std::string(b ? kYes : kNo); }

}  // namespace

std::string OracleAnswer(const ScenePatch& patch, const StructuredQuery& query,
                         const WorldConfig& world) {
  if (!patch.scene()) return std::string(kUnknown);
  const Resolver r(patch, world);
  const std::string unknown(kUnknown);
  return std::visit(
      Overloaded{
          [&](const VerifyAttribute& q) {
            const SceneObject* t = r.Resolve(q.subject);
            return t ? YesNo(t->HasAttribute(q.attribute)) : unknown;
          },
          [&](const ChooseOption& q) {
            const SceneObject* t = nullptr;
            if (q.center) {
              t = r.Resolve(q.center);
            } else if (!q.adjective) {
              // A noun choice names its own candidates.
              for (const SceneObject* o : r.visible()) {
                for (const auto& opt : q.options)
                  if (ObjectMatches(*o, opt, world)) t = o;
                if (t) break;
              }
              if (!t) t = r.Resolve(std::nullopt);
            } else {
              t = r.Resolve(std::nullopt);
            }
            if (!t) return unknown;
            for (const auto& opt : q.options) {
              if (q.adjective ? t->HasAttribute(opt) : ObjectMatches(*t, opt, world))
                return opt;
            }
            return unknown;
          },
          [&](const AskAttributeFamily& q) {
            const SceneObject* t = r.Resolve(q.center);
            const AttributeFamily* fam = world.Family(q.family);
            if (!t || !fam) return unknown;
            for (const auto& v : fam->values)
              if (t->HasAttribute(v)) return v;
            return unknown;
          },
          [&](const AskName& q) {
            const SceneObject* t = r.Resolve(q.center);
            return t ? t->name : unknown;
          },
          [&](const Exists& q) {
            for (const SceneObject* o : r.visible()) {
              if (ObjectMatches(*o, q.name, world) &&
                  (!q.attribute || o->HasAttribute(*q.attribute)))
                return YesNo(true);
            }
            return YesNo(false);
          },
          [&](const BothExist& q) {
            bool a = false;
            bool b = false;
            for (const SceneObject* o : r.visible()) {
              a = a || ObjectMatches(*o, q.first, world);
              b = b || ObjectMatches(*o, q.second, world);
            }
            return YesNo(a && b);
          },
          [&](const KindWithAttribute& q) {
            for (const SceneObject* o : r.visible()) {
              if (ObjectMatches(*o, q.category, world) && o->HasAttribute(q.attribute))
                return o->name;
            }
            return unknown;
          },
          [&](const SameAttribute& q) {
            const SceneObject* a = r.Resolve(q.first);
            const SceneObject* b = r.Resolve(q.second);
            const AttributeFamily* fam = world.Family(q.family);
            if (!a || !b || !fam) return unknown;
            std::string va;
            std::string vb;
            for (const auto& v : fam->values) {
              if (a->HasAttribute(v)) va = v;
              if (b->HasAttribute(v)) vb = v;
            }
            return YesNo(!va.empty() && va == vb);
          },
          [&](const VerifyBoth& q) {
            const SceneObject* a = r.Resolve(q.first);
            const SceneObject* b = r.Resolve(q.second);
            if (!a || !b) return unknown;
            return YesNo(a->HasAttribute(q.first_attribute) &&
                         b->HasAttribute(q.second_attribute));
          },
      },
      query);
}

}  // namespace stepdistill
