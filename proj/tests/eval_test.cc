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

#include <numeric>

#include <gtest/gtest.h>

#include "stepdistill/errors.h"
#include "stepdistill/eval.h"
#include "stepdistill/interpreter.h"
#include "test_util.h"

namespace stepdistill {
namespace {

using testing::KitchenScene;

TEST(AnswerMatchTest, FoldsCaseAndTrims) {
  EXPECT_TRUE(AnswerMatches(Value{std::string("  Red ")}, "red"));
  EXPECT_TRUE(AnswerMatches(Value{std::string("yes")}, "YES\n"));
  EXPECT_FALSE(AnswerMatches(Value{std::string("re d")}, "red"));
  EXPECT_FALSE(AnswerMatches(Value::Nan(), "nan"));
  EXPECT_FALSE(AnswerMatches(Value::Nan(), ""));
}

struct Corpus {
  Toolkit kit{WorldConfig::Default()};
  SceneStore store;
  std::vector<QAPair> questions;
};

const Corpus& SmallCorpus() {
  static const Corpus* c = [] {
    auto* out = new Corpus;
    GenConfig gen;
    gen.fault_rate = 0.1;
    for (uint64_t seed = 500; seed < 620; ++seed) {
      SceneGraph g = GenerateWorld(seed, out->kit.world);
      for (auto& qa : GenerateQA(g, out->kit.world, gen, seed)) out->questions.push_back(qa);
      out->store.Add(std::move(g));
    }
    return out;
  }();
  return *c;
}

TEST(ScoreTest, AccountingIdentities) {
  const Corpus& c = SmallCorpus();
  const auto run = Evaluate(c.questions, c.store, MakeBaselineRegistry(c.kit, {}), c.kit, 2, "b");
  const EvalReport& r = run.report;
  EXPECT_EQ(r.total, c.questions.size());
  EXPECT_EQ(r.correct + r.wrong_non_nan + r.nan_count, r.total);
  size_t failures = 0;
  for (const auto& [k, v] : r.taxonomy) failures += v;
  EXPECT_EQ(failures, r.total - r.correct);
  EXPECT_EQ(r.taxonomy.size(), std::size(kTaxonomyKeys));
  size_t type_total = 0, type_correct = 0, type_nan = 0;
  for (const auto& [t, a] : r.per_type) {
    type_total += a.total;
    type_correct += a.correct;
    type_nan += a.nan;
  }
  EXPECT_EQ(type_total, r.total);
  EXPECT_EQ(type_correct, r.correct);
  EXPECT_EQ(type_nan, r.nan_count);
  // Fault injection makes some programs fall back.
  size_t faulty = 0;
  for (const auto& q : c.questions) faulty += q.faulty;
  EXPECT_EQ(r.fallback_count, faulty);
  EXPECT_GT(faulty, 0u);
  EXPECT_LE(r.taxonomy.at("parse_fallback"), faulty);

  EXPECT_NEAR(r.acc_all(), double(r.correct) / double(r.total), 1e-15);
  EXPECT_NEAR(r.acc_no_nan(), double(r.correct) / double(r.total - r.nan_count), 1e-15);

  // Oracle registry with clean programs answers everything.
  std::vector<QAPair> clean;
  for (const auto& q : c.questions)
    if (!q.faulty) clean.push_back(q);
  const auto oracle = Evaluate(clean, c.store, MakeOracleRegistry(c.kit, {}), c.kit, 1, "o");
  EXPECT_EQ(oracle.report.correct, clean.size());
}

TEST(ScoreTest, EmptyReportHasZeroAccuracy) {
  EvalReport r;
  EXPECT_EQ(r.acc_all(), 0.0);
  r.total = 3;
  r.nan_count = 3;
  EXPECT_EQ(r.acc_no_nan(), 0.0);
}

TEST(ScoreTest, ParallelMatchesSerial) {
  const Corpus& c = SmallCorpus();
  const ModuleRegistry reg = MakeBaselineRegistry(c.kit, {});
  const auto a = Evaluate(c.questions, c.store, reg, c.kit, 1, "x");
  const auto b = Evaluate(c.questions, c.store, reg, c.kit, 3, "x");
  EXPECT_EQ(EvalReportToJson(a.report), EvalReportToJson(b.report));
  ASSERT_EQ(a.traces.size(), b.traces.size());
  for (size_t i = 0; i < a.traces.size(); ++i)
    EXPECT_EQ(TraceToJson(a.traces[i]), TraceToJson(b.traces[i]));
}

TEST(ScoreTest, JsonRoundTrip) {
  const Corpus& c = SmallCorpus();
  const auto run = Evaluate(c.questions, c.store, MakeBaselineRegistry(c.kit, {}), c.kit, 1, "b");
  const auto j = EvalReportToJson(run.report);
  EXPECT_EQ(EvalReportToJson(EvalReportFromJson(nlohmann::json::parse(j.dump()))), j);
  EXPECT_THROW(EvalReportFromJson(nlohmann::json{{"label", "x"}}), FormatError);
}

// Hand-built traces over the kitchen scene.
class AttributionTest : public ::testing::Test {
 protected:
  SceneRef scene = KitchenScene();
  Toolkit kit{WorldConfig::Default()};

  StepRecord FindFlowers(bool correct) {
    StepRecord s;
    s.module_kind = ModuleKind::kFind;
    s.receiver = FullImage(scene);
    s.args = {Value{std::string("flower")}};
    Value::PatchList found = {Crop(scene, {0, 300, 100, 100}, "flower"),
                              Crop(scene, {400, 300, 100, 100}, "flower")};
    if (!correct) found.pop_back();
    s.output = Value{found};
    return s;
  }

  StepRecord VerifyRed(const ScenePatch& p, bool output) {
    StepRecord s;
    s.step_index = 1;
    s.module_kind = ModuleKind::kVerifyProperty;
    s.receiver = p;
    s.center_word = "flower";
    s.args = {Value{std::string("flower")}, Value{std::string("red")}};
    s.output = Value{output};
    return s;
  }
};

TEST_F(AttributionTest, FirstDivergentStepIsBlamed) {
  const ScenePatch red = Crop(scene, {0, 300, 100, 100}, "flower");
  const ScenePatch white = Crop(scene, {400, 300, 100, 100}, "flower");
  ExecutionTrace t;
  t.answer = Value{std::string("no")};

  t.steps = {FindFlowers(true), VerifyRed(red, false)};
  EXPECT_EQ(AttributeError(t, kit), "verify_property_error");
  t.steps = {FindFlowers(true), VerifyRed(white, true)};
  EXPECT_EQ(AttributeError(t, kit), "verify_property_error");

  // A detector miss comes first and is blamed even if later steps diverge.
  t.steps = {FindFlowers(false), VerifyRed(red, false)};
  EXPECT_EQ(AttributeError(t, kit), "find_error");

  t.steps = {FindFlowers(true), VerifyRed(red, true), VerifyRed(white, false)};
  EXPECT_EQ(AttributeError(t, kit), "program_logic_error");
  t.steps.clear();
  EXPECT_EQ(AttributeError(t, kit), "program_logic_error");

  // Replay is deterministic.
  t.steps = {FindFlowers(true), VerifyRed(white, true)};
  for (int i = 0; i < 5; ++i) EXPECT_EQ(AttributeError(t, kit), "verify_property_error");

  t.status = TraceStatus::kParseErrorFallback;
  EXPECT_EQ(AttributeError(t, kit), "parse_fallback");
}

TEST_F(AttributionTest, NanOutputIsADivergence) {
  StepRecord s;
  s.module_kind = ModuleKind::kSimpleQuery;
  s.receiver = Crop(scene, {300, 0, 200, 150}, "car");
  s.center_word = "car";
  s.args = {Value{std::string("What color is this car?")}};
  s.output = Value{std::string("green")};
  ExecutionTrace t;
  t.steps = {s};
  EXPECT_EQ(AttributeError(t, kit), "program_logic_error");
  t.steps[0].output = Value::Nan();
  EXPECT_EQ(AttributeError(t, kit), "simple_query_error");
  // Options the adapter rejects blame the module too.
  s.module_kind = ModuleKind::kBestTextMatch;
  s.args = {Value{Value::List{Value{std::string("red")}, Value{std::string("car")}}}};
  t.steps = {s};
  EXPECT_EQ(AttributeError(t, kit), "best_text_match_error");
}

TEST_F(AttributionTest, AmbiguousQuestionsNeedTwoVisibleObjects) {
  ExecutionTrace a, b;
  a.question_id = "a";
  b.question_id = "b";
  StepRecord s;
  s.module_kind = ModuleKind::kSimpleQuery;
  s.center_word = "table";
  s.receiver = Crop(scene, {0, 0, 200, 200}, "table");  // table and cookie
  a.steps = {s};
  s.receiver = Crop(scene, {300, 0, 200, 150}, "car");
  s.center_word = "car";
  b.steps = {s};
  EXPECT_EQ(AmbiguousQuestions({a, b}), (std::set<std::string>{"a"}));
  // Steps on the full image have no center word.
  a.steps[0].center_word.reset();
  EXPECT_TRUE(AmbiguousQuestions({a, b}).empty());
}

TEST(GroundingEvalTest, MeanIouByHand) {
  const Toolkit kit(WorldConfig::Default());
  SceneStore store;
  store.Add(*KitchenScene());
  const Rect car{300, 0, 200, 150};
  std::vector<GroundingItem> items = {
      {"g0", "kitchen", "the car", "return image.find(\"car\")[0]", car},
      {"g1", "kitchen", "the car", "return image", car},
      {"g2", "kitchen", "the car", "return image.find(\"car\"", car},
      {"g3", "kitchen", "the car", "return image.find(\"bus\")[0]", car},
      {"g4", "kitchen", "the car", "return image.find(\"flower\")[1]", car},
  };
  const GroundingReport r =
      GroundingEval(items, store, MakeOracleRegistry(kit, {}), 2, "oracle");
  // Full image: 30000 / 307200. The white flower shares x-range [400,500)
  // with the car but no y-range, so 0.
  const double expected = (1.0 + 30000.0 / 307200.0 + 0.0 + 0.0 + 0.0) / 5.0;
  EXPECT_NEAR(r.mean_iou, expected, 1e-12);
  EXPECT_EQ(r.items, 5u);
  EXPECT_EQ(r.nan_count, 2u);  // parse error and index out of range
  EXPECT_EQ(GroundingReportToJson(r).at("items"), 5);
  EXPECT_EQ(GroundingEval({}, store, MakeOracleRegistry(kit, {}), 1, "e").mean_iou, 0.0);
}

TEST(NestedSizesTest, OneFourSixAndNested) {
  EXPECT_EQ(NestedSizes(600), (std::vector<size_t>{100, 400, 600}));
  EXPECT_EQ(NestedSizes(29074), (std::vector<size_t>{4846, 19383, 29074}));
  for (size_t total = 6; total < 5000; total += 7) {
    const auto s = NestedSizes(total);
    ASSERT_EQ(s.size(), 3u);
    EXPECT_LE(s[0], s[1]);
    EXPECT_LE(s[1], s[2]);
    EXPECT_EQ(s[2], total);
    // Nearest integer to total/6 and 4*total/6.
    EXPECT_LE(std::abs(6.0 * double(s[0]) - double(total)), 3.0);
    EXPECT_LE(std::abs(6.0 * double(s[1]) - 4.0 * double(total)), 3.0);
  }
}

struct Distilled {
  const Corpus& c = SmallCorpus();
  ModuleRegistry baseline = MakeBaselineRegistry(c.kit, {});
  StudentSet students;
};

const Distilled& SmallDistilled() {
  static const Distilled* d = [] {
    auto* out = new Distilled;
    const auto traces = RunPrograms(out->c.questions, out->c.store, out->baseline, 1);
    std::map<std::string, std::string> types;
    for (const auto& q : out->c.questions) types[q.question_id] = q.question_type;
    const OracleBackend teacher(out->c.kit.reader);
    const auto harvest = Harvest(traces, types, teacher, *out->c.kit.adapter, 1);
    out->students = Train(MakeStudents(out->c.kit, {}), harvest.triples, {}).students;
    return out;
  }();
  return *d;
}

TEST(AblationTest, DistilledCountRowsAverageEverySubset) {
  const Distilled& d = SmallDistilled();
  const auto rows = AblateDistilledCount(d.baseline, d.students, d.c.questions, d.c.store,
                                         d.c.kit, 2);
  ASSERT_EQ(rows.size(), 4u);
  const std::vector<size_t> runs = {1, 3, 3, 1};
  for (size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(rows[k].distilled, static_cast<int>(k));
    ASSERT_EQ(rows[k].runs.size(), runs[k]);
    double mean = 0.0;
    for (const auto& r : rows[k].runs) {
      EXPECT_EQ(r.kinds.size(), k);
      mean += r.acc_all;
    }
    EXPECT_NEAR(rows[k].acc_all, mean / double(runs[k]), 1e-12);
  }
  // Row 1 runs one evaluation per distilled kind.
  for (size_t i = 0; i < 3; ++i) {
    const ModuleKind kind = rows[1].runs[i].kinds[0];
    const auto r = Evaluate(d.c.questions, d.c.store,
                            BindStudents(d.baseline, d.students, {kind}), d.c.kit, 1, "x");
    EXPECT_DOUBLE_EQ(rows[1].runs[i].acc_all, r.report.acc_all());
  }
  const auto base = Evaluate(d.c.questions, d.c.store, d.baseline, d.c.kit, 1, "b");
  EXPECT_DOUBLE_EQ(rows[0].acc_all, base.report.acc_all());
  EXPECT_GT(rows[3].acc_all, rows[0].acc_all);
}

TEST(AblationTest, TrainsetSizeUsesNestedPrefixes) {
  const Distilled& d = SmallDistilled();
  const auto traces = RunPrograms(d.c.questions, d.c.store, d.baseline, 1);
  const OracleBackend teacher(d.c.kit.reader);
  const auto harvest = Harvest(traces, {}, teacher, *d.c.kit.adapter, 1);
  const auto sizes = NestedSizes(d.c.questions.size());
  const auto points = AblateTrainsetSize(d.c.questions, harvest.triples, sizes,
                                         MakeStudents(d.c.kit, {}), {}, d.baseline,
                                         d.c.questions, d.c.store, d.c.kit, 1, 9);
  ASSERT_EQ(points.size(), 3u);
  for (size_t i = 0; i < 3; ++i) EXPECT_EQ(points[i].train_questions, sizes[i]);
  EXPECT_LE(points[0].triples, points[1].triples);
  EXPECT_EQ(points[2].triples, harvest.triples.size());
  // The full prefix is the ordinary distilled run.
  const auto full = Evaluate(d.c.questions, d.c.store,
                             BindStudents(d.baseline, d.students,
                                          {std::begin(kDistillableKinds),
                                           std::end(kDistillableKinds)}),
                             d.c.kit, 1, "d");
  EXPECT_DOUBLE_EQ(points[2].acc_all, full.report.acc_all());
}

TEST(FormatTest, TablesAndCsv) {
  EXPECT_EQ(Percent(0.8642), "86.4");
  EXPECT_EQ(Percent(1.0), "100.0");
  EXPECT_EQ(Percent(0.0), "0.0");
  EvalReport r;
  r.label = "run";
  r.total = 8;
  r.correct = 6;
  r.wrong_non_nan = 1;
  r.nan_count = 1;
  r.taxonomy["find_error"] = 1;
  r.taxonomy["simple_query_error"] = 1;
  r.per_type["exist"] = {8, 6, 1};
  EXPECT_EQ(ReportCsv({r}),
            "run,total,correct,wrong_non_nan,nan_count,fallback_count,acc_all,acc_no_nan\n"
            "run,8,6,1,1,0,0.7500,0.8571\n");
  EXPECT_NE(ReportTable({r}).find("| run | 8 | 6 | 1 | 1 | 0 | 75.0 | 85.7 |"),
            std::string::npos);
  EXPECT_NE(PerTypeTable(r).find("| exist | 8 | 6 | 1 | 75.0 |"), std::string::npos);
  const std::string tax = TaxonomyTable(r);
  EXPECT_NE(tax.find("| find_error | 1 | 50.0 |"), std::string::npos);
  EXPECT_NE(tax.find("| parse_fallback | 0 | 0.0 |"), std::string::npos);
}

TEST(CaseReportTest, MarksDivergentSteps) {
  const Distilled& d = SmallDistilled();
  const ModuleRegistry distilled = BindStudents(
      d.baseline, d.students, {std::begin(kDistillableKinds), std::end(kDistillableKinds)});
  const auto before = Evaluate(d.c.questions, d.c.store, d.baseline, d.c.kit, 1, "b");
  const auto after = Evaluate(d.c.questions, d.c.store, distilled, d.c.kit, 1, "d");
  for (size_t i = 0; i < d.c.questions.size(); ++i) {
    const QAPair& q = d.c.questions[i];
    if (AnswerMatches(before.traces[i].answer, q.ground_truth) ||
        !AnswerMatches(after.traces[i].answer, q.ground_truth))
      continue;
    const std::string md = CaseReport(q, d.c.store, d.baseline, distilled, "baseline", "distilled");
    EXPECT_NE(md.find("### " + q.question_id), std::string::npos);
    EXPECT_NE(md.find("(ok, correct)"), std::string::npos) << md;
    EXPECT_NE(md.find(" | * |"), std::string::npos) << md;
    return;
  }
  FAIL() << "no case fixed by distillation";
}

}  // namespace
}  // namespace stepdistill
