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

// Evaluation: accuracy accounting, error attribution, ablations,
// cross-framework and grounding runs, and trace-diff case reports.

#ifndef STEPDISTILL_EVAL_H_
#define STEPDISTILL_EVAL_H_

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "stepdistill/distill.h"
#include "stepdistill/quesgen.h"
#include "stepdistill/registry.h"
#include "stepdistill/trace.h"

namespace stepdistill {

// Scenes by id.
class SceneStore {
 public:
  SceneStore() = default;
  explicit SceneStore(const std::vector<SceneGraph>& scenes);

  void Add(SceneGraph scene);
  SceneRef Get(const std::string& scene_id) const;  // nullptr when unknown
  SceneLookup Lookup() const;
  size_t size() const { return scenes_.size(); }

 private:
  std::map<std::string, SceneRef> scenes_;
};

inline constexpr std::string_view kTaxonomyKeys[] = {
    "find_error",          "verify_property_error", "best_text_match_error",
    "simple_query_error",  "program_logic_error",   "parse_fallback"};

struct TypeAccuracy {
  size_t total = 0;
  size_t correct = 0;
  size_t nan = 0;
};

struct EvalReport {
  std::string label;
  size_t total = 0;
  size_t correct = 0;
  size_t wrong_non_nan = 0;
  size_t nan_count = 0;
  size_t fallback_count = 0;  // traces with status parse_error_fallback
  std::map<std::string, TypeAccuracy> per_type;
  std::map<std::string, size_t> taxonomy;  // over every wrong or NaN answer
  std::map<std::string, std::string> metadata;

  double acc_all() const;
  double acc_no_nan() const;
};

nlohmann::ordered_json EvalReportToJson(const EvalReport& report);
EvalReport EvalReportFromJson(const nlohmann::json& j);

// Case-folded, whitespace-trimmed exact match. NaN never matches.
bool AnswerMatches(const Value& prediction, std::string_view ground_truth);

// Runs every question's program (with the parse-error fallback) in parallel,
// in question order.
std::vector<ExecutionTrace> RunPrograms(const std::vector<QAPair>& questions,
                                        const SceneStore& scenes,
                                        const ModuleRegistry& registry, int workers);

// First step whose output differs from a miss-free detector / oracle replay
// on the same receiver; no divergence is a program logic error. Traces that
// took the fallback are parse_fallback.
std::string AttributeError(const ExecutionTrace& trace, const Toolkit& kit);

EvalReport Score(const std::vector<QAPair>& questions,
                 const std::vector<ExecutionTrace>& traces, const Toolkit& kit,
                 std::string label);

struct EvalRun {
  EvalReport report;
  std::vector<ExecutionTrace> traces;
};

// Runs under an evaluation phase on every trainable backend.
EvalRun Evaluate(const std::vector<QAPair>& questions, const SceneStore& scenes,
                 const ModuleRegistry& registry, const Toolkit& kit, int workers,
                 std::string label);

// Question ids whose trace has a step on a find-produced patch showing two or
// more objects.
std::set<std::string> AmbiguousQuestions(const std::vector<ExecutionTrace>& traces);

std::vector<QAPair> FilterQuestions(const std::vector<QAPair>& questions,
                                    const std::set<std::string>& ids);

struct AblationRun {
  std::vector<ModuleKind> kinds;
  double acc_all = 0.0;
  double acc_no_nan = 0.0;
};

struct DistilledCountRow {
  int distilled = 0;
  double acc_all = 0.0;     // mean over runs
  double acc_no_nan = 0.0;  // mean over runs
  std::vector<AblationRun> runs;
};

// Rows for 0..3 distilled kinds; row k averages every k-subset of kinds.
std::vector<DistilledCountRow> AblateDistilledCount(const ModuleRegistry& baseline,
                                                    const StudentSet& distilled,
                                                    const std::vector<QAPair>& questions,
                                                    const SceneStore& scenes,
                                                    const Toolkit& kit, int workers);

struct TrainSizePoint {
  size_t train_questions = 0;
  size_t triples = 0;
  double acc_all = 0.0;
  double acc_no_nan = 0.0;
};

// Nested prefixes of a seeded permutation of the training questions, one
// fresh distillation per size.
std::vector<TrainSizePoint> AblateTrainsetSize(
    const std::vector<QAPair>& train_questions, const std::vector<Triple>& triples,
    const std::vector<size_t>& sizes, const StudentSet& fresh_students,
    const DistillConfig& config, const ModuleRegistry& baseline,
    const std::vector<QAPair>& eval_questions, const SceneStore& scenes,
    const Toolkit& kit, int workers, uint64_t seed);

// Sizes in ratio 1:4:6 of `total`.
std::vector<size_t> NestedSizes(size_t total);

struct CrossFrameworkResult {
  EvalReport baseline;
  EvalReport transplanted;
};

// Coarse-framework questions with the baseline simple_query backend and
// with the student loaded from `student_file` (as written by SaveStudent).
CrossFrameworkResult CrossFramework(const std::vector<QAPair>& coarse_questions,
                                    const SceneStore& scenes,
                                    const ModuleRegistry& baseline,
                                    const nlohmann::json& student_file,
                                    const Toolkit& kit, int workers);

struct GroundingReport {
  std::string label;
  size_t items = 0;
  size_t nan_count = 0;
  double mean_iou = 0.0;
};

nlohmann::ordered_json GroundingReportToJson(const GroundingReport& report);

// Mean IoU of returned patch regions against targets; NaN or non-patch
// answers score 0.
GroundingReport GroundingEval(const std::vector<GroundingItem>& items,
                              const SceneStore& scenes, const ModuleRegistry& registry,
                              int workers, std::string label);

// Side-by-side step outputs and answers of one question under two registries.
std::string CaseReport(const QAPair& question, const SceneStore& scenes,
                       const ModuleRegistry& before, const ModuleRegistry& after,
                       std::string_view before_label, std::string_view after_label);

// Plain-text renderings. Percentages use one decimal.
std::string Percent(double fraction);
std::string ReportTable(const std::vector<EvalReport>& reports);
std::string ReportCsv(const std::vector<EvalReport>& reports);
std::string PerTypeTable(const EvalReport& report);
std::string TaxonomyTable(const EvalReport& report);

}  // namespace stepdistill

#endif  // STEPDISTILL_EVAL_H_
