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

#include "stepdistill/eval.h"

#include <algorithm>
#include <cctype>
#include <iomanip>
#include <sstream>

#include "stepdistill/errors.h"
#include "stepdistill/interpreter.h"
#include "stepdistill/parallel.h"
#include "stepdistill/rng.h"

namespace stepdistill {

SceneStore::SceneStore(const std::vector<SceneGraph>& scenes) {
  for (const auto& s : scenes) Add(s);
}

void SceneStore::Add(SceneGraph scene) {
  std::string id = scene.scene_id;
  scenes_[id] = std::make_shared<const SceneGraph>(std::move(scene));
}

SceneRef SceneStore::Get(const std::string& scene_id) const {
  auto it = scenes_.find(scene_id);
  return it == scenes_.end() ? nullptr : it->second;
}

SceneLookup SceneStore::Lookup() const {
  return [this](const std::string& id) { return Get(id); };
}

double EvalReport::acc_all() const {
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

double EvalReport::acc_no_nan() const {
  const size_t denom = total - nan_count;
  return denom == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(denom);
}

nlohmann::ordered_json EvalReportToJson(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["label"] = r.label;
  j["total"] = r.total;
  j["correct"] = r.correct;
  j["wrong_non_nan"] = r.wrong_non_nan;
  j["nan_count"] = r.nan_count;
  j["fallback_count"] = r.fallback_count;
  j["acc_all"] = r.acc_all();
  j["acc_no_nan"] = r.acc_no_nan();
  nlohmann::ordered_json types = nlohmann::ordered_json::object();
  for (const auto& [t, a] : r.per_type)
    types[t] = {{"total", a.total}, {"correct", a.correct}, {"nan", a.nan}};
  j["per_type"] = types;
  nlohmann::ordered_json tax = nlohmann::ordered_json::object();
  for (std::string_view k : kTaxonomyKeys) {
    auto it = r.taxonomy.find(std::string(k));
    tax[std::string(k)] = it == r.taxonomy.end() ? 0 : it->second;
  }
  j["taxonomy"] = tax;
  j["metadata"] = r.metadata;
  return j;
}

EvalReport EvalReportFromJson(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.label = j.at("label").get<std::string>();
    r.total = j.at("total").get<size_t>();
    r.correct = j.at("correct").get<size_t>();
    r.wrong_non_nan = j.at("wrong_non_nan").get<size_t>();
    r.nan_count = j.at("nan_count").get<size_t>();
    r.fallback_count = j.value("fallback_count", size_t{0});
    if (j.contains("per_type"))
      for (const auto& [t, a] : j.at("per_type").items())
        r.per_type[t] = {a.at("total").get<size_t>(), a.at("correct").get<size_t>(),
                         a.value("nan", size_t{0})};
    if (j.contains("taxonomy"))
      for (const auto& [k, v] : j.at("taxonomy").items()) r.taxonomy[k] = v.get<size_t>();
    if (j.contains("metadata"))
      r.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed evaluation report: ") + e.what());
  }
}

namespace {

std::string Normalize(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string out;
  for (size_t i = b; i < e; ++i)
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(s[i]))));
  return out;
}

}  // namespace

bool AnswerMatches(const Value& prediction, std::string_view ground_truth) {
  if (prediction.IsNan()) return false;
  return Normalize(AnswerString(prediction)) == Normalize(ground_truth);
}

std::vector<ExecutionTrace> RunPrograms(const std::vector<QAPair>& questions,
                                        const SceneStore& scenes,
                                        const ModuleRegistry& registry, int workers) {
  return ParallelMap<ExecutionTrace>(questions.size(), workers, [&](size_t i) {
    const QAPair& qa = questions[i];
    return RunWithFallback(qa.program, qa.question, scenes.Get(qa.scene_id), registry,
                           qa.question_id);
  });
}

std::string AttributeError(const ExecutionTrace& trace, const Toolkit& kit) {
  if (trace.status == TraceStatus::kParseErrorFallback) return "parse_fallback";
  const Detector truth(kit.world, 0.0, 0);
  const OracleBackend oracle(kit.reader);
  for (const StepRecord& step : trace.steps) {
    const std::string kind_error = std::string(ModuleKindName(step.module_kind)) + "_error";
    const auto* name = step.args.empty() ? nullptr : std::get_if<std::string>(&step.args[0].v);
    switch (step.module_kind) {
      case ModuleKind::kFind: {
        if (!name || step.output != Value{truth.Find(step.receiver, *name)})
          return "find_error";
        break;
      }
      case ModuleKind::kExists: {
        if (!name) return "find_error";
        const bool expected = step.receiver_list ? truth.Exists(*step.receiver_list, *name)
                                                 : truth.Exists(step.receiver, *name);
        if (step.output != Value{expected}) return "find_error";
        break;
      }
      default: {
        std::string sub;
        try {
          sub = kit.adapter->SubQuestion(step.module_kind, step.args, step.center_word);
        } catch (const std::exception&) {
          return kind_error;
        }
        const std::string answer = oracle.Answer(step.receiver, sub);
        const Value expected = step.module_kind == ModuleKind::kVerifyProperty
                                   ? Value{answer == kYes}
                                   : Value{answer};
        if (step.output != expected) return kind_error;
      }
    }
  }
  return "program_logic_error";
}

EvalReport Score(const std::vector<QAPair>& questions,
                 const std::vector<ExecutionTrace>& traces, const Toolkit& kit,
                 std::string label) {
  if (questions.size() != traces.size())
    throw std::invalid_argument("questions and traces differ in length");
  EvalReport r;
  r.label = std::move(label);
  for (std::string_view k : kTaxonomyKeys) r.taxonomy[std::string(k)] = 0;
  for (size_t i = 0; i < questions.size(); ++i) {
    const QAPair& qa = questions[i];
    const ExecutionTrace& t = traces[i];
    TypeAccuracy& type = r.per_type[qa.question_type];
    ++r.total;
    ++type.total;
    if (t.status == TraceStatus::kParseErrorFallback) ++r.fallback_count;
    if (AnswerMatches(t.answer, qa.ground_truth)) {
      ++r.correct;
      ++type.correct;
      continue;
    }
    if (t.answer.IsNan()) {
      ++r.nan_count;
      ++type.nan;
    } else {
      ++r.wrong_non_nan;
    }
    ++r.taxonomy[AttributeError(t, kit)];
  }
  return r;
}

EvalRun Evaluate(const std::vector<QAPair>& questions, const SceneStore& scenes,
                 const ModuleRegistry& registry, const Toolkit& kit, int workers,
                 std::string label) {
  auto scopes = registry.BeginEvaluation();
  EvalRun run;
  run.traces = RunPrograms(questions, scenes, registry, workers);
  run.report = Score(questions, run.traces, kit, std::move(label));
  run.report.metadata["registry"] = registry.Describe();
  return run;
}

std::set<std::string> AmbiguousQuestions(const std::vector<ExecutionTrace>& traces) {
  std::set<std::string> ids;
  for (const auto& t : traces)
    for (const auto& s : t.steps)
      if (s.center_word && s.receiver.visible_objects().size() >= 2) {
        ids.insert(t.question_id);
        break;
      }
  return ids;
}

std::vector<QAPair> FilterQuestions(const std::vector<QAPair>& questions,
                                    const std::set<std::string>& ids) {
  std::vector<QAPair> out;
  for (const auto& q : questions)
    if (ids.count(q.question_id)) out.push_back(q);
  return out;
}

std::vector<DistilledCountRow> AblateDistilledCount(const ModuleRegistry& baseline,
                                                    const StudentSet& distilled,
                                                    const std::vector<QAPair>& questions,
                                                    const SceneStore& scenes,
                                                    const Toolkit& kit, int workers) {
  constexpr size_t n = std::size(kDistillableKinds);
  std::vector<DistilledCountRow> rows(n + 1);
  for (size_t k = 0; k <= n; ++k) rows[k].distilled = static_cast<int>(k);
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    AblationRun run;
    std::set<ModuleKind> kinds;
    for (size_t i = 0; i < n; ++i)
      if (mask & (1u << i)) {
        run.kinds.push_back(kDistillableKinds[i]);
        kinds.insert(kDistillableKinds[i]);
      }
    const ModuleRegistry registry = BindStudents(baseline, distilled, kinds);
    const EvalReport r =
        Evaluate(questions, scenes, registry, kit, workers, "ablation").report;
    run.acc_all = r.acc_all();
    run.acc_no_nan = r.acc_no_nan();
    rows[run.kinds.size()].runs.push_back(std::move(run));
  }
  for (auto& row : rows) {
    std::sort(row.runs.begin(), row.runs.end(),
              [](const AblationRun& a, const AblationRun& b) { return a.kinds < b.kinds; });
    for (const auto& run : row.runs) {
      row.acc_all += run.acc_all;
      row.acc_no_nan += run.acc_no_nan;
    }
    row.acc_all /= static_cast<double>(row.runs.size());
    row.acc_no_nan /= static_cast<double>(row.runs.size());
  }
  return rows;
}

std::vector<size_t> NestedSizes(size_t total) {
  return {(total + 3) / 6, (total * 4 + 3) / 6, total};
}

std::vector<TrainSizePoint> AblateTrainsetSize(
    const std::vector<QAPair>& train_questions, const std::vector<Triple>& triples,
    const std::vector<size_t>& sizes, const StudentSet& fresh_students,
    const DistillConfig& config, const ModuleRegistry& baseline,
    const std::vector<QAPair>& eval_questions, const SceneStore& scenes,
    const Toolkit& kit, int workers, uint64_t seed) {
  std::vector<std::string> order;
  for (const auto& q : train_questions) order.push_back(q.question_id);
  Rng rng(HashCombine(seed, Fnv1a64("trainset-size")));
  rng.Shuffle(order);

  std::vector<TrainSizePoint> points;
  for (size_t size : sizes) {
    const size_t n = std::min(size, order.size());
    const std::set<std::string> ids(order.begin(), order.begin() + static_cast<long>(n));
    std::vector<Triple> subset;
    for (const auto& t : triples)
      if (ids.count(t.source_qid)) subset.push_back(t);
    TrainResult trained = Train(fresh_students, subset, config);
    const ModuleRegistry registry = BindStudents(baseline, trained.students, config.enabled);
    const EvalReport r =
        Evaluate(eval_questions, scenes, registry, kit, workers, "trainset").report;
    points.push_back({n, subset.size(), r.acc_all(), r.acc_no_nan()});
  }
  return points;
}

CrossFrameworkResult CrossFramework(const std::vector<QAPair>& coarse_questions,
                                    const SceneStore& scenes,
                                    const ModuleRegistry& baseline,
                                    const nlohmann::json& student_file,
                                    const Toolkit& kit, int workers) {
  auto [student, kind] = LoadStudent(student_file, kit.reader);
  if (kind != ModuleKind::kSimpleQuery)
    throw FormatError("cross-framework transfer needs a simple_query student");
  CrossFrameworkResult result;
  result.baseline =
      Evaluate(coarse_questions, scenes, baseline, kit, workers, "coarse baseline").report;
  result.transplanted =
      Evaluate(coarse_questions, scenes, baseline.Replace(kind, student), kit, workers,
               "coarse + distilled simple_query")
          .report;
  return result;
}

nlohmann::ordered_json GroundingReportToJson(const GroundingReport& r) {
  return {{"label", r.label},
          {"items", r.items},
          {"nan_count", r.nan_count},
          {"mean_iou", r.mean_iou}};
}

GroundingReport GroundingEval(const std::vector<GroundingItem>& items,
                              const SceneStore& scenes, const ModuleRegistry& registry,
                              int workers, std::string label) {
  auto scopes = registry.BeginEvaluation();
  struct Outcome {
    double iou = 0.0;
    bool nan = false;
  };
  auto outcomes = ParallelMap<Outcome>(items.size(), workers, [&](size_t i) {
    const GroundingItem& item = items[i];
    ParseResult parsed = Parse(item.program);
    if (!parsed.ok()) return Outcome{0.0, true};
    const ExecutionTrace t =
        Execute(parsed.program(), scenes.Get(item.scene_id), registry, item.item_id);
    const auto* patch = std::get_if<ScenePatch>(&t.answer.v);
    if (!patch) return Outcome{0.0, true};
    return Outcome{IntersectionOverUnion(patch->region(), item.target), false};
  });
  GroundingReport r;
  r.label = std::move(label);
  r.items = items.size();
  double sum = 0.0;
  for (const auto& o : outcomes) {
    sum += o.iou;
    r.nan_count += o.nan;
  }
  r.mean_iou = items.empty() ? 0.0 : sum / static_cast<double>(items.size());
  return r;
}

namespace {

std::string Short(const Value& v) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, NanValue>) {
          return "NaN";
        } else if constexpr (std::is_same_v<T, ScenePatch>) {
          const Rect& r = x.region();
          return "patch(" + std::to_string(r.x) + "," + std::to_string(r.y) + "," +
                 std::to_string(r.w) + "," + std::to_string(r.h) + ")";
        } else if constexpr (std::is_same_v<T, Value::PatchList>) {
          return std::to_string(x.size()) + " patch(es)";
        } else if constexpr (std::is_same_v<T, std::string>) {
          return QuoteString(x);
        } else if constexpr (std::is_same_v<T, bool>) {
          return x ? "True" : "False";
        } else if constexpr (std::is_same_v<T, double>) {
          std::ostringstream os;
          os << x;
          return os.str();
        } else {
          std::string s = "[";
          for (size_t i = 0; i < x.size(); ++i) s += (i ? ", " : "") + Short(x[i]);
          return s + "]";
        }
      },
      v.v);
}

std::string StepCall(const StepRecord& s) {
  std::string out = std::string(ModuleKindName(s.module_kind)) + "(";
  for (size_t i = 0; i < s.args.size(); ++i) out += (i ? ", " : "") + Short(s.args[i]);
  out += ")";
  if (s.center_word) out += " on " + *s.center_word;
  return out;
}

}  // namespace

std::string CaseReport(const QAPair& question, const SceneStore& scenes,
                       const ModuleRegistry& before, const ModuleRegistry& after,
                       std::string_view before_label, std::string_view after_label) {
  const SceneRef scene = scenes.Get(question.scene_id);
  const ExecutionTrace a =
      RunWithFallback(question.program, question.question, scene, before, question.question_id);
  const ExecutionTrace b =
      RunWithFallback(question.program, question.question, scene, after, question.question_id);

  std::ostringstream os;
  os << "### " << question.question_id << ": " << question.question << "\n\n";
  os << "Type: " << question.question_type << ". Ground truth: " << question.ground_truth
     << ".\n\n```\n" << a.program_source << "\n```\n\n";
  os << "| step | " << before_label << " call | " << before_label << " output | "
     << after_label << " call | " << after_label << " output | diff |\n";
  os << "|---|---|---|---|---|---|\n";
  const size_t rows = std::max(a.steps.size(), b.steps.size());
  for (size_t i = 0; i < rows; ++i) {
    const StepRecord* x = i < a.steps.size() ? &a.steps[i] : nullptr;
    const StepRecord* y = i < b.steps.size() ? &b.steps[i] : nullptr;
    const bool differs = !x || !y || StepCall(*x) != StepCall(*y) || !(x->output == y->output);
    os << "| " << i << " | " << (x ? StepCall(*x) : "-") << " | "
       << (x ? Short(x->output) : "-") << " | " << (y ? StepCall(*y) : "-") << " | "
       << (y ? Short(y->output) : "-") << " | " << (differs ? "*" : "") << " |\n";
  }
  auto verdict = [&](const ExecutionTrace& t) {
    return AnswerString(t.answer) + " (" + std::string(TraceStatusName(t.status)) + ", " +
           (AnswerMatches(t.answer, question.ground_truth) ? "correct" : "wrong") + ")";
  };
  os << "\nAnswer " << before_label << ": " << verdict(a) << "\n";
  os << "Answer " << after_label << ": " << verdict(b) << "\n";
  if (a.steps.size() != b.steps.size() ||
      !std::equal(a.steps.begin(), a.steps.end(), b.steps.begin(),
                  [](const StepRecord& x, const StepRecord& y) {
                    return StepCall(x) == StepCall(y);
                  }))
    os << "The two runs took different execution paths.\n";
  return os.str();
}

std::string Percent(double fraction) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << fraction * 100.0;
  return os.str();
}

std::string ReportTable(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  os << "| run | total | correct | wrong | NaN | fallback | acc all | acc no-NaN |\n";
  os << "|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : reports)
    os << "| " << r.label << " | " << r.total << " | " << r.correct << " | "
       << r.wrong_non_nan << " | " << r.nan_count << " | " << r.fallback_count << " | "
       << Percent(r.acc_all()) << " | " << Percent(r.acc_no_nan()) << " |\n";
  return os.str();
}

std::string ReportCsv(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  os << "run,total,correct,wrong_non_nan,nan_count,fallback_count,acc_all,acc_no_nan\n";
  os << std::fixed << std::setprecision(4);
  for (const auto& r : reports)
    os << r.label << ',' << r.total << ',' << r.correct << ',' << r.wrong_non_nan << ','
       << r.nan_count << ',' << r.fallback_count << ',' << r.acc_all() << ','
       << r.acc_no_nan() << '\n';
  return os.str();
}

std::string PerTypeTable(const EvalReport& report) {
  std::ostringstream os;
  os << "| question type | total | correct | NaN | acc |\n|---|---|---|---|---|\n";
  for (const auto& [type, a] : report.per_type)
    os << "| " << type << " | " << a.total << " | " << a.correct << " | " << a.nan << " | "
       << Percent(a.total ? static_cast<double>(a.correct) / static_cast<double>(a.total)
                          : 0.0)
       << " |\n";
  return os.str();
}

std::string TaxonomyTable(const EvalReport& report) {
  size_t failures = 0;
  for (const auto& [k, v] : report.taxonomy) failures += v;
  std::ostringstream os;
  os << "| error source | count | share |\n|---|---|---|\n";
  for (std::string_view k : kTaxonomyKeys) {
    auto it = report.taxonomy.find(std::string(k));
    const size_t v = it == report.taxonomy.end() ? 0 : it->second;
    os << "| " << k << " | " << v << " | "
       << Percent(failures ? static_cast<double>(v) / static_cast<double>(failures) : 0.0)
       << " |\n";
  }
  return os.str();
}

}  // namespace stepdistill
