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

#include "stepdistill/stages.h"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "stepdistill/errors.h"
#include "stepdistill/interpreter.h"
#include "stepdistill/parallel.h"
#include "stepdistill/rng.h"

namespace stepdistill {

namespace fs = std::filesystem;

int ExitCodeForCurrentException() {
  try {
    throw;
  } catch (const ConfigError&) {
    return kExitInvalidConfig;
  } catch (const MissingArtifactError&) {
    return kExitMissingArtifact;
  } catch (const ChecksumMismatchError&) {
    return kExitChecksumMismatch;
  } catch (const ServiceError&) {
    return kExitServiceError;
  } catch (const SplitOverlapError&) {
    return kExitSplitOverlap;
  } catch (...) {
    return kExitInternal;
  }
}

namespace {

std::string Hex(uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::string ReadText(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void WriteText(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string UtcNow() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string ConfigHash(const ExperimentConfig& c) {
  return Hex(Fnv1a64(nlohmann::json(c).dump()));
}

// Tracks a stage's verified inputs and written outputs, then records them.
class Manifest {
 public:
  Manifest(const StageContext& ctx, std::string command)
      : ctx_(ctx), command_(std::move(command)), started_(UtcNow()) {}

  // Verifies `rel` against the manifest that produced it.
  fs::path Input(const fs::path& rel) {
    const fs::path path = ctx_.run_dir / rel;
    if (!fs::exists(path))
      throw MissingArtifactError("missing artifact " + rel.string() +
                                 " (run the upstream stage first)");
    const std::string actual = FileChecksum(path);
    bool recorded = false;
    for (const auto& entry : fs::directory_iterator(path.parent_path())) {
      const std::string name = entry.path().filename().string();
      if (name.size() < 14 || name.substr(name.size() - 14) != ".manifest.json") continue;
      const auto j = nlohmann::json::parse(ReadText(entry.path()), nullptr, false);
      if (j.is_discarded() || !j.contains("outputs")) continue;
      for (const auto& out : j.at("outputs")) {
        if (out.value("path", "") != rel.generic_string()) continue;
        recorded = true;
        if (out.value("checksum", "") != actual)
          throw ChecksumMismatchError(rel.string() + " changed since " +
                                      entry.path().filename().string() + " recorded it");
      }
    }
    if (!recorded)
      throw MissingArtifactError("no manifest records " + rel.string());
    const std::pair<std::string, std::string> entry{rel.generic_string(), actual};
    if (std::find(inputs_.begin(), inputs_.end(), entry) == inputs_.end())
      inputs_.push_back(entry);
    return path;
  }

  void Output(const fs::path& rel, const std::string& content) {
    WriteText(ctx_.run_dir / rel, content);
    outputs_.push_back({rel.generic_string(), Hex(Fnv1a64(content))});
  }

  void Write(const fs::path& dir) {
    nlohmann::ordered_json j;
    j["command"] = command_;
    j["command_line"] = ctx_.command_line;
    j["config_hash"] = ConfigHash(ctx_.config);
    j["seed"] = ctx_.config.seed;
    j["workers"] = ctx_.config.workers;
    auto list = [](const std::vector<std::pair<std::string, std::string>>& v) {
      nlohmann::ordered_json a = nlohmann::ordered_json::array();
      for (const auto& [p, c] : v) a.push_back({{"path", p}, {"checksum", c}});
      return a;
    };
    j["inputs"] = list(inputs_);
    j["outputs"] = list(outputs_);
    j["started_at"] = started_;
    j["finished_at"] = UtcNow();
    WriteText(ctx_.run_dir / dir / (command_ + ".manifest.json"), j.dump(2) + "\n");
  }

 private:
  const StageContext& ctx_;
  std::string command_;
  std::string started_;
  std::vector<std::pair<std::string, std::string>> inputs_;
  std::vector<std::pair<std::string, std::string>> outputs_;
};

const fs::path kTrainScenes = "world/train_scenes.jsonl";
const fs::path kEvalScenes = "world/eval_scenes.jsonl";
const fs::path kTrainPool = "qa/train_pool.jsonl";
const fs::path kEvalPool = "qa/eval_pool.jsonl";
const fs::path kGroundingPool = "qa/grounding_pool.jsonl";
const fs::path kTrainSplit = "dataset/train.jsonl";
const fs::path kTestSplit = "dataset/test.jsonl";
const fs::path kTestCoarse = "dataset/test_coarse.jsonl";
const fs::path kTestPlain = "dataset/test_plain.jsonl";
const fs::path kGrounding = "dataset/grounding.jsonl";
const fs::path kTriples = "triples/train.jsonl";
const fs::path kEvaluateReport = "reports/evaluate.json";
const fs::path kCountReport = "reports/ablate_distilled_count.json";
const fs::path kSizeReport = "reports/ablate_trainset_size.json";
const fs::path kGroundingReport = "reports/grounding.json";

fs::path StudentPath(ModuleKind k) {
  return fs::path("students") / (std::string(ModuleKindName(k)) + ".json");
}

std::string Jsonl(const std::vector<nlohmann::ordered_json>& rows) {
  std::string out;
  for (const auto& r : rows) out += r.dump() + "\n";
  return out;
}

std::string QAText(const std::vector<QAPair>& qs) {
  std::ostringstream os;
  WriteQAPairs(os, qs);
  return os.str();
}

std::vector<QAPair> LoadQA(Manifest& m, const fs::path& rel) {
  std::istringstream in(ReadText(m.Input(rel)));
  return ReadQAPairs(in);
}

void LoadScenes(Manifest& m, const fs::path& rel, SceneStore* store,
                std::vector<SceneGraph>* list = nullptr) {
  std::istringstream in(ReadText(m.Input(rel)));
  for (auto& s : ReadScenes(in)) {
    if (list) list->push_back(s);
    store->Add(std::move(s));
  }
}

StudentSet LoadStudents(Manifest& m, const Toolkit& kit) {
  const fs::path dir = m.Input("students/training_report.json").parent_path();
  StudentSet students;
  for (ModuleKind k : kDistillableKinds) {
    const fs::path rel = StudentPath(k);
    if (!fs::exists(dir / rel.filename())) continue;
    auto [student, kind] =
        LoadStudent(nlohmann::json::parse(ReadText(m.Input(rel))), kit.reader);
    if (kind != k) throw FormatError(rel.string() + " holds a " +
                                     std::string(ModuleKindName(kind)) + " student");
    students[k] = student;
  }
  if (students.empty()) throw MissingArtifactError("no distilled students found");
  return students;
}

ModuleRegistry NamedRegistry(std::string_view name, const Toolkit& kit,
                             const RegistryConfig& config) {
  if (name == "baseline") return MakeBaselineRegistry(kit, config);
  if (name == "teacher") return MakeTeacherRegistry(kit, config);
  if (name == "oracle") return MakeOracleRegistry(kit, config);
  throw ConfigError("unknown registry '" + std::string(name) +
                    "' (expected baseline, teacher or oracle)");
}

std::string Fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

std::string FileChecksum(const fs::path& path) {
  return Hex(Fnv1a64(ReadText(path)));
}

ExperimentConfig LoadConfig(const fs::path& path) {
  if (path.empty()) return ExperimentConfig{};
  std::string text;
  try {
    text = ReadText(path);
  } catch (const MissingArtifactError&) {
    throw ConfigError("cannot read config file " + path.string());
  }
  const auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path.string());
  try {
    return j.get<ExperimentConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config field: ") + e.what());
  }
}

void StageGenWorld(const StageContext& ctx) {
  const ExperimentConfig& c = ctx.config;
  c.Validate();
  Manifest m(ctx, "gen-world");
  auto text = [](const std::vector<SceneGraph>& scenes) {
    std::ostringstream os;
    WriteScenes(os, scenes);
    return os.str();
  };
  m.Output(kTrainScenes,
           text(GenerateScenes(c.world, c.seed, c.train_scenes, true, c.workers)));
  m.Output(kEvalScenes, text(GenerateScenes(c.world, c.seed, c.eval_scenes, false, c.workers)));
  m.Write("world");
}

void StageGenQA(const StageContext& ctx) {
  const ExperimentConfig& c = ctx.config;
  c.Validate();
  Manifest m(ctx, "gen-qa");
  SceneStore store;
  std::vector<SceneGraph> train, eval;
  LoadScenes(m, kTrainScenes, &store, &train);
  LoadScenes(m, kEvalScenes, &store, &eval);
  m.Output(kTrainPool, QAText(GenerateQuestionPool(train, c.world, c.gen, c.seed, c.workers)));
  m.Output(kEvalPool, QAText(GenerateQuestionPool(eval, c.world, c.gen, c.seed, c.workers)));
  std::vector<nlohmann::ordered_json> rows;
  for (const auto& item : GenerateGroundingSet(eval, c.world, c.seed, c.grounding_per_scene))
    rows.push_back(GroundingItemToJson(item));
  m.Output(kGroundingPool, Jsonl(rows));
  m.Write("qa");
}

void StageBuildDataset(const StageContext& ctx) {
  const ExperimentConfig& c = ctx.config;
  c.Validate();
  Manifest m(ctx, "build-dataset");
  SceneStore store;
  LoadScenes(m, kEvalScenes, &store);
  const auto train_pool = LoadQA(m, kTrainPool);
  const auto eval_pool = LoadQA(m, kEvalPool);
  const Splits splits = MakeSplits(train_pool, eval_pool, c.splits, c.seed);

  m.Output(kTrainSplit, QAText(splits.train));
  m.Output("dataset/val.jsonl", QAText(splits.val));
  m.Output(kTestSplit, QAText(splits.test));
  GenConfig coarse = c.gen;
  coarse.framework = Framework::kCoarse;
  m.Output(kTestCoarse, QAText(Rerender(splits.test, store, c.world, coarse, c.seed)));
  GenConfig plain = c.gen;
  plain.visual_pointer = false;
  m.Output(kTestPlain, QAText(Rerender(splits.test, store, c.world, plain, c.seed)));

  std::set<std::string> test_scenes;
  for (const auto& q : splits.test) test_scenes.insert(q.scene_id);
  std::istringstream gin(ReadText(m.Input(kGroundingPool)));
  std::string line, grounding;
  while (std::getline(gin, line)) {
    if (line.empty()) continue;
    const GroundingItem item = GroundingItemFromJson(nlohmann::json::parse(line));
    if (test_scenes.count(item.scene_id)) grounding += line + "\n";
  }
  m.Output(kGrounding, grounding);

  m.Output("dataset/splits.json", SplitManifest(splits).dump(1) + "\n");
  nlohmann::ordered_json stats;
  stats["train"] = StatsToJson(Stats(splits.train));
  stats["val"] = StatsToJson(Stats(splits.val));
  stats["test"] = StatsToJson(Stats(splits.test));
  m.Output("dataset/stats.json", stats.dump(1) + "\n");
  m.Write("dataset");
}

void StageRunPrograms(const StageContext& ctx, std::string_view split, ProgramSource source,
                      std::string_view registry_name, bool service_fallback) {
  const ExperimentConfig& c = ctx.config;
  c.Validate();
  if (split != "train" && split != "val" && split != "test")
    throw ConfigError("split must be train, val or test");
  const Toolkit kit(c.world);
  const ModuleRegistry registry = NamedRegistry(registry_name, kit, c.registry);
  Manifest m(ctx, "run-programs-" + std::string(split));
  SceneStore store;
  LoadScenes(m, split == "train" ? kTrainScenes : kEvalScenes, &store);
  std::vector<QAPair> questions = LoadQA(m, fs::path("dataset") / (std::string(split) + ".jsonl"));

  size_t service_failures = 0;
  if (source == ProgramSource::kService) {
    std::string endpoint = c.service.endpoint;
    if (endpoint.empty()) {
      const char* env = std::getenv(ProgramServiceClient::kEndpointEnv);
      if (!env || !*env)
        throw ConfigError(std::string("no program service endpoint: set service.endpoint or ") +
                          ProgramServiceClient::kEndpointEnv);
      endpoint = env;
    }
    const ProgramServiceClient client(endpoint, std::chrono::milliseconds(c.service.timeout_ms));
    const std::string profile(PromptProfile(c.gen.visual_pointer));
    struct Result {
      std::string program;
      bool failed = false;
    };
    auto programs = ParallelMap<Result>(questions.size(), c.workers, [&](size_t i) {
      try {
        return Result{client.Generate(questions[i].question, profile), false};
      } catch (const ServiceError&) {
        if (!service_fallback) throw;
        return Result{questions[i].program, true};
      }
    });
    std::vector<nlohmann::ordered_json> rows;
    for (size_t i = 0; i < questions.size(); ++i) {
      questions[i].program = programs[i].program;
      service_failures += programs[i].failed;
      rows.push_back({{"question_id", questions[i].question_id},
                      {"program", programs[i].program},
                      {"source", programs[i].failed ? "templates" : "service"}});
    }
    m.Output(fs::path("traces") / (std::string(split) + "_programs.jsonl"), Jsonl(rows));
  }

  auto scopes = registry.BeginEvaluation();
  const auto traces = RunPrograms(questions, store, registry, c.workers);
  std::vector<nlohmann::ordered_json> rows;
  std::map<std::string, size_t> status;
  for (const auto& t : traces) {
    rows.push_back(TraceToJson(t));
    ++status[std::string(TraceStatusName(t.status))];
  }
  m.Output(fs::path("traces") / (std::string(split) + ".jsonl"), Jsonl(rows));
  nlohmann::ordered_json summary;
  summary["registry"] = registry.Describe();
  summary["program_source"] = source == ProgramSource::kService ? "service" : "templates";
  summary["traces"] = traces.size();
  summary["status"] = status;
  summary["service_failures"] = service_failures;
  m.Output(fs::path("traces") / (std::string(split) + ".summary.json"), summary.dump(1) + "\n");
  m.Write("traces");
}

void StageHarvest(const StageContext& ctx) {
  const ExperimentConfig& c = ctx.config;
  c.Validate();
  const Toolkit kit(c.world);
  Manifest m(ctx, "harvest");
  SceneStore store;
  LoadScenes(m, kTrainScenes, &store);
  const auto train = LoadQA(m, kTrainSplit);
  std::vector<ExecutionTrace> traces;
  {
    std::istringstream in(ReadText(m.Input("traces/train.jsonl")));
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) traces.push_back(TraceFromJson(nlohmann::json::parse(line), store.Lookup()));
  }
  const OracleBackend teacher(kit.reader);
  std::ostringstream audit_text;
  AdapterAuditLog audit(audit_text);
  const HarvestResult h =
      Harvest(traces, QuestionTypes(train), teacher, *kit.adapter, c.workers, &audit);
  std::ostringstream triples;
  WriteTriples(triples, h.triples);
  m.Output(kTriples, triples.str());
  m.Output("triples/adapter_audit.jsonl", audit_text.str());
  nlohmann::ordered_json stats = StatsToJson(Stats(train, h.triples));
  stats["rejected_steps"] = h.rejected;
  m.Output("triples/stats.json", stats.dump(1) + "\n");
  m.Write("triples");
}

void StageDistill(const StageContext& ctx) {
  const ExperimentConfig& c = ctx.config;
  c.Validate();
  const Toolkit kit(c.world);
  Manifest m(ctx, "distill");
  SceneStore store;
  LoadScenes(m, kTrainScenes, &store);
  std::istringstream in(ReadText(m.Input(kTriples)));
  const auto triples = ReadTriples(in, store.Lookup());
  const TrainResult r = Train(MakeStudents(kit, c.registry), triples, c.distill);
  for (ModuleKind k : c.distill.enabled)
    m.Output(StudentPath(k), SaveStudent(*r.students.at(k), k).dump() + "\n");
  m.Output("students/training_report.json", TrainingReportToJson(r.report).dump(1) + "\n");
  m.Write("students");
}

namespace {

// Up to `limit` questions whose answer flips from wrong to right.
std::vector<size_t> PickCases(const std::vector<QAPair>& qs, const EvalRun& before,
                              const EvalRun& after, size_t limit) {
  std::vector<size_t> out;
  for (size_t i = 0; i < qs.size() && out.size() < limit; ++i)
    if (!AnswerMatches(before.traces[i].answer, qs[i].ground_truth) &&
        AnswerMatches(after.traces[i].answer, qs[i].ground_truth) &&
        before.traces[i].steps.size() > 1)
      out.push_back(i);
  return out;
}

}  // namespace

void StageEvaluate(const StageContext& ctx) {
  const ExperimentConfig& c = ctx.config;
  c.Validate();
  const Toolkit kit(c.world);
  Manifest m(ctx, "evaluate");
  SceneStore store;
  LoadScenes(m, kEvalScenes, &store);
  const auto test = LoadQA(m, kTestSplit);
  const auto plain = LoadQA(m, kTestPlain);
  const auto coarse = LoadQA(m, kTestCoarse);
  const StudentSet students = LoadStudents(m, kit);

  const ModuleRegistry baseline = MakeBaselineRegistry(kit, c.registry);
  const ModuleRegistry distilled = DistilledRegistry(kit, c.registry, students);
  const int w = c.workers;
  const EvalRun base_run = Evaluate(test, store, baseline, kit, w, "baseline");
  const EvalRun dist_run = Evaluate(test, store, distilled, kit, w, "distilled");
  std::vector<EvalReport> composite = {
      Evaluate(plain, store, baseline, kit, w, "baseline (no pointer)").report,
      base_run.report,
      dist_run.report,
      Evaluate(test, store, MakeTeacherRegistry(kit, c.registry), kit, w,
               "teacher replacement").report,
      Evaluate(test, store, MakeOracleRegistry(kit, c.registry), kit, w, "all-oracle").report};

  const auto ambiguous = AmbiguousQuestions(base_run.traces);
  const EvalReport vp_on =
      Evaluate(FilterQuestions(test, ambiguous), store, baseline, kit, w, "pointer").report;
  const EvalReport vp_off =
      Evaluate(FilterQuestions(plain, ambiguous), store, baseline, kit, w, "no pointer").report;

  nlohmann::ordered_json j;
  j["composite"] = nlohmann::ordered_json::array();
  for (const auto& r : composite) j["composite"].push_back(EvalReportToJson(r));
  j["visual_pointer"] = {{"ambiguous_questions", ambiguous.size()},
                         {"with_pointer", EvalReportToJson(vp_on)},
                         {"without_pointer", EvalReportToJson(vp_off)}};
  auto sq = students.find(ModuleKind::kSimpleQuery);
  if (sq != students.end()) {
    const auto file = nlohmann::json::parse(ReadText(m.Input(StudentPath(ModuleKind::kSimpleQuery))));
    const CrossFrameworkResult cf = CrossFramework(coarse, store, baseline, file, kit, w);
    j["cross_framework"] = {{"baseline", EvalReportToJson(cf.baseline)},
                            {"transplanted", EvalReportToJson(cf.transplanted)}};
  }
  m.Output(kEvaluateReport, j.dump(1) + "\n");

  std::string cases = "# Case reports\n\n";
  for (size_t i : PickCases(test, base_run, dist_run, 3))
    cases += CaseReport(test[i], store, baseline, distilled, "baseline", "distilled") + "\n";
  m.Output("reports/cases.md", cases);
  m.Write("reports");
}

void StageAblate(const StageContext& ctx, std::string_view axis) {
  const ExperimentConfig& c = ctx.config;
  c.Validate();
  const Toolkit kit(c.world);
  if (axis == "distilled-count") {
    Manifest m(ctx, "ablate-distilled-count");
    SceneStore store;
    LoadScenes(m, kEvalScenes, &store);
    const auto test = LoadQA(m, kTestSplit);
    const StudentSet students = LoadStudents(m, kit);
    if (students.size() != std::size(kDistillableKinds))
      throw MissingArtifactError("distilled-count ablation needs all three students");
    const auto rows = AblateDistilledCount(MakeBaselineRegistry(kit, c.registry), students,
                                           test, store, kit, c.workers);
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& row : rows) {
      nlohmann::ordered_json runs = nlohmann::ordered_json::array();
      for (const auto& run : row.runs) {
        std::vector<std::string> kinds;
        for (ModuleKind k : run.kinds) kinds.emplace_back(ModuleKindName(k));
        runs.push_back(
            {{"kinds", kinds}, {"acc_all", run.acc_all}, {"acc_no_nan", run.acc_no_nan}});
      }
      j.push_back({{"distilled", row.distilled},
                   {"acc_all", row.acc_all},
                   {"acc_no_nan", row.acc_no_nan},
                   {"runs", runs}});
    }
    m.Output(kCountReport, j.dump(1) + "\n");
    m.Write("reports");
    return;
  }
  if (axis == "trainset-size") {
    Manifest m(ctx, "ablate-trainset-size");
    SceneStore store;
    LoadScenes(m, kTrainScenes, &store);
    LoadScenes(m, kEvalScenes, &store);
    const auto train = LoadQA(m, kTrainSplit);
    const auto test = LoadQA(m, kTestSplit);
    std::istringstream in(ReadText(m.Input(kTriples)));
    const auto triples = ReadTriples(in, store.Lookup());
    const auto points = AblateTrainsetSize(
        train, triples, NestedSizes(train.size()), MakeStudents(kit, c.registry), c.distill,
        MakeBaselineRegistry(kit, c.registry), test, store, kit, c.workers, c.seed);
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& p : points)
      j.push_back({{"train_questions", p.train_questions},
                   {"triples", p.triples},
                   {"acc_all", p.acc_all},
                   {"acc_no_nan", p.acc_no_nan}});
    m.Output(kSizeReport, j.dump(1) + "\n");
    m.Write("reports");
    return;
  }
  throw ConfigError("ablation axis must be distilled-count or trainset-size");
}

void StageGroundEval(const StageContext& ctx) {
  const ExperimentConfig& c = ctx.config;
  c.Validate();
  const Toolkit kit(c.world);
  Manifest m(ctx, "ground-eval");
  SceneStore store;
  LoadScenes(m, kEvalScenes, &store);
  std::vector<GroundingItem> items;
  {
    std::istringstream in(ReadText(m.Input(kGrounding)));
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) items.push_back(GroundingItemFromJson(nlohmann::json::parse(line)));
  }
  const StudentSet students = LoadStudents(m, kit);
  const GroundingReport before =
      GroundingEval(items, store, MakeBaselineRegistry(kit, c.registry), c.workers, "baseline");
  const GroundingReport after = GroundingEval(
      items, store, DistilledRegistry(kit, c.registry, students), c.workers, "distilled");
  nlohmann::ordered_json j = {{"baseline", GroundingReportToJson(before)},
                              {"distilled", GroundingReportToJson(after)}};
  m.Output(kGroundingReport, j.dump(1) + "\n");
  m.Write("reports");
}

std::vector<fs::path> ReportFiles() {
  return {"report/report.md",          "report/composite.csv",     "report/cross_framework.csv",
          "report/distilled_count.csv", "report/trainset_size.csv", "report/grounding.csv",
          "report/taxonomy.csv"};
}

void StageReport(const StageContext& ctx) {
  const ExperimentConfig& c = ctx.config;
  c.Validate();
  Manifest m(ctx, "report");
  auto load = [&](const fs::path& rel) -> std::optional<nlohmann::json> {
    if (!fs::exists(ctx.run_dir / rel)) return std::nullopt;
    return nlohmann::json::parse(ReadText(m.Input(rel)));
  };
  const auto evaluate = load(kEvaluateReport);
  const auto count = load(kCountReport);
  const auto size = load(kSizeReport);
  const auto grounding = load(kGroundingReport);
  if (!evaluate && !count && !size && !grounding)
    throw MissingArtifactError("no stored reports to render; run evaluate, ablate or ground-eval");

  std::ostringstream md;
  md << "# Results\n\n";
  md << "Seed " << c.seed << ", " << c.eval_scenes << " evaluation scenes, " << c.train_scenes
     << " training scenes, corruption rate " << c.registry.corruption_rate
     << ", detector miss rate " << c.registry.miss_rate << ".\n\n";

  if (evaluate) {
    std::vector<EvalReport> composite;
    for (const auto& r : evaluate->at("composite")) composite.push_back(EvalReportFromJson(r));
    md << "## Composite question answering\n\n" << ReportTable(composite) << "\n";
    m.Output("report/composite.csv", ReportCsv(composite));

    const auto& vp = evaluate->at("visual_pointer");
    md << "## Visual pointer on ambiguous crops\n\n"
       << vp.at("ambiguous_questions").get<size_t>()
       << " test questions have a find crop showing two or more objects.\n\n"
       << ReportTable({EvalReportFromJson(vp.at("with_pointer")),
                       EvalReportFromJson(vp.at("without_pointer"))})
       << "\n";

    std::vector<EvalReport> cf;
    if (evaluate->contains("cross_framework")) {
      cf = {EvalReportFromJson(evaluate->at("cross_framework").at("baseline")),
            EvalReportFromJson(evaluate->at("cross_framework").at("transplanted"))};
      md << "## Coarse framework with a transplanted simple_query student\n\n"
         << ReportTable(cf) << "\n";
    }
    m.Output("report/cross_framework.csv", ReportCsv(cf));

    std::ostringstream tax;
    tax << "run";
    for (std::string_view k : kTaxonomyKeys) tax << ',' << k;
    tax << '\n';
    for (const auto& r : composite) {
      tax << r.label;
      for (std::string_view k : kTaxonomyKeys) {
        auto it = r.taxonomy.find(std::string(k));
        tax << ',' << (it == r.taxonomy.end() ? 0 : it->second);
      }
      tax << '\n';
      if (r.label == "baseline" || r.label == "distilled")
        md << "## Error sources, " << r.label << "\n\n" << TaxonomyTable(r) << "\n";
    }
    m.Output("report/taxonomy.csv", tax.str());
    for (const auto& r : composite)
      if (r.label == "distilled") md << "## Accuracy by question type, distilled\n\n"
                                     << PerTypeTable(r) << "\n";
  }

  if (count) {
    md << "## Number of distilled sub-modules\n\n| distilled | acc all | acc no-NaN | runs |\n"
          "|---|---|---|---|\n";
    std::ostringstream csv;
    csv << "distilled,acc_all,acc_no_nan,runs\n";
    for (const auto& row : *count) {
      std::string runs;
      for (const auto& run : row.at("runs")) {
        std::string kinds;
        for (const auto& k : run.at("kinds")) kinds += (kinds.empty() ? "" : "+") + k.get<std::string>();
        runs += (runs.empty() ? "" : "; ") + (kinds.empty() ? "none" : kinds) + " " +
                Percent(run.at("acc_all").get<double>());
      }
      md << "| " << row.at("distilled").get<int>() << " | "
         << Percent(row.at("acc_all").get<double>()) << " | "
         << Percent(row.at("acc_no_nan").get<double>()) << " | " << runs << " |\n";
      csv << row.at("distilled").get<int>() << ',' << Fixed(row.at("acc_all").get<double>(), 4)
          << ',' << Fixed(row.at("acc_no_nan").get<double>(), 4) << ','
          << row.at("runs").size() << '\n';
    }
    md << "\n";
    m.Output("report/distilled_count.csv", csv.str());
  }

  if (size) {
    md << "## Training-set size\n\n| train questions | triples | acc all | acc no-NaN |\n"
          "|---|---|---|---|\n";
    std::ostringstream csv;
    csv << "train_questions,triples,acc_all,acc_no_nan\n";
    for (const auto& p : *size) {
      md << "| " << p.at("train_questions").get<size_t>() << " | "
         << p.at("triples").get<size_t>() << " | " << Percent(p.at("acc_all").get<double>())
         << " | " << Percent(p.at("acc_no_nan").get<double>()) << " |\n";
      csv << p.at("train_questions").get<size_t>() << ',' << p.at("triples").get<size_t>()
          << ',' << Fixed(p.at("acc_all").get<double>(), 4) << ','
          << Fixed(p.at("acc_no_nan").get<double>(), 4) << '\n';
    }
    md << "\n";
    m.Output("report/trainset_size.csv", csv.str());
  }

  if (grounding) {
    md << "## Grounding\n\n| run | items | NaN | mean IoU |\n|---|---|---|---|\n";
    std::ostringstream csv;
    csv << "run,items,nan_count,mean_iou\n";
    for (const char* key : {"baseline", "distilled"}) {
      const auto& g = grounding->at(key);
      md << "| " << key << " | " << g.at("items").get<size_t>() << " | "
         << g.at("nan_count").get<size_t>() << " | " << Fixed(g.at("mean_iou").get<double>(), 4)
         << " |\n";
      csv << key << ',' << g.at("items").get<size_t>() << ',' << g.at("nan_count").get<size_t>()
          << ',' << Fixed(g.at("mean_iou").get<double>(), 4) << '\n';
    }
    md << "\n";
    m.Output("report/grounding.csv", csv.str());
  }

  m.Output("report/report.md", md.str());
  m.Write("report");
}

void RunRecipe(const StageContext& ctx) {
  StageGenWorld(ctx);
  StageGenQA(ctx);
  StageBuildDataset(ctx);
  StageRunPrograms(ctx, "train", ProgramSource::kTemplates, "baseline", false);
  StageHarvest(ctx);
  StageDistill(ctx);
  StageEvaluate(ctx);
  StageAblate(ctx, "distilled-count");
  StageAblate(ctx, "trainset-size");
  StageGroundEval(ctx);
  StageReport(ctx);
}

}  // namespace stepdistill
