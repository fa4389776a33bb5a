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

// Acceptance suite: one PASS/FAIL line per criterion on the default
// configuration. Exits non-zero when any criterion fails.

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "stepdistill/adapter.h"
#include "stepdistill/errors.h"
#include "stepdistill/interpreter.h"
#include "stepdistill/rng.h"
#include "stepdistill/stages.h"
#include "test_util.h"

namespace stepdistill {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json ReadJson(const fs::path& p) { return json::parse(Slurp(p)); }

std::vector<json> ReadJsonl(const fs::path& p) {
  std::vector<json> out;
  std::istringstream in(Slurp(p));
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(json::parse(line));
  return out;
}

std::string Pts(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", fraction * 100.0);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int Workers() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

void Recipe(const ExperimentConfig& config, const fs::path& dir) {
  StageContext ctx;
  ctx.config = config;
  ctx.run_dir = dir;
  ctx.command_line = "acceptance";
  RunRecipe(ctx);
}

EvalReport Find(const json& composite, const std::string& label) {
  for (const auto& r : composite)
    if (r.at("label") == label) return EvalReportFromJson(r);
  throw FormatError("no composite run labelled " + label);
}

Outcome AdapterGolden() {
  const std::vector<std::string> options = {"bread", "sandwich"};
  const std::string a = AdaptVerifyProperty("flower", "red");
  const std::string b = AdaptBestTextMatch(options, "food", false, OptionClass::kNoun);
  const std::string c = AdaptSimpleQuery("What color is this table").text;
  const bool ok = a == "Is this flower red?" && b == "Is this a bread or sandwich?" &&
                  c == "What color is this table?";
  return {ok, "\"" + a + "\" \"" + b + "\" \"" + c + "\""};
}

Outcome OrderingChain(const json& evaluate) {
  const auto& comp = evaluate.at("composite");
  const double base = Find(comp, "baseline").acc_all();
  const double dist = Find(comp, "distilled").acc_all();
  const double tr = Find(comp, "teacher replacement").acc_all();
  const double oracle = Find(comp, "all-oracle").acc_all();
  const bool ok = dist - base >= 0.03 && tr - dist >= 0.03 && tr <= oracle && oracle >= 0.99;
  return {ok, "baseline " + Pts(base) + " < distilled " + Pts(dist) + " < teacher " + Pts(tr) +
                  " <= oracle " + Pts(oracle)};
}

Outcome VisualPointer(const json& evaluate) {
  const auto& vp = evaluate.at("visual_pointer");
  const double with = EvalReportFromJson(vp.at("with_pointer")).acc_all();
  const double without = EvalReportFromJson(vp.at("without_pointer")).acc_all();
  return {with - without >= 0.01, "ambiguity 0.4, " + vp.at("ambiguous_questions").dump() +
                                      " ambiguous questions: " + Pts(with) + " with vs " +
                                      Pts(without) + " without"};
}

Outcome DistilledCount(const json& rows) {
  bool ok = rows.size() == 4 && rows.at(1).at("runs").size() == 3;
  std::string detail;
  for (size_t k = 0; k < rows.size(); ++k) {
    const double acc = rows[k].at("acc_all").get<double>();
    detail += (k ? " / " : "") + Pts(acc);
    if (k && acc < rows[k - 1].at("acc_all").get<double>()) ok = false;
  }
  if (!ok) return {false, detail};
  double mean = 0.0;
  for (const auto& r : rows[1].at("runs")) mean += r.at("acc_all").get<double>();
  mean /= 3.0;
  ok = std::abs(mean - rows[1].at("acc_all").get<double>()) < 1e-12 &&
       rows[3].at("acc_all").get<double>() - rows[0].at("acc_all").get<double>() >= 0.05;
  return {ok, detail + ", row 1 = mean of 3 single substitutions"};
}

Outcome TrainsetScaling(const json& points) {
  bool ok = points.size() == 3;
  std::string detail;
  for (size_t i = 0; ok && i < points.size(); ++i) {
    detail += (i ? " / " : "") + Pts(points[i].at("acc_all").get<double>()) + " at " +
              points[i].at("train_questions").dump();
    if (i && points[i].at("acc_all").get<double>() < points[i - 1].at("acc_all").get<double>())
      ok = false;
  }
  if (points.size() == 3) {
    const double n = points[2].at("train_questions").get<double>();
    ok = ok && std::abs(points[0].at("train_questions").get<double>() * 6.0 / n - 1.0) < 0.01 &&
         std::abs(points[1].at("train_questions").get<double>() * 6.0 / n - 4.0) < 0.01;
  }
  return {ok, detail};
}

Outcome CrossFrameworkTransfer(const json& evaluate) {
  const auto& cf = evaluate.at("cross_framework");
  const EvalReport b = EvalReportFromJson(cf.at("baseline"));
  const EvalReport t = EvalReportFromJson(cf.at("transplanted"));
  const bool ok =
      t.acc_all() - b.acc_all() >= 0.03 && t.acc_no_nan() - b.acc_no_nan() >= 0.03;
  return {ok, "acc_all " + Pts(b.acc_all()) + " -> " + Pts(t.acc_all()) + ", acc_no_nan " +
                  Pts(b.acc_no_nan()) + " -> " + Pts(t.acc_no_nan()) +
                  ", student read from its saved file"};
}

Outcome GroundingNonDegradation(const json& g) {
  const double b = g.at("baseline").at("mean_iou").get<double>();
  const double d = g.at("distilled").at("mean_iou").get<double>();
  char buf[96];
  std::snprintf(buf, sizeof buf, "mean IoU %.4f -> %.4f", b, d);
  return {d >= b - 0.01, buf};
}

Outcome Accounting(const json& evaluate) {
  std::vector<EvalReport> reports;
  for (const auto& r : evaluate.at("composite")) reports.push_back(EvalReportFromJson(r));
  for (const char* k : {"with_pointer", "without_pointer"})
    reports.push_back(EvalReportFromJson(evaluate.at("visual_pointer").at(k)));
  for (const char* k : {"baseline", "transplanted"})
    reports.push_back(EvalReportFromJson(evaluate.at("cross_framework").at(k)));
  size_t with_nan = 0;
  for (const auto& r : reports) {
    if (r.correct + r.wrong_non_nan + r.nan_count != r.total) return {false, r.label};
    if (r.nan_count > 0) {
      ++with_nan;
      if (r.acc_no_nan() < r.acc_all()) return {false, r.label};
    }
  }
  return {with_nan > 0, std::to_string(reports.size()) + " runs, " + std::to_string(with_nan) +
                            " with NaN answers"};
}

Outcome Fallback() {
  ExperimentConfig c;
  c.gen.fault_rate = 0.1;
  const Toolkit kit(c.world);
  const ModuleRegistry registry = MakeBaselineRegistry(kit, c.registry);
  const auto scenes = GenerateScenes(c.world, 4242, 1200, false, Workers());
  SceneStore store(scenes);
  const auto questions = GenerateQuestionPool(scenes, c.world, c.gen, 4242, Workers());
  size_t faulty = 0, crashes = 0, bad = 0;
  auto scope = registry.BeginEvaluation();
  for (const QAPair& q : questions) {
    ExecutionTrace t;
    try {
      t = RunWithFallback(q.program, q.question, store.Get(q.scene_id), registry, q.question_id);
    } catch (...) {
      ++crashes;
      continue;
    }
    if (!q.faulty) continue;
    ++faulty;
    const bool single = t.steps.size() == 1 &&
                        t.steps[0].module_kind == ModuleKind::kSimpleQuery &&
                        t.steps[0].receiver.IsFullImage() && t.steps[0].args.size() == 1 &&
                        t.steps[0].args[0] == Value{q.question};
    if (t.status != TraceStatus::kParseErrorFallback || !single) ++bad;
  }
  const bool ok = questions.size() >= 10000 && crashes == 0 && bad == 0 && faulty > 0;
  return {ok, std::to_string(questions.size()) + " programs, " + std::to_string(faulty) +
                  " corrupted, " + std::to_string(bad) + " off the fallback path, " +
                  std::to_string(crashes) + " crashes"};
}

Outcome Learnability() {
  const auto reader = std::make_shared<QuestionReader>(WorldConfig::Default());
  const OracleBackend teacher(reader);
  const auto base = std::make_shared<CorruptedBackend>(reader, CorruptionProfile{77, 1.0});
  const SceneRef s = testing::KitchenScene();
  std::vector<SubTaskInput> keys;
  const std::vector<std::pair<Rect, std::string>> crops = {
      {{0, 0, 200, 200}, "table"}, {{50, 50, 40, 40}, "cookie"}, {{300, 0, 200, 150}, "car"},
      {{0, 300, 100, 100}, "flower"}, {{400, 300, 100, 100}, "flower"}};
  for (const auto& [box, noun] : crops)
    for (const char* q : {"What color is this %s?", "What size is this %s?",
                          "What material is this %s?", "Is this %s large?"}) {
      char buf[96];
      std::snprintf(buf, sizeof buf, q, noun.c_str());
      keys.push_back({ModuleKind::kSimpleQuery, Crop(s, box, noun), buf});
    }
  std::set<std::string> distinct;
  for (const auto& k : keys) distinct.insert(MakeStudentKey(k, *reader).ToString());
  if (distinct.size() != 20) return {false, "toy vocabulary keys collide"};
  constexpr double kTau = 3.0;
  size_t checked = 0, matched = 0, below = 0, below_ok = 0;
  for (uint64_t trial = 0; trial < 50; ++trial) {
    Rng rng(HashCombine(trial, 99));
    std::vector<Triple> triples;
    // Brute-force counter keyed by position in `keys`.
    std::vector<std::map<std::string, int>> counts(keys.size());
    for (size_t i = 0; i < keys.size(); ++i) {
      const SubTaskInput& in = keys[i];
      const std::string truth = teacher.Predict(in).answer;
      const auto candidates = reader->Candidates(*reader->Read(in.sub_question));
      const int n = static_cast<int>(rng.UniformInt(0, 8));
      for (int j = 0; j < n; ++j) {
        Triple t;
        t.sub_image = in.patch;
        t.sub_question = in.sub_question;
        t.module_kind = in.kind;
        t.source_qid = "toy" + std::to_string(i) + "_" + std::to_string(j);
        t.pseudo_label = j % 3 == 2 ? rng.Pick(candidates) : truth;
        ++counts[i][t.pseudo_label];
        triples.push_back(t);
      }
    }
    DistillConfig config;
    config.enabled = {ModuleKind::kSimpleQuery};
    config.seed = trial;
    StudentSet students{{ModuleKind::kSimpleQuery,
                         std::make_shared<TableStudent>(base, reader, 1.0, kTau)}};
    const auto trained = Train(students, triples, config).students.at(ModuleKind::kSimpleQuery);
    for (size_t i = 0; i < keys.size(); ++i) {
      int total = 0, best = -1;
      std::string argmax;
      for (const auto& [label, n] : counts[i]) {
        total += n;
        if (n > best) best = n, argmax = label;
      }
      const std::string got = trained->Predict(keys[i]).answer;
      if (total >= kTau) {
        ++checked;
        matched += got == argmax && got == teacher.Predict(keys[i]).answer;
      } else {
        ++below;
        below_ok += got == base->Predict(keys[i]).answer;
      }
    }
  }
  return {checked > 0 && matched == checked && below_ok == below,
          std::to_string(matched) + "/" + std::to_string(checked) +
              " keys at threshold match the teacher over 50 trials of 20 keys"};
}

Outcome DatasetRules(const ExperimentConfig& config, const fs::path& run) {
  const json splits = ReadJson(run / "dataset/splits.json");
  const std::map<std::string, int> caps = {{"train", config.splits.train.type_cap},
                                           {"val", config.splits.val.type_cap},
                                           {"test", config.splits.test.type_cap}};
  int max_phase_one = 0;
  for (const auto& [name, cap] : caps)
    for (const auto& [type, n] : splits.at("balance").at(name).at("phase_one_by_type").items()) {
      max_phase_one = std::max(max_phase_one, n.get<int>());
      if (n.get<int>() > cap) return {false, name + "/" + type + " over cap"};
    }
  // Independent recount of the stored splits.
  std::set<std::string> val_scenes, val_ids, test_scenes, test_ids;
  for (const auto& q : ReadJsonl(run / "dataset/val.jsonl")) {
    val_scenes.insert(q.at("scene_id").get<std::string>());
    val_ids.insert(q.at("question_id").get<std::string>());
  }
  for (const auto& q : ReadJsonl(run / "dataset/test.jsonl")) {
    test_scenes.insert(q.at("scene_id").get<std::string>());
    test_ids.insert(q.at("question_id").get<std::string>());
  }
  for (const auto& s : test_scenes)
    if (val_scenes.count(s)) return {false, "scene " + s + " in val and test"};
  for (const auto& id : test_ids)
    if (val_ids.count(id)) return {false, "question " + id + " in val and test"};
  const auto& proof = splits.at("proof");
  if (proof.at("shared_val_test_scenes") != 0 || proof.at("shared_val_test_questions") != 0)
    return {false, "stored proof reports overlap"};
  // The builder itself refuses overlapping pools.
  QAPair q;
  q.scene_id = "shared";
  q.question_id = "shared-q";
  q.question_type = "exist";
  bool refused = false;
  try {
    MakeSplits({q}, {q}, SplitConfig{}, 1);
  } catch (const SplitOverlapError&) {
    refused = true;
  }
  return {refused, "largest phase-one type count " + std::to_string(max_phase_one) +
                       " (cap " + std::to_string(config.splits.test.type_cap) + "), " +
                       std::to_string(val_scenes.size()) + " val / " +
                       std::to_string(test_scenes.size()) + " test scenes, disjoint"};
}

Outcome Determinism(const fs::path& a, const fs::path& b) {
  size_t files = 0;
  for (const fs::path& f : ReportFiles()) {
    const std::string x = Slurp(a / f);
    if (x.empty() || x != Slurp(b / f)) return {false, f.string() + " differs"};
    ++files;
  }
  return {true, std::to_string(files) + " report files byte-identical across two runs"};
}

int Main() {
  const fs::path root =
      fs::temp_directory_path() / ("stepdistill_acceptance_" + std::to_string(getpid()));
  fs::remove_all(root);
  ExperimentConfig config;
  config.workers = Workers();

  std::vector<std::pair<std::string, std::function<Outcome()>>> criteria;
  bool recipe_ok = true;
  std::string recipe_error;
  json evaluate, count, size, grounding, evaluate_ambiguous;
  try {
    Recipe(config, root / "a");
    Recipe(config, root / "b");
    ExperimentConfig ambiguous = config;
    ambiguous.world.ambiguity_rate = 0.4;
    Recipe(ambiguous, root / "ambiguous");
    evaluate = ReadJson(root / "a/reports/evaluate.json");
    count = ReadJson(root / "a/reports/ablate_distilled_count.json");
    size = ReadJson(root / "a/reports/ablate_trainset_size.json");
    grounding = ReadJson(root / "a/reports/grounding.json");
    evaluate_ambiguous = ReadJson(root / "ambiguous/reports/evaluate.json");
  } catch (const std::exception& e) {
    recipe_ok = false;
    recipe_error = e.what();
  }
  auto needs_recipe = [&](std::function<Outcome()> f) {
    return [=]() -> Outcome {
      if (!recipe_ok) return {false, "recipe failed: " + recipe_error};
      return f();
    };
  };

  criteria = {
      {"adapter golden strings", AdapterGolden},
      {"ordering chain", needs_recipe([&] { return OrderingChain(evaluate); })},
      {"visual pointer on ambiguous crops",
       needs_recipe([&] { return VisualPointer(evaluate_ambiguous); })},
      {"distilled-count monotonicity", needs_recipe([&] { return DistilledCount(count); })},
      {"train-set scaling", needs_recipe([&] { return TrainsetScaling(size); })},
      {"cross-framework transfer", needs_recipe([&] { return CrossFrameworkTransfer(evaluate); })},
      {"grounding non-degradation",
       needs_recipe([&] { return GroundingNonDegradation(grounding); })},
      {"accounting invariants", needs_recipe([&] { return Accounting(evaluate); })},
      {"parse-error fallback", Fallback},
      {"distillation learnability", Learnability},
      {"dataset rules", needs_recipe([&] { return DatasetRules(config, root / "a"); })},
      {"determinism", needs_recipe([&] { return Determinism(root / "a", root / "b"); })},
  };

  int failed = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  fs::remove_all(root);
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}

}  // namespace
}  // namespace stepdistill

int main() { return stepdistill::Main(); }
