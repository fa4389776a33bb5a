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

#include "stepdistill/distill.h"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "stepdistill/errors.h"
#include "stepdistill/parallel.h"
#include "stepdistill/rng.h"

namespace stepdistill {

nlohmann::ordered_json TripleToJson(const Triple& t) {
  nlohmann::ordered_json j;
  j["scene_id"] = t.sub_image.scene_id();
  const Rect& r = t.sub_image.region();
  j["region"] = {r.x, r.y, r.w, r.h};
  j["sub_question"] = t.sub_question;
  j["pseudo_label"] = t.pseudo_label;
  j["module_kind"] = ModuleKindName(t.module_kind);
  j["source_qid"] = t.source_qid;
  j["question_type"] = t.question_type;
  j["step_index"] = t.step_index;
  return j;
}

Triple TripleFromJson(const nlohmann::json& j, const SceneLookup& scenes) {
  try {
    Triple t;
    const std::string scene_id = j.at("scene_id").get<std::string>();
    SceneRef scene = scenes(scene_id);
    if (!scene) throw FormatError("triple refers to unknown scene '" + scene_id + "'");
    const auto& r = j.at("region");
    t.sub_image = Crop(scene, Rect{r.at(0).get<int>(), r.at(1).get<int>(),
                                   r.at(2).get<int>(), r.at(3).get<int>()});
    t.sub_question = j.at("sub_question").get<std::string>();
    t.pseudo_label = j.at("pseudo_label").get<std::string>();
    auto kind = ParseModuleKind(j.at("module_kind").get<std::string>());
    if (!kind || !IsDistillable(*kind)) throw FormatError("triple has a bad module kind");
    t.module_kind = *kind;
    t.source_qid = j.at("source_qid").get<std::string>();
    t.question_type = j.value("question_type", "");
    t.step_index = j.value("step_index", 0);
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed triple: ") + e.what());
  }
}

void WriteTriples(std::ostream& out, const std::vector<Triple>& triples) {
  for (const auto& t : triples) out << TripleToJson(t).dump() << '\n';
}

std::vector<Triple> ReadTriples(std::istream& in, const SceneLookup& scenes) {
  std::vector<Triple> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("bad triple line: ") + e.what());
    }
    out.push_back(TripleFromJson(j, scenes));
  }
  return out;
}

HarvestResult Harvest(const std::vector<ExecutionTrace>& traces,
                      const std::map<std::string, std::string>& question_types,
                      const Backend& teacher, const TeacherInputAdapter& adapter,
                      int workers, AdapterAuditLog* audit) {
  struct Partial {
    std::vector<Triple> triples;
    size_t rejected = 0;
  };
  auto parts = ParallelMap<Partial>(traces.size(), workers, [&](size_t i) {
    Partial part;
    const ExecutionTrace& trace = traces[i];
    auto type_it = question_types.find(trace.question_id);
    for (const StepRecord& step : trace.steps) {
      if (!IsDistillable(step.module_kind)) continue;
      TeacherInput input;
      try {
        input = adapter.AdaptStep(step, trace.question_id);
      } catch (const AdapterError& e) {
        ++part.rejected;
        if (audit)
          audit->RecordRejection(trace.question_id, step.step_index, step.module_kind,
                                 e.what());
        continue;
      }
      if (audit) audit->Record(input);
      Triple t;
      t.sub_image = input.sub_image;
      t.sub_question = input.sub_question;
      t.module_kind = step.module_kind;
      t.source_qid = trace.question_id;
      t.question_type = type_it == question_types.end() ? "" : type_it->second;
      t.step_index = step.step_index;
      t.pseudo_label = teacher.Predict(t.Input()).answer;
      part.triples.push_back(std::move(t));
    }
    return part;
  });
  HarvestResult result;
  for (auto& p : parts) {
    result.rejected += p.rejected;
    for (auto& t : p.triples) result.triples.push_back(std::move(t));
  }
  return result;
}

double SampleLoss(std::span<const Triple> sample,
                  const std::function<double(const Triple&)>& probability) {
  if (sample.empty()) throw std::invalid_argument("sample loss of an empty sample");
  double sum = 0.0;
  for (const Triple& t : sample) sum += -std::log(probability(t));
  return sum / static_cast<double>(sample.size());
}

void DistillConfig::Validate() const {
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (enabled.empty()) throw ConfigError("at least one module kind must be distilled");
  for (ModuleKind k : enabled)
    if (!IsDistillable(k))
      throw ConfigError(std::string(ModuleKindName(k)) + " cannot be distilled");
  if (alpha && *alpha <= 0.0) throw ConfigError("alpha must be positive");
  if (min_count && *min_count < 0.0) throw ConfigError("min_count must be non-negative");
}

void to_json(nlohmann::json& j, const DistillConfig& c) {
  std::vector<std::string> kinds;
  for (ModuleKind k : c.enabled) kinds.emplace_back(ModuleKindName(k));
  j = {{"epochs", c.epochs}, {"seed", c.seed}, {"enabled", kinds}};
  if (c.alpha) j["alpha"] = *c.alpha;
  if (c.min_count) j["min_count"] = *c.min_count;
}

void from_json(const nlohmann::json& j, DistillConfig& c) {
  c = DistillConfig{};
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  if (j.contains("enabled")) {
    c.enabled.clear();
    for (const auto& n : j.at("enabled")) {
      auto k = ParseModuleKind(n.get<std::string>());
      if (!k) throw ConfigError("unknown module kind '" + n.get<std::string>() + "'");
      c.enabled.insert(*k);
    }
  }
  if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
  if (j.contains("min_count")) c.min_count = j.at("min_count").get<double>();
}

nlohmann::ordered_json TrainingReportToJson(const TrainingReport& report) {
  auto by_kind = [](const auto& m) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [k, v] : m) j[std::string(ModuleKindName(k))] = v;
    return j;
  };
  nlohmann::ordered_json j;
  j["consumed"] = by_kind(report.consumed);
  j["skipped"] = report.skipped;
  j["epoch_loss"] = report.epoch_loss;
  j["epoch_loss_by_kind"] = by_kind(report.epoch_loss_by_kind);
  j["table_size"] = by_kind(report.table_size);
  j["keys_at_threshold"] = by_kind(report.keys_at_threshold);
  return j;
}

namespace {

// Mean sample loss over samples (grouped by source question), overall and
// restricted to each kind.
void RecordLoss(const std::vector<const Triple*>& triples, const StudentSet& students,
                TrainingReport* report) {
  auto prob = [&](const Triple& t) {
    return students.at(t.module_kind)->Probability(t.Input(), t.pseudo_label);
  };
  auto mean_loss = [&](std::optional<ModuleKind> only) {
    std::map<std::string, std::vector<Triple>> samples;
    for (const Triple* t : triples)
      if (!only || t->module_kind == *only) samples[t->source_qid].push_back(*t);
    if (samples.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& [qid, sample] : samples) sum += SampleLoss(sample, prob);
    return sum / static_cast<double>(samples.size());
  };
  report->epoch_loss.push_back(mean_loss(std::nullopt));
  for (const auto& [kind, student] : students) {
    bool any = false;
    for (const Triple* t : triples) any = any || t->module_kind == kind;
    if (any) report->epoch_loss_by_kind[kind].push_back(mean_loss(kind));
  }
}

}  // namespace

TrainResult Train(const StudentSet& students, const std::vector<Triple>& triples,
                  const DistillConfig& config) {
  config.Validate();
  TrainResult result;
  for (const auto& [kind, student] : students) {
    if (!student) throw ConfigError("null student");
    result.students[kind] =
        config.enabled.count(kind)
            ? student->Clone(config.alpha.value_or(student->alpha()),
                             config.min_count.value_or(student->min_count()))
            : student;
  }
  for (ModuleKind k : config.enabled)
    if (!result.students.count(k))
      throw ConfigError("no student for " + std::string(ModuleKindName(k)));

  std::vector<const Triple*> active;
  for (const Triple& t : triples) {
    if (config.enabled.count(t.module_kind)) {
      active.push_back(&t);
    } else {
      ++result.report.skipped;
    }
  }
  StudentSet trained;
  for (ModuleKind k : config.enabled) trained[k] = result.students[k];

  TrainingReport& report = result.report;
  for (ModuleKind k : config.enabled) report.consumed[k] = 0;
  for (const Triple* t : active) ++report.consumed[t->module_kind];
  RecordLoss(active, trained, &report);

  std::vector<PhaseToken::Scope> scopes;
  for (auto& [k, s] : trained) scopes.push_back(s->Phase()->BeginTraining());
  Rng rng(HashCombine(config.seed, 0x747261696eULL));
  std::vector<const Triple*> order = active;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.Shuffle(order);
    for (const Triple* t : order) trained[t->module_kind]->Update(t->Input(), t->pseudo_label, 1.0);
    RecordLoss(active, trained, &report);
  }
  scopes.clear();

  for (auto& [k, s] : trained) {
    report.table_size[k] = s->table().size();
    report.keys_at_threshold[k] = s->KeysAtThreshold();
  }
  return result;
}

StudentSet MakeStudents(const Toolkit& kit, const RegistryConfig& config) {
  StudentSet students;
  for (ModuleKind k : kDistillableKinds)
    students[k] = std::make_shared<TableStudent>(MakeBaselineStudent(kit, config, k),
                                                 kit.reader, config.alpha, config.min_count);
  return students;
}

ModuleRegistry BindStudents(const ModuleRegistry& base, const StudentSet& students,
                            const std::set<ModuleKind>& kinds) {
  ModuleRegistry out = base;
  for (ModuleKind k : kinds) {
    auto it = students.find(k);
    if (it == students.end())
      throw RegistryError("no student for " + std::string(ModuleKindName(k)));
    out = out.Replace(k, it->second);
  }
  return out;
}

}  // namespace stepdistill
