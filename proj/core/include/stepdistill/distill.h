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

// Pseudo-label harvesting, per-sample step loss, and student training.

#ifndef STEPDISTILL_DISTILL_H_
#define STEPDISTILL_DISTILL_H_

#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stepdistill/adapter.h"
#include "stepdistill/registry.h"
#include "stepdistill/trace.h"

namespace stepdistill {

struct Triple {
  ScenePatch sub_image;
  std::string sub_question;
  std::string pseudo_label;
  ModuleKind module_kind = ModuleKind::kSimpleQuery;
  std::string source_qid;
  std::string question_type;
  int step_index = 0;

  SubTaskInput Input() const { return {module_kind, sub_image, sub_question}; }
};

nlohmann::ordered_json TripleToJson(const Triple& t);
Triple TripleFromJson(const nlohmann::json& j, const SceneLookup& scenes);
void WriteTriples(std::ostream& out, const std::vector<Triple>& triples);
std::vector<Triple> ReadTriples(std::istream& in, const SceneLookup& scenes);

struct HarvestResult {
  std::vector<Triple> triples;  // ordered by (trace order, step_index)
  size_t rejected = 0;          // steps the adapter refused
};

// One triple per distillable step of every trace, whatever the trace's
// outcome. `question_types` maps question ids to their type (missing ids get
// an empty type).
HarvestResult Harvest(const std::vector<ExecutionTrace>& traces,
                      const std::map<std::string, std::string>& question_types,
                      const Backend& teacher, const TeacherInputAdapter& adapter,
                      int workers = 1, AdapterAuditLog* audit = nullptr);

// Mean over the sample's steps of -log p(pseudo_label). Throws
// std::invalid_argument for an empty sample.
double SampleLoss(std::span<const Triple> sample,
                  const std::function<double(const Triple&)>& probability);

using StudentSet = std::map<ModuleKind, std::shared_ptr<TableStudent>>;

struct DistillConfig {
  int epochs = 1;
  uint64_t seed = 0;
  std::set<ModuleKind> enabled{std::begin(kDistillableKinds), std::end(kDistillableKinds)};
  std::optional<double> alpha;
  std::optional<double> min_count;

  // Throws ConfigError.
  void Validate() const;
};

void to_json(nlohmann::json& j, const DistillConfig& c);
void from_json(const nlohmann::json& j, DistillConfig& c);

struct TrainingReport {
  std::map<ModuleKind, size_t> consumed;  // triples applied per epoch
  size_t skipped = 0;                     // triples of kinds not enabled
  // Mean sample loss over the training triples, before training and after
  // each epoch.
  std::vector<double> epoch_loss;
  std::map<ModuleKind, std::vector<double>> epoch_loss_by_kind;
  std::map<ModuleKind, size_t> table_size;
  std::map<ModuleKind, size_t> keys_at_threshold;
};

nlohmann::ordered_json TrainingReportToJson(const TrainingReport& report);

struct TrainResult {
  StudentSet students;
  TrainingReport report;
};

// Copies the students (applying overrides) and applies every enabled triple
// `epochs` times in a per-epoch seeded shuffle. Disabled kinds are returned
// unchanged. Throws ConfigError when an enabled kind has no student.
TrainResult Train(const StudentSet& students, const std::vector<Triple>& triples,
                  const DistillConfig& config);

// Fresh untrained students over the baseline corrupted backends.
StudentSet MakeStudents(const Toolkit& kit, const RegistryConfig& config);

// Baseline registry with the given students bound.
ModuleRegistry BindStudents(const ModuleRegistry& base, const StudentSet& students,
                            const std::set<ModuleKind>& kinds);

}  // namespace stepdistill

#endif  // STEPDISTILL_DISTILL_H_
