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

// Visual sub-module backends and the registry that binds them to module
// kinds. find/exists are always served by the detector; the three
// distillable kinds are independently replaceable.

#ifndef STEPDISTILL_REGISTRY_H_
#define STEPDISTILL_REGISTRY_H_

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "stepdistill/adapter.h"
#include "stepdistill/dsl.h"
#include "stepdistill/query.h"
#include "stepdistill/trace.h"
#include "stepdistill/world.h"

namespace stepdistill {

struct SubTaskInput {
  ModuleKind kind = ModuleKind::kSimpleQuery;
  ScenePatch patch;
  std::string sub_question;
};

struct Prediction {
  std::string answer;
  // Sums to 1 over its support.
  std::vector<std::pair<std::string, double>> distribution;
};

struct BackendDescriptor {
  std::string name;
  bool trainable = false;
};

// Guards the single-writer training phase against concurrent evaluation.
class PhaseToken {
 public:
  class Scope {
   public:
    Scope(Scope&& other) noexcept : token_(std::exchange(other.token_, nullptr)),
                                    training_(other.training_) {}
    Scope& operator=(Scope&&) = delete;
    ~Scope();

   private:
    friend class PhaseToken;
    Scope(PhaseToken* token, bool training) : token_(token), training_(training) {}
    PhaseToken* token_;
    bool training_;
  };

  // Throws PhaseError if an evaluation or another training phase is open.
  Scope BeginTraining();
  // Throws PhaseError if a training phase is open.
  Scope BeginEvaluation();
  bool training() const;
  bool evaluating() const;

 private:
  mutable std::mutex mu_;
  int readers_ = 0;
  bool training_ = false;
};

class Backend {
 public:
  virtual ~Backend() = default;

  // Deterministic given backend state; safe for concurrent callers.
  virtual Prediction Predict(const SubTaskInput& input) const = 0;
  virtual BackendDescriptor Descriptor() const = 0;
  // Reconstructible description (type + parameters).
  virtual nlohmann::ordered_json Describe() const = 0;

  virtual bool Trainable() const { return false; }
  // Throws RegistryError for frozen backends.
  virtual void Update(const SubTaskInput& input, const std::string& pseudo_label,
                      double weight);
  virtual PhaseToken* Phase() { return nullptr; }
};

using BackendPtr = std::shared_ptr<Backend>;

class Detector {
 public:
  Detector(WorldConfig world, double miss_rate, uint64_t seed);

  // One crop per visible object denoted by `name`, ascending id, each with
  // origin_label = name. Misses are a fixed function of (seed, scene, object).
  std::vector<ScenePatch> Find(const ScenePatch& receiver, std::string_view name) const;
  bool Exists(const ScenePatch& receiver, std::string_view name) const;
  bool Exists(const std::vector<ScenePatch>& receivers, std::string_view name) const;

  bool Missed(const SceneGraph& scene, ObjectId id) const;
  double miss_rate() const { return miss_rate_; }
  uint64_t seed() const { return seed_; }
  std::string Name() const;

 private:
  WorldConfig world_;
  double miss_rate_;
  uint64_t seed_;
};

// Ground-truth answers over the sub-image; the desk-scale teacher.
class OracleBackend : public Backend {
 public:
  explicit OracleBackend(std::shared_ptr<const QuestionReader> reader);

  Prediction Predict(const SubTaskInput& input) const override;
  BackendDescriptor Descriptor() const override { return {"oracle", false}; }
  nlohmann::ordered_json Describe() const override;

  // Answer for a (sub-image, sub-question) pair.
  std::string Answer(const ScenePatch& patch, std::string_view question) const;

 private:
  std::shared_ptr<const QuestionReader> reader_;
};

struct CorruptionProfile {
  uint64_t seed = 0;
  double rate = 0.3;  // fraction of student keys answered through the permutation
};

// Canonical key a student conditions on.
struct StudentKey {
  ModuleKind kind = ModuleKind::kSimpleQuery;
  std::string question;   // canonical question form
  std::string signature;  // sorted "name(attr,...)" of visible objects

  std::string ToString() const;
};

StudentKey MakeStudentKey(const SubTaskInput& input, const QuestionReader& reader);

// Fixed bijections over each label vocabulary (yes/no, every attribute
// family, all nouns, each option set): a single cycle, so no label maps to
// itself.
class LabelPermutation {
 public:
  LabelPermutation(const WorldConfig& world, uint64_t seed);

  // Maps `label` within the vocabulary implied by `query`. Labels outside
  // every vocabulary are returned unchanged.
  std::string Apply(const std::string& label, const StructuredQuery& query) const;

 private:
  static std::map<std::string, std::string> Cycle(std::vector<std::string> vocab,
                                                  uint64_t seed);
  uint64_t seed_;
  std::map<std::string, std::string> yes_no_;
  std::map<std::string, std::map<std::string, std::string>> families_;
  std::map<std::string, std::string> nouns_;
};

// An imperfect pretrained student: ground-truth perception, but a fixed
// rate-fraction of keys answered through a label permutation.
class CorruptedBackend : public Backend {
 public:
  CorruptedBackend(std::shared_ptr<const QuestionReader> reader,
                   CorruptionProfile profile);

  Prediction Predict(const SubTaskInput& input) const override;
  BackendDescriptor Descriptor() const override;
  nlohmann::ordered_json Describe() const override;

  bool IsCorrupted(const StudentKey& key) const;
  const CorruptionProfile& profile() const { return profile_; }

 private:
  std::shared_ptr<const QuestionReader> reader_;
  CorruptionProfile profile_;
  LabelPermutation permutation_;
};

// Count-table student layered over a frozen base backend.
class TableStudent : public Backend {
 public:
  using Counts = std::map<std::string, double>;

  TableStudent(std::shared_ptr<const Backend> base,
               std::shared_ptr<const QuestionReader> reader, double alpha = 1.0,
               double min_count = 3.0);

  // Table argmax (ties to the lexicographically smallest label) once the
  // key's total count reaches min_count, otherwise exactly the base.
  Prediction Predict(const SubTaskInput& input) const override;
  BackendDescriptor Descriptor() const override;
  nlohmann::ordered_json Describe() const override;
  bool Trainable() const override { return true; }
  void Update(const SubTaskInput& input, const std::string& pseudo_label,
              double weight) override;
  PhaseToken* Phase() override { return &phase_; }

  // Add-alpha smoothed probability of `label` at the input's key, over the
  // query's candidate labels plus every label observed at the key.
  double Probability(const SubTaskInput& input, const std::string& label) const;

  const std::map<std::string, Counts>& table() const { return table_; }
  double alpha() const { return alpha_; }
  double min_count() const { return min_count_; }
  size_t KeysAtThreshold() const;
  const Backend& base() const { return *base_; }
  std::shared_ptr<const Backend> base_ptr() const { return base_; }

  // Deep copy of the table over the same base.
  std::shared_ptr<TableStudent> Clone() const;
  // Same, with different smoothing or threshold.
  std::shared_ptr<TableStudent> Clone(double alpha, double min_count) const;

 private:
  friend std::pair<std::shared_ptr<TableStudent>, ModuleKind> LoadStudent(
      const nlohmann::json& j, std::shared_ptr<const QuestionReader> reader);

  std::vector<std::pair<std::string, double>> Smoothed(
      const SubTaskInput& input, const std::string& key, const Counts* counts) const;

  std::shared_ptr<const Backend> base_;
  std::shared_ptr<const QuestionReader> reader_;
  double alpha_;
  double min_count_;
  std::map<std::string, Counts> table_;
  PhaseToken phase_;
};

// Versioned on-disk form of a table student, including its base.
inline constexpr int kStudentFormatVersion = 1;
nlohmann::ordered_json SaveStudent(const TableStudent& student, ModuleKind kind);
// Returns the student and the module kind it was trained for.
std::pair<std::shared_ptr<TableStudent>, ModuleKind> LoadStudent(
    const nlohmann::json& j, std::shared_ptr<const QuestionReader> reader);
// Rebuilds a frozen backend from Describe() output.
std::shared_ptr<const Backend> BackendFromDescription(
    const nlohmann::json& j, std::shared_ptr<const QuestionReader> reader);

struct RegistryConfig {
  double corruption_rate = 0.3;
  uint64_t corruption_seed = 7;
  double miss_rate = 0.05;
  uint64_t detector_seed = 11;
  double alpha = 1.0;
  double min_count = 3.0;
};

void to_json(nlohmann::json& j, const RegistryConfig& c);
void from_json(const nlohmann::json& j, RegistryConfig& c);

class ModuleRegistry {
 public:
  ModuleRegistry(std::shared_ptr<const Detector> detector,
                 std::shared_ptr<const TeacherInputAdapter> adapter,
                 BackendPtr verify_property, BackendPtr best_text_match,
                 BackendPtr simple_query);

  const Detector& detector() const { return *detector_; }
  std::shared_ptr<const Detector> detector_ptr() const { return detector_; }
  const TeacherInputAdapter& adapter() const { return *adapter_; }
  std::shared_ptr<const TeacherInputAdapter> adapter_ptr() const { return adapter_; }

  // Throws RegistryError for find/exists.
  const BackendPtr& backend(ModuleKind kind) const;

  // New registry with one distillable binding changed. Throws RegistryError
  // for find/exists.
  ModuleRegistry Replace(ModuleKind kind, BackendPtr backend) const;

  // Adapts the call and dispatches it to the bound backend. Throws on
  // malformed arguments or backend failure.
  Prediction Invoke(ModuleKind kind, const ScenePatch& receiver,
                    const std::vector<Value>& args,
                    const std::optional<std::string>& center_word) const;

  // Opens an evaluation scope on every trainable backend.
  std::vector<PhaseToken::Scope> BeginEvaluation() const;

  std::string Describe() const;

 private:
  static size_t Slot(ModuleKind kind);
  std::shared_ptr<const Detector> detector_;
  std::shared_ptr<const TeacherInputAdapter> adapter_;
  BackendPtr backends_[3];
};

// Shared construction helpers.
struct Toolkit {
  WorldConfig world;
  std::shared_ptr<const QuestionReader> reader;
  std::shared_ptr<const TeacherInputAdapter> adapter;

  explicit Toolkit(WorldConfig w);
};

// Detector with the configured miss rate and fresh corrupted students.
ModuleRegistry MakeBaselineRegistry(const Toolkit& kit, const RegistryConfig& config);
// Detector with the configured miss rate, all three kinds on the teacher.
ModuleRegistry MakeTeacherRegistry(const Toolkit& kit, const RegistryConfig& config);
// Miss-free detector and the teacher everywhere.
ModuleRegistry MakeOracleRegistry(const Toolkit& kit, const RegistryConfig& config);
// The corrupted student a baseline registry binds for `kind`.
std::shared_ptr<CorruptedBackend> MakeBaselineStudent(const Toolkit& kit,
                                                      const RegistryConfig& config,
                                                      ModuleKind kind);

}  // namespace stepdistill

#endif  // STEPDISTILL_REGISTRY_H_
