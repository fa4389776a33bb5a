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

#include "stepdistill/registry.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "stepdistill/errors.h"
#include "stepdistill/rng.h"

namespace stepdistill {

// ---------------------------------------------------------------------------
// PhaseToken

PhaseToken::Scope::~Scope() {
  if (!token_) return;
  std::lock_guard<std::mutex> lock(token_->mu_);
  if (training_) {
    token_->training_ = false;
  } else {
    --token_->readers_;
  }
}

PhaseToken::Scope PhaseToken::BeginTraining() {
  std::lock_guard<std::mutex> lock(mu_);
  if (training_) throw PhaseError("training phase already open");
  if (readers_ > 0) throw PhaseError("cannot train while an evaluation is running");
  training_ = true;
  return Scope(this, true);
}

PhaseToken::Scope PhaseToken::BeginEvaluation() {
  std::lock_guard<std::mutex> lock(mu_);
  if (training_) throw PhaseError("cannot evaluate while training is running");
  ++readers_;
  return Scope(this, false);
}

bool PhaseToken::training() const {
  std::lock_guard<std::mutex> lock(mu_);
  return training_;
}

bool PhaseToken::evaluating() const {
  std::lock_guard<std::mutex> lock(mu_);
  return readers_ > 0;
}

void Backend::Update(const SubTaskInput&, const std::string&, double) {
  throw RegistryError(Descriptor().name + " is not trainable");
}

namespace {

std::vector<std::pair<std::string, double>> OneHot(
    const std::vector<std::string>& candidates, const std::string& answer) {
  std::vector<std::pair<std::string, double>> dist;
  for (const auto& c : candidates) dist.emplace_back(c, c == answer ? 1.0 : 0.0);
  if (std::find(candidates.begin(), candidates.end(), answer) == candidates.end())
    dist.emplace_back(answer, 1.0);
  return dist;
}

}  // namespace

// ---------------------------------------------------------------------------
// Detector

Detector::Detector(WorldConfig world, double miss_rate, uint64_t seed)
    : world_(std::move(world)), miss_rate_(miss_rate), seed_(seed) {
  if (miss_rate < 0.0 || miss_rate > 1.0)
    throw ConfigError("detector miss rate outside [0,1]");
}

bool Detector::Missed(const SceneGraph& scene, ObjectId id) const {
  if (miss_rate_ <= 0.0) return false;
  const uint64_t h = HashCombine(
      seed_, Fnv1a64(scene.scene_id + "#" + std::to_string(id)));
  return HashToUnit(h) < miss_rate_;
}

std::vector<ScenePatch> Detector::Find(const ScenePatch& receiver,
                                       std::string_view name) const {
  std::vector<ScenePatch> out;
  if (!receiver.scene()) return out;
  for (const SceneObject* obj : receiver.VisibleObjects()) {
    if (!ObjectMatches(*obj, name, world_)) continue;
    if (Missed(*receiver.scene(), obj->id)) continue;
    out.push_back(Crop(receiver.scene(), obj->bbox, std::string(name)));
  }
  return out;
}

bool Detector::Exists(const ScenePatch& receiver, std::string_view name) const {
  return !Find(receiver, name).empty();
}

bool Detector::Exists(const std::vector<ScenePatch>& receivers,
                      std::string_view name) const {
  return std::any_of(receivers.begin(), receivers.end(),
                     [&](const ScenePatch& p) { return Exists(p, name); });
}

std::string Detector::Name() const {
  std::ostringstream os;
  os << "detector(miss=" << miss_rate_ << ")";
  return os.str();
}

// ---------------------------------------------------------------------------
// OracleBackend

OracleBackend::OracleBackend(std::shared_ptr<const QuestionReader> reader)
    : reader_(std::move(reader)) {}

std::string OracleBackend::Answer(const ScenePatch& patch,
                                  std::string_view question) const {
  auto query = reader_->Read(question);
  if (!query) return std::string(kUnknown);
  return OracleAnswer(patch, *query, reader_->world());
}

Prediction OracleBackend::Predict(const SubTaskInput& input) const {
  auto query = reader_->Read(input.sub_question);
  if (!query) {
    const std::string unknown(kUnknown);
    return {unknown, {{unknown, 1.0}}};
  }
  Prediction p;
  p.answer = OracleAnswer(input.patch, *query, reader_->world());
  p.distribution = OneHot(reader_->Candidates(*query), p.answer);
  return p;
}

nlohmann::ordered_json OracleBackend::Describe() const {
  return {{"type", "oracle"}};
}

// ---------------------------------------------------------------------------
// Student keys and corruption

std::string StudentKey::ToString() const {
  return std::string(ModuleKindName(kind)) + "|" + question + "|" + signature;
}

StudentKey MakeStudentKey(const SubTaskInput& input, const QuestionReader& reader) {
  StudentKey key;
  key.kind = input.kind;
  if (auto q = reader.Read(input.sub_question)) {
    key.question = CanonicalForm(*q);
  } else {
    std::string raw;
    for (char c : input.sub_question)
      raw.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    key.question = "raw:" + raw;
  }
  std::vector<std::string> parts;
  if (input.patch.scene()) {
    for (const SceneObject* o : input.patch.VisibleObjects()) {
      std::string s = o->name + "(";
      for (size_t i = 0; i < o->attributes.size(); ++i) {
        if (i) s += ",";
        s += o->attributes[i];
      }
      s += ")";
      parts.push_back(std::move(s));
    }
  }
  std::sort(parts.begin(), parts.end());
  if (parts.empty()) {
    key.signature = "-";
  } else {
    for (size_t i = 0; i < parts.size(); ++i) {
      if (i) key.signature += ";";
      key.signature += parts[i];
    }
  }
  return key;
}

LabelPermutation::LabelPermutation(const WorldConfig& world, uint64_t seed)
    : seed_(seed) {
  yes_no_ = Cycle({std::string(kYes), std::string(kNo)}, seed);
  for (const auto& fam : world.families)
    families_[fam.name] = Cycle(fam.values, HashCombine(seed, Fnv1a64(fam.name)));
  nouns_ = Cycle(world.Nouns(), HashCombine(seed, Fnv1a64("nouns")));
}

std::map<std::string, std::string> LabelPermutation::Cycle(std::vector<std::string> vocab,
                                                          uint64_t seed) {
  std::sort(vocab.begin(), vocab.end());
  vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
  Rng rng(seed);
  rng.Shuffle(vocab);
  std::map<std::string, std::string> m;
  for (size_t i = 0; i < vocab.size(); ++i) m[vocab[i]] = vocab[(i + 1) % vocab.size()];
  return m;
}

std::string LabelPermutation::Apply(const std::string& label,
                                    const StructuredQuery& query) const {
  auto lookup = [&](const std::map<std::string, std::string>& m) {
    auto it = m.find(label);
    return it == m.end() ? label : it->second;
  };
  if (const auto* q = std::get_if<ChooseOption>(&query)) {
    std::vector<std::string> sorted = q->options;
    std::sort(sorted.begin(), sorted.end());
    std::string joined;
    for (const auto& s : sorted) joined += s + ",";
    return lookup(Cycle(q->options, HashCombine(seed_, Fnv1a64(joined))));
  }
  if (const auto* q = std::get_if<AskAttributeFamily>(&query)) {
    auto it = families_.find(q->family);
    return it == families_.end() ? label : lookup(it->second);
  }
  if (std::holds_alternative<AskName>(query) ||
      std::holds_alternative<KindWithAttribute>(query))
    return lookup(nouns_);
  return lookup(yes_no_);
}

CorruptedBackend::CorruptedBackend(std::shared_ptr<const QuestionReader> reader,
                                   CorruptionProfile profile)
    : reader_(std::move(reader)),
      profile_(profile),
      permutation_(reader_->world(), HashCombine(profile.seed, 0x7065726dULL)) {
  if (profile.rate < 0.0 || profile.rate > 1.0)
    throw ConfigError("corruption rate outside [0,1]");
}

bool CorruptedBackend::IsCorrupted(const StudentKey& key) const {
  if (profile_.rate <= 0.0) return false;
  return HashToUnit(HashCombine(profile_.seed, Fnv1a64(key.ToString()))) < profile_.rate;
}

Prediction CorruptedBackend::Predict(const SubTaskInput& input) const {
  auto query = reader_->Read(input.sub_question);
  if (!query) {
    const std::string unknown(kUnknown);
    return {unknown, {{unknown, 1.0}}};
  }
  std::string answer = OracleAnswer(input.patch, *query, reader_->world());
  if (IsCorrupted(MakeStudentKey(input, *reader_)))
    answer = permutation_.Apply(answer, *query);
  Prediction p;
  p.distribution = OneHot(reader_->Candidates(*query), answer);
  p.answer = std::move(answer);
  return p;
}

BackendDescriptor CorruptedBackend::Descriptor() const {
  std::ostringstream os;
  os << "corrupted(rate=" << profile_.rate << ",seed=" << profile_.seed << ")";
  return {os.str(), false};
}

nlohmann::ordered_json CorruptedBackend::Describe() const {
  return {{"type", "corrupted"}, {"seed", profile_.seed}, {"rate", profile_.rate}};
}

// ---------------------------------------------------------------------------
// TableStudent

TableStudent::TableStudent(std::shared_ptr<const Backend> base,
                           std::shared_ptr<const QuestionReader> reader, double alpha,
                           double min_count)
    : base_(std::move(base)), reader_(std::move(reader)), alpha_(alpha),
      min_count_(min_count) {
  if (!base_) throw ConfigError("table student needs a base backend");
  if (alpha_ <= 0.0) throw ConfigError("smoothing alpha must be positive");
  if (min_count_ < 0.0) throw ConfigError("min_count must be non-negative");
}

std::vector<std::pair<std::string, double>> TableStudent::Smoothed(
    const SubTaskInput& input, const std::string& key, const Counts* counts) const {
  (void)key;
  std::vector<std::string> labels;
  if (auto q = reader_->Read(input.sub_question)) labels = reader_->Candidates(*q);
  if (counts) {
    for (const auto& [label, c] : *counts)
      if (std::find(labels.begin(), labels.end(), label) == labels.end())
        labels.push_back(label);
  }
  if (labels.empty()) labels.push_back(std::string(kUnknown));
  double total = 0.0;
  if (counts)
    for (const auto& [label, c] : *counts) total += c;
  const double denom = total + alpha_ * static_cast<double>(labels.size());
  std::vector<std::pair<std::string, double>> dist;
  for (const auto& l : labels) {
    double c = 0.0;
    if (counts) {
      auto it = counts->find(l);
      if (it != counts->end()) c = it->second;
    }
    dist.emplace_back(l, (c + alpha_) / denom);
  }
  return dist;
}

Prediction TableStudent::Predict(const SubTaskInput& input) const {
  const std::string key = MakeStudentKey(input, *reader_).ToString();
  auto it = table_.find(key);
  double total = 0.0;
  if (it != table_.end())
    for (const auto& [label, c] : it->second) total += c;
  if (it == table_.end() || total < min_count_ || total <= 0.0)
    return base_->Predict(input);

  Prediction p;
  p.distribution = Smoothed(input, key, &it->second);
  double best = -1.0;
  for (const auto& [label, prob] : p.distribution) {
    if (prob > best || (prob == best && label < p.answer)) {
      best = prob;
      p.answer = label;
    }
  }
  return p;
}

double TableStudent::Probability(const SubTaskInput& input,
                                 const std::string& label) const {
  const std::string key = MakeStudentKey(input, *reader_).ToString();
  auto it = table_.find(key);
  const auto dist = Smoothed(input, key, it == table_.end() ? nullptr : &it->second);
  for (const auto& [l, p] : dist)
    if (l == label) return p;
  // Unseen label: the mass it would receive as one more smoothed candidate.
  double total = 0.0;
  if (it != table_.end())
    for (const auto& [l, c] : it->second) total += c;
  return alpha_ / (total + alpha_ * static_cast<double>(dist.size() + 1));
}

void TableStudent::Update(const SubTaskInput& input, const std::string& pseudo_label,
                          double weight) {
  if (phase_.evaluating())
    throw PhaseError("table student updated during evaluation");
  if (!(weight >= 0.0) || !std::isfinite(weight))
    throw ConfigError("update weight must be finite and non-negative");
  table_[MakeStudentKey(input, *reader_).ToString()][pseudo_label] += weight;
}

size_t TableStudent::KeysAtThreshold() const {
  size_t n = 0;
  for (const auto& [key, counts] : table_) {
    double total = 0.0;
    for (const auto& [l, c] : counts) total += c;
    if (total >= min_count_ && total > 0.0) ++n;
  }
  return n;
}

BackendDescriptor TableStudent::Descriptor() const {
  return {"table(" + base_->Descriptor().name + ")", true};
}

nlohmann::ordered_json TableStudent::Describe() const {
  return {{"type", "table"}, {"alpha", alpha_}, {"min_count", min_count_},
          {"base", base_->Describe()}};
}

std::shared_ptr<TableStudent> TableStudent::Clone() const {
  return Clone(alpha_, min_count_);
}

std::shared_ptr<TableStudent> TableStudent::Clone(double alpha, double min_count) const {
  auto copy = std::make_shared<TableStudent>(base_, reader_, alpha, min_count);
  copy->table_ = table_;
  return copy;
}

nlohmann::ordered_json SaveStudent(const TableStudent& student, ModuleKind kind) {
  nlohmann::ordered_json table = nlohmann::ordered_json::array();
  for (const auto& [key, counts] : student.table()) {
    nlohmann::ordered_json c;
    for (const auto& [label, n] : counts) c[label] = n;
    table.push_back({{"key", key}, {"counts", c}});
  }
  nlohmann::ordered_json j;
  j["format"] = "stepdistill.table_student";
  j["version"] = kStudentFormatVersion;
  j["module_kind"] = ModuleKindName(kind);
  j["alpha"] = student.alpha();
  j["min_count"] = student.min_count();
  j["base"] = student.base().Describe();
  j["table"] = table;
  return j;
}

std::shared_ptr<const Backend> BackendFromDescription(
    const nlohmann::json& j, std::shared_ptr<const QuestionReader> reader) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "oracle") return std::make_shared<OracleBackend>(std::move(reader));
  if (type == "corrupted") {
    CorruptionProfile profile{j.at("seed").get<uint64_t>(), j.at("rate").get<double>()};
    return std::make_shared<CorruptedBackend>(std::move(reader), profile);
  }
  throw FormatError("cannot rebuild backend of type '" + type + "'");
}

std::pair<std::shared_ptr<TableStudent>, ModuleKind> LoadStudent(
    const nlohmann::json& j, std::shared_ptr<const QuestionReader> reader) {
  try {
    if (j.at("format").get<std::string>() != "stepdistill.table_student")
      throw FormatError("not a table student file");
    const int version = j.at("version").get<int>();
    if (version != kStudentFormatVersion)
      throw FormatError("unsupported student format version " + std::to_string(version));
    auto kind = ParseModuleKind(j.at("module_kind").get<std::string>());
    if (!kind || !IsDistillable(*kind)) throw FormatError("bad student module kind");
    auto base = BackendFromDescription(j.at("base"), reader);
    auto student = std::make_shared<TableStudent>(
        base, reader, j.at("alpha").get<double>(), j.at("min_count").get<double>());
    for (const auto& row : j.at("table")) {
      auto& counts = student->table_[row.at("key").get<std::string>()];
      for (const auto& [label, n] : row.at("counts").items()) counts[label] = n.get<double>();
    }
    return {student, *kind};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed student file: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Registry

void to_json(nlohmann::json& j, const RegistryConfig& c) {
  j = {{"corruption_rate", c.corruption_rate}, {"corruption_seed", c.corruption_seed},
       {"miss_rate", c.miss_rate},             {"detector_seed", c.detector_seed},
       {"alpha", c.alpha},                     {"min_count", c.min_count}};
}

void from_json(const nlohmann::json& j, RegistryConfig& c) {
  c = RegistryConfig{};
  c.corruption_rate = j.value("corruption_rate", c.corruption_rate);
  c.corruption_seed = j.value("corruption_seed", c.corruption_seed);
  c.miss_rate = j.value("miss_rate", c.miss_rate);
  c.detector_seed = j.value("detector_seed", c.detector_seed);
  c.alpha = j.value("alpha", c.alpha);
  c.min_count = j.value("min_count", c.min_count);
}

ModuleRegistry::ModuleRegistry(std::shared_ptr<const Detector> detector,
                               std::shared_ptr<const TeacherInputAdapter> adapter,
                               BackendPtr verify_property, BackendPtr best_text_match,
                               BackendPtr simple_query)
    : detector_(std::move(detector)), adapter_(std::move(adapter)),
      backends_{std::move(verify_property), std::move(best_text_match),
                std::move(simple_query)} {
  if (!detector_ || !adapter_) throw RegistryError("registry needs a detector and adapter");
  for (const auto& b : backends_)
    if (!b) throw RegistryError("every distillable module kind must be bound");
}

size_t ModuleRegistry::Slot(ModuleKind kind) {
  switch (kind) {
    case ModuleKind::kVerifyProperty: return 0;
    case ModuleKind::kBestTextMatch: return 1;
    case ModuleKind::kSimpleQuery: return 2;
    default:
      throw RegistryError(std::string(ModuleKindName(kind)) +
                          " is bound to the detector and cannot be replaced");
  }
}

const BackendPtr& ModuleRegistry::backend(ModuleKind kind) const {
  return backends_[Slot(kind)];
}

ModuleRegistry ModuleRegistry::Replace(ModuleKind kind, BackendPtr backend) const {
  const size_t slot = Slot(kind);
  if (!backend) throw RegistryError("cannot bind a null backend");
  ModuleRegistry copy = *this;
  copy.backends_[slot] = std::move(backend);
  return copy;
}

Prediction ModuleRegistry::Invoke(ModuleKind kind, const ScenePatch& receiver,
                                  const std::vector<Value>& args,
                                  const std::optional<std::string>& center_word) const {
  SubTaskInput input;
  input.kind = kind;
  input.patch = receiver;
  input.sub_question = adapter_->SubQuestion(kind, args, center_word);
  return backend(kind)->Predict(input);
}

std::vector<PhaseToken::Scope> ModuleRegistry::BeginEvaluation() const {
  std::vector<PhaseToken::Scope> scopes;
  for (const auto& b : backends_) {
    if (PhaseToken* t = b->Phase()) scopes.push_back(t->BeginEvaluation());
  }
  return scopes;
}

std::string ModuleRegistry::Describe() const {
  return "find/exists=" + detector_->Name() +
         " verify_property=" + backends_[0]->Descriptor().name +
         " best_text_match=" + backends_[1]->Descriptor().name +
         " simple_query=" + backends_[2]->Descriptor().name;
}

Toolkit::Toolkit(WorldConfig w) : world(std::move(w)) {
  world.Validate();
  reader = std::make_shared<const QuestionReader>(world);
  adapter = std::make_shared<const TeacherInputAdapter>(world);
}

std::shared_ptr<CorruptedBackend> MakeBaselineStudent(const Toolkit& kit,
                                                      const RegistryConfig& config,
                                                      ModuleKind kind) {
  CorruptionProfile profile;
  profile.seed = HashCombine(config.corruption_seed, static_cast<uint64_t>(kind));
  profile.rate = config.corruption_rate;
  return std::make_shared<CorruptedBackend>(kit.reader, profile);
}

ModuleRegistry MakeBaselineRegistry(const Toolkit& kit, const RegistryConfig& config) {
  auto detector = std::make_shared<const Detector>(kit.world, config.miss_rate,
                                                   config.detector_seed);
  return ModuleRegistry(detector, kit.adapter,
                        MakeBaselineStudent(kit, config, ModuleKind::kVerifyProperty),
                        MakeBaselineStudent(kit, config, ModuleKind::kBestTextMatch),
                        MakeBaselineStudent(kit, config, ModuleKind::kSimpleQuery));
}

ModuleRegistry MakeTeacherRegistry(const Toolkit& kit, const RegistryConfig& config) {
  auto detector = std::make_shared<const Detector>(kit.world, config.miss_rate,
                                                   config.detector_seed);
  auto teacher = std::make_shared<OracleBackend>(kit.reader);
  return ModuleRegistry(detector, kit.adapter, teacher, teacher, teacher);
}

ModuleRegistry MakeOracleRegistry(const Toolkit& kit, const RegistryConfig& config) {
  auto detector = std::make_shared<const Detector>(kit.world, 0.0, config.detector_seed);
  auto teacher = std::make_shared<OracleBackend>(kit.reader);
  return ModuleRegistry(detector, kit.adapter, teacher, teacher, teacher);
}

}  // namespace stepdistill
