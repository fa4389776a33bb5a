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

#ifndef STEPDISTILL_ERRORS_H_
#define STEPDISTILL_ERRORS_H_

#include <stdexcept>
#include <string>

namespace stepdistill {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AdapterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RegistryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when training and evaluation overlap on the same student.
class PhaseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ServiceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SplitOverlapError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A pipeline stage's upstream file or manifest is absent.
class MissingArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An upstream file no longer matches the checksum its manifest recorded.
class ChecksumMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace stepdistill

#endif  // STEPDISTILL_ERRORS_H_
