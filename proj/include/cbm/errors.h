// Copyright 2026 The Authors.
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

#ifndef CBM_ERRORS_H_
#define CBM_ERRORS_H_

#include <stdexcept>
#include <string>

namespace cbm {

// Error categories. Each maps onto one process exit code in the CLI.
enum class ErrorKind {
  kUsage,       // bad flags or config values
  kSelection,   // impossible selection request (empty C_y, k > |S_y|)
  kFormat,      // malformed file
  kData,        // well-formed file with unusable values
  kReference,   // dangling id
  kPartition,   // concept assigned to more than one class
  kContract,    // precondition of a numeric routine violated
  kSampling,    // not enough labeled images for the requested shots
  kLookup,      // unknown image or class id
  kDivergence,  // non-finite loss during training
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// 1 usage/config, 2 data/format, 3 numerical divergence.
inline int ExitCodeFor(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage:
    case ErrorKind::kSelection:
      return 1;
    case ErrorKind::kDivergence:
      return 3;
    default:
      return 2;
  }
}

const char* ErrorKindName(ErrorKind kind);

[[noreturn]] inline void Fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace cbm

#endif  // CBM_ERRORS_H_
