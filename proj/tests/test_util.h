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

#ifndef CBM_TESTS_TEST_UTIL_H_
#define CBM_TESTS_TEST_UTIL_H_

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include "cbm/data_model.h"

namespace cbm::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("cbm_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline EmbeddingMatrix MakeEmbeddings(const MatrixXr& data, const std::string& prefix) {
  std::vector<std::string> ids;
  for (Eigen::Index i = 0; i < data.rows(); ++i) ids.push_back(prefix + std::to_string(i));
  return EmbeddingMatrix(data, ids);
}

}  // namespace cbm::testing

#endif  // CBM_TESTS_TEST_UTIL_H_
