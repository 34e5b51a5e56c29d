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

#ifndef CBM_PIPELINE_H_
#define CBM_PIPELINE_H_

// Batch pipeline stages behind the `cbm` subcommands. Each stage reads its
// inputs from the paths in PipelineConfig, writes one JSON report (plus the
// model artifact for training) into the output directory and echoes the fully
// resolved config into that report.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cbm/bottleneck.h"
#include "cbm/selection.h"
#include "json.hpp"

namespace cbm {

struct PipelinePaths {
  std::filesystem::path images;       // labeled image embeddings (CBV1)
  std::filesystem::path labels;       // label JSON for `images`
  std::filesystem::path concepts;     // concept text embeddings (CBV1)
  std::filesystem::path pool;         // concept pool JSON
  std::filesystem::path target_set;   // unlabeled X for V(c); defaults to images
  std::filesystem::path test_images;  // optional held-out split
  std::filesystem::path test_labels;
  std::filesystem::path out = "out";
  std::filesystem::path model;        // defaults to <out>/model.cbm
};

struct PipelineConfig {
  PipelinePaths paths;
  SelectionConfig selection;
  TrainConfig train;
  // Shots settings swept by `train`; score/select accept a single entry.
  std::vector<std::optional<int>> shots = {std::nullopt};
  bool normalize = true;
  int top_k = 3;
  int extremes = 5;
  bool emit_score_table = true;
  std::string image_id;
};

// Parses "key = value" lines ('#' starts a comment) into `config`. Relative
// paths are resolved against `base_dir`. Unknown keys are a usage error.
void ApplyConfigText(const std::string& text, const std::filesystem::path& base_dir,
                     PipelineConfig* config);
// Sets one key; shared by the config file and the command line.
void ApplyConfigValue(const std::string& key, const std::string& value,
                      const std::filesystem::path& base_dir, PipelineConfig* config);
std::vector<std::optional<int>> ParseShotsList(const std::string& text);

nlohmann::ordered_json ConfigToJson(const PipelineConfig& config);

// Writes `doc` as indented JSON followed by a newline.
void WriteJson(const std::filesystem::path& path, const nlohmann::ordered_json& doc);

struct PipelineInputs {
  LabeledImageSet images;
  EmbeddingMatrix concepts;
  ConceptPool pool;
  EmbeddingMatrix target_set;
};

PipelineInputs LoadInputs(const PipelineConfig& config);

nlohmann::ordered_json ScoreReport(const PipelineConfig& config,
                                   const PipelineInputs& inputs,
                                   const PoolScores& scores);
nlohmann::ordered_json SelectionReport(const PipelineConfig& config,
                                       const PipelineInputs& inputs,
                                       const SelectionResult& result);

// Stages. Each returns the report it wrote.
nlohmann::ordered_json RunScore(const PipelineConfig& config);
nlohmann::ordered_json RunSelect(const PipelineConfig& config);
nlohmann::ordered_json RunTrain(const PipelineConfig& config);
nlohmann::ordered_json RunPredict(const PipelineConfig& config);
nlohmann::ordered_json RunExplain(const PipelineConfig& config);
nlohmann::ordered_json RunEval(const PipelineConfig& config);

}  // namespace cbm

#endif  // CBM_PIPELINE_H_
