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

#include "cbm/synth.h"

#include <cmath>
#include <random>

#include "cbm/errors.h"
#include "json.hpp"

namespace cbm {
namespace {

using json = nlohmann::ordered_json;

// Adds `scale` * N(0, 1) / sqrt(width) to coordinates [begin, begin + width).
void AddNoise(Eigen::Ref<VectorXr> v, int begin, int width, double scale,
              std::mt19937_64& rng) {
  if (scale == 0.0) return;
  std::normal_distribution<double> normal(0.0, 1.0);
  const double per_coord = scale / std::sqrt(static_cast<double>(width));
  for (int j = begin; j < begin + width; ++j) v(j) += per_coord * normal(rng);
}

EmbeddingMatrix MakeImages(const SynthConfig& config, int per_class, int total,
                           const std::string& prefix, std::mt19937_64& rng,
                           std::vector<int>* labels) {
  MatrixXr data = MatrixXr::Zero(total, config.dim);
  std::vector<std::string> ids;
  for (int i = 0; i < total; ++i) {
    const int y = per_class > 0 ? i / per_class : i % config.num_classes;
    VectorXr v = VectorXr::Zero(config.dim);
    v(y) = 1.0;
    AddNoise(v, 0, config.image_dims(), config.noise, rng);
    data.row(i) = v.transpose();
    ids.push_back(prefix + std::to_string(i));
    if (labels) labels->push_back(y);
  }
  return EmbeddingMatrix(std::move(data), std::move(ids));
}

}  // namespace

int SynthConfig::distractors_per_class() const {
  return static_cast<int>(std::lround(distractor_fraction * concepts_per_class));
}

int SynthConfig::image_dims() const { return num_classes + (dim - num_classes) / 2; }

void ValidateSynthConfig(const SynthConfig& config) {
  if (config.num_classes < 1 || config.concepts_per_class < 1 ||
      config.images_per_class < 1 || config.test_images_per_class < 1 ||
      config.dim < 1) {
    Fail(ErrorKind::kUsage, "synth counts must all be >= 1");
  }
  if (config.target_images < 2) {
    Fail(ErrorKind::kUsage, "synth target set needs at least 2 images");
  }
  if (!(config.noise >= 0.0) || !std::isfinite(config.noise)) {
    Fail(ErrorKind::kUsage, "noise must be finite and >= 0");
  }
  if (!(config.distractor_fraction >= 0.0 && config.distractor_fraction <= 1.0)) {
    Fail(ErrorKind::kUsage, "distractor fraction must lie in [0, 1]");
  }
  if (config.dim < config.num_classes + 1) {
    Fail(ErrorKind::kUsage,
         "dim=" + std::to_string(config.dim) + " leaves no room for distractors "
         "orthogonal to " + std::to_string(config.num_classes) +
         " class prototypes; need dim >= " + std::to_string(config.num_classes + 1));
  }
}

bool IsSynthDistractor(const std::string& concept_id) {
  return concept_id.find("_n") != std::string::npos;
}

SynthDataset GenerateSynth(const SynthConfig& config) {
  ValidateSynthConfig(config);
  std::mt19937_64 rng(config.seed);
  SynthDataset out;
  for (int y = 0; y < config.num_classes; ++y) {
    out.class_names.push_back("class_" + std::to_string(y));
  }
  const int img_dims = config.image_dims();
  const int dis_dims = config.dim - img_dims;
  const int n_dis = config.distractors_per_class();
  const int n_vis = config.concepts_per_class - n_dis;

  MatrixXr concepts(config.num_classes * config.concepts_per_class, config.dim);
  std::vector<std::string> concept_ids;
  json classes = json::array();
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int y = 0; y < config.num_classes; ++y) {
    VectorXr direction = VectorXr::Zero(config.dim);
    for (int j = img_dims; j < config.dim; ++j) direction(j) = normal(rng);
    direction /= direction.norm();
    json entries = json::array();
    for (int i = 0; i < config.concepts_per_class; ++i) {
      const bool visual = i < n_vis;
      VectorXr v = VectorXr::Zero(config.dim);
      std::string id, text;
      if (visual) {
        v(y) = 1.0;
        AddNoise(v, 0, img_dims, config.noise, rng);
        id = "c" + std::to_string(y) + "_v" + std::to_string(i);
        text = "visual cue " + std::to_string(i) + " of " + out.class_names[y];
      } else {
        v = direction;
        AddNoise(v, img_dims, dis_dims, config.noise, rng);
        id = "c" + std::to_string(y) + "_n" + std::to_string(i - n_vis);
        text = "non-visual remark " + std::to_string(i - n_vis) + " about " +
               out.class_names[y];
      }
      concepts.row(static_cast<Eigen::Index>(concept_ids.size())) = v.transpose();
      concept_ids.push_back(id);
      entries.push_back({{"id", id}, {"text", text}});
    }
    classes.push_back({{"name", out.class_names[y]}, {"concepts", entries}});
  }
  out.concepts = EmbeddingMatrix(std::move(concepts), std::move(concept_ids));
  out.pool_json = json{{"classes", classes}}.dump(2) + "\n";

  out.train_images =
      MakeImages(config, config.images_per_class,
                 config.images_per_class * config.num_classes, "train_", rng,
                 &out.train_labels);
  out.test_images =
      MakeImages(config, config.test_images_per_class,
                 config.test_images_per_class * config.num_classes, "test_", rng,
                 &out.test_labels);
  out.target_images =
      MakeImages(config, 0, config.target_images, "target_", rng, nullptr);
  return out;
}

std::string LabelJson(const EmbeddingMatrix& images, const std::vector<int>& labels,
                      const std::vector<std::string>& class_names) {
  json map = json::object();
  for (Eigen::Index i = 0; i < images.rows(); ++i) map[images.ids()[i]] = labels[i];
  return json{{"class_names", class_names}, {"labels", map}}.dump(2) + "\n";
}

void WriteSynth(const SynthDataset& data, const SynthConfig& config,
                const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  SaveEmbeddings(out_dir / "images.cbv", data.train_images);
  SaveEmbeddings(out_dir / "test_images.cbv", data.test_images);
  SaveEmbeddings(out_dir / "target.cbv", data.target_images);
  SaveEmbeddings(out_dir / "concepts.cbv", data.concepts);
  WriteFile(out_dir / "labels.json",
            LabelJson(data.train_images, data.train_labels, data.class_names));
  WriteFile(out_dir / "test_labels.json",
            LabelJson(data.test_images, data.test_labels, data.class_names));
  WriteFile(out_dir / "pool.json", data.pool_json);
  const json meta = {{"classes", config.num_classes},
                     {"concepts_per_class", config.concepts_per_class},
                     {"distractors_per_class", config.distractors_per_class()},
                     {"images_per_class", config.images_per_class},
                     {"test_images_per_class", config.test_images_per_class},
                     {"target_images", config.target_images},
                     {"dim", config.dim},
                     {"image_dims", config.image_dims()},
                     {"noise", config.noise},
                     {"seed", config.seed}};
  WriteFile(out_dir / "synth.json", meta.dump(2) + "\n");
  WriteFile(out_dir / "pipeline.cfg",
            "# generated by `cbm synth`; paths are relative to this file\n"
            "images = images.cbv\n"
            "labels = labels.json\n"
            "concepts = concepts.cbv\n"
            "pool = pool.json\n"
            "target_set = target.cbv\n"
            "test_images = test_images.cbv\n"
            "test_labels = test_labels.json\n"
            "out = run\n");
}

}  // namespace cbm
