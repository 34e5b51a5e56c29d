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

#ifndef CBM_SYNTH_H_
#define CBM_SYNTH_H_

#include <cstdint>
#include <filesystem>
#include <string>

#include "cbm/data_model.h"

namespace cbm {

// Synthetic embedding-space dataset with a known split between "visual"
// concepts and "non-visual" distractors.
//
// The first `image_dims` coordinates host images: class y's prototype is the
// basis vector e_y, images and visual concepts are noisy copies of it. The
// remaining coordinates host distractors: each class gets a random direction
// there and its distractors are noisy copies of that direction. Noise never
// leaves its subspace, so every distractor is exactly orthogonal to every
// image and has zero visual activation on any target set.
struct SynthConfig {
  int num_classes = 5;
  int concepts_per_class = 16;
  double distractor_fraction = 0.5;
  int images_per_class = 20;
  int test_images_per_class = 20;
  int target_images = 200;
  int dim = 32;
  double noise = 0.3;
  std::uint64_t seed = 0;

  int distractors_per_class() const;
  int image_dims() const;
};

void ValidateSynthConfig(const SynthConfig& config);

struct SynthDataset {
  EmbeddingMatrix train_images;
  EmbeddingMatrix test_images;
  EmbeddingMatrix target_images;
  EmbeddingMatrix concepts;
  std::vector<int> train_labels;
  std::vector<int> test_labels;
  std::vector<std::string> class_names;
  std::string pool_json;
};

SynthDataset GenerateSynth(const SynthConfig& config);

// Label file contents for `ids` / `labels`.
std::string LabelJson(const EmbeddingMatrix& images, const std::vector<int>& labels,
                      const std::vector<std::string>& class_names);

// Writes images.cbv, labels.json, test_images.cbv, test_labels.json,
// target.cbv, concepts.cbv, pool.json, synth.json and a pipeline.cfg whose
// relative paths point at those files.
void WriteSynth(const SynthDataset& data, const SynthConfig& config,
                const std::filesystem::path& out_dir);

// True for ids of distractor concepts produced by GenerateSynth.
bool IsSynthDistractor(const std::string& concept_id);

}  // namespace cbm

#endif  // CBM_SYNTH_H_
