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

#ifndef CBM_BOTTLENECK_H_
#define CBM_BOTTLENECK_H_

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cbm/data_model.h"
#include "cbm/errors.h"
#include "cbm/linalg.h"

namespace cbm {

// g = image . E_C^T, one score per concept.
template <typename ImageT, typename ConceptsT>
Vector<typename ConceptsT::Scalar> ConceptScores(
    const Eigen::MatrixBase<ImageT>& image,
    const Eigen::MatrixBase<ConceptsT>& concept_embeddings) {
  if (image.size() != concept_embeddings.cols()) {
    Fail(ErrorKind::kContract,
         "image dimension " + std::to_string(image.size()) +
             " does not match concept dimension " +
             std::to_string(concept_embeddings.cols()));
  }
  Vector<typename ConceptsT::Scalar> g(concept_embeddings.rows());
  for (Eigen::Index c = 0; c < concept_embeddings.rows(); ++c) {
    g(c) = SequentialDot(concept_embeddings.row(c), image);
  }
  return g;
}

// Softmax over classes, independently for every concept column, stabilized by
// subtracting the column max.
template <typename Derived>
RowMatrix<typename Derived::Scalar> ColumnSoftmax(
    const Eigen::MatrixBase<Derived>& weights) {
  using Scalar = typename Derived::Scalar;
  if (!weights.allFinite()) {
    Fail(ErrorKind::kContract, "weight matrix has non-finite entries");
  }
  RowMatrix<Scalar> out(weights.rows(), weights.cols());
  for (Eigen::Index c = 0; c < weights.cols(); ++c) {
    const Scalar top = weights.col(c).maxCoeff();
    Scalar total(0);
    for (Eigen::Index y = 0; y < weights.rows(); ++y) {
      out(y, c) = std::exp(weights(y, c) - top);
      total += out(y, c);
    }
    out.col(c) /= total;
  }
  return out;
}

// logits[y] = sum_c g[c] * sigma(W)[y][c].
template <typename ScoresT, typename SoftT>
Vector<typename SoftT::Scalar> Logits(const Eigen::MatrixBase<ScoresT>& g,
                                      const Eigen::MatrixBase<SoftT>& soft_weights) {
  if (g.size() != soft_weights.cols()) {
    Fail(ErrorKind::kContract, "concept score length does not match weights");
  }
  Vector<typename SoftT::Scalar> logits(soft_weights.rows());
  for (Eigen::Index y = 0; y < soft_weights.rows(); ++y) {
    logits(y) = SequentialDot(soft_weights.row(y), g);
  }
  return logits;
}

// First maximal entry.
template <typename Derived>
int ArgMax(const Eigen::MatrixBase<Derived>& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = static_cast<int>(i);
  }
  return best;
}

struct TrainConfig {
  double learning_rate = 0.1;
  int epochs = 500;
  std::optional<int> shots;  // labeled images per class; nullopt = all
  std::uint64_t seed = 0;
  bool full_batch = true;
};

// "1", "16", "full".
std::optional<int> ParseShots(const std::string& text);
std::string ShotsToString(const std::optional<int>& shots);

struct BottleneckModel {
  MatrixXr concept_embeddings;  // E_C, |C| x d
  MatrixXr weights;             // W, |Y| x |C|
  std::vector<std::string> class_names;
  std::vector<std::string> concept_ids;
  std::vector<std::string> concept_texts;
  std::vector<std::vector<int>> memberships;  // classes y with c in C_y
  TrainConfig train_config;

  int num_classes() const { return static_cast<int>(class_names.size()); }
  int num_concepts() const { return static_cast<int>(concept_ids.size()); }
};

void ValidateModel(const BottleneckModel& model);

// E_C from the selected concepts; W[y][c] = 1 iff c in C_y, else 0.
BottleneckModel InitializeModel(const ConceptSubset& subset,
                                const ConceptPool& pool,
                                const EmbeddingMatrix& text);

VectorXr ModelConceptScores(const VectorXr& image, const BottleneckModel& model);
VectorXr Forward(const VectorXr& image, const BottleneckModel& model);
int Predict(const VectorXr& image, const BottleneckModel& model);

// Mean softmax cross-entropy over `labels` given precomputed concept scores
// (one row per image), and its gradient with respect to W.
struct LossGradient {
  double loss = 0.0;
  MatrixXr gradient;
};
LossGradient CrossEntropyLoss(const MatrixXr& weights, const MatrixXr& concept_scores,
                              std::span<const int> labels);

// Per class, `shots` rows drawn without replacement (seeded), returned in
// ascending row order. nullopt keeps every row.
std::vector<Eigen::Index> SampleShots(const LabeledImageSet& set,
                                      const std::optional<int>& shots,
                                      std::uint64_t seed);

struct TrainResult {
  BottleneckModel model;
  std::vector<double> loss_trace;  // loss before each epoch, then final loss
};

using EpochObserver = std::function<void(int epoch, const MatrixXr& weights)>;

// Full-batch gradient descent on W only; E_C stays frozen. The observer, if
// set, sees W after initialization (epoch 0) and after every update.
TrainResult Train(const LabeledImageSet& train_set, const ConceptSubset& subset,
                  const ConceptPool& pool, const EmbeddingMatrix& text,
                  const TrainConfig& config, const EpochObserver& observer = {});

struct InfluenceVector {
  int class_index = 0;
  VectorXr values;           // P_y = g (*) sigma(W)[y, :]
  std::vector<int> ranking;  // descending value, ties by index
};

InfluenceVector Influence(const VectorXr& image, int class_index,
                          const BottleneckModel& model);

struct ConceptInfluence {
  int index = 0;  // column in the model
  std::string id;
  std::string text;
  double score = 0.0;     // g
  double sigma_w = 0.0;   // sigma(W)[y][c]
  double influence = 0.0; // P_y[c]
};

struct Explanation {
  int predicted = 0;
  VectorXr logits;
  std::vector<ConceptInfluence> top;
  double total_influence = 0.0;  // sum over all concepts, equals the logit
};

Explanation Explain(const VectorXr& image, const BottleneckModel& model,
                    int top_k);

double Evaluate(const LabeledImageSet& test_set, const BottleneckModel& model);

// model.cbm: CBV1 block of E_C, CBV1 block of W (N=|Y|, d=|C|), then a
// u32-length-prefixed JSON trailer with vocabularies and train config.
std::string EncodeModel(const BottleneckModel& model);
BottleneckModel DecodeModel(std::string_view bytes);
void SaveModel(const std::filesystem::path& path, const BottleneckModel& model);
BottleneckModel LoadModel(const std::filesystem::path& path);

}  // namespace cbm

#endif  // CBM_BOTTLENECK_H_
