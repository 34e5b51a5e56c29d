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

#include "cbm/scoring.h"

namespace cbm {

MatrixXr PoolEmbeddings(const ConceptPool& pool, const EmbeddingMatrix& text) {
  MatrixXr out(static_cast<Eigen::Index>(pool.size()), text.dim());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = text.row(pool.concepts[i].embedding_row);
  }
  return out;
}

PoolScores ScorePool(const ConceptPool& pool, const EmbeddingMatrix& text,
                     const LabeledImageSet& images,
                     const EmbeddingMatrix& target_set) {
  if (pool.num_classes() != images.num_classes()) {
    Fail(ErrorKind::kData, "pool has " + std::to_string(pool.num_classes()) +
                               " classes, labels have " +
                               std::to_string(images.num_classes()));
  }
  const MatrixXr embs = PoolEmbeddings(pool, text);
  PoolScores out;
  out.class_concept_sim = ClassConceptSimilarity(images, embs);
  out.cond_likelihood = ConditionalLikelihood(out.class_concept_sim);
  out.discriminability = Discriminability(out.cond_likelihood);
  out.visual_activation = VisualActivations(embs, target_set.data());
  return out;
}

ScoreTable ScoreTableForClass(const PoolScores& scores, const ConceptPool& pool,
                              const EmbeddingMatrix& text, int y) {
  ScoreTable table;
  table.concepts = pool.per_class.at(y);
  const auto n = static_cast<Eigen::Index>(table.concepts.size());
  const Eigen::Index num_classes = scores.class_concept_sim.rows();
  table.class_concept_sim.resize(num_classes, n);
  table.cond_likelihood.resize(num_classes, n);
  table.discriminability.resize(n);
  table.visual_activation.resize(n);
  MatrixXr embs(n, text.dim());
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = table.concepts[i];
    table.class_concept_sim.col(i) = scores.class_concept_sim.col(c);
    table.cond_likelihood.col(i) = scores.cond_likelihood.col(c);
    table.discriminability(i) = scores.discriminability(c);
    table.visual_activation(i) = scores.visual_activation(c);
    embs.row(i) = text.row(pool.concepts[c].embedding_row);
  }
  table.phi = ConceptSimilarityKernel(embs);
  return table;
}

}  // namespace cbm
