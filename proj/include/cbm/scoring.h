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

#ifndef CBM_SCORING_H_
#define CBM_SCORING_H_

// Per-concept and pairwise scores feeding concept selection.
//
// All routines are templated on the Eigen expression type so they run on
// float or double matrices; accumulation happens in the expression's scalar
// type with a fixed left-to-right order (see SequentialDot), so identical
// inputs give bit-identical outputs.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "cbm/data_model.h"
#include "cbm/errors.h"
#include "cbm/linalg.h"

namespace cbm {

inline constexpr double kLikelihoodFloor = 1e-6;

// sim(y, c): mean over the class-y images of image . concept. Computed as the
// class-mean image dotted with each concept row.
template <typename ImagesT, typename ConceptsT>
RowMatrix<typename ImagesT::Scalar> ClassConceptSimilarity(
    const Eigen::MatrixBase<ImagesT>& images, std::span<const int> labels,
    int num_classes, const Eigen::MatrixBase<ConceptsT>& concepts) {
  using Scalar = typename ImagesT::Scalar;
  if (images.cols() != concepts.cols()) {
    Fail(ErrorKind::kContract, "image and concept dimensions differ");
  }
  if (static_cast<Eigen::Index>(labels.size()) != images.rows()) {
    Fail(ErrorKind::kContract, "one label per image row required");
  }
  RowMatrix<Scalar> class_sums = RowMatrix<Scalar>::Zero(num_classes, images.cols());
  std::vector<Eigen::Index> counts(num_classes, 0);
  for (Eigen::Index i = 0; i < images.rows(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= num_classes) {
      Fail(ErrorKind::kContract, "label out of range");
    }
    for (Eigen::Index j = 0; j < images.cols(); ++j) class_sums(y, j) += images(i, j);
    ++counts[y];
  }
  for (int y = 0; y < num_classes; ++y) {
    if (counts[y] == 0) {
      Fail(ErrorKind::kData, "class " + std::to_string(y) + " has no images");
    }
    class_sums.row(y) /= static_cast<Scalar>(counts[y]);
  }
  return PairwiseDots(class_sums, concepts);
}

inline RowMatrix<double> ClassConceptSimilarity(const LabeledImageSet& images,
                                                const MatrixXr& concepts) {
  for (int y = 0; y < images.num_classes(); ++y) {
    if (images.RowsOfClass(y).empty()) {
      Fail(ErrorKind::kData, "class '" + images.class_names[y] + "' has no images");
    }
  }
  return ClassConceptSimilarity(images.embeddings.data(), images.labels,
                                images.num_classes(), concepts);
}

// Column-wise clamp at `floor`, then normalize every column to sum to 1.
template <typename Derived>
RowMatrix<typename Derived::Scalar> ConditionalLikelihood(
    const Eigen::MatrixBase<Derived>& sim,
    typename Derived::Scalar floor = kLikelihoodFloor) {
  using Scalar = typename Derived::Scalar;
  RowMatrix<Scalar> out = sim.cwiseMax(floor);
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    const Scalar total = SequentialSum(out.col(c));
    out.col(c) /= total;
  }
  return out;
}

// D(c) = sum_y p log p (natural log, 0 log 0 = 0) for each column p.
template <typename Derived>
Vector<typename Derived::Scalar> Discriminability(
    const Eigen::MatrixBase<Derived>& cond) {
  using Scalar = typename Derived::Scalar;
  Vector<Scalar> out(cond.cols());
  for (Eigen::Index c = 0; c < cond.cols(); ++c) {
    if ((cond.col(c).array() < Scalar(0)).any() ||
        std::abs(SequentialSum(cond.col(c)) - Scalar(1)) > Scalar(1e-6)) {
      Fail(ErrorKind::kContract,
           "column " + std::to_string(c) + " is not a probability distribution");
    }
    Scalar acc(0);
    for (Eigen::Index y = 0; y < cond.rows(); ++y) {
      const Scalar p = cond(y, c);
      if (p > Scalar(0)) acc += p * std::log(p);
    }
    out(c) = acc;
  }
  return out;
}

// V(c): population standard deviation of concept . image over the target set.
// Deviations are taken from the first score before the usual two passes, so
// a constant score set yields exactly zero.
template <typename ConceptT, typename TargetsT>
typename TargetsT::Scalar VisualActivation(
    const Eigen::MatrixBase<ConceptT>& concept_row,
    const Eigen::MatrixBase<TargetsT>& targets) {
  using Scalar = typename TargetsT::Scalar;
  const Eigen::Index n = targets.rows();
  if (n < 2) {
    Fail(ErrorKind::kData, "visual activation needs at least 2 target images, got " +
                               std::to_string(n));
  }
  if (concept_row.size() != targets.cols()) {
    Fail(ErrorKind::kContract, "concept and target dimensions differ");
  }
  Vector<Scalar> scores(n);
  for (Eigen::Index i = 0; i < n; ++i) scores(i) = SequentialDot(targets.row(i), concept_row);
  const Scalar pivot = scores(0);
  Scalar mean(0);
  for (Eigen::Index i = 0; i < n; ++i) mean += scores(i) - pivot;
  mean /= static_cast<Scalar>(n);
  Scalar sq(0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar dev = (scores(i) - pivot) - mean;
    sq += dev * dev;
  }
  return std::sqrt(sq / static_cast<Scalar>(n));
}

template <typename ConceptsT, typename TargetsT>
Vector<typename TargetsT::Scalar> VisualActivations(
    const Eigen::MatrixBase<ConceptsT>& concepts,
    const Eigen::MatrixBase<TargetsT>& targets) {
  Vector<typename TargetsT::Scalar> out(concepts.rows());
  for (Eigen::Index c = 0; c < concepts.rows(); ++c) {
    out(c) = VisualActivation(concepts.row(c).transpose(), targets);
  }
  return out;
}

// phi(c1, c2) = cosine of the two concept embeddings. Rows must be unit norm.
template <typename Derived>
RowMatrix<typename Derived::Scalar> ConceptSimilarityKernel(
    const Eigen::MatrixBase<Derived>& concepts) {
  using Scalar = typename Derived::Scalar;
  for (Eigen::Index i = 0; i < concepts.rows(); ++i) {
    const Scalar norm_sq = SequentialDot(concepts.row(i), concepts.row(i));
    if (std::abs(norm_sq - Scalar(1)) > Scalar(2e-6)) {
      Fail(ErrorKind::kContract, "concept row " + std::to_string(i) +
                                     " is not unit-normalized");
    }
  }
  RowMatrix<Scalar> phi(concepts.rows(), concepts.rows());
  for (Eigen::Index i = 0; i < concepts.rows(); ++i) {
    for (Eigen::Index j = i; j < concepts.rows(); ++j) {
      phi(i, j) = SequentialDot(concepts.row(i), concepts.row(j));
      phi(j, i) = phi(i, j);
    }
  }
  return phi;
}

// Scores of the whole pool S: sim and D over all classes, V over the target
// set. Columns follow pool order.
struct PoolScores {
  MatrixXr class_concept_sim;  // |Y| x |S|
  MatrixXr cond_likelihood;    // |Y| x |S|
  VectorXr discriminability;   // |S|
  VectorXr visual_activation;  // |S|
};

// Restriction of PoolScores to one class's candidates S_y, plus phi within
// S_y. Local index i refers to pool concept `concepts[i]`.
struct ScoreTable {
  std::vector<int> concepts;
  MatrixXr class_concept_sim;  // |Y| x |S_y|
  MatrixXr cond_likelihood;    // |Y| x |S_y|
  VectorXr discriminability;   // |S_y|
  VectorXr visual_activation;  // |S_y|
  MatrixXr phi;                // |S_y| x |S_y|

  Eigen::Index size() const { return discriminability.size(); }
};

// Stacks the pool's text embeddings in pool order.
MatrixXr PoolEmbeddings(const ConceptPool& pool, const EmbeddingMatrix& text);

PoolScores ScorePool(const ConceptPool& pool, const EmbeddingMatrix& text,
                     const LabeledImageSet& images,
                     const EmbeddingMatrix& target_set);

ScoreTable ScoreTableForClass(const PoolScores& scores, const ConceptPool& pool,
                              const EmbeddingMatrix& text, int y);

}  // namespace cbm

#endif  // CBM_SCORING_H_
