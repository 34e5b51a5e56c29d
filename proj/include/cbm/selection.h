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

#ifndef CBM_SELECTION_H_
#define CBM_SELECTION_H_

#include <span>
#include <vector>

#include "cbm/data_model.h"
#include "cbm/scoring.h"

namespace cbm {

enum class TieBreak {
  kLowestIndex,  // earliest candidate in pool order wins
};

// Relative gap below which two greedy gains are treated as equal.
inline constexpr double kGainTieTolerance = 1e-12;

// Weights of the selection objective
//   F'(C) = alpha * sum_{c in C} D(c)
//         + beta  * sum_{c1 in S_y} max_{c2 in C} phi(c1, c2)
//         + gamma * sum_{c in C} V(c).
// gamma = 0 gives the discriminability + coverage objective without the
// visual activation term.
struct SelectionConfig {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
  int k = 50;
  TieBreak tie_break = TieBreak::kLowestIndex;
};

void ValidateSelectionConfig(const SelectionConfig& config);

// F' of `subset` (local indices into the table). Throws kContract on an
// empty subset, where the coverage max is undefined.
double EvaluateObjective(std::span<const int> subset, const ScoreTable& table,
                         const SelectionConfig& config);

struct GreedyTrace {
  std::vector<int> selected;      // local indices, in pick order
  std::vector<double> gains;      // marginal gain of each pick
  std::vector<double> objective;  // F' after each pick
};

// Greedy maximization of F' under |C| = k, with F'(empty) = 0. Always picks
// exactly k concepts, even when gains turn negative.
GreedyTrace GreedySelect(const ScoreTable& table, const SelectionConfig& config);

struct SelectionResult {
  PoolScores scores;
  std::vector<GreedyTrace> traces;  // per class, local indices
  ConceptSubset subset;             // pool indices
};

// Scores the pool (D and sim from `images`, V over `target_set`), runs greedy
// selection per class and unions the results.
SelectionResult SelectAll(const ConceptPool& pool, const EmbeddingMatrix& text,
                          const LabeledImageSet& images,
                          const EmbeddingMatrix& target_set,
                          const SelectionConfig& config);

}  // namespace cbm

#endif  // CBM_SELECTION_H_
