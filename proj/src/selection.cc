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

#include "cbm/selection.h"

#include <cmath>
#include <limits>
#include <string>

#include "cbm/errors.h"

namespace cbm {

void ValidateSelectionConfig(const SelectionConfig& config) {
  if (!(config.alpha >= 0.0) || !(config.beta >= 0.0) || !(config.gamma >= 0.0) ||
      !std::isfinite(config.alpha + config.beta + config.gamma)) {
    Fail(ErrorKind::kUsage, "alpha, beta and gamma must be finite and >= 0");
  }
  if (config.k < 1) Fail(ErrorKind::kUsage, "k must be >= 1");
}

double EvaluateObjective(std::span<const int> subset, const ScoreTable& table,
                         const SelectionConfig& config) {
  if (subset.empty()) {
    Fail(ErrorKind::kContract, "objective of an empty subset is undefined");
  }
  const Eigen::Index n = table.size();
  double modular_d = 0.0;
  double modular_v = 0.0;
  for (int c : subset) {
    if (c < 0 || c >= n) Fail(ErrorKind::kContract, "subset index out of range");
    modular_d += table.discriminability(c);
    modular_v += table.visual_activation(c);
  }
  double coverage = 0.0;
  for (Eigen::Index c1 = 0; c1 < n; ++c1) {
    double best = -std::numeric_limits<double>::infinity();
    for (int c2 : subset) best = std::max(best, table.phi(c1, c2));
    coverage += best;
  }
  return config.alpha * modular_d + config.beta * coverage +
         config.gamma * modular_v;
}

GreedyTrace GreedySelect(const ScoreTable& table, const SelectionConfig& config) {
  ValidateSelectionConfig(config);
  const Eigen::Index n = table.size();
  if (config.k > n) {
    Fail(ErrorKind::kSelection, "k=" + std::to_string(config.k) +
                                    " exceeds the " + std::to_string(n) +
                                    " candidates of the class");
  }
  // cover(c1) = max over selected c2 of phi(c1, c2); meaningless until the
  // first pick.
  VectorXr cover = VectorXr::Zero(n);
  std::vector<bool> taken(n, false);
  GreedyTrace trace;
  for (int step = 0; step < config.k; ++step) {
    int best = -1;
    double best_gain = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < n; ++c) {
      if (taken[c]) continue;
      double coverage_gain = 0.0;
      for (Eigen::Index c1 = 0; c1 < n; ++c1) {
        const double p = table.phi(c1, c);
        coverage_gain += step == 0 ? p : std::max(0.0, p - cover(c1));
      }
      const double gain = config.alpha * table.discriminability(c) +
                          config.beta * coverage_gain +
                          config.gamma * table.visual_activation(c);
      // Gains within rounding of the best count as ties; the lowest index
      // keeps the slot.
      if (best < 0 ||
          gain > best_gain + kGainTieTolerance * std::max(1.0, std::abs(best_gain))) {
        best = static_cast<int>(c);
        best_gain = gain;
      }
    }
    taken[best] = true;
    for (Eigen::Index c1 = 0; c1 < n; ++c1) {
      const double p = table.phi(c1, best);
      cover(c1) = step == 0 ? p : std::max(cover(c1), p);
    }
    trace.selected.push_back(best);
    trace.gains.push_back(best_gain);
    trace.objective.push_back(EvaluateObjective(trace.selected, table, config));
  }
  return trace;
}

SelectionResult SelectAll(const ConceptPool& pool, const EmbeddingMatrix& text,
                          const LabeledImageSet& images,
                          const EmbeddingMatrix& target_set,
                          const SelectionConfig& config) {
  ValidateSelectionConfig(config);
  for (int y = 0; y < pool.num_classes(); ++y) {
    if (static_cast<int>(pool.per_class[y].size()) < config.k) {
      Fail(ErrorKind::kSelection,
           "class '" + pool.class_names[y] + "' has " +
               std::to_string(pool.per_class[y].size()) +
               " candidates, fewer than k=" + std::to_string(config.k));
    }
  }
  SelectionResult result;
  result.scores = ScorePool(pool, text, images, target_set);
  std::vector<std::vector<int>> chosen(pool.num_classes());
  for (int y = 0; y < pool.num_classes(); ++y) {
    const ScoreTable table = ScoreTableForClass(result.scores, pool, text, y);
    GreedyTrace trace = GreedySelect(table, config);
    for (int local : trace.selected) chosen[y].push_back(table.concepts[local]);
    result.traces.push_back(std::move(trace));
  }
  result.subset = UnionSubset(chosen);
  return result;
}

}  // namespace cbm
