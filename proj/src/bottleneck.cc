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

#include "cbm/bottleneck.h"

#include <algorithm>
#include <charconv>
#include <numeric>
#include <random>

#include "json.hpp"

namespace cbm {
namespace {

using json = nlohmann::ordered_json;

json TrainConfigToJson(const TrainConfig& config) {
  return json{{"learning_rate", config.learning_rate},
              {"epochs", config.epochs},
              {"shots", ShotsToString(config.shots)},
              {"seed", config.seed},
              {"batch_mode", config.full_batch ? "full" : "mini"}};
}

TrainConfig TrainConfigFromJson(const json& j) {
  TrainConfig config;
  config.learning_rate = j.at("learning_rate").get<double>();
  config.epochs = j.at("epochs").get<int>();
  config.shots = ParseShots(j.at("shots").get<std::string>());
  config.seed = j.at("seed").get<std::uint64_t>();
  config.full_batch = j.at("batch_mode").get<std::string>() == "full";
  return config;
}

}  // namespace

std::optional<int> ParseShots(const std::string& text) {
  if (text == "full") return std::nullopt;
  int value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || value < 1) {
    Fail(ErrorKind::kUsage, "shots must be a positive integer or 'full', got '" +
                                text + "'");
  }
  return value;
}

std::string ShotsToString(const std::optional<int>& shots) {
  return shots ? std::to_string(*shots) : "full";
}

void ValidateModel(const BottleneckModel& model) {
  if (model.weights.rows() != model.num_classes() ||
      model.weights.cols() != model.num_concepts() ||
      model.concept_embeddings.rows() != model.num_concepts() ||
      static_cast<int>(model.concept_texts.size()) != model.num_concepts() ||
      static_cast<int>(model.memberships.size()) != model.num_concepts()) {
    Fail(ErrorKind::kContract, "bottleneck model shapes are inconsistent");
  }
}

BottleneckModel InitializeModel(const ConceptSubset& subset,
                                const ConceptPool& pool,
                                const EmbeddingMatrix& text) {
  BottleneckModel model;
  const auto num_concepts = static_cast<Eigen::Index>(subset.members.size());
  model.class_names = pool.class_names;
  model.concept_embeddings.resize(num_concepts, text.dim());
  model.weights = MatrixXr::Zero(pool.num_classes(), num_concepts);
  for (Eigen::Index i = 0; i < num_concepts; ++i) {
    const Concept& c = pool.concepts.at(subset.members[i]);
    model.concept_embeddings.row(i) = text.row(c.embedding_row);
    model.concept_ids.push_back(c.id);
    model.concept_texts.push_back(c.text);
    model.memberships.push_back(subset.memberships[i]);
    for (int y : subset.memberships[i]) model.weights(y, i) = 1.0;
  }
  ValidateModel(model);
  return model;
}

VectorXr ModelConceptScores(const VectorXr& image, const BottleneckModel& model) {
  return ConceptScores(image, model.concept_embeddings);
}

VectorXr Forward(const VectorXr& image, const BottleneckModel& model) {
  return Logits(ModelConceptScores(image, model), ColumnSoftmax(model.weights));
}

int Predict(const VectorXr& image, const BottleneckModel& model) {
  return ArgMax(Forward(image, model));
}

LossGradient CrossEntropyLoss(const MatrixXr& weights, const MatrixXr& concept_scores,
                              std::span<const int> labels) {
  const Eigen::Index n = concept_scores.rows();
  if (n == 0 || static_cast<Eigen::Index>(labels.size()) != n) {
    Fail(ErrorKind::kContract, "loss needs one label per non-empty score row");
  }
  const MatrixXr soft = ColumnSoftmax(weights);
  MatrixXr d_soft = MatrixXr::Zero(weights.rows(), weights.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const VectorXr g = concept_scores.row(i).transpose();
    const VectorXr z = Logits(g, soft);
    const double top = z.maxCoeff();
    VectorXr p = (z.array() - top).exp();
    const double total = SequentialSum(p);
    p /= total;
    const int y = labels[i];
    loss += -(z(y) - top - std::log(total));
    p(y) -= 1.0;
    for (Eigen::Index r = 0; r < d_soft.rows(); ++r) {
      for (Eigen::Index c = 0; c < d_soft.cols(); ++c) d_soft(r, c) += p(r) * g(c);
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  d_soft *= inv_n;
  // Backprop through the per-column softmax:
  // dW[y][c] = s[y][c] * (dS[y][c] - sum_y' s[y'][c] dS[y'][c]).
  LossGradient out;
  out.loss = loss * inv_n;
  out.gradient.resize(weights.rows(), weights.cols());
  for (Eigen::Index c = 0; c < weights.cols(); ++c) {
    const double inner = SequentialDot(soft.col(c), d_soft.col(c));
    for (Eigen::Index y = 0; y < weights.rows(); ++y) {
      out.gradient(y, c) = soft(y, c) * (d_soft(y, c) - inner);
    }
  }
  return out;
}

std::vector<Eigen::Index> SampleShots(const LabeledImageSet& set,
                                      const std::optional<int>& shots,
                                      std::uint64_t seed) {
  std::vector<Eigen::Index> rows;
  std::mt19937_64 rng(seed);
  for (int y = 0; y < set.num_classes(); ++y) {
    std::vector<Eigen::Index> pool = set.RowsOfClass(y);
    if (pool.empty()) {
      Fail(ErrorKind::kSampling, "class '" + set.class_names[y] + "' has no images");
    }
    if (!shots) {
      rows.insert(rows.end(), pool.begin(), pool.end());
      continue;
    }
    if (static_cast<int>(pool.size()) < *shots) {
      Fail(ErrorKind::kSampling, "class '" + set.class_names[y] + "' has " +
                                     std::to_string(pool.size()) + " images, " +
                                     std::to_string(*shots) + " shots requested");
    }
    // Partial Fisher-Yates: the first `shots` slots are the draw.
    for (int i = 0; i < *shots; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    rows.insert(rows.end(), pool.begin(), pool.begin() + *shots);
  }
  std::sort(rows.begin(), rows.end());
  return rows;
}

TrainResult Train(const LabeledImageSet& train_set, const ConceptSubset& subset,
                  const ConceptPool& pool, const EmbeddingMatrix& text,
                  const TrainConfig& config, const EpochObserver& observer) {
  if (!(config.learning_rate > 0.0) || !std::isfinite(config.learning_rate)) {
    Fail(ErrorKind::kUsage, "learning rate must be positive");
  }
  if (config.epochs < 0) Fail(ErrorKind::kUsage, "epochs must be >= 0");
  if (!config.full_batch) {
    Fail(ErrorKind::kUsage, "only full-batch training is supported");
  }
  ValidateLabeledImageSet(train_set);
  const LabeledImageSet sampled =
      train_set.Select(SampleShots(train_set, config.shots, config.seed));

  TrainResult result;
  result.model = InitializeModel(subset, pool, text);
  result.model.train_config = config;
  BottleneckModel& model = result.model;

  MatrixXr scores(sampled.embeddings.rows(), model.num_concepts());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    scores.row(i) =
        ConceptScores(sampled.embeddings.row(i).transpose(), model.concept_embeddings)
            .transpose();
  }
  if (observer) observer(0, model.weights);
  for (int epoch = 0; epoch <= config.epochs; ++epoch) {
    LossGradient step = CrossEntropyLoss(model.weights, scores, sampled.labels);
    if (!std::isfinite(step.loss) || !step.gradient.allFinite()) {
      Fail(ErrorKind::kDivergence,
           "training diverged at epoch " + std::to_string(epoch));
    }
    result.loss_trace.push_back(step.loss);
    if (epoch == config.epochs) break;
    model.weights -= config.learning_rate * step.gradient;
    if (!model.weights.allFinite()) {
      Fail(ErrorKind::kDivergence,
           "weights became non-finite at epoch " + std::to_string(epoch + 1));
    }
    if (observer) observer(epoch + 1, model.weights);
  }
  return result;
}

InfluenceVector Influence(const VectorXr& image, int class_index,
                          const BottleneckModel& model) {
  if (class_index < 0 || class_index >= model.num_classes()) {
    Fail(ErrorKind::kContract, "class index " + std::to_string(class_index) +
                                   " out of range");
  }
  const VectorXr g = ModelConceptScores(image, model);
  const MatrixXr soft = ColumnSoftmax(model.weights);
  InfluenceVector out;
  out.class_index = class_index;
  out.values = g.cwiseProduct(soft.row(class_index).transpose());
  out.ranking.resize(out.values.size());
  std::iota(out.ranking.begin(), out.ranking.end(), 0);
  std::stable_sort(out.ranking.begin(), out.ranking.end(),
                   [&](int a, int b) { return out.values(a) > out.values(b); });
  return out;
}

Explanation Explain(const VectorXr& image, const BottleneckModel& model,
                    int top_k) {
  if (top_k < 0 || top_k > model.num_concepts()) {
    Fail(ErrorKind::kContract, "top_k=" + std::to_string(top_k) + " exceeds |C|=" +
                                   std::to_string(model.num_concepts()));
  }
  Explanation out;
  const VectorXr g = ModelConceptScores(image, model);
  const MatrixXr soft = ColumnSoftmax(model.weights);
  out.logits = Logits(g, soft);
  out.predicted = ArgMax(out.logits);
  const InfluenceVector influence = Influence(image, out.predicted, model);
  out.total_influence = SequentialSum(influence.values);
  for (int i = 0; i < top_k; ++i) {
    const int c = influence.ranking[i];
    out.top.push_back({c, model.concept_ids[c], model.concept_texts[c], g(c),
                       soft(out.predicted, c), influence.values(c)});
  }
  return out;
}

double Evaluate(const LabeledImageSet& test_set, const BottleneckModel& model) {
  const Eigen::Index n = test_set.embeddings.rows();
  if (n == 0) Fail(ErrorKind::kContract, "cannot evaluate on an empty set");
  const MatrixXr soft = ColumnSoftmax(model.weights);
  Eigen::Index correct = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const VectorXr g = ConceptScores(test_set.embeddings.row(i).transpose(),
                                     model.concept_embeddings);
    if (ArgMax(Logits(g, soft)) == test_set.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

std::string EncodeModel(const BottleneckModel& model) {
  ValidateModel(model);
  std::string out = EncodeCbv1(EmbeddingMatrix(model.concept_embeddings, model.concept_ids));
  out += EncodeCbv1(EmbeddingMatrix(model.weights, model.class_names));
  const std::string trailer = json{{"class_names", model.class_names},
                                   {"concept_ids", model.concept_ids},
                                   {"concept_texts", model.concept_texts},
                                   {"memberships", model.memberships},
                                   {"train_config", TrainConfigToJson(model.train_config)}}
                                  .dump();
  const auto len = static_cast<std::uint32_t>(trailer.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((len >> (8 * i)) & 0xffu));
  out += trailer;
  return out;
}

BottleneckModel DecodeModel(std::string_view bytes) {
  std::size_t offset = 0;
  const EmbeddingMatrix concepts = DecodeCbv1(bytes, &offset);
  const EmbeddingMatrix weights = DecodeCbv1(bytes, &offset);
  if (bytes.size() < offset + 4) Fail(ErrorKind::kFormat, "model trailer missing");
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) {
    len |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + i]))
           << (8 * i);
  }
  offset += 4;
  if (bytes.size() - offset != len) {
    Fail(ErrorKind::kFormat, "model trailer length mismatch: expected " +
                                 std::to_string(len) + " bytes, got " +
                                 std::to_string(bytes.size() - offset));
  }
  BottleneckModel model;
  try {
    const json trailer = json::parse(bytes.substr(offset));
    model.class_names = trailer.at("class_names").get<std::vector<std::string>>();
    model.concept_ids = trailer.at("concept_ids").get<std::vector<std::string>>();
    model.concept_texts = trailer.at("concept_texts").get<std::vector<std::string>>();
    model.memberships = trailer.at("memberships").get<std::vector<std::vector<int>>>();
    model.train_config = TrainConfigFromJson(trailer.at("train_config"));
  } catch (const json::exception& e) {
    Fail(ErrorKind::kFormat, std::string("model trailer: ") + e.what());
  }
  if (model.concept_ids != concepts.ids() || model.class_names != weights.ids()) {
    Fail(ErrorKind::kFormat, "model trailer vocabularies disagree with CBV1 ids");
  }
  model.concept_embeddings = concepts.data();
  model.weights = weights.data();
  ValidateModel(model);
  return model;
}

void SaveModel(const std::filesystem::path& path, const BottleneckModel& model) {
  WriteFile(path, EncodeModel(model));
}

BottleneckModel LoadModel(const std::filesystem::path& path) {
  return DecodeModel(ReadFile(path));
}

}  // namespace cbm
