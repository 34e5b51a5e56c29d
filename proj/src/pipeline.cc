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

#include "cbm/pipeline.h"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "cbm/errors.h"

namespace cbm {
namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string Trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  std::string out = s.substr(begin, end - begin + 1);
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') {
    out = out.substr(1, out.size() - 2);
  }
  return out;
}

double ParseDouble(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size()) {
    Fail(ErrorKind::kUsage, key + ": expected a number, got '" + value + "'");
  }
  return out;
}

long long ParseInt(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size()) {
    Fail(ErrorKind::kUsage, key + ": expected an integer, got '" + value + "'");
  }
  return out;
}

bool ParseBool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  Fail(ErrorKind::kUsage, key + ": expected true/false, got '" + value + "'");
}

fs::path Resolve(const fs::path& base_dir, const std::string& value) {
  const fs::path p(value);
  if (p.empty() || p.is_absolute() || base_dir.empty()) return p;
  return (base_dir / p).lexically_normal();
}

fs::path ModelPath(const PipelineConfig& config) {
  return config.paths.model.empty() ? config.paths.out / "model.cbm"
                                    : config.paths.model;
}

fs::path WithSuffix(const fs::path& path, const std::string& suffix) {
  fs::path out = path;
  out.replace_filename(path.stem().string() + suffix + path.extension().string());
  return out;
}

std::optional<int> SingleShots(const PipelineConfig& config) {
  if (config.shots.size() != 1) {
    Fail(ErrorKind::kUsage, "this stage accepts a single --shots value");
  }
  return config.shots.front();
}

LabeledImageSet LoadTestSet(const PipelineConfig& config, std::string* split) {
  if (!config.paths.test_images.empty()) {
    if (config.paths.test_labels.empty()) {
      Fail(ErrorKind::kUsage, "test_images given without test_labels");
    }
    *split = "test";
    return LoadLabeledImages(config.paths.test_images, config.paths.test_labels,
                             config.normalize);
  }
  *split = "train";
  return LoadLabeledImages(config.paths.images, config.paths.labels,
                           config.normalize);
}

void CheckClassNames(const std::vector<std::string>& expected,
                     const std::vector<std::string>& got, const std::string& what) {
  if (expected != got) {
    Fail(ErrorKind::kData, what + " class names do not match the model's");
  }
}

json LogitsJson(const VectorXr& logits, const std::vector<std::string>& names) {
  json out = json::object();
  for (Eigen::Index y = 0; y < logits.size(); ++y) out[names[y]] = logits(y);
  return out;
}

}  // namespace

std::vector<std::optional<int>> ParseShotsList(const std::string& text) {
  std::vector<std::optional<int>> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(ParseShots(Trim(item)));
  if (out.empty()) Fail(ErrorKind::kUsage, "empty shots list");
  return out;
}

void ApplyConfigValue(const std::string& key, const std::string& value,
                      const fs::path& base_dir, PipelineConfig* config) {
  PipelinePaths& p = config->paths;
  if (key == "images") p.images = Resolve(base_dir, value);
  else if (key == "labels") p.labels = Resolve(base_dir, value);
  else if (key == "concepts") p.concepts = Resolve(base_dir, value);
  else if (key == "pool") p.pool = Resolve(base_dir, value);
  else if (key == "target_set") p.target_set = Resolve(base_dir, value);
  else if (key == "test_images") p.test_images = Resolve(base_dir, value);
  else if (key == "test_labels") p.test_labels = Resolve(base_dir, value);
  else if (key == "out") p.out = Resolve(base_dir, value);
  else if (key == "model") p.model = Resolve(base_dir, value);
  else if (key == "alpha") config->selection.alpha = ParseDouble(key, value);
  else if (key == "beta") config->selection.beta = ParseDouble(key, value);
  else if (key == "gamma") config->selection.gamma = ParseDouble(key, value);
  else if (key == "k") config->selection.k = static_cast<int>(ParseInt(key, value));
  else if (key == "shots") config->shots = ParseShotsList(value);
  else if (key == "seed") config->train.seed = static_cast<std::uint64_t>(ParseInt(key, value));
  else if (key == "lr" || key == "learning_rate") config->train.learning_rate = ParseDouble(key, value);
  else if (key == "epochs") config->train.epochs = static_cast<int>(ParseInt(key, value));
  else if (key == "top_k") config->top_k = static_cast<int>(ParseInt(key, value));
  else if (key == "extremes") config->extremes = static_cast<int>(ParseInt(key, value));
  else if (key == "normalize") config->normalize = ParseBool(key, value);
  else if (key == "emit_score_table") config->emit_score_table = ParseBool(key, value);
  else if (key == "image_id") config->image_id = value;
  else Fail(ErrorKind::kUsage, "unknown config key '" + key + "'");
}

void ApplyConfigText(const std::string& text, const fs::path& base_dir,
                     PipelineConfig* config) {
  std::stringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (Trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      Fail(ErrorKind::kUsage, "config line " + std::to_string(line_no) +
                                  ": expected 'key = value'");
    }
    ApplyConfigValue(Trim(line.substr(0, eq)), Trim(line.substr(eq + 1)), base_dir,
                     config);
  }
}

json ConfigToJson(const PipelineConfig& config) {
  const PipelinePaths& p = config.paths;
  json shots = json::array();
  for (const auto& s : config.shots) shots.push_back(ShotsToString(s));
  return json{
      {"paths",
       {{"images", p.images.string()},
        {"labels", p.labels.string()},
        {"concepts", p.concepts.string()},
        {"pool", p.pool.string()},
        {"target_set", p.target_set.empty() ? p.images.string() : p.target_set.string()},
        {"test_images", p.test_images.string()},
        {"test_labels", p.test_labels.string()},
        {"out", p.out.string()},
        {"model", ModelPath(config).string()}}},
      {"selection",
       {{"alpha", config.selection.alpha},
        {"beta", config.selection.beta},
        {"gamma", config.selection.gamma},
        {"k", config.selection.k},
        {"tie_break", "lowest_index"}}},
      {"train",
       {{"learning_rate", config.train.learning_rate},
        {"epochs", config.train.epochs},
        {"shots", shots},
        {"seed", config.train.seed},
        {"batch_mode", "full"}}},
      {"normalize", config.normalize},
      {"top_k", config.top_k},
      {"extremes", config.extremes},
      {"emit_score_table", config.emit_score_table},
      {"image_id", config.image_id}};
}

void WriteJson(const fs::path& path, const json& doc) {
  WriteFile(path, doc.dump(2) + "\n");
}

PipelineInputs LoadInputs(const PipelineConfig& config) {
  const PipelinePaths& p = config.paths;
  for (const auto& [name, path] :
       {std::pair<const char*, const fs::path&>{"images", p.images},
        {"labels", p.labels}, {"concepts", p.concepts}, {"pool", p.pool}}) {
    if (path.empty()) Fail(ErrorKind::kUsage, std::string("missing path: ") + name);
  }
  PipelineInputs in;
  in.images = LoadLabeledImages(p.images, p.labels, config.normalize);
  in.concepts = LoadEmbeddings(p.concepts, config.normalize);
  in.pool = LoadConceptPool(p.pool, in.concepts);
  in.target_set = p.target_set.empty() ? in.images.embeddings
                                       : LoadEmbeddings(p.target_set, config.normalize);
  if (in.pool.class_names != in.images.class_names) {
    Fail(ErrorKind::kData, "pool classes must match label class_names in order");
  }
  if (in.concepts.dim() != in.images.embeddings.dim() ||
      in.target_set.dim() != in.images.embeddings.dim()) {
    Fail(ErrorKind::kData, "embedding dimensions differ across input files");
  }
  return in;
}

json ScoreReport(const PipelineConfig& config, const PipelineInputs& inputs,
                 const PoolScores& scores) {
  const ConceptPool& pool = inputs.pool;
  json concepts = json::object();
  json order = json::array();
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const Concept& c = pool.concepts[i];
    order.push_back(c.id);
    concepts[c.id] = {{"class", pool.class_names[c.class_index]},
                      {"text", c.text},
                      {"D", scores.discriminability(i)},
                      {"V", scores.visual_activation(i)}};
  }
  json classes = json::object();
  for (int y = 0; y < pool.num_classes(); ++y) {
    json row = json::array();
    for (Eigen::Index c = 0; c < scores.class_concept_sim.cols(); ++c) {
      row.push_back(scores.class_concept_sim(y, c));
    }
    classes[pool.class_names[y]] = {{"sim", row}};
  }
  std::vector<int> by_v(pool.size());
  std::iota(by_v.begin(), by_v.end(), 0);
  std::stable_sort(by_v.begin(), by_v.end(), [&](int a, int b) {
    return scores.visual_activation(a) > scores.visual_activation(b);
  });
  const auto extremes = std::min<std::size_t>(std::max(config.extremes, 0), pool.size());
  auto entry = [&](int i) {
    return json{{"id", pool.concepts[i].id},
                {"text", pool.concepts[i].text},
                {"V", scores.visual_activation(i)}};
  };
  json highest = json::array();
  for (std::size_t i = 0; i < extremes; ++i) highest.push_back(entry(by_v[i]));
  std::stable_sort(by_v.begin(), by_v.end(), [&](int a, int b) {
    return scores.visual_activation(a) < scores.visual_activation(b);
  });
  json lowest = json::array();
  for (std::size_t i = 0; i < extremes; ++i) lowest.push_back(entry(by_v[i]));
  return json{{"config", ConfigToJson(config)},
              {"concept_order", order},
              {"concepts", concepts},
              {"classes", classes},
              {"highest_v", highest},
              {"lowest_v", lowest}};
}

json SelectionReport(const PipelineConfig& config, const PipelineInputs& inputs,
                     const SelectionResult& result) {
  const ConceptPool& pool = inputs.pool;
  json classes = json::array();
  for (int y = 0; y < pool.num_classes(); ++y) {
    json chosen = json::array();
    for (int c : result.subset.per_class[y]) {
      chosen.push_back({{"id", pool.concepts[c].id},
                        {"text", pool.concepts[c].text},
                        {"D", result.scores.discriminability(c)},
                        {"V", result.scores.visual_activation(c)}});
    }
    classes.push_back({{"name", pool.class_names[y]},
                       {"concepts", chosen},
                       {"gains", result.traces[y].gains},
                       {"objective_trace", result.traces[y].objective}});
  }
  json members = json::array();
  for (std::size_t i = 0; i < result.subset.members.size(); ++i) {
    json owners = json::array();
    for (int y : result.subset.memberships[i]) owners.push_back(pool.class_names[y]);
    members.push_back({{"id", pool.concepts[result.subset.members[i]].id},
                       {"classes", owners}});
  }
  return json{{"config", ConfigToJson(config)},
              {"classes", classes},
              {"union", members}};
}

json RunScore(const PipelineConfig& config) {
  const PipelineInputs in = LoadInputs(config);
  const LabeledImageSet sampled =
      in.images.Select(SampleShots(in.images, SingleShots(config), config.train.seed));
  const PoolScores scores = ScorePool(in.pool, in.concepts, sampled, in.target_set);
  const json report = ScoreReport(config, in, scores);
  fs::create_directories(config.paths.out);
  WriteJson(config.paths.out / "score-table.json", report);
  return report;
}

json RunSelect(const PipelineConfig& config) {
  const PipelineInputs in = LoadInputs(config);
  const LabeledImageSet sampled =
      in.images.Select(SampleShots(in.images, SingleShots(config), config.train.seed));
  const SelectionResult result =
      SelectAll(in.pool, in.concepts, sampled, in.target_set, config.selection);
  const json report = SelectionReport(config, in, result);
  fs::create_directories(config.paths.out);
  WriteJson(config.paths.out / "selection.json", report);
  if (config.emit_score_table) {
    WriteJson(config.paths.out / "score-table.json",
              ScoreReport(config, in, result.scores));
  }
  return report;
}

json RunTrain(const PipelineConfig& config) {
  const PipelineInputs in = LoadInputs(config);
  std::optional<LabeledImageSet> test_set;
  if (!config.paths.test_images.empty()) {
    std::string split;
    test_set = LoadTestSet(config, &split);
    CheckClassNames(in.images.class_names, test_set->class_names, "test set");
  }
  fs::create_directories(config.paths.out);
  const bool sweep = config.shots.size() > 1;
  json rows = json::array();
  std::string csv = "shots,seed,num_concepts,final_loss,train_accuracy,test_accuracy\n";
  for (const auto& shots : config.shots) {
    const std::string suffix = sweep ? "-" + ShotsToString(shots) : "";
    const LabeledImageSet sampled =
        in.images.Select(SampleShots(in.images, shots, config.train.seed));
    const SelectionResult selection =
        SelectAll(in.pool, in.concepts, sampled, in.target_set, config.selection);
    WriteJson(config.paths.out / ("selection" + suffix + ".json"),
              SelectionReport(config, in, selection));
    TrainConfig train = config.train;
    train.shots = shots;
    const TrainResult trained =
        Train(sampled, selection.subset, in.pool, in.concepts, train);
    const fs::path model_path = WithSuffix(ModelPath(config), suffix);
    SaveModel(model_path, trained.model);
    // Metrics come from the stored (float32) artifact so they match `eval`.
    const BottleneckModel stored = LoadModel(model_path);
    const double train_acc = Evaluate(sampled, stored);
    json row = {{"shots", ShotsToString(shots)},
                {"seed", config.train.seed},
                {"model", model_path.string()},
                {"num_concepts", stored.num_concepts()},
                {"initial_loss", trained.loss_trace.front()},
                {"final_loss", trained.loss_trace.back()},
                {"train_images", sampled.embeddings.rows()},
                {"train_accuracy", train_acc}};
    std::string test_field;
    if (test_set) {
      const double test_acc = Evaluate(*test_set, stored);
      row["test_accuracy"] = test_acc;
      test_field = json(test_acc).dump();
    } else {
      row["test_accuracy"] = nullptr;
    }
    csv += ShotsToString(shots) + "," + std::to_string(config.train.seed) + "," +
           std::to_string(stored.num_concepts()) + "," +
           json(trained.loss_trace.back()).dump() + "," + json(train_acc).dump() +
           "," + test_field + "\n";
    rows.push_back(row);
  }
  const json report = {{"config", ConfigToJson(config)}, {"rows", rows}};
  WriteJson(config.paths.out / "metrics.json", report);
  WriteFile(config.paths.out / "metrics.csv", csv);
  return report;
}

json RunPredict(const PipelineConfig& config) {
  const BottleneckModel model = LoadModel(ModelPath(config));
  if (config.paths.images.empty()) Fail(ErrorKind::kUsage, "missing path: images");
  const EmbeddingMatrix images = LoadEmbeddings(config.paths.images, config.normalize);
  std::vector<Eigen::Index> rows;
  if (!config.image_id.empty()) {
    const Eigen::Index row = images.Find(config.image_id);
    if (row < 0) Fail(ErrorKind::kLookup, "unknown image id '" + config.image_id + "'");
    rows.push_back(row);
  } else {
    rows.resize(images.rows());
    std::iota(rows.begin(), rows.end(), 0);
  }
  json predictions = json::array();
  for (Eigen::Index r : rows) {
    const VectorXr logits = Forward(images.row(r).transpose(), model);
    const int predicted = ArgMax(logits);
    predictions.push_back({{"id", images.ids()[r]},
                           {"predicted", model.class_names[predicted]},
                           {"predicted_index", predicted},
                           {"logits", LogitsJson(logits, model.class_names)}});
  }
  const json report = {{"config", ConfigToJson(config)}, {"predictions", predictions}};
  fs::create_directories(config.paths.out);
  WriteJson(config.paths.out / "predictions.json", report);
  return report;
}

json RunExplain(const PipelineConfig& config) {
  if (config.image_id.empty()) Fail(ErrorKind::kUsage, "explain needs --image-id");
  const BottleneckModel model = LoadModel(ModelPath(config));
  std::optional<VectorXr> image;
  for (const fs::path& path : {config.paths.images, config.paths.test_images}) {
    if (path.empty() || image) continue;
    const EmbeddingMatrix m = LoadEmbeddings(path, config.normalize);
    const Eigen::Index row = m.Find(config.image_id);
    if (row >= 0) image = m.row(row).transpose();
  }
  if (!image) Fail(ErrorKind::kLookup, "unknown image id '" + config.image_id + "'");
  const Explanation e = Explain(*image, model, config.top_k);
  json top = json::array();
  for (const ConceptInfluence& c : e.top) {
    top.push_back({{"id", c.id},
                   {"text", c.text},
                   {"g", c.score},
                   {"sigma_w", c.sigma_w},
                   {"influence", c.influence}});
  }
  const json report = {{"config", ConfigToJson(config)},
                       {"image_id", config.image_id},
                       {"predicted", model.class_names[e.predicted]},
                       {"predicted_index", e.predicted},
                       {"logits", LogitsJson(e.logits, model.class_names)},
                       {"total_influence", e.total_influence},
                       {"top_concepts", top}};
  fs::create_directories(config.paths.out);
  WriteJson(config.paths.out / "explanation.json", report);
  return report;
}

json RunEval(const PipelineConfig& config) {
  const BottleneckModel model = LoadModel(ModelPath(config));
  std::string split;
  const LabeledImageSet set = LoadTestSet(config, &split);
  CheckClassNames(model.class_names, set.class_names, "evaluation set");
  const json report = {{"config", ConfigToJson(config)},
                       {"split", split},
                       {"images", set.embeddings.rows()},
                       {"accuracy", Evaluate(set, model)}};
  fs::create_directories(config.paths.out);
  WriteJson(config.paths.out / "eval.json", report);
  return report;
}

}  // namespace cbm
