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

#include <cstdlib>
#include <fstream>

#include "cbm/synth.h"
#include "doctest.h"
#include "oracles.h"
#include "test_util.h"

namespace cbm {
namespace {

using testing::TempDir;
namespace fs = std::filesystem;

PipelineConfig ConfigFor(const fs::path& data_dir) {
  PipelineConfig config;
  ApplyConfigText(ReadFile(data_dir / "pipeline.cfg"), data_dir, &config);
  return config;
}

SynthConfig SmallSynth(std::uint64_t seed = 1) {
  SynthConfig s;
  s.num_classes = 3;
  s.concepts_per_class = 6;
  s.distractor_fraction = 0.5;
  s.images_per_class = 6;
  s.test_images_per_class = 6;
  s.target_images = 30;
  s.dim = 12;
  s.noise = 0.3;
  s.seed = seed;
  return s;
}

std::map<std::string, std::string> DirectoryBytes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file()) out[entry.path().filename().string()] = ReadFile(entry.path());
  }
  return out;
}

int RunCli(const std::string& args) {
  const std::string cmd = std::string(CBM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

TEST_CASE("config text parsing") {
  PipelineConfig c;
  ApplyConfigText(
      "# comment\n"
      "images = img.cbv   # trailing comment\n"
      "target_set = /abs/target.cbv\n"
      "alpha = 0.5\nbeta=2\ngamma = 3e-1\nk = 7\n"
      "shots = 1,2,full\nseed = 9\nlr = 0.05\nepochs = 12\ntop_k = 4\n"
      "normalize = false\nimage_id = \"x 1\"\n",
      "/data/run", &c);
  CHECK(c.paths.images == fs::path("/data/run/img.cbv"));
  CHECK(c.paths.target_set == fs::path("/abs/target.cbv"));
  CHECK(c.selection.alpha == 0.5);
  CHECK(c.selection.beta == 2.0);
  CHECK(c.selection.gamma == 0.3);
  CHECK(c.selection.k == 7);
  REQUIRE(c.shots.size() == 3);
  CHECK(c.shots[0] == 1);
  CHECK(c.shots[2] == std::nullopt);
  CHECK(c.train.seed == 9);
  CHECK(c.train.learning_rate == 0.05);
  CHECK(c.train.epochs == 12);
  CHECK(c.top_k == 4);
  CHECK_FALSE(c.normalize);
  CHECK(c.image_id == "x 1");

  auto kind = [](const std::string& text) {
    PipelineConfig cfg;
    try {
      ApplyConfigText(text, "", &cfg);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::kData;
  };
  CHECK(kind("bogus = 1\n") == ErrorKind::kUsage);
  CHECK(kind("alpha = one\n") == ErrorKind::kUsage);
  CHECK(kind("alpha\n") == ErrorKind::kUsage);
  CHECK(kind("shots = 0\n") == ErrorKind::kUsage);
}

TEST_CASE("defaults") {
  const PipelineConfig c;
  CHECK(c.selection.alpha == 1.0);
  CHECK(c.selection.beta == 1.0);
  CHECK(c.selection.gamma == 1.0);
  CHECK(c.selection.k == 50);
  CHECK(c.train.learning_rate == 0.1);
  CHECK(c.train.epochs == 500);
}

TEST_CASE("synth: noise 0 gives exactly zero V for distractors and positive V otherwise") {
  TempDir dir;
  SynthConfig s = SmallSynth();
  s.noise = 0.0;
  WriteSynth(GenerateSynth(s), s, dir.path());
  const PipelineConfig config = ConfigFor(dir.path());
  const PipelineInputs in = LoadInputs(config);
  const PoolScores scores = ScorePool(in.pool, in.concepts, in.images, in.target_set);
  int distractors = 0;
  for (std::size_t i = 0; i < in.pool.size(); ++i) {
    if (IsSynthDistractor(in.pool.concepts[i].id)) {
      ++distractors;
      CHECK(scores.visual_activation(i) == 0.0);
    } else {
      CHECK(scores.visual_activation(i) > 0.0);
    }
  }
  CHECK(distractors == 9);
}

TEST_CASE("synth: seeded runs are byte-identical; too small dim is a config error") {
  TempDir a, b;
  const SynthConfig s = SmallSynth(5);
  WriteSynth(GenerateSynth(s), s, a.path());
  WriteSynth(GenerateSynth(s), s, b.path());
  CHECK(DirectoryBytes(a.path()) == DirectoryBytes(b.path()));
  TempDir c;
  WriteSynth(GenerateSynth(SmallSynth(6)), SmallSynth(6), c.path());
  CHECK(DirectoryBytes(a.path()) != DirectoryBytes(c.path()));

  SynthConfig tight = SmallSynth();
  tight.dim = tight.num_classes;
  try {
    GenerateSynth(tight);
    FAIL("expected config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kUsage);
  }
}

TEST_CASE("synth: visual activation keeps distractors out, gamma = 0 lets them in") {
  TempDir dir;
  SynthConfig s = SmallSynth(3);
  s.distractor_fraction = 0.75;
  s.concepts_per_class = 8;
  WriteSynth(GenerateSynth(s), s, dir.path());
  PipelineConfig config = ConfigFor(dir.path());
  config.paths.out = dir / "out";
  config.selection.k = 1;
  config.selection.beta = 0.25;
  auto distractors_selected = [&](double gamma) {
    config.selection.gamma = gamma;
    const auto report = RunSelect(config);
    int n = 0;
    for (const auto& m : report["union"]) n += IsSynthDistractor(m["id"].get<std::string>());
    return n;
  };
  CHECK(distractors_selected(0.0) >= 1);
  CHECK(distractors_selected(20.0) == 0);
}

TEST_CASE("score stage") {
  TempDir dir;
  const SynthConfig s = SmallSynth(2);
  WriteSynth(GenerateSynth(s), s, dir.path());
  PipelineConfig config = ConfigFor(dir.path());
  config.paths.out = dir / "out";
  config.extremes = 3;
  const auto report = RunScore(config);
  const std::string first = ReadFile(dir / "out" / "score-table.json");
  RunScore(config);
  CHECK(ReadFile(dir / "out" / "score-table.json") == first);

  CHECK(report["lowest_v"].size() == 3);
  CHECK(report["highest_v"].size() == 3);
  // Distractors have V = 0 exactly (orthogonal subspace) and sort first.
  for (const auto& e : report["lowest_v"]) {
    CHECK(IsSynthDistractor(e["id"].get<std::string>()));
    CHECK(e["V"].get<double>() == 0.0);
  }
  for (const auto& e : report["highest_v"]) CHECK_FALSE(IsSynthDistractor(e["id"].get<std::string>()));
  for (const auto& [id, entry] : report["concepts"].items()) {
    const double d = entry["D"].get<double>();
    CHECK(d <= 0.0);
    CHECK(d >= -std::log(3.0) - 1e-9);
  }
  CHECK(report["config"]["selection"]["k"] == 50);
  CHECK(report["classes"]["class_0"]["sim"].size() == 18);
}

TEST_CASE("select stage: k = |S_y| and gamma = 0 baseline") {
  TempDir dir;
  const SynthConfig s = SmallSynth(4);
  WriteSynth(GenerateSynth(s), s, dir.path());
  PipelineConfig config = ConfigFor(dir.path());
  config.paths.out = dir / "out";
  config.selection.k = 6;
  auto report = RunSelect(config);
  CHECK(report["union"].size() == 18);

  // gamma = 0 reproduces greedy on the objective without the V term, computed
  // here from the score-table report with the oracle objective.
  config.selection.k = 2;
  config.selection.gamma = 0.0;
  report = RunSelect(config);
  const auto table = nlohmann::json::parse(ReadFile(dir / "out" / "score-table.json"));
  const PipelineInputs in = LoadInputs(config);
  for (int y = 0; y < 3; ++y) {
    oracle::Instance inst;
    oracle::Rows rows;
    for (int c : in.pool.per_class[y]) {
      const auto& id = in.pool.concepts[c].id;
      inst.d.push_back(table["concepts"][id]["D"].get<double>());
      inst.v.push_back(table["concepts"][id]["V"].get<double>());
      const auto r = in.concepts.row(in.pool.concepts[c].embedding_row);
      rows.emplace_back(r.data(), r.data() + r.size());
    }
    inst.phi.assign(rows.size(), std::vector<double>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < rows.size(); ++j) inst.phi[i][j] = oracle::Dot(rows[i], rows[j]);
    const auto expected = oracle::NaiveGreedy(inst, 2, 1.0, 1.0, 0.0);
    const auto& chosen = report["classes"][y]["concepts"];
    REQUIRE(chosen.size() == 2);
    for (int i = 0; i < 2; ++i) {
      CHECK(chosen[i]["id"] == in.pool.concepts[in.pool.per_class[y][expected[i]]].id);
    }
  }
}

TEST_CASE("train, eval, predict and explain stages") {
  TempDir dir;
  SynthConfig s = SmallSynth(8);
  s.noise = 0.1;
  WriteSynth(GenerateSynth(s), s, dir.path());
  PipelineConfig config = ConfigFor(dir.path());
  config.paths.out = dir / "out";
  config.selection.k = 2;
  config.selection.gamma = 5.0;
  config.train.epochs = 200;

  const auto metrics = RunTrain(config);
  REQUIRE(metrics["rows"].size() == 1);
  CHECK(metrics["rows"][0]["train_accuracy"].get<double>() == 1.0);
  const auto eval = RunEval(config);
  CHECK(eval["split"] == "test");
  CHECK(eval["accuracy"].get<double>() == metrics["rows"][0]["test_accuracy"].get<double>());

  const BottleneckModel model = LoadModel(dir / "out" / "model.cbm");
  config.image_id = "test_4";
  config.top_k = model.num_concepts();
  const auto explanation = RunExplain(config);
  CHECK(explanation["top_concepts"].size() == static_cast<std::size_t>(model.num_concepts()));
  double total = 0.0;
  for (const auto& c : explanation["top_concepts"]) total += c["influence"].get<double>();
  const std::string predicted = explanation["predicted"];
  CHECK(std::abs(total - explanation["logits"][predicted].get<double>()) <= 1e-10);
  CHECK(std::abs(explanation["total_influence"].get<double>() -
                 explanation["logits"][predicted].get<double>()) <= 1e-12);

  config.image_id = "nope";
  try {
    RunExplain(config);
    FAIL("expected lookup error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kLookup);
  }
  config.image_id.clear();
  const auto predictions = RunPredict(config);
  CHECK(predictions["predictions"].size() == 18);
}

TEST_CASE("train stage: zero epochs stores the initialization; shots sweep") {
  TempDir dir;
  const SynthConfig s = SmallSynth(9);
  WriteSynth(GenerateSynth(s), s, dir.path());
  PipelineConfig config = ConfigFor(dir.path());
  config.paths.out = dir / "out";
  config.selection.k = 2;
  config.train.epochs = 0;
  RunTrain(config);
  const BottleneckModel model = LoadModel(dir / "out" / "model.cbm");
  for (int c = 0; c < model.num_concepts(); ++c) {
    for (int y = 0; y < model.num_classes(); ++y) {
      const bool member = std::find(model.memberships[c].begin(), model.memberships[c].end(), y) !=
                          model.memberships[c].end();
      CHECK(model.weights(y, c) == (member ? 1.0 : 0.0));
    }
  }

  config.train.epochs = 20;
  config.shots = ParseShotsList("1,2,full");
  const auto metrics = RunTrain(config);
  REQUIRE(metrics["rows"].size() == 3);
  CHECK(metrics["rows"][0]["train_images"] == 3);
  CHECK(metrics["rows"][1]["train_images"] == 6);
  CHECK(metrics["rows"][2]["train_images"] == 18);
  CHECK(fs::exists(dir / "out" / "model-1.cbm"));
  CHECK(fs::exists(dir / "out" / "selection-full.json"));
  const std::string csv = ReadFile(dir / "out" / "metrics.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("cli: exit codes and flag overrides") {
  TempDir dir;
  const fs::path data = dir / "data";
  REQUIRE(RunCli("synth --out " + data.string() + " --classes 3 --concepts-per-class 4 "
                 "--images-per-class 4 --test-per-class 4 --targets 20 --dim 10 --seed 3") == 0);
  const std::string cfg = "--config " + (data / "pipeline.cfg").string();
  CHECK(RunCli("select " + cfg + " --k 2 --gamma 0") == 0);
  const auto report = nlohmann::json::parse(ReadFile(data / "run" / "selection.json"));
  CHECK(report["config"]["selection"]["k"] == 2);
  CHECK(report["config"]["selection"]["gamma"] == 0.0);

  CHECK(RunCli("select " + cfg + " --k 9") == 1);           // k > |S_y|
  CHECK(RunCli("select " + cfg + " --alpha nope") == 1);    // bad value
  CHECK(RunCli("frobnicate") == 1);                         // unknown subcommand
  CHECK(RunCli("synth --out " + (dir / "x").string() + " --classes 4 --dim 4") == 1);
  WriteFile(data / "concepts.cbv", "CBV2garbage");
  CHECK(RunCli("score " + cfg) == 2);
  CHECK(RunCli("explain " + cfg + " --image-id test_0 --model " +
               (dir / "missing.cbm").string()) == 1);
}

}  // namespace
}  // namespace cbm
