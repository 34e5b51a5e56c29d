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

// cbm: concept selection and concept-bottleneck training pipeline.
//
//   cbm synth --out data --seed 1
//   cbm train --config data/pipeline.cfg --shots 1,2,4,8,16,full
//   cbm explain --config data/pipeline.cfg --image-id test_3
//
// Exit codes: 0 success, 1 usage/config error, 2 data/format error,
// 3 numerical divergence.

#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "cbm/errors.h"
#include "cbm/pipeline.h"
#include "cbm/synth.h"

namespace {

struct FlagSpec {
  const char* flag;
  const char* key;
  const char* help;
};

constexpr FlagSpec kPipelineFlags[] = {
    {"--images", "images", "labeled image embeddings (CBV1)"},
    {"--labels", "labels", "label JSON for --images"},
    {"--concepts", "concepts", "concept text embeddings (CBV1)"},
    {"--pool", "pool", "concept pool JSON"},
    {"--target-set", "target_set", "unlabeled target images for visual activation"},
    {"--test-images", "test_images", "held-out image embeddings (CBV1)"},
    {"--test-labels", "test_labels", "label JSON for --test-images"},
    {"--out", "out", "output directory"},
    {"--model", "model", "model artifact path (default <out>/model.cbm)"},
    {"--alpha", "alpha", "weight of discriminability"},
    {"--beta", "beta", "weight of coverage"},
    {"--gamma", "gamma", "weight of visual activation"},
    {"--k", "k", "concepts selected per class"},
    {"--shots", "shots", "labeled images per class, e.g. 1 or 1,2,4,8,16,full"},
    {"--seed", "seed", "sampling seed"},
    {"--lr", "lr", "learning rate"},
    {"--epochs", "epochs", "gradient descent epochs"},
    {"--top-k", "top_k", "concepts listed per explanation"},
    {"--extremes", "extremes", "length of the highest/lowest V lists"},
    {"--image-id", "image_id", "image to predict or explain"},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Visual concept selection and concept-bottleneck classification"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "pipeline config file (key = value)")
      ->check(CLI::ExistingFile);
  bool raw = false;
  app.add_flag("--raw", raw, "keep embeddings unnormalized");
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  for (const FlagSpec& f : kPipelineFlags) {
    options[f.key] = app.add_option(f.flag, values[f.key], f.help);
  }

  cbm::SynthConfig synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  synth_cmd->add_option("--classes", synth.num_classes, "number of classes");
  synth_cmd->add_option("--concepts-per-class", synth.concepts_per_class,
                        "candidate concepts per class");
  synth_cmd->add_option("--distractor-fraction", synth.distractor_fraction,
                        "share of candidates that are non-visual distractors");
  synth_cmd->add_option("--images-per-class", synth.images_per_class,
                        "training images per class");
  synth_cmd->add_option("--test-per-class", synth.test_images_per_class,
                        "test images per class");
  synth_cmd->add_option("--targets", synth.target_images, "unlabeled target images");
  synth_cmd->add_option("--dim", synth.dim, "embedding dimension");
  synth_cmd->add_option("--noise", synth.noise, "relative noise norm");

  const char* stages[][2] = {{"score", "compute the concept score table"},
                             {"select", "select concepts per class"},
                             {"train", "select concepts and train the bottleneck"},
                             {"predict", "predict classes with a trained model"},
                             {"explain", "explain one prediction"},
                             {"eval", "evaluate accuracy of a trained model"}};
  for (const auto& stage : stages) app.add_subcommand(stage[0], stage[1]);
  for (CLI::App* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    cbm::PipelineConfig config;
    if (!config_path.empty()) {
      const std::filesystem::path path(config_path);
      cbm::ApplyConfigText(cbm::ReadFile(path), path.parent_path(), &config);
    }
    for (const auto& [key, option] : options) {
      if (option->count() > 0) cbm::ApplyConfigValue(key, values[key], {}, &config);
    }
    if (raw) config.normalize = false;

    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "synth") {
      synth.seed = config.train.seed;
      const cbm::SynthDataset data = cbm::GenerateSynth(synth);
      cbm::WriteSynth(data, synth, config.paths.out);
      std::cout << "wrote synthetic dataset to " << config.paths.out.string() << "\n";
      return 0;
    }
    nlohmann::ordered_json report;
    if (name == "score") report = cbm::RunScore(config);
    else if (name == "select") report = cbm::RunSelect(config);
    else if (name == "train") report = cbm::RunTrain(config);
    else if (name == "predict") report = cbm::RunPredict(config);
    else if (name == "explain") report = cbm::RunExplain(config);
    else report = cbm::RunEval(config);
    std::cout << name << ": wrote report to " << config.paths.out.string() << "\n";
    if (name == "train") std::cout << report["rows"].dump(2) << "\n";
    if (name == "eval") std::cout << "accuracy " << report["accuracy"].dump() << "\n";
    return 0;
  } catch (const cbm::Error& e) {
    std::cerr << "cbm: " << cbm::ErrorKindName(e.kind()) << ": " << e.what() << "\n";
    return cbm::ExitCodeFor(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "cbm: " << e.what() << "\n";
    return 1;
  }
}
