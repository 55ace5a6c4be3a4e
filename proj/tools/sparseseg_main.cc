/* Copyright 2026 The sparseseg Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
// Command line front end: make-data, train, eval, gradcheck,
// dump-attention, ablate and show-config.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sparseseg/attention_map.h"
#include "sparseseg/config.h"
#include "sparseseg/errors.h"
#include "sparseseg/image_io.h"
#include "sparseseg/model.h"
#include "sparseseg/synthetic_data.h"
#include "sparseseg/trainer.h"

namespace fs = std::filesystem;

namespace sparseseg {
namespace {

constexpr char kOutputDirEnv[] = "SPARSESEG_OUTPUT_DIR";

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
};

void AddCommon(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("-c,--config", opts.config,
                  "Run configuration file (defaults apply when omitted)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--set", opts.overrides,
                  "Override a config key, e.g. --set train.steps=50 "
                  "(repeatable, applied last)");
}

// Config file, then $SPARSESEG_OUTPUT_DIR, then --set overrides.
RunConfig ResolveConfig(const CommonOptions& opts) {
  RunConfig cfg = opts.config.empty() ? RunConfig{} : LoadRunConfig(opts.config);
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) {
    cfg.output_dir = env;
  }
  ApplyOverrides(cfg, opts.overrides);
  return cfg;
}

void WriteText(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

// Loads `dir` when it holds a dataset, otherwise synthesizes `spec` in
// memory. The geometry must match the model either way.
std::vector<Sample> LoadOrMake(const fs::path& dir, const DatasetSpec& spec,
                               const ModelConfig& model) {
  if (!fs::exists(dir / "meta.json")) {
    std::cerr << "note: no dataset at " << dir.string()
              << ", generating " << spec.count << " scenes in memory (seed "
              << spec.seed << ")\n";
    return MakeDataset(spec);
  }
  const DatasetSpec found = LoadDatasetSpec(dir);
  if (found.width != model.encoder.image_width ||
      found.height != model.encoder.image_height ||
      found.num_classes != model.head.num_classes) {
    throw ValidationError("dataset " + dir.string() + " is " +
                          std::to_string(found.width) + "x" +
                          std::to_string(found.height) + " with " +
                          std::to_string(found.num_classes) +
                          " classes; the model expects " +
                          std::to_string(model.encoder.image_width) + "x" +
                          std::to_string(model.encoder.image_height) +
                          " with " + std::to_string(model.head.num_classes));
  }
  return LoadDataset(dir);
}

void PrintManifest(const fs::path& dir, const DatasetSpec& spec,
                   const std::vector<Sample>& samples) {
  std::size_t labeled = 0, pixels = 0;
  for (const Sample& s : samples) {
    labeled += s.sparse.CountLabeled();
    pixels += s.sparse.size();
  }
  std::cout << dir.string() << ": " << samples.size() << " scenes " << spec.width
            << "x" << spec.height << ", " << spec.num_classes
            << " classes, seed " << spec.seed << ", sparsify "
            << SparsifyModeName(spec.sparsify.mode) << ", labeled pixels "
            << labeled << "/" << pixels << "\n";
}

int MakeData(const CommonOptions& common, const std::string& split,
             const std::string& out) {
  const RunConfig cfg = ResolveConfig(common);
  if (!out.empty() && split == "all") {
    throw UsageError("--out needs --split train or --split eval");
  }
  auto write = [&](const DatasetSpec& spec, const fs::path& dir) {
    const std::vector<Sample> samples = MakeDataset(spec);
    WriteDataset(dir, spec, samples);
    PrintManifest(dir, spec, samples);
  };
  if (split == "train" || split == "all") {
    write(cfg.data, out.empty() ? cfg.TrainDir() : fs::path(out));
  }
  if (split == "eval" || split == "all") {
    write(cfg.EvalSpec(), out.empty() ? cfg.EvalDir() : fs::path(out));
  }
  return 0;
}

int TrainCmd(const CommonOptions& common, const std::string& data,
             const std::string& checkpoint, const std::string& log,
             bool seg_only) {
  const RunConfig cfg = ResolveConfig(common);
  const std::vector<Sample> train = LoadOrMake(
      data.empty() ? cfg.TrainDir() : fs::path(data), cfg.data, cfg.model);
  const TrainResult result =
      Train(cfg.model, train, cfg.train,
            seg_only ? Objective::kSegOnly : Objective::kFull);
  const fs::path ckpt = checkpoint.empty() ? cfg.CheckpointPath() : fs::path(checkpoint);
  const fs::path log_path = log.empty() ? cfg.output_dir / "loss_log.csv" : fs::path(log);
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  SaveCheckpoint(ckpt, result.params);
  WriteText(log_path, LossLogCsv(result.log));
  const LossRecord& last = result.log.back();
  std::cout << "trained " << cfg.train.steps << " steps; final l_seg "
            << last.l_seg << " l_aff " << last.l_aff << " total " << last.total
            << "\ncheckpoint " << ckpt.string() << "\nloss log "
            << log_path.string() << "\n";
  return 0;
}

int EvalCmd(const CommonOptions& common, const std::string& data,
            const std::string& checkpoint, const std::string& csv) {
  const RunConfig cfg = ResolveConfig(common);
  const ParameterMap params = LoadCheckpoint(
      checkpoint.empty() ? cfg.CheckpointPath() : fs::path(checkpoint));
  const std::vector<Sample> eval = LoadOrMake(
      data.empty() ? cfg.EvalDir() : fs::path(data), cfg.EvalSpec(), cfg.model);
  const MiouReport report = Evaluate(cfg.model, params, eval);
  std::cout << report.ToCsv() << "\n" << report.ToTable();
  if (!csv.empty()) WriteText(csv, report.ToCsv());
  return 0;
}

int GradcheckCmd(const CommonOptions& common, std::size_t samples,
                 double epsilon, double tolerance, std::size_t scene,
                 std::optional<std::uint64_t> param_seed) {
  const RunConfig cfg = ResolveConfig(common);
  DatasetSpec spec = cfg.data;
  spec.count = scene + 1;
  const std::vector<Sample> data = MakeDataset(spec);
  GradCheckOptions options;
  options.epsilon = epsilon;
  options.num_samples = samples;
  options.seed = cfg.train.seed;
  const GradCheckReport report =
      ModelGradientCheck(cfg.model, cfg.train.loss, data[scene],
                         param_seed.value_or(cfg.train.seed), options);
  std::cout.precision(6);
  std::cout << "group,max_rel_error\n";
  for (const auto& [group, err] : report.group_max) {
    std::cout << group << ',' << err << '\n';
  }
  std::cout << "checked " << report.entries.size()
            << " coordinates\nmax_rel_error " << report.max_rel_error
            << " (tolerance " << tolerance << ")\n";
  return report.max_rel_error <= tolerance ? 0 : 1;
}

int DumpAttentionCmd(const CommonOptions& common, const std::string& checkpoint,
                     bool untrained, const std::string& image_path,
                     std::size_t x, std::size_t y, const std::string& mask_path,
                     const std::string& out) {
  const RunConfig cfg = ResolveConfig(common);
  const ParameterMap params =
      untrained ? InitModelParameters(cfg.model, cfg.train.seed)
                : LoadCheckpoint(checkpoint.empty() ? cfg.CheckpointPath()
                                                    : fs::path(checkpoint));
  const Tensor image = ReadPpm(image_path);
  const AttentionStack attention = ComputeAttention(image, cfg.model, params);
  const std::vector<Tensor> maps =
      AttentionHeatmaps(attention, cfg.model.encoder, x, y);
  const fs::path dir = out.empty() ? cfg.output_dir / "attention" : fs::path(out);
  fs::create_directories(dir);
  std::optional<LabelGrid> mask;
  if (!mask_path.empty()) mask = ReadPgm(mask_path);
  for (std::size_t l = 0; l < maps.size(); ++l) {
    const fs::path file = dir / ("block" + std::to_string(l + 1) + ".pgm");
    WritePgm(file, QuantizeHeatmap(maps[l]));
    std::cout << file.string();
    if (mask) {
      const std::uint8_t label = mask->at(y, x);
      std::cout << " concentration(class " << int(label)
                << ") " << ClassConcentration(maps[l], *mask, label);
    }
    std::cout << '\n';
  }
  return 0;
}

int AblateCmd(const CommonOptions& common, const std::string& train_dir,
              const std::string& eval_dir, const std::string& out) {
  const RunConfig cfg = ResolveConfig(common);
  const std::vector<Sample> train = LoadOrMake(
      train_dir.empty() ? cfg.TrainDir() : fs::path(train_dir), cfg.data,
      cfg.model);
  const std::vector<Sample> eval = LoadOrMake(
      eval_dir.empty() ? cfg.EvalDir() : fs::path(eval_dir), cfg.EvalSpec(),
      cfg.model);
  const AblationReport report =
      AblationGrid(cfg.model, train, eval, cfg.train, cfg.ablation_seeds,
                   [](const std::string& msg) { std::cerr << msg << '\n'; });
  const fs::path csv = out.empty() ? cfg.output_dir / "ablation.csv" : fs::path(out);
  WriteText(csv, report.ToCsv());
  std::cout << report.ToCsv();
  return 0;
}

int Run(int argc, char** argv) {
  CLI::App app{"sparseseg: sparse-annotation segmentation toolkit"};
  app.require_subcommand(1);

  CommonOptions common;

  auto* make_data = app.add_subcommand("make-data", "Synthesize datasets");
  AddCommon(make_data, common);
  std::string split = "all", data_out;
  make_data->add_option("--split", split, "Which split to write")
      ->check(CLI::IsMember({"train", "eval", "all"}))
      ->capture_default_str();
  make_data->add_option("--out", data_out,
                        "Output directory (single split only; default from "
                        "[paths])");

  auto* train = app.add_subcommand("train", "Train and write a checkpoint");
  AddCommon(train, common);
  std::string train_data, train_ckpt, train_log;
  bool seg_only = false;
  train->add_option("--data", train_data,
                    "Training dataset dir (generated in memory if absent)");
  train->add_option("--checkpoint", train_ckpt, "Checkpoint output path");
  train->add_option("--log", train_log,
                    "Loss log CSV (default <output_dir>/loss_log.csv)");
  train->add_flag("--seg-only", seg_only,
                  "Train on L_seg alone without building the affinity branch");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint (mIoU)");
  AddCommon(eval, common);
  std::string eval_data, eval_ckpt, eval_csv;
  eval->add_option("--data", eval_data,
                   "Evaluation dataset dir (generated in memory if absent)");
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint to evaluate");
  eval->add_option("--csv", eval_csv, "Also write the CSV report here");

  auto* gradcheck = app.add_subcommand(
      "gradcheck", "Compare analytic and finite-difference gradients");
  AddCommon(gradcheck, common);
  std::size_t gc_samples = 200, gc_scene = 0;
  double gc_epsilon = 1e-5, gc_tolerance = 1e-5;
  std::optional<std::uint64_t> gc_seed;
  gradcheck->add_option("--samples", gc_samples, "Coordinates to check")
      ->capture_default_str();
  gradcheck->add_option("--epsilon", gc_epsilon, "Central difference step")
      ->capture_default_str();
  gradcheck->add_option("--tolerance", gc_tolerance,
                        "Exit nonzero above this relative error")
      ->capture_default_str();
  gradcheck->add_option("--scene", gc_scene, "Training scene index")
      ->capture_default_str();
  gradcheck->add_option("--param-seed", gc_seed,
                        "Parameter init seed (default train.seed)");

  auto* dump = app.add_subcommand(
      "dump-attention", "Write per-block reference-point attention heatmaps");
  AddCommon(dump, common);
  std::string dump_ckpt, dump_image, dump_mask, dump_out;
  bool dump_untrained = false;
  std::size_t ref_x = 0, ref_y = 0;
  dump->add_option("--checkpoint", dump_ckpt, "Trained checkpoint");
  dump->add_flag("--untrained", dump_untrained,
                 "Use freshly initialized parameters (seed train.seed)");
  dump->add_option("--image", dump_image, "Input PPM image")
      ->required()
      ->check(CLI::ExistingFile);
  dump->add_option("--x", ref_x, "Reference point column")->required();
  dump->add_option("--y", ref_y, "Reference point row")->required();
  dump->add_option("--mask", dump_mask,
                   "Dense mask PGM; reports same-class concentration")
      ->check(CLI::ExistingFile);
  dump->add_option("--out", dump_out,
                   "Output directory (default <output_dir>/attention)");

  auto* ablate = app.add_subcommand(
      "ablate", "Block-mask and metric ablation grid over the ablation seeds");
  AddCommon(ablate, common);
  std::string ab_train, ab_eval, ab_out;
  ablate->add_option("--train-data", ab_train, "Training dataset dir");
  ablate->add_option("--eval-data", ab_eval, "Evaluation dataset dir");
  ablate->add_option("--out", ab_out,
                     "CSV output (default <output_dir>/ablation.csv)");

  auto* show = app.add_subcommand(
      "show-config", "Print the effective configuration with every key");
  AddCommon(show, common);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*make_data) return MakeData(common, split, data_out);
    if (*train) return TrainCmd(common, train_data, train_ckpt, train_log, seg_only);
    if (*eval) return EvalCmd(common, eval_data, eval_ckpt, eval_csv);
    if (*gradcheck) {
      return GradcheckCmd(common, gc_samples, gc_epsilon, gc_tolerance,
                          gc_scene, gc_seed);
    }
    if (*dump) {
      return DumpAttentionCmd(common, dump_ckpt, dump_untrained, dump_image,
                              ref_x, ref_y, dump_mask, dump_out);
    }
    if (*ablate) return AblateCmd(common, ab_train, ab_eval, ab_out);
    if (*show) {
      std::cout << RunConfigToText(ResolveConfig(common));
      return 0;
    }
  } catch (const DivergenceError& e) {
    std::cerr << "error: training diverged at step " << e.step() << ": "
              << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace
}  // namespace sparseseg

int main(int argc, char** argv) { return sparseseg::Run(argc, argv); }
