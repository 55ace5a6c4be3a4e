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
#ifndef SPARSESEG_TRAINER_H_
#define SPARSESEG_TRAINER_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sparseseg/autodiff.h"
#include "sparseseg/losses.h"
#include "sparseseg/metrics.h"
#include "sparseseg/model.h"
#include "sparseseg/synthetic_data.h"

namespace sparseseg {

enum class LrSchedule { kConstant, kPoly };

std::string_view LrScheduleName(LrSchedule s);
std::optional<LrSchedule> ParseLrSchedule(std::string_view name);

struct TrainConfig {
  double learning_rate = 0.001;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int steps = 100;
  std::size_t batch_size = 4;
  double hflip_prob = 0.5;
  LrSchedule schedule = LrSchedule::kConstant;
  double poly_power = 0.9;
  std::uint64_t seed = 0;
  LossConfig loss;

  void Validate() const;
  double LearningRateAt(int step) const;
};

// kSegOnly never builds the affinity branch; it is the reference path that
// an alpha = 0 run must reproduce.
enum class Objective { kFull, kSegOnly };

struct SampleLoss {
  double l_seg = 0.0;
  double l_aff = 0.0;
  double total = 0.0;
};

// Loss of one (image, sparse labels) pair. Fills `grads` with the gradient
// of `total` when non-null.
SampleLoss ComputeSampleLoss(const ModelConfig& cfg, const ParameterMap& params,
                             const Tensor& image, const SparseLabelMap& sparse,
                             const LossConfig& loss, Objective objective,
                             GradientMap* grads);

struct LossRecord {
  int step = 0;
  double l_seg = 0.0;
  double l_aff = 0.0;
  double total = 0.0;
  double lr = 0.0;
};

// CSV with header "step,l_seg,l_aff,total,lr".
std::string LossLogCsv(std::span<const LossRecord> log);

struct TrainResult {
  ParameterMap params;
  std::vector<LossRecord> log;
};

// SGD with momentum; weight decay enters as an L2 term added to the
// gradient. Batch gradients are the ordered mean of per-sample gradients.
// Parameters are initialized from cfg.seed unless `init` is given. Throws
// ValidationError on an empty dataset and DivergenceError on a non-finite
// loss.
TrainResult Train(const ModelConfig& model, std::span<const Sample> dataset,
                  const TrainConfig& cfg, Objective objective = Objective::kFull,
                  const ParameterMap* init = nullptr);

// Finite-difference check of the full per-sample loss gradient at the
// parameters InitModelParameters(model, param_seed) would produce. The
// numeric side uses the long double reference evaluator.
GradCheckReport ModelGradientCheck(const ModelConfig& model,
                                   const LossConfig& loss, const Sample& sample,
                                   std::uint64_t param_seed,
                                   const GradCheckOptions& options);

// Forward, argmax, nearest-neighbor upsampling and mIoU against the dense
// masks; no augmentation.
MiouReport Evaluate(const ModelConfig& model, const ParameterMap& params,
                    std::span<const Sample> dataset);

struct AblationRow {
  std::string table;  // "blocks" or "metric"
  std::string name;   // exp1..exp8 or the metric name
  std::array<bool, kNumBlocks> block_mask{};
  Metric metric = Metric::kL1;
  double alpha = 0.0;
  std::vector<double> miou_per_seed;
  std::vector<double> final_loss_per_seed;  // total loss at the last step
  double miou_mean = 0.0;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  std::string ToCsv() const;
};

// The eight block-mask rows (exp1 = no affinity with alpha 0, exp2..exp8 as
// single blocks, {1,2}, {1,2,3} and all four) followed by the four metric
// rows (KL, CE, L2, L1 with all blocks). Each row trains once per seed with
// `base` otherwise unchanged; identical configurations are trained once.
AblationReport AblationGrid(
    const ModelConfig& model, std::span<const Sample> train,
    std::span<const Sample> eval, const TrainConfig& base,
    std::span<const std::uint64_t> seeds,
    const std::function<void(const std::string&)>& progress = nullptr);

// Block masks of the eight ablation rows, in order.
std::array<std::array<bool, kNumBlocks>, 8> AblationBlockMasks();

}  // namespace sparseseg

#endif  // SPARSESEG_TRAINER_H_
