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
#include "sparseseg/trainer.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

#include "sparseseg/errors.h"
#include "sparseseg/reference_model.h"
#include "sparseseg/rng.h"

namespace sparseseg {

std::string_view LrScheduleName(LrSchedule s) {
  return s == LrSchedule::kConstant ? "constant" : "poly";
}

std::optional<LrSchedule> ParseLrSchedule(std::string_view name) {
  if (name == "constant") return LrSchedule::kConstant;
  if (name == "poly") return LrSchedule::kPoly;
  return std::nullopt;
}

void TrainConfig::Validate() const {
  if (!(learning_rate >= 0) || !(momentum >= 0) || !(weight_decay >= 0) ||
      !(hflip_prob >= 0) || hflip_prob > 1 || !(poly_power >= 0)) {
    throw ConfigError("training rates must be nonnegative (hflip_prob <= 1)");
  }
  if (momentum >= 1) throw ConfigError("momentum must be < 1");
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  loss.Validate();
}

double TrainConfig::LearningRateAt(int step) const {
  if (schedule == LrSchedule::kConstant) return learning_rate;
  const double progress = static_cast<double>(step) / static_cast<double>(steps);
  return learning_rate * std::pow(1.0 - progress, poly_power);
}

SampleLoss ComputeSampleLoss(const ModelConfig& cfg, const ParameterMap& params,
                             const Tensor& image, const SparseLabelMap& sparse,
                             const LossConfig& loss, Objective objective,
                             GradientMap* grads) {
  Tape tape;
  const VarMap vars = BindParameters(tape, params);
  const ModelOutput out = ModelForward(tape, image, cfg, vars);
  const LabelGrid patch_labels =
      DownprojectLabels(sparse, cfg.encoder.patch_size, loss.ignore_index);
  Var l_seg = PartialCrossEntropy(out.logits, patch_labels, loss.ignore_index);
  SampleLoss result;
  Var total = l_seg;
  if (objective == Objective::kFull) {
    Var l_aff = AffinityLoss(out.encoder.attention, out.logits, loss);
    total = TotalLoss(l_seg, l_aff, loss.alpha);
    result.l_aff = l_aff.value().item();
  }
  result.l_seg = l_seg.value().item();
  result.total = total.value().item();
  if (grads) {
    tape.Backward(total);
    *grads = CollectGradients(tape, vars);
  }
  return result;
}

std::string LossLogCsv(std::span<const LossRecord> log) {
  std::ostringstream os;
  os.precision(17);
  os << "step,l_seg,l_aff,total,lr\n";
  for (const LossRecord& r : log) {
    os << r.step << ',' << r.l_seg << ',' << r.l_aff << ',' << r.total << ','
       << r.lr << '\n';
  }
  return os.str();
}

TrainResult Train(const ModelConfig& model, std::span<const Sample> dataset,
                  const TrainConfig& cfg, Objective objective,
                  const ParameterMap* init) {
  model.Validate();
  cfg.Validate();
  if (dataset.empty()) throw ValidationError("training dataset is empty");

  TrainResult result;
  result.params = init ? *init : InitModelParameters(model, cfg.seed);
  std::map<std::string, Tensor> velocity;
  for (const auto& [name, value] : result.params) {
    velocity.emplace(name, Tensor(value.shape()));
  }

  Rng order_rng = Rng::Derive(cfg.seed, 10);
  Rng flip_rng = Rng::Derive(cfg.seed, 11);
  std::vector<std::size_t> order(dataset.size());
  std::size_t cursor = order.size();

  for (int step = 0; step < cfg.steps; ++step) {
    GradientMap batch_grad;
    SampleLoss batch_loss;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i) {
          std::swap(order[i - 1], order[order_rng.UniformInt(i)]);
        }
        cursor = 0;
      }
      const Sample& sample = dataset[order[cursor++]];
      const bool flip = flip_rng.Uniform() < cfg.hflip_prob;
      GradientMap grads;
      SampleLoss loss;
      try {
        loss = flip ? ComputeSampleLoss(model, result.params,
                                        FlipHorizontal(sample.image),
                                        FlipHorizontal(sample.sparse), cfg.loss,
                                        objective, &grads)
                    : ComputeSampleLoss(model, result.params, sample.image,
                                        sample.sparse, cfg.loss, objective,
                                        &grads);
      } catch (const NumericError& e) {
        throw DivergenceError(step, e.what());
      }
      if (!std::isfinite(loss.total)) {
        throw DivergenceError(step, "non-finite loss");
      }
      batch_loss.l_seg += loss.l_seg;
      batch_loss.l_aff += loss.l_aff;
      batch_loss.total += loss.total;
      if (batch_grad.empty()) {
        batch_grad = std::move(grads);
      } else {
        for (auto& [name, g] : batch_grad) {
          const Tensor& add = grads.at(name);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += add[i];
        }
      }
    }
    const double inv_batch = 1.0 / static_cast<double>(cfg.batch_size);
    const double lr = cfg.LearningRateAt(step);
    for (auto& [name, param] : result.params) {
      const Tensor& g = batch_grad.at(name);
      Tensor& v = velocity.at(name);
      for (std::size_t i = 0; i < param.size(); ++i) {
        const double grad = g[i] * inv_batch + cfg.weight_decay * param[i];
        v[i] = cfg.momentum * v[i] + grad;
        param[i] -= lr * v[i];
      }
      if (!param.AllFinite()) throw DivergenceError(step, "parameter " + name);
    }
    result.log.push_back({step, batch_loss.l_seg * inv_batch,
                          batch_loss.l_aff * inv_batch,
                          batch_loss.total * inv_batch, lr});
  }
  return result;
}

GradCheckReport ModelGradientCheck(const ModelConfig& model,
                                   const LossConfig& loss, const Sample& sample,
                                   std::uint64_t param_seed,
                                   const GradCheckOptions& options) {
  loss.Validate();
  const ParameterMap params = InitModelParameters(model, param_seed);
  auto analytic = [&](const ParameterMap& p, GradientMap* g) {
    return ComputeSampleLoss(model, p, sample.image, sample.sparse, loss,
                             Objective::kFull, g)
        .total;
  };
  auto value = [&](const ParameterMap& p) {
    return ReferenceLoss(model, p, sample.image, sample.sparse, loss);
  };
  return FiniteDiffCheck(analytic, value, params, options);
}

MiouReport Evaluate(const ModelConfig& model, const ParameterMap& params,
                    std::span<const Sample> dataset) {
  if (dataset.empty()) throw ValidationError("evaluation dataset is empty");
  CheckCompatible(params, model);
  ConfusionMatrix cm(model.head.num_classes);
  for (const Sample& s : dataset) {
    cm.Accumulate(Predict(s.image, model, params), s.dense);
  }
  return cm.Miou();
}

std::array<std::array<bool, kNumBlocks>, 8> AblationBlockMasks() {
  return {{
      {false, false, false, false},
      {true, false, false, false},
      {false, true, false, false},
      {false, false, true, false},
      {false, false, false, true},
      {true, true, false, false},
      {true, true, true, false},
      {true, true, true, true},
  }};
}

std::string AblationReport::ToCsv() const {
  std::ostringstream os;
  os.precision(10);
  os << "table,row,block1,block2,block3,block4,metric,alpha,miou_mean,"
        "final_loss_max";
  const std::size_t seeds = rows.empty() ? 0 : rows.front().miou_per_seed.size();
  for (std::size_t s = 0; s < seeds; ++s) os << ",miou_seed" << s;
  os << '\n';
  for (const AblationRow& r : rows) {
    os << r.table << ',' << r.name;
    for (bool b : r.block_mask) os << ',' << (b ? 1 : 0);
    os << ',' << MetricName(r.metric) << ',' << r.alpha << ',' << r.miou_mean
       << ',';
    if (!r.final_loss_per_seed.empty()) {
      os << *std::max_element(r.final_loss_per_seed.begin(),
                              r.final_loss_per_seed.end());
    }
    for (double m : r.miou_per_seed) os << ',' << m;
    os << '\n';
  }
  return os.str();
}

AblationReport AblationGrid(
    const ModelConfig& model, std::span<const Sample> train,
    std::span<const Sample> eval, const TrainConfig& base,
    std::span<const std::uint64_t> seeds,
    const std::function<void(const std::string&)>& progress) {
  if (seeds.empty()) throw ValidationError("ablation needs at least one seed");
  using Key = std::tuple<std::array<bool, kNumBlocks>, Metric, double>;
  struct Runs {
    std::vector<double> mious, losses;
  };
  std::map<Key, Runs> cache;

  auto run = [&](AblationRow row) {
    // Without affinity the metric is irrelevant; normalize the cache key.
    const Key key{row.block_mask, row.alpha == 0.0 ? Metric::kL1 : row.metric,
                  row.alpha};
    auto it = cache.find(key);
    if (it == cache.end()) {
      Runs runs;
      for (std::uint64_t seed : seeds) {
        TrainConfig cfg = base;
        cfg.seed = seed;
        cfg.loss.block_mask = row.block_mask;
        cfg.loss.metric = row.metric;
        cfg.loss.alpha = row.alpha;
        const TrainResult trained = Train(model, train, cfg);
        runs.mious.push_back(Evaluate(model, trained.params, eval).miou);
        runs.losses.push_back(trained.log.back().total);
        if (progress) {
          std::ostringstream msg;
          msg << row.table << '/' << row.name << " seed " << seed << " mIoU "
              << runs.mious.back();
          progress(msg.str());
        }
      }
      it = cache.emplace(key, std::move(runs)).first;
    }
    row.miou_per_seed = it->second.mious;
    row.final_loss_per_seed = it->second.losses;
    row.miou_mean = std::accumulate(row.miou_per_seed.begin(),
                                    row.miou_per_seed.end(), 0.0) /
                    static_cast<double>(row.miou_per_seed.size());
    return row;
  };

  AblationReport report;
  const auto masks = AblationBlockMasks();
  for (std::size_t i = 0; i < masks.size(); ++i) {
    AblationRow row;
    row.table = "blocks";
    row.name = "exp" + std::to_string(i + 1);
    row.block_mask = masks[i];
    row.metric = base.loss.metric;
    row.alpha = i == 0 ? 0.0 : base.loss.alpha;
    report.rows.push_back(run(row));
  }
  for (Metric m : {Metric::kKL, Metric::kCE, Metric::kL2, Metric::kL1}) {
    AblationRow row;
    row.table = "metric";
    row.name = std::string(MetricName(m));
    row.block_mask = {true, true, true, true};
    row.metric = m;
    row.alpha = base.loss.alpha;
    report.rows.push_back(run(row));
  }
  return report;
}

}  // namespace sparseseg
