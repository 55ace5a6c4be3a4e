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
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <string>
#include <vector>

#include "sparseseg/attention_map.h"
#include "sparseseg/config.h"
#include "sparseseg/errors.h"
#include "sparseseg/losses.h"
#include "sparseseg/metrics.h"
#include "sparseseg/model.h"
#include "sparseseg/synthetic_data.h"
#include "sparseseg/trainer.h"

namespace py = pybind11;

namespace sparseseg {
namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using LabelArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

py::array_t<double> ToNumpy(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  if (t.size()) std::memcpy(out.mutable_data(), t.data().data(), t.size() * sizeof(double));
  return out;
}

Tensor FromNumpy(const DoubleArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  Tensor t(shape);
  if (t.size()) std::memcpy(t.data().data(), a.data(), t.size() * sizeof(double));
  return t;
}

py::array_t<std::uint8_t> ToNumpy(const LabelGrid& g) {
  py::array_t<std::uint8_t> out({g.height, g.width});
  std::memcpy(out.mutable_data(), g.labels.data(), g.labels.size());
  return out;
}

LabelGrid FromNumpy(const LabelArray& a) {
  if (a.ndim() != 2) throw DimensionError("label arrays must be 2-D");
  LabelGrid g(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::memcpy(g.labels.data(), a.data(), g.labels.size());
  return g;
}

py::dict ToDict(const ParameterMap& params) {
  py::dict d;
  for (const auto& [name, t] : params) d[py::str(name)] = ToNumpy(t);
  return d;
}

ParameterMap FromDict(const py::dict& d) {
  ParameterMap params;
  for (const auto& [k, v] : d) {
    params.emplace(k.cast<std::string>(), FromNumpy(v.cast<DoubleArray>()));
  }
  return params;
}

py::dict SampleDict(const Sample& s) {
  py::dict d;
  d["image"] = ToNumpy(s.image);
  d["mask"] = ToNumpy(s.dense);
  d["sparse"] = ToNumpy(s.sparse);
  return d;
}

Sample SampleFrom(const py::handle& h) {
  const py::dict d = h.cast<py::dict>();
  Sample s;
  s.image = FromNumpy(d["image"].cast<DoubleArray>());
  s.dense = FromNumpy(d["mask"].cast<LabelArray>());
  s.sparse = FromNumpy(d["sparse"].cast<LabelArray>());
  return s;
}

std::vector<Sample> SamplesFrom(const py::list& list) {
  std::vector<Sample> out;
  for (const auto& h : list) out.push_back(SampleFrom(h));
  return out;
}

}  // namespace
}  // namespace sparseseg

PYBIND11_MODULE(_sparseseg, m) {
  using namespace sparseseg;
  m.doc() = "Toy sparsely annotated segmentation with attention affinity.";

  static py::exception<Error> error(m, "Error");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      error(e.what());
    }
  });

  py::class_<RunConfig>(m, "Config")
      .def(py::init<>())
      .def_static("from_text", [](const std::string& t) { return ParseRunConfig(t); })
      .def_static("load", &LoadRunConfig, py::arg("path"))
      .def("to_text", [](const RunConfig& c) { return RunConfigToText(c); })
      .def(
          "set",
          [](RunConfig& c, const std::vector<std::string>& a) { ApplyOverrides(c, a); },
          py::arg("assignments"), "Applies section.key=value overrides.");

  m.def(
      "generate_scene",
      [](std::uint64_t seed, std::size_t width, std::size_t height,
         std::size_t num_classes, std::size_t max_objects) {
        const Scene s = GenerateScene(seed, width, height, num_classes, max_objects);
        return py::make_tuple(ToNumpy(s.image), ToNumpy(s.mask));
      },
      py::arg("seed"), py::arg("width") = 64, py::arg("height") = 64,
      py::arg("num_classes") = 5, py::arg("max_objects") = 3);

  m.def(
      "sparsify",
      [](const LabelArray& mask, const std::string& mode, std::uint64_t seed,
         std::size_t points, std::size_t length, std::size_t width, double fraction) {
        SparsifySpec spec;
        const auto parsed = ParseSparsifyMode(mode);
        if (!parsed) throw ValidationError("unknown sparsify mode '" + mode + "'");
        spec.mode = *parsed;
        spec.points_per_object = points;
        spec.scribble_length = length;
        spec.scribble_width = width;
        spec.keep_fraction = fraction;
        return ToNumpy(Sparsify(FromNumpy(mask), spec, seed));
      },
      py::arg("mask"), py::arg("mode") = "point", py::arg("seed") = 0,
      py::arg("points_per_object") = 1, py::arg("scribble_length") = 24,
      py::arg("scribble_width") = 3, py::arg("keep_fraction") = 1.0);

  m.def(
      "make_dataset",
      [](const RunConfig& c, const std::string& split) {
        if (split != "train" && split != "eval") {
          throw ValidationError("split must be 'train' or 'eval'");
        }
        py::list out;
        for (const Sample& s : MakeDataset(split == "train" ? c.data : c.EvalSpec())) {
          out.append(SampleDict(s));
        }
        return out;
      },
      py::arg("config"), py::arg("split") = "train",
      "List of dicts with 'image', 'mask' and 'sparse' arrays.");

  m.def(
      "init_params",
      [](const RunConfig& c, std::uint64_t seed) {
        return ToDict(InitModelParameters(c.model, seed));
      },
      py::arg("config"), py::arg("seed") = 0);

  m.def(
      "forward",
      [](const RunConfig& c, const py::dict& params, const DoubleArray& image) {
        const ParameterMap p = FromDict(params);
        CheckCompatible(p, c.model);
        Tape tape;
        const ModelOutput out =
            ModelForward(tape, FromNumpy(image), c.model, BindParameters(tape, p));
        return ToNumpy(out.logits.value());
      },
      py::arg("config"), py::arg("params"), py::arg("image"),
      "Patch logits, M_1 x C.");

  m.def(
      "predict",
      [](const RunConfig& c, const py::dict& params, const DoubleArray& image) {
        return ToNumpy(Predict(FromNumpy(image), c.model, FromDict(params)));
      },
      py::arg("config"), py::arg("params"), py::arg("image"));

  m.def(
      "attention",
      [](const RunConfig& c, const py::dict& params, const DoubleArray& image) {
        py::list out;
        for (const auto& b : ComputeAttention(FromNumpy(image), c.model, FromDict(params))) {
          out.append(ToNumpy(b.aggregate));
        }
        return out;
      },
      py::arg("config"), py::arg("params"), py::arg("image"),
      "Layer-averaged attention map of each block.");

  m.def(
      "sample_loss",
      [](const RunConfig& c, const py::dict& params, const py::dict& sample,
         bool seg_only) {
        const Sample s = SampleFrom(sample);
        const SampleLoss l =
            ComputeSampleLoss(c.model, FromDict(params), s.image, s.sparse, c.train.loss,
                              seg_only ? Objective::kSegOnly : Objective::kFull, nullptr);
        return py::make_tuple(l.l_seg, l.l_aff, l.total);
      },
      py::arg("config"), py::arg("params"), py::arg("sample"), py::arg("seg_only") = false,
      "(l_seg, l_aff, total) for one sample.");

  m.def(
      "block_affinity_term",
      [](const DoubleArray& propagated, const DoubleArray& direct, const std::string& metric) {
        const auto m = ParseMetric(metric);
        if (!m) throw ValidationError("unknown metric '" + metric + "'");
        return BlockAffinityTerm(FromNumpy(propagated), FromNumpy(direct), *m);
      },
      py::arg("propagated"), py::arg("direct"), py::arg("metric") = "l1");

  m.def(
      "train",
      [](const RunConfig& c, const py::list& samples, bool seg_only) {
        const std::vector<Sample> data = SamplesFrom(samples);
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = Train(c.model, data, c.train,
                    seg_only ? Objective::kSegOnly : Objective::kFull);
        }
        py::list log;
        for (const LossRecord& rec : r.log) {
          py::dict d;
          d["step"] = rec.step;
          d["l_seg"] = rec.l_seg;
          d["l_aff"] = rec.l_aff;
          d["total"] = rec.total;
          d["lr"] = rec.lr;
          log.append(d);
        }
        return py::make_tuple(ToDict(r.params), log);
      },
      py::arg("config"), py::arg("samples"), py::arg("seg_only") = false,
      "Returns (params, loss log).");

  m.def(
      "evaluate",
      [](const RunConfig& c, const py::dict& params, const py::list& samples) {
        const std::vector<Sample> data = SamplesFrom(samples);
        return Evaluate(c.model, FromDict(params), data).miou;
      },
      py::arg("config"), py::arg("params"), py::arg("samples"), "Mean IoU in [0, 1].");

  m.def(
      "miou",
      [](const LabelArray& pred, const LabelArray& gt, std::size_t num_classes) {
        ConfusionMatrix cm(num_classes);
        cm.Accumulate(FromNumpy(pred), FromNumpy(gt));
        return cm.Miou().miou;
      },
      py::arg("pred"), py::arg("gt"), py::arg("num_classes"));

  m.def(
      "save_checkpoint",
      [](const std::filesystem::path& path, const py::dict& params) {
        SaveCheckpoint(path, FromDict(params));
      },
      py::arg("path"), py::arg("params"));
  m.def(
      "load_checkpoint",
      [](const std::filesystem::path& path) { return ToDict(LoadCheckpoint(path)); },
      py::arg("path"));
}
