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
#include "sparseseg/reference_model.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>

#include "sparseseg/errors.h"

namespace sparseseg {
namespace {

using Mat = ReferenceMatrix;

const Tensor& Get(const ParameterMap& params, const std::string& name) {
  const auto it = params.find(name);
  if (it == params.end()) throw ConfigError("missing parameter " + name);
  return it->second;
}

// x·W + b with W (in × out) and b (out) read from `params`.
Mat Affine(const Mat& x, const ParameterMap& params, const std::string& w_name,
           const std::string& b_name) {
  const Tensor& w = Get(params, w_name);
  const Tensor& b = Get(params, b_name);
  if (w.dim(0) != x.cols) throw DimensionError("reference: " + w_name);
  Mat y(x.rows, w.dim(1));
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t c = 0; c < y.cols; ++c) {
      long double s = b[c];
      for (std::size_t k = 0; k < x.cols; ++k) s += x(r, k) * w(k, c);
      y(r, c) = s;
    }
  }
  return y;
}

Mat Pool(const Mat& x, std::size_t h, std::size_t w, std::size_t f) {
  const std::size_t oh = h / f, ow = w / f;
  Mat y(oh * ow, x.cols);
  const long double inv = 1.0L / static_cast<long double>(f * f);
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      for (std::size_t c = 0; c < x.cols; ++c) {
        long double s = 0;
        for (std::size_t a = 0; a < f; ++a) {
          for (std::size_t b = 0; b < f; ++b) {
            s += x((i * f + a) * w + j * f + b, c);
          }
        }
        y(i * ow + j, c) = s * inv;
      }
    }
  }
  return y;
}

// Half-pixel-center bilinear interpolation of an h×w grid, one source
// coordinate per output index.
Mat Resize(const Mat& x, std::size_t h, std::size_t w, std::size_t oh,
           std::size_t ow) {
  auto tap = [](std::size_t i, std::size_t in, std::size_t out) {
    long double src = (static_cast<long double>(i) + 0.5L) *
                          static_cast<long double>(in) /
                          static_cast<long double>(out) -
                      0.5L;
    src = std::clamp(src, 0.0L, static_cast<long double>(in - 1));
    const std::size_t lo = static_cast<std::size_t>(std::floor(src));
    return std::tuple{lo, std::min(lo + 1, in - 1),
                      src - static_cast<long double>(lo)};
  };
  Mat y(oh * ow, x.cols);
  for (std::size_t i = 0; i < oh; ++i) {
    const auto [y0, y1, fy] = tap(i, h, oh);
    for (std::size_t j = 0; j < ow; ++j) {
      const auto [x0, x1, fx] = tap(j, w, ow);
      for (std::size_t c = 0; c < x.cols; ++c) {
        y(i * ow + j, c) = (1 - fy) * (1 - fx) * x(y0 * w + x0, c) +
                           (1 - fy) * fx * x(y0 * w + x1, c) +
                           fy * (1 - fx) * x(y1 * w + x0, c) +
                           fy * fx * x(y1 * w + x1, c);
      }
    }
  }
  return y;
}

Mat Softmax(const Mat& x) {
  Mat y(x.rows, x.cols);
  for (std::size_t r = 0; r < x.rows; ++r) {
    long double mx = x(r, 0);
    for (std::size_t c = 1; c < x.cols; ++c) mx = std::max(mx, x(r, c));
    long double s = 0;
    for (std::size_t c = 0; c < x.cols; ++c) s += (y(r, c) = std::exp(x(r, c) - mx));
    for (std::size_t c = 0; c < x.cols; ++c) y(r, c) /= s;
  }
  return y;
}

long double Gelu(long double v) {
  return 0.5L * v * (1.0L + std::erf(v / std::sqrt(2.0L)));
}

Mat AddMat(Mat a, const Mat& b) {
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
  return a;
}

Mat FromTensor(const Tensor& t) {
  Mat m(t.dim(0), t.dim(1));
  for (std::size_t i = 0; i < t.size(); ++i) m.data[i] = t[i];
  return m;
}

long double Floored(long double v) { return std::log(std::max(v, 1e-12L)); }

}  // namespace

ReferenceForward ReferenceModelForward(const ModelConfig& cfg,
                                       const ParameterMap& params,
                                       const Tensor& image) {
  cfg.Validate();
  const EncoderConfig& enc = cfg.encoder;
  if (image.rank() != 3 || image.dim(0) != enc.image_height ||
      image.dim(1) != enc.image_width || image.dim(2) != 3) {
    throw DimensionError("reference: image " + ShapeToString(image.shape()));
  }
  const std::size_t p = enc.patch_size;
  ReferenceForward out;

  Mat x(enc.Tokens(0), enc.PatchDim());
  const std::size_t gw0 = enc.GridWidth(0);
  for (std::size_t t = 0; t < x.rows; ++t) {
    const std::size_t py = t / gw0, px = t % gw0;
    std::size_t k = 0;
    for (std::size_t dy = 0; dy < p; ++dy) {
      for (std::size_t dx = 0; dx < p; ++dx) {
        for (std::size_t c = 0; c < 3; ++c) {
          x(t, k++) = image[((py * p + dy) * enc.image_width + px * p + dx) * 3 + c];
        }
      }
    }
  }

  for (std::size_t l = 0; l < kNumBlocks; ++l) {
    const BlockConfig& bc = enc.blocks[l];
    const std::string block = "block" + std::to_string(l + 1);
    const std::size_t gh = enc.GridHeight(l), gw = enc.GridWidth(l);
    if (l > 0) {
      x = Pool(x, enc.GridHeight(l - 1), enc.GridWidth(l - 1), bc.stride);
    }
    x = AddMat(Affine(x, params, block + ".embed.w", block + ".embed.b"),
               FromTensor(Get(params, block + ".pos")));

    std::vector<Mat> maps;
    const long double scale = 1.0L / std::sqrt(static_cast<long double>(x.cols));
    for (std::size_t n = 0; n < bc.num_layers; ++n) {
      const std::string pre = LayerPrefix(l, n);
      const Mat reduced = Pool(x, gh, gw, bc.reduction);
      const Mat q = Affine(x, params, pre + ".attn.q_w", pre + ".attn.q_b");
      const Mat k = Affine(reduced, params, pre + ".attn.k_w", pre + ".attn.k_b");
      const Mat v = Affine(reduced, params, pre + ".attn.v_w", pre + ".attn.v_b");
      Mat scores(q.rows, k.rows);
      for (std::size_t i = 0; i < q.rows; ++i) {
        for (std::size_t j = 0; j < k.rows; ++j) {
          long double s = 0;
          for (std::size_t d = 0; d < q.cols; ++d) s += q(i, d) * k(j, d);
          scores(i, j) = s * scale;
        }
      }
      const Mat a = Softmax(scores);
      Mat mixed(a.rows, v.cols);
      for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t d = 0; d < v.cols; ++d) {
          long double s = 0;
          for (std::size_t j = 0; j < a.cols; ++j) s += a(i, j) * v(j, d);
          mixed(i, d) = s;
        }
      }
      x = AddMat(x, Affine(mixed, params, pre + ".attn.o_w", pre + ".attn.o_b"));
      Mat hidden = Affine(x, params, pre + ".ffn.fc1_w", pre + ".ffn.fc1_b");
      for (long double& h : hidden.data) h = Gelu(h);
      x = AddMat(x, Affine(hidden, params, pre + ".ffn.fc2_w", pre + ".ffn.fc2_b"));
      maps.push_back(a);
    }
    Mat mean(maps[0].rows, maps[0].cols);
    for (const Mat& m : maps) mean = AddMat(mean, m);
    for (long double& v : mean.data) v /= static_cast<long double>(maps.size());
    out.features.push_back(x);
    out.layer_maps.push_back(std::move(maps));
    out.aggregate.push_back(std::move(mean));
  }

  const std::size_t h1 = enc.GridHeight(0), w1 = enc.GridWidth(0);
  const std::size_t level_dim = cfg.head.level_dim;
  Mat concat(h1 * w1, kNumBlocks * level_dim);
  for (std::size_t l = 0; l < kNumBlocks; ++l) {
    const std::string name = "head.level" + std::to_string(l + 1);
    const Mat up = Resize(Affine(out.features[l], params, name + ".w", name + ".b"),
                          enc.GridHeight(l), enc.GridWidth(l), h1, w1);
    for (std::size_t r = 0; r < up.rows; ++r) {
      for (std::size_t c = 0; c < level_dim; ++c) {
        concat(r, l * level_dim + c) = up(r, c);
      }
    }
  }
  Mat fused = Affine(concat, params, "head.fuse.w", "head.fuse.b");
  if (cfg.head.activation) {
    for (long double& v : fused.data) v = Gelu(v);
  }
  out.logits = Affine(fused, params, "head.cls.w", "head.cls.b");
  return out;
}

long double ReferenceLoss(const ModelConfig& cfg, const ParameterMap& params,
                          const Tensor& image, const SparseLabelMap& sparse,
                          const LossConfig& loss, bool with_affinity) {
  const ReferenceForward fwd = ReferenceModelForward(cfg, params, image);
  const Mat& z = fwd.logits;
  const LabelGrid labels =
      DownprojectLabels(sparse, cfg.encoder.patch_size, loss.ignore_index);

  long double l_seg = 0;
  std::size_t count = 0;
  const Mat probs = Softmax(z);
  for (std::size_t r = 0; r < z.rows; ++r) {
    const std::uint8_t y = labels.labels[r];
    if (y == loss.ignore_index) continue;
    if (y >= z.cols) throw ValidationError("reference: label out of range");
    l_seg -= std::log(probs(r, y));
    ++count;
  }
  if (count > 0) l_seg /= static_cast<long double>(count);
  if (!with_affinity || loss.EnabledBlocks() == 0) return l_seg;

  const EncoderConfig& enc = cfg.encoder;
  const std::size_t h1 = enc.GridHeight(0), w1 = enc.GridWidth(0);
  const Mat& source =
      loss.normalization == NormalizationInput::kProbabilities ? probs : z;
  long double l_aff = 0;
  for (std::size_t l = 0; l < kNumBlocks; ++l) {
    if (!loss.block_mask[l]) continue;
    const Mat reduced =
        Resize(source, h1, w1, enc.ReducedHeight(l), enc.ReducedWidth(l));
    const Mat direct = Resize(source, h1, w1, enc.GridHeight(l), enc.GridWidth(l));
    const Mat& a = fwd.aggregate[l];
    Mat propagated(a.rows, reduced.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
      for (std::size_t c = 0; c < reduced.cols; ++c) {
        long double s = 0;
        for (std::size_t j = 0; j < a.cols; ++j) s += a(i, j) * reduced(j, c);
        propagated(i, c) = s;
      }
    }
    const Mat ys = Softmax(propagated);
    const Mat ps = Softmax(direct);
    long double term = 0;
    for (std::size_t i = 0; i < ys.data.size(); ++i) {
      const long double y = ys.data[i], q = ps.data[i];
      switch (loss.metric) {
        case Metric::kL1: term += std::abs(y - q); break;
        case Metric::kL2: term += (y - q) * (y - q); break;
        case Metric::kKL: term += y * (Floored(y) - Floored(q)); break;
        case Metric::kCE: term -= y * Floored(q); break;
      }
    }
    l_aff += term / static_cast<long double>(ys.rows);
  }
  l_aff /= static_cast<long double>(loss.EnabledBlocks());
  return l_seg + static_cast<long double>(loss.alpha) * l_aff;
}

}  // namespace sparseseg
