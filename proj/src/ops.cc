//
// Copyright 2026 The dpbf Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#include "dpbf/ops.h"

#include <string>

#include "dpbf/errors.h"

namespace dpbf {

Shape AsBatchTokens(const Shape& shape) {
  if (shape.size() < 2) {
    throw DimensionError("expected rank >= 2, got " + ShapeString(shape));
  }
  std::size_t tokens = 1;
  for (std::size_t i = 1; i + 1 < shape.size(); ++i) tokens *= shape[i];
  return {shape.front(), tokens, shape.back()};
}

Tensor MatMul(const Tensor& a, const Tensor& w) {
  if ((a.rank() != 2 && a.rank() != 3) || w.rank() != 2 ||
      a.shape().back() != w.dim(0)) {
    throw DimensionError("matmul shape mismatch: " + a.ShapeString() + " x " +
                         w.ShapeString());
  }
  const std::size_t d = w.dim(0);
  const std::size_t p = w.dim(1);
  const std::size_t rows = a.numel() / d;
  Shape out_shape = a.shape();
  out_shape.back() = p;
  Tensor out(out_shape);
  const double* ad = a.data().data();
  const double* wd = w.data().data();
  double* od = out.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double* orow = od + r * p;
    const double* arow = ad + r * d;
    for (std::size_t k = 0; k < d; ++k) {
      const double av = arow[k];
      const double* wrow = wd + k * p;
      for (std::size_t j = 0; j < p; ++j) orow[j] += av * wrow[j];
    }
  }
  return out;
}

Tensor MatMulTransposed(const Tensor& g, const Tensor& w) {
  if (g.rank() < 1 || w.rank() != 2 || g.shape().back() != w.dim(1)) {
    throw DimensionError("matmul-transposed shape mismatch: " +
                         g.ShapeString() + " x " + w.ShapeString() + "^T");
  }
  const std::size_t d = w.dim(0);
  const std::size_t p = w.dim(1);
  const std::size_t rows = g.numel() / p;
  Shape out_shape = g.shape();
  out_shape.back() = d;
  Tensor out(out_shape);
  const double* gd = g.data().data();
  const double* wd = w.data().data();
  double* od = out.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* grow = gd + r * p;
    for (std::size_t k = 0; k < d; ++k) {
      const double* wrow = wd + k * p;
      double acc = 0.0;
      for (std::size_t j = 0; j < p; ++j) acc += grow[j] * wrow[j];
      od[r * d + k] = acc;
    }
  }
  return out;
}

Tensor AddBias(const Tensor& s, const Tensor& b) {
  if (s.rank() < 1 || b.rank() != 1 || s.shape().back() != b.dim(0)) {
    throw DimensionError("bias length mismatch: " + s.ShapeString() + " + " +
                         b.ShapeString());
  }
  Tensor out = s;
  const std::size_t p = b.dim(0);
  auto od = out.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] += bd[i % p];
  return out;
}

Tensor SumOverT(const Tensor& g) {
  if (g.rank() != 3) {
    throw DimensionError("sum over T expects rank 3, got " + g.ShapeString());
  }
  const std::size_t batch = g.dim(0), tokens = g.dim(1), p = g.dim(2);
  Tensor out({batch, p});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < tokens; ++t) {
      for (std::size_t j = 0; j < p; ++j) out.at(b, j) += g.at(b, t, j);
    }
  }
  return out;
}

double FrobeniusSq(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v * v;
  return acc;
}

Conv2dOutput ConvOutputSize(std::size_t height, std::size_t width,
                            const Window2d& w) {
  if (w.stride_h == 0 || w.stride_w == 0 || w.kernel_h == 0 ||
      w.kernel_w == 0) {
    throw ConfigError("convolution kernel and stride must be positive");
  }
  const long long padded_h = static_cast<long long>(height + 2 * w.pad_h);
  const long long padded_w = static_cast<long long>(width + 2 * w.pad_w);
  const long long kh = static_cast<long long>(w.kernel_h);
  const long long kw = static_cast<long long>(w.kernel_w);
  if (padded_h < kh || padded_w < kw) {
    throw ConfigError("convolution output would be empty: input " +
                      std::to_string(height) + "x" + std::to_string(width) +
                      ", kernel " + std::to_string(kh) + "x" +
                      std::to_string(kw));
  }
  return {static_cast<std::size_t>((padded_h - kh) / w.stride_h + 1),
          static_cast<std::size_t>((padded_w - kw) / w.stride_w + 1)};
}

Tensor Unfold2d(const Tensor& x, const Window2d& w) {
  if (x.rank() != 4) {
    throw DimensionError("unfold2d expects [B x C x H x W], got " +
                         x.ShapeString());
  }
  const std::size_t batch = x.dim(0), channels = x.dim(1);
  const std::size_t height = x.dim(2), width = x.dim(3);
  const Conv2dOutput o = ConvOutputSize(height, width, w);
  const std::size_t tokens = o.height * o.width;
  const std::size_t cols = channels * w.kernel_h * w.kernel_w;
  Tensor out({batch, tokens, cols});
  const double* xd = x.data().data();
  double* od = out.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t oh = 0; oh < o.height; ++oh) {
      for (std::size_t ow = 0; ow < o.width; ++ow) {
        double* row = od + ((b * tokens) + oh * o.width + ow) * cols;
        for (std::size_t c = 0; c < channels; ++c) {
          for (std::size_t i = 0; i < w.kernel_h; ++i) {
            const long long ih = static_cast<long long>(oh * w.stride_h + i) -
                                 static_cast<long long>(w.pad_h);
            for (std::size_t j = 0; j < w.kernel_w; ++j) {
              const long long iw =
                  static_cast<long long>(ow * w.stride_w + j) -
                  static_cast<long long>(w.pad_w);
              double v = 0.0;
              if (ih >= 0 && iw >= 0 && ih < static_cast<long long>(height) &&
                  iw < static_cast<long long>(width)) {
                v = xd[((b * channels + c) * height + ih) * width + iw];
              }
              row[(c * w.kernel_h + i) * w.kernel_w + j] = v;
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor Fold2d(const Tensor& cols, const Shape& image_shape,
              const Window2d& w) {
  if (image_shape.size() != 4 || cols.rank() != 3) {
    throw DimensionError("fold2d expects [B x T x d] columns and a rank-4 "
                         "image shape");
  }
  const std::size_t batch = image_shape[0], channels = image_shape[1];
  const std::size_t height = image_shape[2], width = image_shape[3];
  const Conv2dOutput o = ConvOutputSize(height, width, w);
  const std::size_t tokens = o.height * o.width;
  const std::size_t ncols = channels * w.kernel_h * w.kernel_w;
  if (cols.dim(0) != batch || cols.dim(1) != tokens || cols.dim(2) != ncols) {
    throw DimensionError("fold2d columns " + cols.ShapeString() +
                         " do not match image " + ShapeString(image_shape));
  }
  Tensor out(image_shape);
  const double* cd = cols.data().data();
  double* od = out.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t oh = 0; oh < o.height; ++oh) {
      for (std::size_t ow = 0; ow < o.width; ++ow) {
        const double* row = cd + ((b * tokens) + oh * o.width + ow) * ncols;
        for (std::size_t c = 0; c < channels; ++c) {
          for (std::size_t i = 0; i < w.kernel_h; ++i) {
            const long long ih = static_cast<long long>(oh * w.stride_h + i) -
                                 static_cast<long long>(w.pad_h);
            if (ih < 0 || ih >= static_cast<long long>(height)) continue;
            for (std::size_t j = 0; j < w.kernel_w; ++j) {
              const long long iw =
                  static_cast<long long>(ow * w.stride_w + j) -
                  static_cast<long long>(w.pad_w);
              if (iw < 0 || iw >= static_cast<long long>(width)) continue;
              od[((b * channels + c) * height + ih) * width + iw] +=
                  row[(c * w.kernel_h + i) * w.kernel_w + j];
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor TokensToChannels(const Tensor& x, std::size_t height,
                        std::size_t width) {
  if (x.rank() != 3 || x.dim(1) != height * width) {
    throw DimensionError("cannot fold " + x.ShapeString() + " into " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  const std::size_t batch = x.dim(0), tokens = x.dim(1), channels = x.dim(2);
  Tensor out({batch, channels, height, width});
  double* od = out.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < tokens; ++t) {
      for (std::size_t c = 0; c < channels; ++c) {
        od[(b * channels + c) * tokens + t] = x.at(b, t, c);
      }
    }
  }
  return out;
}

Tensor ChannelsToTokens(const Tensor& x) {
  if (x.rank() != 4) {
    throw DimensionError("expected [B x C x H x W], got " + x.ShapeString());
  }
  const std::size_t batch = x.dim(0), channels = x.dim(1);
  const std::size_t tokens = x.dim(2) * x.dim(3);
  Tensor out({batch, tokens, channels});
  const double* xd = x.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t t = 0; t < tokens; ++t) {
        out.at(b, t, c) = xd[(b * channels + c) * tokens + t];
      }
    }
  }
  return out;
}

Tensor Gaussian(const Shape& shape, double mean, double std,
                SeededRng& rng) {
  if (!(std >= 0.0)) {
    throw ParameterError("gaussian std must be non-negative, got " +
                         std::to_string(std));
  }
  Tensor out(shape, mean);
  if (std == 0.0) return out;
  for (double& v : out.data()) v = mean + std * rng.Normal();
  return out;
}

}  // namespace dpbf
