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

#ifndef DPBF_OPS_H_
#define DPBF_OPS_H_

#include <cstddef>

#include "dpbf/rng.h"
#include "dpbf/tensor.h"

namespace dpbf {

// Batched product over the last axis: [B x T x d] * [d x p] -> [B x T x p].
// A rank-2 left factor is a single sample and yields a rank-2 result.
Tensor MatMul(const Tensor& a, const Tensor& w);

// g * w^T for g [.. x p] and w [d x p]; any rank >= 1 on the left.
Tensor MatMulTransposed(const Tensor& g, const Tensor& w);

// Adds b to every length-p row of s.
Tensor AddBias(const Tensor& s, const Tensor& b);

// [B x T x p] -> [B x p], summing over T in ascending order.
Tensor SumOverT(const Tensor& g);

double FrobeniusSq(const Tensor& x);

struct Window2d {
  std::size_t kernel_h = 1, kernel_w = 1;
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_h = 0, pad_w = 0;
};

struct Conv2dOutput {
  std::size_t height;
  std::size_t width;
};

// Output spatial size; throws ConfigError if either side is not positive.
Conv2dOutput ConvOutputSize(std::size_t height, std::size_t width,
                            const Window2d& window);

// im2col with zero padding: [B x C x H x W] -> [B x T x C*kH*kW], T = oH*oW.
// Column c*kH*kW + i*kW + j holds channel c under kernel offset (i, j).
Tensor Unfold2d(const Tensor& x, const Window2d& window);

// Adjoint of Unfold2d: scatters-and-adds columns back into an image of the
// given [B x C x H x W] shape.
Tensor Fold2d(const Tensor& cols, const Shape& image_shape,
              const Window2d& window);

// [B x T x C] with T = H*W  <->  [B x C x H x W].
Tensor TokensToChannels(const Tensor& x, std::size_t height,
                        std::size_t width);
Tensor ChannelsToTokens(const Tensor& x);

// i.i.d. N(mean, std^2) in row-major order from `rng`.
Tensor Gaussian(const Shape& shape, double mean, double std, SeededRng& rng);

// Views a tensor of rank >= 2 as [B x T x p] with T the product of the
// middle axes; rank 2 gives T = 1.
Shape AsBatchTokens(const Shape& shape);

}  // namespace dpbf

#endif  // DPBF_OPS_H_
