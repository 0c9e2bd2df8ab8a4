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

#include <cmath>
#include <cstring>
#include <thread>

#include "dpbf/errors.h"
#include "dpbf/ledger.h"
#include "dpbf/ops.h"
#include "dpbf/parallel.h"
#include "dpbf/rng.h"
#include "dpbf/tensor.h"
#include "gtest/gtest.h"
#include "oracles.h"

namespace dpbf {
namespace {

using testing::LoopMatMul;
using testing::RandomInt;
using testing::RandomTensor;

TEST(TensorTest, ShapeAndFill) {
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.bytes(), 48u);
  for (double v : t.data()) EXPECT_EQ(v, 1.5);
  Tensor empty;
  EXPECT_EQ(empty.shape(), (Shape{0}));
  EXPECT_EQ(empty.numel(), 0u);
  Tensor scalar(Shape{}, 2.0);
  EXPECT_EQ(scalar.rank(), 0u);
  EXPECT_EQ(scalar.numel(), 1u);
  EXPECT_EQ(scalar[0], 2.0);
}

TEST(TensorTest, ValueCountMismatchThrows) {
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
  EXPECT_THROW(Tensor({2, 2}).Reshaped({3}), DimensionError);
}

TEST(TensorTest, ReshapeKeepsPayload) {
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor r = t.Reshaped({3, 2});
  EXPECT_EQ(r.at(2, 1), 6.0);
  EXPECT_EQ(r.shape(), (Shape{3, 2}));
}

TEST(TensorTest, BitwiseEqualsDistinguishesSignedZero) {
  Tensor a({1}, {0.0});
  Tensor b({1}, {-0.0});
  EXPECT_FALSE(a.BitwiseEquals(b));
  EXPECT_TRUE(a.BitwiseEquals(Tensor({1}, {0.0})));
  EXPECT_FALSE(a.BitwiseEquals(Tensor({1, 1}, {0.0})));
}

TEST(TensorTest, AllFinite) {
  Tensor t({2}, {1.0, 2.0});
  EXPECT_TRUE(t.AllFinite());
  t[1] = std::nan("");
  EXPECT_FALSE(t.AllFinite());
}

TEST(LedgerTest, ChargesTaggedBytesAndReleases) {
  AllocationLedger& ledger = AllocationLedger::Global();
  const std::size_t before = ledger.live_bytes("workspace");
  {
    LedgerScope scope(kTagWorkspace);
    Tensor t({10, 10});
    EXPECT_EQ(ledger.live_bytes("workspace"), before + 800);
  }
  EXPECT_EQ(ledger.live_bytes("workspace"), before);
}

TEST(LedgerTest, CopiesFollowTheCurrentScope) {
  AllocationLedger& ledger = AllocationLedger::Global();
  Tensor src;
  {
    LedgerScope scope(kTagData);
    src = Tensor({4});
  }
  const std::size_t ws = ledger.live_bytes(kTagWorkspace);
  LedgerScope scope(kTagWorkspace);
  Tensor copy = src;
  EXPECT_EQ(ledger.live_bytes(kTagWorkspace), ws + 32);
}

TEST(LedgerTest, PeakTracksHighWaterMark) {
  AllocationLedger& ledger = AllocationLedger::Global();
  ledger.ResetPeak();
  const std::size_t base = ledger.peak_bytes();
  {
    LedgerScope scope(kTagWorkspace);
    Tensor a({100});
    Tensor b({50});
  }
  EXPECT_EQ(ledger.peak_bytes(), base + 1200);
  EXPECT_EQ(ledger.live_bytes(), base);
}

TEST(LedgerTest, StrictModeRejectsUntaggedAllocations) {
  StrictLedgerGuard strict;
  EXPECT_THROW(Tensor({3}), InternalError);
  LedgerScope scope(kTagWorkspace);
  EXPECT_NO_THROW(Tensor({3}));
}

TEST(LedgerTest, WorkerThreadsInheritTheCallersTag) {
  AllocationLedger& ledger = AllocationLedger::Global();
  ledger.ResetPeak();
  const int saved = ThreadCount();
  SetThreadCount(4);
  {
    LedgerScope scope(kTagGhostGram);
    ParallelFor(8, [](std::size_t) { Tensor t({16}); });
  }
  SetThreadCount(saved);
  EXPECT_GE(ledger.peak_bytes(kTagGhostGram), 128u);
}

TEST(RngTest, StreamsAreReproducibleAndDistinct) {
  SeededRng a(7, "noise"), b(7, "noise"), c(7, "sampling"), d(8, "noise");
  for (int i = 0; i < 100; ++i) {
    const std::uint64_t x = a.NextU64();
    EXPECT_EQ(x, b.NextU64());
    EXPECT_NE(x, c.NextU64());
    EXPECT_NE(x, d.NextU64());
  }
}

TEST(RngTest, UniformIsOpenInterval) {
  SeededRng rng(1, "u");
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.Uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  // Standard error of the mean is 1/sqrt(12 n) ~ 6.5e-4.
  EXPECT_NEAR(sum / n, 0.5, 4e-3);
}

TEST(RngTest, NormalMomentsMatch) {
  SeededRng rng(3, "normal");
  const int n = 400000;
  double s1 = 0, s2 = 0, s4 = 0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.Normal();
    s1 += z;
    s2 += z * z;
    s4 += z * z * z * z;
  }
  EXPECT_NEAR(s1 / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
  EXPECT_NEAR(s4 / n, 3.0, 0.06);
}

TEST(OpsTest, MatMulMatchesTripleLoop) {
  SeededRng rng(11, "matmul");
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t B = RandomInt(rng, 1, 3), T = RandomInt(rng, 1, 5);
    const std::size_t d = RandomInt(rng, 1, 7), p = RandomInt(rng, 1, 7);
    const Tensor a = RandomTensor({B, T, d}, rng);
    const Tensor w = RandomTensor({d, p}, rng);
    const Tensor got = MatMul(a, w);
    const Tensor want = LoopMatMul(a.Reshaped({B * T, d}), w);
    EXPECT_LT(testing::MaxAbsDiff(got.Reshaped({B * T, p}), want), 1e-12);
  }
}

TEST(OpsTest, MatMulTransposedMatchesTripleLoop) {
  SeededRng rng(12, "matmul-t");
  const Tensor g = RandomTensor({2, 3, 4}, rng);
  const Tensor w = RandomTensor({5, 4}, rng);
  Tensor wt({4, 5});
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 4; ++j) wt.at(j, i) = w.at(i, j);
  }
  const Tensor got = MatMulTransposed(g, w);
  EXPECT_LT(testing::MaxAbsDiff(got.Reshaped({6, 5}),
                                LoopMatMul(g.Reshaped({6, 4}), wt)),
            1e-12);
}

TEST(OpsTest, MatMulRejectsMismatch) {
  EXPECT_THROW(MatMul(Tensor({2, 3}), Tensor({4, 2})), DimensionError);
}

TEST(OpsTest, SumOverTAndBias) {
  const Tensor g({1, 2, 2}, {1, 2, 3, 4});
  const Tensor s = SumOverT(g);
  EXPECT_EQ(s.shape(), (Shape{1, 2}));
  EXPECT_EQ(s[0], 4.0);
  EXPECT_EQ(s[1], 6.0);
  const Tensor b = AddBias(g, Tensor({2}, {10, 20}));
  EXPECT_EQ(b[3], 24.0);
  EXPECT_EQ(FrobeniusSq(g), 30.0);
}

TEST(OpsTest, UnfoldMatchesDirectConvolution) {
  SeededRng rng(13, "conv");
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t B = RandomInt(rng, 1, 2), C = RandomInt(rng, 1, 3);
    const std::size_t H = RandomInt(rng, 3, 7), W = RandomInt(rng, 3, 7);
    Window2d w;
    w.kernel_h = RandomInt(rng, 1, 3);
    w.kernel_w = RandomInt(rng, 1, 3);
    w.stride_h = RandomInt(rng, 1, 2);
    w.stride_w = RandomInt(rng, 1, 2);
    w.pad_h = RandomInt(rng, 0, 1);
    w.pad_w = RandomInt(rng, 0, 1);
    const std::size_t out = RandomInt(rng, 1, 3);
    const Tensor x = RandomTensor({B, C, H, W}, rng);
    const Tensor weight = RandomTensor({C * w.kernel_h * w.kernel_w, out}, rng);
    const Tensor bias = RandomTensor({out}, rng);
    const Conv2dOutput o = ConvOutputSize(H, W, w);
    const Tensor cols = Unfold2d(x, w);
    const Tensor s = AddBias(MatMul(cols, weight), bias);
    const Tensor got = TokensToChannels(s, o.height, o.width);
    const Tensor want = testing::DirectConv2d(x, weight, bias, out, w);
    ASSERT_EQ(got.shape(), want.shape());
    EXPECT_LT(testing::MaxAbsDiff(got, want), 1e-12);
  }
}

TEST(OpsTest, FoldIsTheAdjointOfUnfold) {
  SeededRng rng(14, "fold");
  Window2d w{3, 2, 2, 1, 1, 0};
  const Tensor x = RandomTensor({2, 2, 5, 4}, rng);
  const Tensor cols = Unfold2d(x, w);
  const Tensor y = RandomTensor(cols.shape(), rng);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < cols.numel(); ++i) lhs += cols[i] * y[i];
  const Tensor folded = Fold2d(y, x.shape(), w);
  for (std::size_t i = 0; i < x.numel(); ++i) rhs += x[i] * folded[i];
  EXPECT_NEAR(lhs, rhs, 1e-10 * std::abs(lhs));
}

TEST(OpsTest, ChannelTokenRoundTrip) {
  SeededRng rng(15, "tokens");
  const Tensor x = RandomTensor({2, 3, 2, 4}, rng);
  EXPECT_TRUE(TokensToChannels(ChannelsToTokens(x), 2, 4).BitwiseEquals(x));
}

TEST(OpsTest, ConvOutputSizeRejectsEmptyOutput) {
  Window2d w{5, 5, 1, 1, 0, 0};
  EXPECT_THROW(ConvOutputSize(3, 3, w), ConfigError);
  EXPECT_EQ(ConvOutputSize(5, 5, w).height, 1u);
}

TEST(OpsTest, GaussianRejectsNegativeStd) {
  SeededRng rng(1, "g");
  EXPECT_THROW(Gaussian({2}, 0.0, -1.0, rng), ParameterError);
  const Tensor c = Gaussian({3}, 2.0, 0.0, rng);
  for (double v : c.data()) EXPECT_EQ(v, 2.0);
}

}  // namespace
}  // namespace dpbf
