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

#ifndef DPBF_ACCOUNTANT_H_
#define DPBF_ACCOUNTANT_H_

#include <cstdint>
#include <vector>

namespace dpbf {

// Integer Renyi orders used by default.
std::vector<int> DefaultAlphas();

// RDP (in nats) of one step of the Poisson-subsampled Gaussian mechanism at
// integer order alpha >= 2:
//   q == 1: alpha / (2 sigma^2)
//   q <  1: log(sum_k C(alpha,k) (1-q)^(alpha-k) q^k e^{k(k-1)/(2 sigma^2)})
//           / (alpha - 1)
double RdpSubsampledGaussian(double q, double sigma, int alpha);

struct RdpCurve {
  std::vector<int> alphas;
  std::vector<double> eps_rdp;

  static RdpCurve ForStep(double q, double sigma,
                          const std::vector<int>& alphas = DefaultAlphas());
  // k-fold composition.
  RdpCurve Composed(std::int64_t steps) const;
};

struct EpsDelta {
  double eps = 0.0;
  int alpha = 0;
};

// eps = min_alpha steps * rdp(alpha) + log(1/delta) / (alpha - 1), where
// `curve` holds a single step.
EpsDelta ToEpsDelta(const RdpCurve& curve, std::int64_t steps, double delta);

EpsDelta ComputeEpsilon(double q, double sigma, std::int64_t steps,
                        double delta,
                        const std::vector<int>& alphas = DefaultAlphas());

inline constexpr double kSigmaLow = 0.3;
inline constexpr double kSigmaHigh = 100.0;

// Smallest sigma (bisection to relative width 1e-3 on [0.3, 100]) whose
// epsilon does not exceed target_eps.
double CalibrateSigma(double target_eps, double delta, double q,
                      std::int64_t steps,
                      const std::vector<int>& alphas = DefaultAlphas());

}  // namespace dpbf

#endif  // DPBF_ACCOUNTANT_H_
