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

#include "dpbf/accountant.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dpbf/errors.h"

namespace dpbf {
namespace {

constexpr double kRelativeWidth = 1e-3;

double LogBinomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

}  // namespace

std::vector<int> DefaultAlphas() {
  std::vector<int> a;
  for (int i = 2; i <= 64; ++i) a.push_back(i);
  return a;
}

double RdpSubsampledGaussian(double q, double sigma, int alpha) {
  if (!(sigma > 0.0)) {
    throw ParameterError("noise multiplier must be positive, got " +
                         std::to_string(sigma));
  }
  if (alpha < 2) {
    throw ParameterError("Renyi order must be >= 2, got " +
                         std::to_string(alpha));
  }
  if (!(q > 0.0 && q <= 1.0)) {
    throw ParameterError("sampling rate must lie in (0, 1], got " +
                         std::to_string(q));
  }
  const double a = static_cast<double>(alpha);
  if (q == 1.0) return a / (2.0 * sigma * sigma);

  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  std::vector<double> terms(alpha + 1);
  double max_term = -std::numeric_limits<double>::infinity();
  for (int k = 0; k <= alpha; ++k) {
    const double kd = static_cast<double>(k);
    terms[k] = LogBinomial(alpha, k) + (a - kd) * log_1mq + kd * log_q +
               kd * (kd - 1.0) / (2.0 * sigma * sigma);
    max_term = std::max(max_term, terms[k]);
  }
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - max_term);
  const double log_moment = max_term + std::log(sum);
  return std::max(0.0, log_moment / (a - 1.0));
}

RdpCurve RdpCurve::ForStep(double q, double sigma,
                           const std::vector<int>& alphas) {
  RdpCurve c;
  c.alphas = alphas;
  c.eps_rdp.reserve(alphas.size());
  for (int a : alphas) c.eps_rdp.push_back(RdpSubsampledGaussian(q, sigma, a));
  return c;
}

RdpCurve RdpCurve::Composed(std::int64_t steps) const {
  RdpCurve c = *this;
  for (double& e : c.eps_rdp) e *= static_cast<double>(steps);
  return c;
}

EpsDelta ToEpsDelta(const RdpCurve& curve, std::int64_t steps, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw ParameterError("delta must lie in (0, 1), got " +
                         std::to_string(delta));
  }
  if (curve.alphas.empty() || curve.alphas.size() != curve.eps_rdp.size()) {
    throw ParameterError("RDP curve is empty");
  }
  EpsDelta best{std::numeric_limits<double>::infinity(), 0};
  const double log_inv_delta = std::log(1.0 / delta);
  for (std::size_t i = 0; i < curve.alphas.size(); ++i) {
    const double eps = static_cast<double>(steps) * curve.eps_rdp[i] +
                       log_inv_delta / (curve.alphas[i] - 1.0);
    if (eps < best.eps) best = {eps, curve.alphas[i]};
  }
  return best;
}

EpsDelta ComputeEpsilon(double q, double sigma, std::int64_t steps,
                        double delta, const std::vector<int>& alphas) {
  return ToEpsDelta(RdpCurve::ForStep(q, sigma, alphas), steps, delta);
}

double CalibrateSigma(double target_eps, double delta, double q,
                      std::int64_t steps, const std::vector<int>& alphas) {
  if (!(target_eps > 0.0)) {
    throw ParameterError("target epsilon must be positive");
  }
  auto eps_at = [&](double sigma) {
    return ComputeEpsilon(q, sigma, steps, delta, alphas).eps;
  };
  double lo = kSigmaLow, hi = kSigmaHigh;
  if (eps_at(hi) > target_eps) {
    throw CalibrationError(
        "no sigma in [" + std::to_string(lo) + ", " + std::to_string(hi) +
        "] reaches epsilon " + std::to_string(target_eps));
  }
  if (eps_at(lo) <= target_eps) return lo;
  // Invariant: eps(lo) > target >= eps(hi).
  while (hi - lo > kRelativeWidth * lo) {
    const double mid = 0.5 * (lo + hi);
    if (eps_at(mid) > target_eps) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return hi;
}

}  // namespace dpbf
