//
// Copyright 2026 The sgdlab Authors
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

#ifndef SGDLAB_THEORY_HPP_
#define SGDLAB_THEORY_HPP_

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "sgdlab/analysis.hpp"
#include "sgdlab/common.hpp"
#include "sgdlab/rng.hpp"

namespace sgdlab {

struct BoundInputs {
  double passes = 1.0;  // k
  double lipschitz = 1.0;
  double learning_rate = 1.0;
  std::size_t rows = 2;  // N
  std::size_t batch_size = 1;

  void Validate() const {
    Require(passes >= 0.0, "k must be non-negative");
    Require(lipschitz > 0.0, "L must be positive");
    Require(learning_rate > 0.0, "learning rate must be positive");
    Require(rows >= 1, "N must be at least 1");
    Require(batch_size >= 1, "B must be at least 1");
  }
};

// Every step of k passes sees mismatched examples: 2kLN*eta.
inline double VariabilityUpperBound(const BoundInputs& in) {
  in.Validate();
  return 2.0 * in.passes * in.lipschitz * static_cast<double>(in.rows) *
         in.learning_rate;
}

struct VariabilityMoments {
  double mean = 0.0;
  double variance = 0.0;
};

// Each epoch contributes 2L*eta (N - X_i) with X_i the fixed points of a
// uniform permutation, so E = 2kL*eta(N - 1) and Var = (2L*eta)^2 k.
inline VariabilityMoments ExpectedVariabilityBound(const BoundInputs& in) {
  in.Validate();
  const double two_l_eta = 2.0 * in.lipschitz * in.learning_rate;
  return {two_l_eta * in.passes * (static_cast<double>(in.rows) - 1.0),
          two_l_eta * two_l_eta * in.passes};
}

struct ChebyshevTail {
  double probability = 1.0;  // P(|bound - E| >= threshold) <= probability
  double threshold = 0.0;    // kL*eta(N - 2)
  bool clamped = false;      // N < 3, or the raw value exceeded 1
};

inline ChebyshevTail ChebyshevTailBound(const BoundInputs& in) {
  in.Validate();
  Require(in.passes >= 1.0, "k must be at least 1");
  ChebyshevTail out;
  const double n2 = static_cast<double>(in.rows) - 2.0;
  out.threshold = in.passes * in.lipschitz * in.learning_rate * n2;
  if (in.rows < 3) {
    out.clamped = true;
    return out;
  }
  const double raw = 4.0 / (in.passes * n2 * n2);
  out.clamped = raw > 1.0;
  out.probability = std::min(raw, 1.0);
  return out;
}

// Variability bound against sensitivity, unbatched and batched.
struct ClaimOneReport {
  double variability_bound = 0.0;        // 2kLN*eta
  double sensitivity_unbatched = 0.0;    // 2kL*eta
  double variability_bound_batched = 0.0;  // 2kLN*eta / B
  double sensitivity_batched = 0.0;      // 2kL*eta / B
  double gap = 0.0;                      // variability - sensitivity
  double ratio = 0.0;                    // = N
};

inline ClaimOneReport CompareBounds(const BoundInputs& in) {
  ClaimOneReport r;
  const double b = static_cast<double>(in.batch_size);
  r.variability_bound = VariabilityUpperBound(in);
  r.sensitivity_unbatched =
      TheoreticalSensitivity(in.passes, in.lipschitz, in.learning_rate, 1);
  r.variability_bound_batched = r.variability_bound / b;
  r.sensitivity_batched = TheoreticalSensitivity(in.passes, in.lipschitz,
                                                 in.learning_rate, in.batch_size);
  r.gap = r.variability_bound - r.sensitivity_unbatched;
  r.ratio = r.sensitivity_unbatched > 0.0
                ? r.variability_bound / r.sensitivity_unbatched
                : static_cast<double>(in.rows);
  return r;
}

// ---------------------------------------------------------------------------
// Fixed points of uniform random permutations

inline constexpr std::size_t kMaxExactPermutationSize = 20;  // 20! < 2^63

struct FixedPointDistribution {
  std::size_t n = 0;
  std::uint64_t permutations = 0;        // N!
  std::vector<std::uint64_t> counts;     // D_{N,j}, j = 0..N
  std::vector<double> probabilities;     // D_{N,j} / N!
};

inline std::uint64_t Subfactorial(std::size_t n) {
  Require(n <= kMaxExactPermutationSize, "subfactorial argument too large");
  std::uint64_t prev = 1, cur = 0;  // !0, !1
  if (n == 0) return prev;
  for (std::size_t k = 2; k <= n; ++k) {
    const std::uint64_t next = (k - 1) * (cur + prev);
    prev = cur;
    cur = next;
  }
  return cur;
}

inline std::uint64_t Binomial(std::size_t n, std::size_t k) {
  Require(k <= n, "binomial k exceeds n");
  std::uint64_t r = 1;
  k = std::min(k, n - k);
  // Each partial product r * (n - k + i) / i is itself a binomial.
  for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Rencontres numbers D_{N,j} = C(N, j) !(N - j).
inline FixedPointDistribution FixedPointDistributionOf(std::size_t n) {
  if (n < 1 || n > kMaxExactPermutationSize) {
    throw InvalidArgument("exact fixed-point distribution needs 1 <= N <= 20");
  }
  FixedPointDistribution d;
  d.n = n;
  d.permutations = 1;
  for (std::size_t k = 2; k <= n; ++k) d.permutations *= k;
  d.counts.resize(n + 1);
  std::uint64_t total = 0;
  for (std::size_t j = 0; j <= n; ++j) {
    d.counts[j] = Binomial(n, j) * Subfactorial(n - j);
    total += d.counts[j];
  }
  if (total != d.permutations) throw NumericError("rencontres counts do not sum to N!");
  d.probabilities.resize(n + 1);
  for (std::size_t j = 0; j <= n; ++j) {
    d.probabilities[j] = static_cast<double>(d.counts[j]) /
                         static_cast<double>(d.permutations);
  }
  return d;
}

// Moment numerators over the common denominator N!.
struct ExactMoments {
  unsigned __int128 sum_j = 0;     // sum j D_{N,j}
  unsigned __int128 sum_j2 = 0;    // sum j^2 D_{N,j}
  unsigned __int128 total = 0;     // N!
};

inline ExactMoments MomentsOf(const FixedPointDistribution& d) {
  ExactMoments m;
  m.total = d.permutations;
  for (std::size_t j = 0; j < d.counts.size(); ++j) {
    m.sum_j += static_cast<unsigned __int128>(j) * d.counts[j];
    m.sum_j2 += static_cast<unsigned __int128>(j) * j * d.counts[j];
  }
  return m;
}

// Poisson(1) pmf, the large-N limit.
inline double PoissonOnePmf(std::size_t j) {
  return std::exp(-1.0 - std::lgamma(static_cast<double>(j) + 1.0));
}

inline double TotalVariationToPoisson(const FixedPointDistribution& d) {
  double tv = 0.0, poisson_mass = 0.0;
  for (std::size_t j = 0; j <= d.n; ++j) {
    const double q = PoissonOnePmf(j);
    tv += std::fabs(d.probabilities[j] - q);
    poisson_mass += q;
  }
  tv += std::max(0.0, 1.0 - poisson_mass);
  return 0.5 * tv;
}

struct MonteCarloFixedPoints {
  std::size_t n = 0;
  std::size_t trials = 0;
  double mean = 0.0;
  double variance = 0.0;          // sample variance
  double standard_error = 0.0;
  double confidence_radius = 0.0;  // 3 standard errors
};

// Trial t shuffles iota(N) with substream t and counts positions left in
// place.
inline MonteCarloFixedPoints MonteCarloFixedPointsOf(std::size_t n,
                                                     std::size_t trials,
                                                     std::uint64_t seed) {
  Require(n >= 1, "N must be at least 1");
  Require(trials >= 100, "at least 100 trials are required");
  std::vector<std::size_t> perm(n);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    RandomStream(seed, StreamDomain::kMonteCarlo, t).Shuffle(std::span(perm));
    std::size_t fixed = 0;
    for (std::size_t i = 0; i < n; ++i) fixed += perm[i] == i;
    sum += static_cast<double>(fixed);
    sum_sq += static_cast<double>(fixed) * static_cast<double>(fixed);
  }
  MonteCarloFixedPoints out;
  out.n = n;
  out.trials = trials;
  const double k = static_cast<double>(trials);
  out.mean = sum / k;
  out.variance = std::max(0.0, (sum_sq - k * out.mean * out.mean) / (k - 1.0));
  out.standard_error = std::sqrt(out.variance / k);
  out.confidence_radius = 3.0 * out.standard_error;
  return out;
}

}  // namespace sgdlab

#endif  // SGDLAB_THEORY_HPP_
