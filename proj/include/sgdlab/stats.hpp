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

#ifndef SGDLAB_STATS_HPP_
#define SGDLAB_STATS_HPP_

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "sgdlab/common.hpp"
#include "sgdlab/train.hpp"

namespace sgdlab {

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t sample_size = 0;
};

// Raised when a test statistic is undefined (e.g. all paired differences
// equal), so callers can report the case separately from bad input.
class DegenerateTestError : public NumericError {
 public:
  using NumericError::NumericError;
};

// ---------------------------------------------------------------------------
// Shapiro-Wilk (Royston's AS R94 approximation)

inline constexpr std::size_t kShapiroWilkMaxN = 5000;

namespace detail {

// c[0] + c[1] x + ... + c[n-1] x^(n-1), evaluated as in AS R94.
inline double SwPoly(std::span<const double> c, double x) {
  double result = c[0];
  if (c.size() > 1) {
    double p = x * c[c.size() - 1];
    for (std::size_t j = c.size() - 2; j > 0; --j) p = (p + c[j]) * x;
    result += p;
  }
  return result;
}

// Half of the antisymmetric coefficient vector: a[1..n/2], 1-based.
inline std::vector<double> SwCoefficients(std::size_t n) {
  static constexpr double c1[] = {0.0,      0.221157, -0.147981,
                                  -2.07119, 4.434685, -2.706056};
  static constexpr double c2[] = {0.0,       0.042981, -0.293762,
                                  -1.752461, 5.682633, -3.582633};
  const std::size_t nn2 = n / 2;
  std::vector<double> a(nn2 + 1, 0.0);
  if (n == 3) {
    a[1] = std::sqrt(0.5);
    return a;
  }
  const boost::math::normal_distribution<double> unit;
  const double an = static_cast<double>(n);
  const double an25 = an + 0.25;
  double summ2 = 0.0;
  for (std::size_t i = 1; i <= nn2; ++i) {
    a[i] = boost::math::quantile(unit, (static_cast<double>(i) - 0.375) / an25);
    summ2 += a[i] * a[i];
  }
  summ2 *= 2.0;
  const double ssumm2 = std::sqrt(summ2);
  const double rsn = 1.0 / std::sqrt(an);
  const double a1 = SwPoly(c1, rsn) - a[1] / ssumm2;
  std::size_t i1;
  double fac;
  if (n > 5) {
    i1 = 3;
    const double a2 = -a[2] / ssumm2 + SwPoly(c2, rsn);
    fac = std::sqrt((summ2 - 2.0 * a[1] * a[1] - 2.0 * a[2] * a[2]) /
                    (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2));
    a[2] = a2;
  } else {
    i1 = 2;
    fac = std::sqrt((summ2 - 2.0 * a[1] * a[1]) / (1.0 - 2.0 * a1 * a1));
  }
  a[1] = a1;
  for (std::size_t i = i1; i <= nn2; ++i) a[i] /= -fac;
  return a;
}

}  // namespace detail

inline TestResult ShapiroWilk(std::span<const double> sample) {
  const std::size_t n = sample.size();
  if (n < 3 || n > kShapiroWilkMaxN) {
    throw InvalidArgument("Shapiro-Wilk needs 3 <= n <= 5000, got " +
                          std::to_string(n));
  }
  std::vector<double> x(sample.begin(), sample.end());
  for (double v : x) Require(std::isfinite(v), "sample has non-finite values");
  std::sort(x.begin(), x.end());
  const double median = x[n / 2];
  for (double& v : x) v -= median;
  const double range = x.back() - x.front();
  if (!(range > 0.0)) throw InvalidArgument("sample has zero variance");

  const std::vector<double> a = detail::SwCoefficients(n);
  // coef(i) for 0-based position i: -a[i+1] in the lower half, +a[n-i] above.
  auto coef = [&](std::size_t i) {
    const std::size_t j = n - 1 - i;
    if (i == j) return 0.0;
    return i < j ? -a[i + 1] : a[j + 1];
  };
  double sa = 0.0, sx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sa += coef(i);
    sx += x[i] / range;
  }
  sa /= static_cast<double>(n);
  sx /= static_cast<double>(n);
  double ssa = 0.0, ssx = 0.0, sax = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double asa = coef(i) - sa;
    const double xsx = x[i] / range - sx;
    ssa += asa * asa;
    ssx += xsx * xsx;
    sax += asa * xsx;
  }
  // w1 = 1 - W, kept separate for accuracy when W is near 1.
  const double ssassx = std::sqrt(ssa * ssx);
  const double w1 = (ssassx - sax) * (ssassx + sax) / (ssa * ssx);
  TestResult result;
  result.sample_size = n;
  result.statistic = 1.0 - w1;

  if (n == 3) {
    const double p = 6.0 / std::numbers::pi *
                     (std::asin(std::sqrt(result.statistic)) - std::numbers::pi / 3.0);
    result.p_value = std::clamp(p, 0.0, 1.0);
    return result;
  }
  static constexpr double g[] = {-2.273, 0.459};
  static constexpr double c3[] = {0.544, -0.39978, 0.025054, -6.714e-4};
  static constexpr double c4[] = {1.3822, -0.77857, 0.062767, -0.0020322};
  static constexpr double c5[] = {-1.5861, -0.31082, -0.083751, 0.0038915};
  static constexpr double c6[] = {-0.4803, -0.082676, 0.0030302};
  const double an = static_cast<double>(n);
  double y = std::log(w1);
  double m, s;
  if (n <= 11) {
    const double gamma = detail::SwPoly(g, an);
    if (y >= gamma) {
      result.p_value = 1e-99;
      return result;
    }
    y = -std::log(gamma - y);
    m = detail::SwPoly(c3, an);
    s = std::exp(detail::SwPoly(c4, an));
  } else {
    const double ln = std::log(an);
    m = detail::SwPoly(c5, ln);
    s = std::exp(detail::SwPoly(c6, ln));
  }
  result.p_value = boost::math::cdf(
      boost::math::complement(boost::math::normal_distribution<double>(m, s), y));
  return result;
}

// ---------------------------------------------------------------------------
// Paired t-test

struct PairedTTestResult {
  double t = 0.0;
  double p_value = 1.0;
  std::size_t sample_size = 0;
  double mean_difference = 0.0;
  double sd_difference = 0.0;
};

// Two-sided test on d = a - b with n - 1 degrees of freedom.
inline PairedTTestResult PairedTTest(std::span<const double> a,
                                     std::span<const double> b) {
  Require(a.size() == b.size(), "paired samples differ in length");
  Require(a.size() >= 2, "paired t-test needs at least two pairs");
  const std::size_t n = a.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  double mean = 0.0;
  for (double v : d) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0)) {
    throw DegenerateTestError("paired differences have zero variance");
  }
  PairedTTestResult r;
  r.sample_size = n;
  r.mean_difference = mean;
  r.sd_difference = sd;
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  const boost::math::students_t_distribution<double> dist(
      static_cast<double>(n - 1));
  r.p_value = std::min(
      1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t))));
  return r;
}

inline double BonferroniThreshold(double alpha, std::size_t m) {
  Require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
  Require(m >= 1, "hypothesis count must be at least 1");
  return alpha / static_cast<double>(m);
}

// ---------------------------------------------------------------------------
// Normality of weight marginals

struct NormalityRow {
  std::string dataset_id;
  InitMode init_mode;
  std::size_t coordinate;
  double w;
  double p_value;
};

struct NormalitySweep {
  std::vector<NormalityRow> rows;
  std::size_t untestable = 0;
  std::size_t hypotheses = 0;  // seeds used x P
  double alpha = 0.05;
  double corrected_threshold = 0.0;
  std::size_t rejected_raw = 0;
  std::size_t rejected_corrected = 0;
  std::vector<std::size_t> p_histogram;  // equal bins on [0, 1]
};

inline constexpr std::size_t kPValueBins = 20;

// One test per coordinate per (dataset, init mode) group across its seeds.
// Coordinates that are constant across seeds, or groups with fewer than three
// seeds, count as untestable.
inline NormalitySweep NormalitySweepOf(std::span<const ExperimentRecord> records,
                                       double alpha = 0.05) {
  Require(!records.empty(), "no records");
  std::map<std::pair<std::string, InitMode>, std::vector<const ExperimentRecord*>>
      groups;
  std::set<std::uint64_t> seeds;
  for (const auto& r : records) {
    groups[{r.key.dataset_id, r.key.init_mode}].push_back(&r);
    seeds.insert(r.key.seed);
  }
  const std::size_t p = records.front().final_weights.size();
  NormalitySweep sweep;
  sweep.alpha = alpha;
  sweep.hypotheses = seeds.size() * p;
  sweep.corrected_threshold = BonferroniThreshold(alpha, sweep.hypotheses);
  sweep.p_histogram.assign(kPValueBins, 0);
  for (auto& [group, runs] : groups) {
    std::sort(runs.begin(), runs.end(),
              [](const auto* a, const auto* b) { return a->key < b->key; });
    for (std::size_t k = 0; k < p; ++k) {
      if (runs.size() < 3 || runs.size() > kShapiroWilkMaxN) {
        ++sweep.untestable;
        continue;
      }
      std::vector<double> sample;
      sample.reserve(runs.size());
      for (const auto* r : runs) {
        Require(r->final_weights.size() == p, "records differ in parameter count");
        sample.push_back(r->final_weights[k]);
      }
      const auto [lo, hi] = std::minmax_element(sample.begin(), sample.end());
      if (*lo == *hi) {
        ++sweep.untestable;
        continue;
      }
      const TestResult t = ShapiroWilk(sample);
      sweep.rows.push_back({group.first, group.second, k, t.statistic, t.p_value});
      if (t.p_value < alpha) ++sweep.rejected_raw;
      if (t.p_value < sweep.corrected_threshold) ++sweep.rejected_corrected;
      const auto bin = std::min(kPValueBins - 1,
                                static_cast<std::size_t>(t.p_value * kPValueBins));
      ++sweep.p_histogram[bin];
    }
  }
  if (sweep.rows.empty()) throw InvalidArgument("no testable coordinates");
  return sweep;
}

}  // namespace sgdlab

#endif  // SGDLAB_STATS_HPP_
