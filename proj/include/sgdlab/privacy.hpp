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

#ifndef SGDLAB_PRIVACY_HPP_
#define SGDLAB_PRIVACY_HPP_

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sgdlab/analysis.hpp"
#include "sgdlab/common.hpp"
#include "sgdlab/data.hpp"
#include "sgdlab/model.hpp"
#include "sgdlab/rng.hpp"
#include "sgdlab/stats.hpp"
#include "sgdlab/train.hpp"

namespace sgdlab {

// Printed with every epsilon the toolkit emits.
inline constexpr const char* kEpsilonDisclaimer =
    "epsilon here is a descriptive estimate of intrinsic SGD variability, "
    "not a differential privacy guarantee";

struct PrivacyParams {
  double epsilon_target = 1.0;
  double delta = 0.0;
  double sensitivity = 0.0;

  // delta = 1/N^2.
  static double DefaultDelta(std::size_t rows) {
    Require(rows >= 2, "default delta needs at least two rows");
    const double n = static_cast<double>(rows);
    return 1.0 / (n * n);
  }
};

// Gaussian mechanism noise scale c * sensitivity / epsilon.
inline double SigmaTarget(const PrivacyParams& params) {
  Require(params.epsilon_target > 0.0, "epsilon must be positive");
  Require(params.sensitivity >= 0.0, "sensitivity must be non-negative");
  return GaussianMechanismConstant(params.delta) * params.sensitivity /
         params.epsilon_target;
}

struct NoiseDecision {
  double sigma_target = 0.0;
  double sigma_i = 0.0;
  double sigma_augment = 0.0;
  bool clipped = false;  // sigma_i already meets the target
};

inline NoiseDecision SigmaAugment(double sigma_target, double sigma_i) {
  Require(sigma_target >= 0.0 && sigma_i >= 0.0, "sigmas must be non-negative");
  NoiseDecision d{sigma_target, sigma_i, 0.0, false};
  if (sigma_i >= sigma_target) {
    d.clipped = true;
  } else {
    // (t - i)(t + i) avoids cancellation in t^2 - i^2.
    d.sigma_augment =
        std::sqrt((sigma_target - sigma_i) * (sigma_target + sigma_i));
  }
  return d;
}

// w + sigma * z with z ~ N(0, I) drawn from `noise`.
inline WeightVector Privatize(const WeightVector& w, double sigma,
                              RandomStream& noise) {
  Require(sigma >= 0.0, "sigma must be non-negative");
  WeightVector out = w;
  if (sigma == 0.0) return out;
  for (Eigen::Index k = 0; k < out.mutable_values().size(); ++k) {
    out.mutable_values()(k) += sigma * noise.NextNormal();
  }
  return out;
}

// w + sigma * z for a caller-held noise direction z.
inline WeightVector AddScaledNoise(const WeightVector& w, double sigma,
                                   const Vector& z) {
  Require(z.size() == w.values().size(), "noise vector has the wrong size");
  WeightVector out = w;
  if (sigma == 0.0) return out;
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    out.mutable_values()(k) += sigma * z(k);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Utility comparison

enum class UtilityVariant { kNoiseless, kDeterministic, kAugmented };

inline const char* ToString(UtilityVariant v) {
  switch (v) {
    case UtilityVariant::kNoiseless: return "noiseless";
    case UtilityVariant::kDeterministic: return "sgd_d";
    case UtilityVariant::kAugmented: return "sgd_r";
  }
  return "?";
}

struct UtilityModel {
  std::string model_id;
  WeightVector weights;
};

struct UtilityInputs {
  ModelSpec spec = ModelSpec::LogReg(1);
  const DatasetInstance* test = nullptr;
  double sensitivity = 0.0;
  double sigma_i = 0.0;
  double delta = 0.0;
  std::vector<double> epsilons = {0.5, 1.0};
  std::uint64_t noise_seed = 0;
  double alpha = 1e-6;
};

struct UtilityRow {
  std::string model_id;
  double epsilon;
  UtilityVariant variant;
  double accuracy;
  double noise_norm;  // ||w_variant - w||
};

struct VariantStats {
  double mean = 0.0;
  double stddev = 0.0;  // sample stddev
};

struct UtilitySummary {
  double epsilon = 0.0;
  NoiseDecision noise;
  VariantStats noiseless, deterministic, augmented;
  std::optional<PairedTTestResult> t_test;  // sgd_r vs sgd_d
  bool t_test_degenerate = false;
  bool significant = false;
  // 100 * (acc_r - acc_d) / (acc_noiseless - acc_d) on means; absent when
  // the gap is not positive.
  std::optional<double> percent_of_gap;
};

struct UtilityReport {
  std::vector<UtilityRow> rows;
  std::vector<UtilitySummary> summaries;
};

namespace detail {

inline VariantStats Describe(std::span<const double> v) {
  VariantStats s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

}  // namespace detail

// Paired design: model i draws one standard normal vector z_i (substream i of
// the utility noise stream) and every variant and epsilon reuses it, scaled
// to 0, sigma_target or sigma_augment.
inline UtilityReport CompareUtilities(std::span<const UtilityModel> models,
                                      const UtilityInputs& in) {
  Require(in.test != nullptr, "a test set is required");
  Require(!models.empty(), "no models to evaluate");
  Require(!in.epsilons.empty(), "no epsilons requested");
  UtilityReport report;
  std::vector<Vector> directions;
  directions.reserve(models.size());
  for (std::size_t i = 0; i < models.size(); ++i) {
    RandomStream rs(in.noise_seed, StreamDomain::kUtilityNoise, i);
    Vector z(models[i].weights.values().size());
    for (Eigen::Index k = 0; k < z.size(); ++k) z(k) = rs.NextNormal();
    directions.push_back(std::move(z));
  }
  for (double eps : in.epsilons) {
    UtilitySummary summary;
    summary.epsilon = eps;
    summary.noise =
        SigmaAugment(SigmaTarget({eps, in.delta, in.sensitivity}), in.sigma_i);
    std::vector<double> acc_n, acc_d, acc_r;
    for (std::size_t i = 0; i < models.size(); ++i) {
      const WeightVector& w = models[i].weights;
      const struct {
        UtilityVariant variant;
        double sigma;
        std::vector<double>* sink;
      } variants[] = {
          {UtilityVariant::kNoiseless, 0.0, &acc_n},
          {UtilityVariant::kDeterministic, summary.noise.sigma_target, &acc_d},
          {UtilityVariant::kAugmented, summary.noise.sigma_augment, &acc_r}};
      for (const auto& v : variants) {
        const WeightVector noisy = AddScaledNoise(w, v.sigma, directions[i]);
        const double acc = Accuracy(in.spec, noisy, *in.test);
        v.sink->push_back(acc);
        report.rows.push_back({models[i].model_id, eps, v.variant, acc,
                               (noisy.values() - w.values()).norm()});
      }
    }
    summary.noiseless = detail::Describe(acc_n);
    summary.deterministic = detail::Describe(acc_d);
    summary.augmented = detail::Describe(acc_r);
    if (models.size() >= 2) {
      try {
        summary.t_test = PairedTTest(acc_r, acc_d);
        summary.significant = summary.t_test->p_value < in.alpha &&
                              summary.t_test->mean_difference > 0.0;
      } catch (const DegenerateTestError&) {
        summary.t_test_degenerate = true;
      }
    }
    const double gap = summary.noiseless.mean - summary.deterministic.mean;
    if (gap > 0.0) {
      summary.percent_of_gap =
          100.0 * (summary.augmented.mean - summary.deterministic.mean) / gap;
    }
    report.summaries.push_back(summary);
  }
  return report;
}

}  // namespace sgdlab

#endif  // SGDLAB_PRIVACY_HPP_
