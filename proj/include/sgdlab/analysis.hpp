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

#ifndef SGDLAB_ANALYSIS_HPP_
#define SGDLAB_ANALYSIS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "sgdlab/common.hpp"
#include "sgdlab/model.hpp"
#include "sgdlab/rng.hpp"
#include "sgdlab/train.hpp"

namespace sgdlab {

// ---------------------------------------------------------------------------
// Distances and closed forms

inline double WeightDistance(const WeightVector& a, const WeightVector& b) {
  Require(a.SameLayout(b), "weight vectors have different layouts");
  return (a.values() - b.values()).norm();
}

// 2kL*eta/B: the sensitivity bound for k passes of batch-B SGD on an
// L-Lipschitz convex loss.
inline double TheoreticalSensitivity(double passes, double lipschitz,
                                     double learning_rate,
                                     std::size_t batch_size) {
  Require(passes >= 0.0 && lipschitz >= 0.0 && learning_rate >= 0.0,
          "sensitivity inputs must be non-negative");
  Require(batch_size >= 1, "batch size must be at least 1");
  return 2.0 * passes * lipschitz * learning_rate /
         static_cast<double>(batch_size);
}

// c = sqrt(2 ln(1.25 / delta)) + 1e-5. The additive guard makes c^2 strictly
// exceed 2 ln(1.25 / delta).
inline double GaussianMechanismConstant(double delta) {
  Require(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
  return std::sqrt(2.0 * std::log(1.25 / delta)) + 1e-5;
}

struct EpsilonValue {
  double epsilon = 0.0;
  // sigma == 0 with a positive sensitivity.
  bool infinite = false;
  // The Gaussian mechanism guarantee only covers epsilon in (0, 1).
  bool outside_guarantee_range = false;
};

inline EpsilonValue ComputeEpsilon(double sensitivity, double sigma,
                                   double delta) {
  Require(sensitivity >= 0.0, "sensitivity must be non-negative");
  Require(sigma >= 0.0, "sigma must be non-negative");
  const double c = GaussianMechanismConstant(delta);
  EpsilonValue out;
  if (sensitivity == 0.0) return out;
  if (sigma == 0.0) {
    out.epsilon = std::numeric_limits<double>::infinity();
    out.infinite = true;
    out.outside_guarantee_range = true;
    return out;
  }
  out.epsilon = c * sensitivity / sigma;
  out.outside_guarantee_range = out.epsilon >= 1.0;
  return out;
}

// ---------------------------------------------------------------------------
// Record views

// A record reduced to the weights being analysed (final or a checkpoint).
struct WeightEntry {
  const ExperimentKey* key;
  const WeightVector* weights;
};

namespace detail {

inline void RequireSameDigest(std::span<const ExperimentRecord> records) {
  for (const auto& r : records) {
    Require(r.config_digest == records.front().config_digest,
            "records come from different configurations");
  }
}

// Canonical (key-sorted) view so aggregation never depends on input order.
inline std::vector<WeightEntry> FinalEntries(
    std::span<const ExperimentRecord> records,
    std::optional<InitMode> mode = std::nullopt) {
  RequireSameDigest(records);
  std::vector<WeightEntry> out;
  for (const auto& r : records) {
    if (mode && r.key.init_mode != *mode) continue;
    out.push_back({&r.key, &r.final_weights});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return *a.key < *b.key;
  });
  return out;
}

inline std::vector<WeightEntry> CheckpointEntries(
    std::span<const ExperimentRecord> records, std::size_t step,
    std::optional<InitMode> mode = std::nullopt) {
  std::vector<WeightEntry> out;
  for (const auto& r : records) {
    if (mode && r.key.init_mode != *mode) continue;
    const auto it = r.checkpoints.find(step);
    Require(it != r.checkpoints.end(),
            "record " + r.key.ToString() + " lacks checkpoint " +
                std::to_string(step));
    out.push_back({&r.key, &it->second});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return *a.key < *b.key;
  });
  return out;
}

// Population standard deviation, two-pass.
inline double PopulationStddev(std::span<const double> values) {
  if (values.empty()) return 0.0;
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / n);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Sensitivity

struct PairwiseSensitivity {
  std::uint64_t seed;
  InitMode init_mode;
  std::string dataset_a;
  std::string dataset_b;
  double value;
};

struct SensitivityReport {
  std::optional<double> theoretical;
  double empirical = 0.0;
  std::vector<PairwiseSensitivity> pairwise;
};

// Distances between runs that share seed and init mode but were trained on
// different datasets. Entries must be key-sorted.
inline std::vector<PairwiseSensitivity> PairwiseDistances(
    std::span<const WeightEntry> entries) {
  std::vector<PairwiseSensitivity> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    for (std::size_t j = i + 1; j < entries.size(); ++j) {
      const ExperimentKey& a = *entries[i].key;
      const ExperimentKey& b = *entries[j].key;
      if (a.seed != b.seed || a.init_mode != b.init_mode ||
          a.dataset_id == b.dataset_id) {
        continue;
      }
      out.push_back({a.seed, a.init_mode, a.dataset_id, b.dataset_id,
                     WeightDistance(*entries[i].weights, *entries[j].weights)});
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
    return std::tie(x.seed, x.init_mode, x.dataset_a, x.dataset_b) <
           std::tie(y.seed, y.init_mode, y.dataset_a, y.dataset_b);
  });
  return out;
}

inline SensitivityReport SensitivityFromEntries(
    std::span<const WeightEntry> entries, std::optional<double> theoretical) {
  SensitivityReport report;
  report.theoretical = theoretical;
  report.pairwise = PairwiseDistances(entries);
  if (report.pairwise.empty()) {
    throw InvalidArgument(
        "no (seed, dataset, dataset) triple available for sensitivity");
  }
  for (const auto& p : report.pairwise) {
    report.empirical = std::max(report.empirical, p.value);
  }
  return report;
}

// Empirical sensitivity: max over same-seed pairs of family members.
// `theoretical` is attached when the loss has a Lipschitz constant.
inline SensitivityReport EmpiricalSensitivity(
    std::span<const ExperimentRecord> records,
    std::optional<double> theoretical = std::nullopt,
    std::optional<InitMode> mode = std::nullopt) {
  const auto entries = detail::FinalEntries(records, mode);
  return SensitivityFromEntries(entries, theoretical);
}

// ---------------------------------------------------------------------------
// Variability

struct VariabilityReport {
  std::map<std::string, double> sigma_per_dataset;
  double sigma_i = 0.0;
  std::string argmin_dataset;
};

// Groups by dataset id; each group must hold >= 2 seeds.
inline VariabilityReport VariabilityFromEntries(
    std::span<const WeightEntry> entries, bool skip_small_groups = false) {
  std::map<std::string, std::vector<const WeightVector*>> groups;
  for (const auto& e : entries) groups[e.key->dataset_id].push_back(e.weights);

  VariabilityReport report;
  for (const auto& [id, ws] : groups) {
    if (ws.size() < 2) {
      if (skip_small_groups) continue;
      throw InvalidArgument("dataset " + id +
                            " has a single seed; variability needs >= 2");
    }
    const Eigen::Index p = ws.front()->values().size();
    Vector mean = Vector::Zero(p);
    for (const auto* w : ws) mean += w->values();
    mean /= static_cast<double>(ws.size());
    std::vector<double> deviations;
    deviations.reserve(ws.size() * static_cast<std::size_t>(p));
    for (const auto* w : ws) {
      for (Eigen::Index k = 0; k < p; ++k) {
        deviations.push_back(w->values()(k) - mean(k));
      }
    }
    report.sigma_per_dataset[id] = detail::PopulationStddev(deviations);
  }
  Require(!report.sigma_per_dataset.empty(),
          "no dataset has enough seeds for a variability estimate");
  report.sigma_i = std::numeric_limits<double>::infinity();
  for (const auto& [id, sigma] : report.sigma_per_dataset) {
    if (sigma < report.sigma_i) {
      report.sigma_i = sigma;
      report.argmin_dataset = id;
    }
  }
  return report;
}

// sigma_a: population stddev of the pooled coordinates of w_{r,a} - mean_a
// over all seeds r; sigma_i = min_a sigma_a.
inline VariabilityReport VariabilitySigma(
    std::span<const ExperimentRecord> records,
    std::optional<InitMode> mode = std::nullopt) {
  const auto entries = detail::FinalEntries(records, mode);
  return VariabilityFromEntries(entries);
}

// Alternative aggregates, reported as diagnostics only.
struct VariabilityDiagnostics {
  // Mean over coordinates of the per-coordinate population stddev.
  double mean_coordinate_sigma = 0.0;
  // Population stddev of ||w_r|| across seeds.
  double norm_sigma = 0.0;
};

inline VariabilityDiagnostics VariabilityDiagnosticsFor(
    std::span<const WeightVector* const> runs) {
  Require(runs.size() >= 2, "diagnostics need at least two runs");
  const Eigen::Index p = runs.front()->values().size();
  VariabilityDiagnostics out;
  std::vector<double> column(runs.size());
  for (Eigen::Index k = 0; k < p; ++k) {
    for (std::size_t r = 0; r < runs.size(); ++r) column[r] = runs[r]->values()(k);
    out.mean_coordinate_sigma += detail::PopulationStddev(column);
  }
  out.mean_coordinate_sigma /= static_cast<double>(p);
  for (std::size_t r = 0; r < runs.size(); ++r) column[r] = runs[r]->values().norm();
  out.norm_sigma = detail::PopulationStddev(column);
  return out;
}

// ---------------------------------------------------------------------------
// Epsilon estimation

struct PairwiseEpsilon {
  std::string dataset_a;
  std::string dataset_b;
  double local_sensitivity;
  double local_sigma;
  EpsilonValue epsilon;
};

struct EpsilonReport {
  double delta = 0.0;
  double sigma_i = 0.0;
  std::map<std::string, double> sigma_per_dataset;
  std::optional<double> sensitivity_theoretical;
  double sensitivity_empirical = 0.0;
  std::optional<EpsilonValue> epsilon_theoretical;
  EpsilonValue epsilon_empirical;
  std::vector<PairwiseEpsilon> pairwise;
};

// Per member pair: local sensitivity = max over seeds of the pair distance,
// local sigma = min of the two members' sigma_a.
inline std::vector<PairwiseEpsilon> PairwiseEpsilons(
    std::span<const ExperimentRecord> records, double delta,
    std::optional<InitMode> mode = std::nullopt) {
  const auto entries = detail::FinalEntries(records, mode);
  const VariabilityReport variability = VariabilityFromEntries(entries);
  std::map<std::pair<std::string, std::string>, double> local;
  for (const auto& p : PairwiseDistances(entries)) {
    auto& v = local[{p.dataset_a, p.dataset_b}];
    v = std::max(v, p.value);
  }
  Require(!local.empty(), "no member pair shares a seed");
  std::vector<PairwiseEpsilon> out;
  for (const auto& [pair, sensitivity] : local) {
    const double sigma = std::min(variability.sigma_per_dataset.at(pair.first),
                                  variability.sigma_per_dataset.at(pair.second));
    out.push_back({pair.first, pair.second, sensitivity, sigma,
                   ComputeEpsilon(sensitivity, sigma, delta)});
  }
  return out;
}

// The full estimate: theoretical and empirical sensitivity, sigma_i, and the
// resulting epsilons. sigma_i comes from `sigma_mode` runs (vary by default).
inline EpsilonReport EstimateEpsilon(
    std::span<const ExperimentRecord> records, double delta,
    std::optional<double> theoretical_sensitivity,
    InitMode sigma_mode = InitMode::kVary) {
  EpsilonReport report;
  report.delta = delta;
  const SensitivityReport sens =
      EmpiricalSensitivity(records, theoretical_sensitivity);
  const VariabilityReport var = VariabilitySigma(records, sigma_mode);
  report.sigma_i = var.sigma_i;
  report.sigma_per_dataset = var.sigma_per_dataset;
  report.sensitivity_theoretical = theoretical_sensitivity;
  report.sensitivity_empirical = sens.empirical;
  if (theoretical_sensitivity) {
    report.epsilon_theoretical =
        ComputeEpsilon(*theoretical_sensitivity, var.sigma_i, delta);
  }
  report.epsilon_empirical = ComputeEpsilon(sens.empirical, var.sigma_i, delta);
  report.pairwise = PairwiseEpsilons(records, delta, sigma_mode);
  return report;
}

// ---------------------------------------------------------------------------
// Distributions of pairwise weight distances

enum class DeltaKind { kS, kVFix, kVVary, kSPlusV };

inline const char* ToString(DeltaKind kind) {
  switch (kind) {
    case DeltaKind::kS: return "S";
    case DeltaKind::kVFix: return "V_fix";
    case DeltaKind::kVVary: return "V_vary";
    case DeltaKind::kSPlusV: return "S_plus_V";
  }
  return "?";
}

inline constexpr DeltaKind kAllDeltaKinds[] = {
    DeltaKind::kS, DeltaKind::kVFix, DeltaKind::kVVary, DeltaKind::kSPlusV};

struct DeltaSample {
  DeltaKind kind;
  double value;
  ExperimentKey a;
  ExperimentKey b;
};

struct Histogram {
  std::vector<double> edges;  // size = counts.size() + 1
  std::vector<std::size_t> counts;
  std::string rule;  // "freedman-diaconis", "equal-50" or "degenerate"
};

// Linear-interpolation quantile of sorted data (numpy's default).
inline double Quantile(std::span<const double> sorted, double q) {
  Require(!sorted.empty(), "quantile of an empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline constexpr std::size_t kFallbackBins = 50;
inline constexpr std::size_t kMaxFdBins = 1000;

// Freedman-Diaconis bin width 2 IQR n^(-1/3); 50 equal bins when that width is
// zero or yields more than 1000 bins; a single [v, v] bin for constant data.
inline Histogram MakeHistogram(std::vector<double> values) {
  Require(!values.empty(), "histogram of an empty sample");
  std::sort(values.begin(), values.end());
  const double lo = values.front(), hi = values.back();
  Histogram h;
  if (hi == lo) {
    h.rule = "degenerate";
    h.edges = {lo, hi};
    h.counts = {values.size()};
    return h;
  }
  const double iqr = Quantile(values, 0.75) - Quantile(values, 0.25);
  const double width =
      2.0 * iqr / std::cbrt(static_cast<double>(values.size()));
  std::size_t bins = kFallbackBins;
  h.rule = "equal-50";
  if (width > 0.0) {
    const double fd = std::ceil((hi - lo) / width);
    if (fd >= 1.0 && fd <= static_cast<double>(kMaxFdBins)) {
      bins = static_cast<std::size_t>(fd);
      h.rule = "freedman-diaconis";
    }
  }
  h.edges.resize(bins + 1);
  for (std::size_t k = 0; k <= bins; ++k) {
    h.edges[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(bins);
  }
  h.edges.back() = hi;
  h.counts.assign(bins, 0);
  for (double v : values) {
    auto k = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
    if (k >= bins) k = bins - 1;
    ++h.counts[k];
  }
  return h;
}

struct DeltaSummary {
  std::size_t count = 0;
  double min = 0.0;
  double median = 0.0;
  double max = 0.0;
  Histogram histogram;
  std::vector<double> values;  // sorted
};

// Every unordered pair of runs with the same init mode falls into exactly one
// kind: S (same seed, different dataset), V_fix / V_vary (same dataset,
// different seed, fixed / varying init) or S_plus_V (both differ).
inline std::vector<DeltaSample> ClassifyPairs(
    std::span<const ExperimentRecord> records) {
  const auto entries = detail::FinalEntries(records);
  std::vector<DeltaSample> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    for (std::size_t j = i + 1; j < entries.size(); ++j) {
      const ExperimentKey& a = *entries[i].key;
      const ExperimentKey& b = *entries[j].key;
      if (a.init_mode != b.init_mode) continue;
      const bool same_data = a.dataset_id == b.dataset_id;
      const bool same_seed = a.seed == b.seed;
      if (same_data && same_seed) continue;
      DeltaKind kind;
      if (same_seed) {
        kind = DeltaKind::kS;
      } else if (same_data) {
        kind = a.init_mode == InitMode::kFixed ? DeltaKind::kVFix
                                               : DeltaKind::kVVary;
      } else {
        kind = DeltaKind::kSPlusV;
      }
      out.push_back({kind, WeightDistance(*entries[i].weights, *entries[j].weights),
                     a, b});
    }
  }
  return out;
}

inline DeltaSummary Summarize(std::vector<double> values) {
  DeltaSummary s;
  std::sort(values.begin(), values.end());
  s.count = values.size();
  s.min = values.front();
  s.max = values.back();
  s.median = Quantile(values, 0.5);
  s.histogram = MakeHistogram(values);
  s.values = std::move(values);
  return s;
}

// Summaries for every populated kind. Kinds listed in `required` must be
// present.
inline std::map<DeltaKind, DeltaSummary> DeltaDistributions(
    std::span<const ExperimentRecord> records,
    std::span<const DeltaKind> required = {}) {
  std::map<DeltaKind, std::vector<double>> grouped;
  for (const auto& s : ClassifyPairs(records)) grouped[s.kind].push_back(s.value);
  for (DeltaKind k : required) {
    if (!grouped.contains(k)) {
      throw InvalidArgument(std::string("no admissible pairs for kind ") +
                            ToString(k));
    }
  }
  std::map<DeltaKind, DeltaSummary> out;
  for (auto& [kind, values] : grouped) out[kind] = Summarize(std::move(values));
  return out;
}

// ---------------------------------------------------------------------------
// Dependence on training steps

struct StepCurveInputs {
  std::size_t rows = 0;  // rows per family member
  std::size_t batch_size = 1;
  double learning_rate = 0.0;
  std::optional<double> lipschitz;
};

struct StepPoint {
  std::size_t step = 0;
  std::optional<double> empirical_sensitivity;
  std::optional<double> sigma_fixed;
  std::optional<double> sigma_vary;
  std::optional<double> theoretical;           // k = t B / N
  std::optional<double> theoretical_stepwise;  // k = epochs started
};

inline std::vector<StepPoint> StabilityVsSteps(
    std::span<const ExperimentRecord> records, const StepCurveInputs& in) {
  Require(!records.empty(), "no records");
  detail::RequireSameDigest(records);
  std::vector<std::size_t> steps;
  for (const auto& [t, w] : records.front().checkpoints) steps.push_back(t);
  for (const auto& r : records) {
    Require(r.checkpoints.size() == steps.size(),
            "records have mismatched checkpoint schedules");
  }
  const std::size_t per_epoch = in.rows / in.batch_size;
  Require(per_epoch >= 1, "batch size exceeds member size");

  std::vector<StepPoint> out;
  for (std::size_t t : steps) {
    StepPoint p;
    p.step = t;
    const auto all = detail::CheckpointEntries(records, t);
    const auto pairs = PairwiseDistances(all);
    if (!pairs.empty()) {
      double m = 0.0;
      for (const auto& x : pairs) m = std::max(m, x.value);
      p.empirical_sensitivity = m;
    }
    for (InitMode mode : {InitMode::kFixed, InitMode::kVary}) {
      const auto entries = detail::CheckpointEntries(records, t, mode);
      if (entries.empty()) continue;
      try {
        const double s = VariabilityFromEntries(entries, true).sigma_i;
        (mode == InitMode::kFixed ? p.sigma_fixed : p.sigma_vary) = s;
      } catch (const InvalidArgument&) {
        // Fewer than two seeds per dataset in this mode.
      }
    }
    if (in.lipschitz) {
      const double k = static_cast<double>(t) *
                       static_cast<double>(in.batch_size) /
                       static_cast<double>(in.rows);
      const double k_epochs = static_cast<double>((t + per_epoch - 1) / per_epoch);
      p.theoretical = TheoreticalSensitivity(k, *in.lipschitz, in.learning_rate,
                                             in.batch_size);
      p.theoretical_stepwise = TheoreticalSensitivity(
          k_epochs, *in.lipschitz, in.learning_rate, in.batch_size);
    }
    out.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convergence of the estimates in the number of experiments

struct ConvergencePoint {
  std::size_t experiments = 0;
  std::optional<double> empirical_sensitivity;
  std::optional<double> sigma_i;
};

// Records are put in a seeded random order and the estimates recomputed on
// growing prefixes, so successive subsets are nested.
inline std::vector<ConvergencePoint> EstimateConvergence(
    std::span<const ExperimentRecord> records,
    std::span<const std::size_t> subset_sizes, std::uint64_t resample_seed,
    InitMode sigma_mode = InitMode::kVary) {
  auto entries = detail::FinalEntries(records);
  RandomStream(resample_seed, StreamDomain::kResample)
      .Shuffle(std::span(entries));
  std::vector<ConvergencePoint> out;
  for (std::size_t size : subset_sizes) {
    Require(size >= 1, "subset size must be positive");
    Require(size <= entries.size(), "subset size exceeds record count");
    std::vector<WeightEntry> subset(entries.begin(), entries.begin() + size);
    std::sort(subset.begin(), subset.end(), [](const auto& a, const auto& b) {
      return *a.key < *b.key;
    });
    ConvergencePoint p;
    p.experiments = size;
    const auto pairs = PairwiseDistances(subset);
    if (!pairs.empty()) {
      double m = 0.0;
      for (const auto& x : pairs) m = std::max(m, x.value);
      p.empirical_sensitivity = m;
    }
    std::vector<WeightEntry> mode_subset;
    for (const auto& e : subset) {
      if (e.key->init_mode == sigma_mode) mode_subset.push_back(e);
    }
    try {
      p.sigma_i = VariabilityFromEntries(mode_subset, true).sigma_i;
    } catch (const InvalidArgument&) {
      // No dataset has two seeds yet.
    }
    out.push_back(p);
  }
  return out;
}

}  // namespace sgdlab

#endif  // SGDLAB_ANALYSIS_HPP_
