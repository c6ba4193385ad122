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

#ifndef SGDLAB_REPORTS_HPP_
#define SGDLAB_REPORTS_HPP_

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sgdlab/analysis.hpp"
#include "sgdlab/grid.hpp"
#include "sgdlab/privacy.hpp"
#include "sgdlab/stats.hpp"
#include "sgdlab/store.hpp"

namespace sgdlab {

inline constexpr const char* kAugmentAssumption =
    "sgd_r relies on the final weights behaving like a Gaussian mechanism "
    "with noise sigma_i; this is an empirical assumption";

// ---------------------------------------------------------------------------
// Output helpers

inline std::string Cell(double v) { return FormatDouble(v); }
inline std::string Cell(const std::optional<double>& v) {
  return v ? FormatDouble(*v) : std::string();
}

inline void WriteText(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

inline void WriteJson(const fs::path& path, const Json& j) {
  WriteText(path, j.dump(2) + "\n");
}

inline Json EpsilonJson(const EpsilonValue& e) {
  return {{"value", e.infinite ? Json(nullptr) : Json(e.epsilon)},
          {"infinite", e.infinite},
          {"outside_guarantee_range", e.outside_guarantee_range}};
}

inline Json OptionalJson(const std::optional<double>& v) {
  return v ? Json(*v) : Json(nullptr);
}

// Runs with the default sigma init mode (vary) when available, else fixed.
inline InitMode SigmaMode(const std::vector<InitMode>& modes) {
  return std::find(modes.begin(), modes.end(), InitMode::kVary) != modes.end()
             ? InitMode::kVary
             : InitMode::kFixed;
}

inline std::vector<ExperimentRecord> RecordsWithMode(
    std::span<const ExperimentRecord> records, InitMode mode) {
  std::vector<ExperimentRecord> out;
  for (const auto& r : records) {
    if (r.key.init_mode == mode) out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Individual items

inline Json EpsilonTable(const Experiment& ex,
                         std::span<const ExperimentRecord> records) {
  const InitMode mode = SigmaMode(ex.config.init_modes);
  const EpsilonReport r =
      EstimateEpsilon(records, ex.delta, ex.theoretical_sensitivity, mode);
  Json sigmas = Json::object();
  for (const auto& [id, s] : r.sigma_per_dataset) sigmas[id] = s;
  Json out = {{"disclaimer", kEpsilonDisclaimer},
              {"delta", r.delta},
              {"base_rows", ex.base.rows()},
              {"member_rows", ex.member_rows()},
              {"passes", ex.passes()},
              {"lipschitz", OptionalJson(ex.lipschitz)},
              {"learning_rate", ex.train.learning_rate},
              {"batch_size", ex.train.batch_size},
              {"total_steps", ex.train.total_steps},
              {"sensitivity_theoretical", OptionalJson(r.sensitivity_theoretical)},
              {"sensitivity_empirical", r.sensitivity_empirical},
              {"sigma_mode", ToString(mode)},
              {"sigma_i", r.sigma_i},
              {"sigma_per_dataset", sigmas},
              {"epsilon_theoretical",
               r.epsilon_theoretical ? EpsilonJson(*r.epsilon_theoretical) : Json(nullptr)},
              {"epsilon_empirical", EpsilonJson(r.epsilon_empirical)}};
  const InitMode other = mode == InitMode::kVary ? InitMode::kFixed : InitMode::kVary;
  if (std::find(ex.config.init_modes.begin(), ex.config.init_modes.end(), other) !=
      ex.config.init_modes.end()) {
    out["sigma_i_" + std::string(ToString(other))] =
        VariabilitySigma(records, other).sigma_i;
  }
  return out;
}

inline std::vector<std::string> DeltaReports(std::span<const ExperimentRecord> records,
                                             const fs::path& dir) {
  std::vector<std::string> files;
  Json summary = Json::object();
  for (const auto& [kind, s] : DeltaDistributions(records)) {
    std::string csv = "bin_left,bin_right,count\n";
    for (std::size_t b = 0; b < s.histogram.counts.size(); ++b) {
      csv += Cell(s.histogram.edges[b]) + "," + Cell(s.histogram.edges[b + 1]) + "," +
             std::to_string(s.histogram.counts[b]) + "\n";
    }
    const std::string name = std::string("delta_hist_") + ToString(kind) + ".csv";
    WriteText(dir / name, csv);
    files.push_back(name);
    summary[ToString(kind)] = {{"count", s.count}, {"min", s.min},
                               {"median", s.median}, {"max", s.max},
                               {"bin_rule", s.histogram.rule}};
  }
  WriteJson(dir / "delta_summary.json", summary);
  files.push_back("delta_summary.json");
  return files;
}

inline std::string PairwiseEpsilonCsv(const Experiment& ex,
                                      std::span<const ExperimentRecord> records) {
  std::string csv = "dataset_a,dataset_b,local_sensitivity,local_sigma,epsilon\n";
  for (const auto& p :
       PairwiseEpsilons(records, ex.delta, SigmaMode(ex.config.init_modes))) {
    csv += p.dataset_a + "," + p.dataset_b + "," + Cell(p.local_sensitivity) + "," +
           Cell(p.local_sigma) + "," +
           (p.epsilon.infinite ? std::string("inf") : Cell(p.epsilon.epsilon)) + "\n";
  }
  return csv;
}

inline Json UtilitySummaryJson(const UtilitySummary& s) {
  auto stats = [](const VariantStats& v) {
    return Json{{"mean", v.mean}, {"stddev", v.stddev}};
  };
  Json j = {{"epsilon", s.epsilon},
            {"sigma_target", s.noise.sigma_target},
            {"sigma_i", s.noise.sigma_i},
            {"sigma_augment", s.noise.sigma_augment},
            {"clipped", s.noise.clipped},
            {"noiseless", stats(s.noiseless)},
            {"sgd_d", stats(s.deterministic)},
            {"sgd_r", stats(s.augmented)},
            {"t_test_degenerate", s.t_test_degenerate},
            {"significant", s.significant},
            {"percent_of_gap", OptionalJson(s.percent_of_gap)}};
  if (s.t_test) {
    j["t_statistic"] = s.t_test->t;
    j["p_value"] = s.t_test->p_value;
  } else {
    j["t_statistic"] = nullptr;
    j["p_value"] = nullptr;
  }
  return j;
}

struct UtilityRun {
  std::string sensitivity_kind;  // "theoretical" or "empirical"
  double sensitivity;
  UtilityReport report;
};

// Utility of every sigma-mode model on the test split, once per sensitivity
// choice.
inline std::vector<UtilityRun> RunUtility(const Experiment& ex,
                                          std::span<const ExperimentRecord> records,
                                          std::optional<std::uint64_t> noise_seed = {}) {
  Require(ex.test.has_value(), "utility needs a test split (split.test_fraction > 0)");
  Require(!ex.config.utility.epsilons.empty(), "no epsilons requested");
  const InitMode mode = SigmaMode(ex.config.init_modes);
  const double sigma_i = VariabilitySigma(records, mode).sigma_i;
  std::vector<UtilityModel> models;
  for (const auto& r : records) {
    if (r.key.init_mode == mode) models.push_back({r.key.ToString(), r.final_weights});
  }
  std::vector<std::pair<std::string, double>> choices;
  if (ex.theoretical_sensitivity) {
    choices.emplace_back("theoretical", *ex.theoretical_sensitivity);
  }
  choices.emplace_back("empirical", EmpiricalSensitivity(records).empirical);
  std::vector<UtilityRun> out;
  for (const auto& [kind, sens] : choices) {
    UtilityInputs in;
    in.spec = ex.spec;
    in.test = &*ex.test;
    in.sensitivity = sens;
    in.sigma_i = sigma_i;
    in.delta = ex.delta;
    in.epsilons = ex.config.utility.epsilons;
    in.noise_seed = noise_seed.value_or(ex.config.utility.noise_seed);
    in.alpha = ex.config.utility.alpha;
    out.push_back({kind, sens, CompareUtilities(models, in)});
  }
  return out;
}

inline std::vector<std::string> WriteUtility(const std::vector<UtilityRun>& runs,
                                             double alpha, const fs::path& dir) {
  std::vector<std::string> files;
  Json summary = {{"disclaimer", kEpsilonDisclaimer},
                  {"assumption", kAugmentAssumption},
                  {"alpha", alpha},
                  {"runs", Json::array()}};
  for (const auto& run : runs) {
    std::string csv = "model_id,epsilon,variant,accuracy\n";
    for (const auto& row : run.report.rows) {
      csv += row.model_id + "," + Cell(row.epsilon) + "," + ToString(row.variant) + "," +
             Cell(row.accuracy) + "\n";
    }
    const std::string name = "utility_" + run.sensitivity_kind + ".csv";
    WriteText(dir / name, csv);
    files.push_back(name);
    Json per = Json::array();
    for (const auto& s : run.report.summaries) per.push_back(UtilitySummaryJson(s));
    summary["runs"].push_back({{"sensitivity_kind", run.sensitivity_kind},
                               {"sensitivity", run.sensitivity},
                               {"models", run.report.rows.size() /
                                              (3 * run.report.summaries.size())},
                               {"summaries", per}});
  }
  WriteJson(dir / "utility_summary.json", summary);
  files.push_back("utility_summary.json");
  return files;
}

inline std::string StepCurveCsv(const Experiment& ex,
                                std::span<const ExperimentRecord> records) {
  StepCurveInputs in;
  in.rows = ex.member_rows();
  in.batch_size = ex.train.batch_size;
  in.learning_rate = ex.train.learning_rate;
  in.lipschitz = ex.lipschitz;
  const auto curve = StabilityVsSteps(records, in);
  Require(!curve.empty(), "records have no checkpoints");
  std::string csv =
      "step,empirical_sensitivity,sigma_fixed,sigma_vary,theoretical,"
      "theoretical_stepwise\n";
  for (const auto& p : curve) {
    csv += std::to_string(p.step) + "," + Cell(p.empirical_sensitivity) + "," +
           Cell(p.sigma_fixed) + "," + Cell(p.sigma_vary) + "," + Cell(p.theoretical) +
           "," + Cell(p.theoretical_stepwise) + "\n";
  }
  return csv;
}

inline std::vector<std::string> NormalityReports(
    const Experiment& ex, std::span<const ExperimentRecord> records,
    const fs::path& dir) {
  std::vector<std::string> files;
  Json summary = Json::object();
  for (InitMode mode : ex.config.init_modes) {
    const auto subset = RecordsWithMode(records, mode);
    const NormalitySweep sweep = NormalitySweepOf(subset);
    std::string csv = "coordinate,dataset_id,w,p\n";
    for (const auto& row : sweep.rows) {
      csv += std::to_string(row.coordinate) + "," + row.dataset_id + "," + Cell(row.w) +
             "," + Cell(row.p_value) + "\n";
    }
    const std::string name = std::string("normality_") + ToString(mode) + ".csv";
    WriteText(dir / name, csv);
    files.push_back(name);
    summary[ToString(mode)] = {{"tests", sweep.rows.size()},
                               {"untestable", sweep.untestable},
                               {"hypotheses", sweep.hypotheses},
                               {"alpha", sweep.alpha},
                               {"corrected_threshold", sweep.corrected_threshold},
                               {"rejected_raw", sweep.rejected_raw},
                               {"rejected_corrected", sweep.rejected_corrected},
                               {"p_histogram", sweep.p_histogram}};
  }
  WriteJson(dir / "normality_summary.json", summary);
  files.push_back("normality_summary.json");
  return files;
}

inline std::vector<std::size_t> DefaultConvergenceSizes(std::size_t total) {
  std::vector<std::size_t> sizes;
  for (std::size_t tenth = 1; tenth <= 10; ++tenth) {
    const std::size_t s = std::max<std::size_t>(1, (total * tenth + 9) / 10);
    if (sizes.empty() || sizes.back() != s) sizes.push_back(s);
  }
  return sizes;
}

inline std::string ConvergenceCsv(const Experiment& ex,
                                  std::span<const ExperimentRecord> records,
                                  std::uint64_t seed) {
  const auto sizes = ex.config.convergence_sizes.empty()
                         ? DefaultConvergenceSizes(records.size())
                         : ex.config.convergence_sizes;
  std::string csv = "experiments,empirical_sensitivity,sigma_i\n";
  for (const auto& p : EstimateConvergence(records, sizes, seed,
                                           SigmaMode(ex.config.init_modes))) {
    csv += std::to_string(p.experiments) + "," + Cell(p.empirical_sensitivity) + "," +
           Cell(p.sigma_i) + "\n";
  }
  return csv;
}

// ---------------------------------------------------------------------------
// Bundle

struct ReportItem {
  std::string name;
  bool produced = false;
  std::string notice;
  std::vector<std::string> files;
};

struct ReportOptions {
  std::optional<std::uint64_t> seed;  // overrides report_seed and noise seed
};

// Writes every report item under `dir`. A failing item is recorded in the
// index with its reason; the others are still produced.
inline std::vector<ReportItem> MakeReports(const Experiment& ex, const ResultStore& store,
                                           const fs::path& dir,
                                           const ReportOptions& options = {}) {
  Require(!store.records().empty(), "the store holds no records");
  const std::span<const ExperimentRecord> records = store.records();
  const std::uint64_t seed = options.seed.value_or(ex.config.report_seed);
  std::vector<ReportItem> items;
  auto attempt = [&](const std::string& name,
                     const std::function<std::vector<std::string>()>& body) {
    ReportItem item{name, false, "", {}};
    try {
      item.files = body();
      item.produced = true;
    } catch (const Error& e) {
      item.notice = e.what();
    }
    items.push_back(item);
  };

  attempt("epsilon_table", [&] {
    WriteJson(dir / "epsilon_table.json", EpsilonTable(ex, records));
    return std::vector<std::string>{"epsilon_table.json"};
  });
  attempt("delta_distributions", [&] { return DeltaReports(records, dir); });
  attempt("pairwise_epsilon", [&] {
    WriteText(dir / "pairwise_epsilon.csv", PairwiseEpsilonCsv(ex, records));
    return std::vector<std::string>{"pairwise_epsilon.csv"};
  });
  attempt("utility", [&] {
    const auto runs = RunUtility(ex, records, options.seed);
    return WriteUtility(runs, ex.config.utility.alpha, dir);
  });
  attempt("step_curves", [&] {
    WriteText(dir / "step_curves.csv", StepCurveCsv(ex, records));
    return std::vector<std::string>{"step_curves.csv"};
  });
  attempt("normality", [&] { return NormalityReports(ex, records, dir); });
  attempt("convergence", [&] {
    WriteText(dir / "convergence.csv", ConvergenceCsv(ex, records, seed));
    return std::vector<std::string>{"convergence.csv"};
  });

  Json index = {{"disclaimer", kEpsilonDisclaimer},
                {"config_digest", ex.digest},
                {"records", records.size()},
                {"items", Json::array()}};
  for (const auto& item : items) {
    index["items"].push_back({{"name", item.name},
                              {"produced", item.produced},
                              {"notice", item.notice},
                              {"files", item.files}});
  }
  WriteJson(dir / "index.json", index);
  return items;
}

}  // namespace sgdlab

#endif  // SGDLAB_REPORTS_HPP_
