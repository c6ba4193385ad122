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

// Command-line front end for the sgdlab toolkit.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sgdlab/analysis.hpp"
#include "sgdlab/config.hpp"
#include "sgdlab/grid.hpp"
#include "sgdlab/privacy.hpp"
#include "sgdlab/reports.hpp"
#include "sgdlab/stats.hpp"
#include "sgdlab/store.hpp"
#include "sgdlab/theory.hpp"

namespace {

using sgdlab::Json;
namespace fs = std::filesystem;

struct GlobalFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
};

std::string Human(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

sgdlab::GridConfig RequireConfig(const GlobalFlags& g) {
  if (g.config.empty()) throw sgdlab::InvalidArgument("--config is required");
  if (!fs::exists(g.config)) {
    throw sgdlab::IoError("config file not found: " + g.config);
  }
  return sgdlab::LoadGridConfig(g.config);
}

// --out, then the config's output_dir, then $SGDLAB_OUT, then ./sgdlab_out.
fs::path OutputDir(const GlobalFlags& g, const sgdlab::GridConfig* cfg) {
  if (!g.out.empty()) return g.out;
  if (cfg && !cfg->output_dir.empty()) return cfg->output_dir;
  if (const char* env = std::getenv("SGDLAB_OUT"); env && *env) return env;
  return "sgdlab_out";
}

struct Loaded {
  sgdlab::Experiment experiment;
  fs::path out;
};

Loaded LoadExperiment(const GlobalFlags& g) {
  const sgdlab::GridConfig cfg = RequireConfig(g);
  fs::path out = OutputDir(g, &cfg);
  return {sgdlab::PrepareExperiment(cfg), out};
}

sgdlab::ResultStore OpenStore(const Loaded& l) {
  if (!fs::exists(l.out / "store" / sgdlab::ResultStore::kManifest)) {
    throw sgdlab::IoError("no store under " + (l.out / "store").string() +
                          "; run 'sgdlab run-grid' first");
  }
  return sgdlab::ResultStore(l.out / "store", l.experiment.spec, l.experiment.digest);
}

void PrintItems(const std::vector<sgdlab::ReportItem>& items, const fs::path& dir) {
  for (const auto& item : items) {
    if (item.produced) {
      std::cout << item.name << ": wrote";
      for (const auto& f : item.files) std::cout << ' ' << (dir / f).string();
      std::cout << '\n';
    } else {
      std::cout << item.name << ": skipped (" << item.notice << ")\n";
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "sgdlab: measure seed-induced SGD variability against data sensitivity "
      "and calibrate output perturbation.\nEpsilon values are descriptive "
      "estimates, not privacy guarantees."};
  app.fallthrough();
  app.require_subcommand(1);
  GlobalFlags g;
  app.add_option("--config", g.config, "Grid configuration file (JSON)");
  app.add_option("--out", g.out,
                 "Output directory (default: config output_dir, then $SGDLAB_OUT, "
                 "then ./sgdlab_out)");
  app.add_option("--seed", g.seed,
                 "Seed for the subcommand's own randomness (synthetic data, "
                 "privatize noise, report resampling and utility noise)");
  app.add_option("--jobs", g.jobs, "Worker threads for independent runs")
      ->check(CLI::PositiveNumber);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic two-Gaussian CSV");
  std::size_t gen_rows = 500, gen_dim = 5;
  double gen_sep = 2.0;
  std::string gen_output;
  gen->add_option("--rows", gen_rows, "Number of rows")->check(CLI::Range(2, 1 << 30));
  gen->add_option("--dim", gen_dim, "Feature dimension")->check(CLI::PositiveNumber);
  gen->add_option("--separation", gen_sep, "Distance between class means");
  gen->add_option("--output", gen_output, "CSV path (default: <out>/data.csv)");

  // run-grid
  auto* run = app.add_subcommand("run-grid", "Train every (member, seed, init mode) run");
  std::optional<std::uint64_t> order_seed;
  run->add_option("--shuffle-order", order_seed,
                  "Execute runs in a seeded random order (results are unchanged)");

  // analyze
  auto* analyze = app.add_subcommand(
      "analyze", "Sensitivity, variability and distance distributions of a stored grid");

  // estimate-epsilon
  auto* estimate = app.add_subcommand(
      "estimate-epsilon",
      "Epsilon from a stored grid (--config) or from --sensitivity and --sigma");
  std::optional<double> est_sens, est_sigma, est_delta;
  std::optional<std::size_t> est_rows;
  estimate->add_option("--sensitivity", est_sens, "Sensitivity Delta");
  estimate->add_option("--sigma", est_sigma, "Intrinsic variability sigma_i");
  estimate->add_option("--delta", est_delta, "Failure probability delta");
  estimate->add_option("--rows", est_rows, "Dataset size N; sets delta = 1/N^2");

  // privatize
  auto* privatize = app.add_subcommand(
      "privatize", "Release weights with Gaussian noise reduced by sigma_i");
  double priv_eps = 1.0, priv_delta = 0.0, priv_sens = 0.0, priv_sigma_i = 0.0;
  std::string priv_in, priv_out;
  privatize->add_option("--epsilon", priv_eps, "Target epsilon")->required();
  privatize->add_option("--delta", priv_delta, "Target delta in (0, 1)")->required();
  privatize->add_option("--sensitivity", priv_sens, "Sensitivity Delta_2");
  privatize->add_option("--sigma-i", priv_sigma_i, "Intrinsic variability sigma_i");
  privatize->add_option("--weights", priv_in, "Input weight file (.sgdw)");
  privatize->add_option("--output", priv_out, "Output weight file");

  // evaluate-utility
  auto* utility = app.add_subcommand(
      "evaluate-utility", "Accuracy of noiseless, SGD_d and SGD_r releases");
  std::vector<double> util_eps;
  utility->add_option("--epsilons", util_eps, "Override the config's epsilon list");

  // normality
  auto* normality = app.add_subcommand(
      "normality", "Shapiro-Wilk test of every weight marginal across seeds");

  // theory-bounds
  auto* theory = app.add_subcommand("theory-bounds", "Closed-form bounds for (k, L, eta, N, B)");
  double th_k = 1.0, th_l = 1.0, th_eta = 1.0;
  std::size_t th_n = 2, th_b = 1;
  theory->add_option("--k", th_k, "Passes over the data")->required();
  theory->add_option("--l", th_l, "Lipschitz constant L")->required();
  theory->add_option("--eta", th_eta, "Learning rate")->required();
  theory->add_option("--n", th_n, "Dataset size N")->required();
  theory->add_option("--b", th_b, "Batch size B");

  // report
  auto* report = app.add_subcommand("report", "Write every report item for a stored grid");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      sgdlab::SyntheticSource src{gen_rows, gen_dim, gen_sep, 0};
      const sgdlab::GridConfig* cfg_ptr = nullptr;
      std::optional<sgdlab::GridConfig> cfg;
      if (!g.config.empty()) {
        cfg = RequireConfig(g);
        cfg_ptr = &*cfg;
        const auto* s = std::get_if<sgdlab::SyntheticSource>(&cfg->source);
        if (!s) throw sgdlab::InvalidArgument("config data source is not synthetic");
        src = *s;
      }
      if (g.seed) src.seed = *g.seed;
      const fs::path path =
          gen_output.empty() ? OutputDir(g, cfg_ptr) / "data.csv" : fs::path(gen_output);
      if (path.has_parent_path()) fs::create_directories(path.parent_path());
      sgdlab::SaveCsv(sgdlab::GenerateSynthetic(src.rows, src.dim, src.separation, src.seed),
                      path.string());
      std::cout << "wrote " << src.rows << " rows to " << path.string() << '\n';
    } else if (*run) {
      const Loaded l = LoadExperiment(g);
      sgdlab::ResultStore store(l.out / "store", l.experiment.spec, l.experiment.digest);
      const auto s = sgdlab::RunGrid(l.experiment, store, {g.jobs, order_seed});
      std::cout << "planned " << s.planned << ", ran " << s.ran << ", skipped "
                << s.skipped << "; store " << (l.out / "store").string() << '\n';
    } else if (*analyze) {
      const Loaded l = LoadExperiment(g);
      const sgdlab::ResultStore store = OpenStore(l);
      const auto& recs = store.records();
      Json out = {{"records", recs.size()}, {"disclaimer", sgdlab::kEpsilonDisclaimer}};
      const auto sens = sgdlab::EmpiricalSensitivity(recs, l.experiment.theoretical_sensitivity);
      out["sensitivity_empirical"] = sens.empirical;
      out["sensitivity_theoretical"] = sgdlab::OptionalJson(sens.theoretical);
      for (sgdlab::InitMode mode : l.experiment.config.init_modes) {
        const auto v = sgdlab::VariabilitySigma(recs, mode);
        out[std::string("sigma_i_") + sgdlab::ToString(mode)] = v.sigma_i;
      }
      Json dist = Json::object();
      for (const auto& [kind, s] : sgdlab::DeltaDistributions(recs)) {
        dist[sgdlab::ToString(kind)] = {
            {"count", s.count}, {"min", s.min}, {"median", s.median}, {"max", s.max}};
      }
      out["delta_distributions"] = dist;
      sgdlab::WriteJson(l.out / "analysis.json", out);
      std::cout << out.dump(2) << '\n';
    } else if (*estimate) {
      if (est_sens || est_sigma) {
        if (!est_sens || !est_sigma) {
          throw sgdlab::InvalidArgument("--sensitivity and --sigma go together");
        }
        double delta;
        if (est_delta) {
          delta = *est_delta;
        } else if (est_rows) {
          delta = sgdlab::PrivacyParams::DefaultDelta(*est_rows);
        } else {
          throw sgdlab::InvalidArgument("give --delta or --rows");
        }
        const auto e = sgdlab::ComputeEpsilon(*est_sens, *est_sigma, delta);
        std::cout << "epsilon " << (e.infinite ? std::string("inf") : Human(e.epsilon))
                  << (e.outside_guarantee_range ? " (outside (0,1): Gaussian mechanism "
                                                  "guarantee does not apply)"
                                                : "")
                  << "\nnote: " << sgdlab::kEpsilonDisclaimer << '\n';
      } else {
        const Loaded l = LoadExperiment(g);
        const sgdlab::ResultStore store = OpenStore(l);
        const Json table = sgdlab::EpsilonTable(l.experiment, store.records());
        sgdlab::WriteJson(l.out / "reports" / "epsilon_table.json", table);
        std::cout << table.dump(2) << '\n';
      }
    } else if (*privatize) {
      const sgdlab::NoiseDecision d = sgdlab::SigmaAugment(
          sgdlab::SigmaTarget({priv_eps, priv_delta, priv_sens}), priv_sigma_i);
      std::cout << "sigma_target " << Human(d.sigma_target) << "\nsigma_i "
                << Human(d.sigma_i) << "\nsigma_augment " << Human(d.sigma_augment)
                << (d.clipped ? " (intrinsic variability already meets the target)" : "")
                << '\n';
      if (!priv_in.empty()) {
        if (priv_out.empty()) throw sgdlab::InvalidArgument("--output is required with --weights");
        const std::vector<double> v = sgdlab::ReadWeightFile(priv_in);
        sgdlab::RandomStream noise(g.seed.value_or(0), sgdlab::StreamDomain::kNoise);
        std::vector<double> noisy(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
          noisy[i] = v[i] + d.sigma_augment * noise.NextNormal();
        }
        sgdlab::WriteWeightFile(priv_out, noisy);
        std::cout << "wrote " << priv_out << '\n';
      }
      std::cout << "note: " << sgdlab::kAugmentAssumption << '\n';
    } else if (*utility) {
      Loaded l = LoadExperiment(g);
      if (!util_eps.empty()) l.experiment.config.utility.epsilons = util_eps;
      const sgdlab::ResultStore store = OpenStore(l);
      const auto runs = sgdlab::RunUtility(l.experiment, store.records(), g.seed);
      const fs::path dir = l.out / "reports";
      for (const auto& f :
           sgdlab::WriteUtility(runs, l.experiment.config.utility.alpha, dir)) {
        std::cout << "wrote " << (dir / f).string() << '\n';
      }
      for (const auto& run : runs) {
        for (const auto& s : run.report.summaries) {
          std::cout << run.sensitivity_kind << " eps=" << Human(s.epsilon)
                    << " noiseless=" << Human(s.noiseless.mean)
                    << " sgd_d=" << Human(s.deterministic.mean)
                    << " sgd_r=" << Human(s.augmented.mean) << " p="
                    << (s.t_test ? Human(s.t_test->p_value) : std::string("n/a"))
                    << " gap%="
                    << (s.percent_of_gap ? Human(*s.percent_of_gap) : std::string("undefined"))
                    << '\n';
        }
      }
    } else if (*normality) {
      const Loaded l = LoadExperiment(g);
      const sgdlab::ResultStore store = OpenStore(l);
      const fs::path dir = l.out / "reports";
      for (const auto& f : sgdlab::NormalityReports(l.experiment, store.records(), dir)) {
        std::cout << "wrote " << (dir / f).string() << '\n';
      }
    } else if (*theory) {
      sgdlab::BoundInputs in{th_k, th_l, th_eta, th_n, th_b};
      const auto claim = sgdlab::CompareBounds(in);
      const auto moments = sgdlab::ExpectedVariabilityBound(in);
      std::cout << "variability_upper_bound 2kLN*eta = " << Human(claim.variability_bound)
                << "\nsensitivity 2kL*eta = " << Human(claim.sensitivity_unbatched)
                << "\nsensitivity_batched 2kL*eta/B = " << Human(claim.sensitivity_batched)
                << "\nvariability_upper_bound_batched 2kLN*eta/B = "
                << Human(claim.variability_bound_batched)
                << "\nratio variability/sensitivity = " << Human(claim.ratio)
                << "\nexpected_variability mean 2kL*eta(N-1) = " << Human(moments.mean)
                << "\nexpected_variability variance (2L*eta)^2 k = "
                << Human(moments.variance) << '\n';
      if (th_k >= 1.0) {
        const auto tail = sgdlab::ChebyshevTailBound(in);
        std::cout << "chebyshev_tail 4/(k(N-2)^2) = " << Human(tail.probability)
                  << (tail.clamped ? " (clamped to 1)" : "")
                  << "\nchebyshev_threshold kL*eta(N-2) = " << Human(tail.threshold) << '\n';
      }
    } else if (*report) {
      const Loaded l = LoadExperiment(g);
      const sgdlab::ResultStore store = OpenStore(l);
      const fs::path dir = l.out / "reports";
      PrintItems(sgdlab::MakeReports(l.experiment, store, dir, {g.seed}), dir);
    }
  } catch (const sgdlab::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
