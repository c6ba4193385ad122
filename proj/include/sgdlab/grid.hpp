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

#ifndef SGDLAB_GRID_HPP_
#define SGDLAB_GRID_HPP_

#include <algorithm>
#include <atomic>
#include <exception>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "sgdlab/analysis.hpp"
#include "sgdlab/config.hpp"
#include "sgdlab/data.hpp"
#include "sgdlab/model.hpp"
#include "sgdlab/rng.hpp"
#include "sgdlab/store.hpp"
#include "sgdlab/train.hpp"

namespace sgdlab {

// Everything derived from a GridConfig before any training happens.
struct Experiment {
  GridConfig config;
  DatasetInstance base;  // training rows after preprocessing, N rows
  std::optional<DatasetInstance> validation;
  std::optional<DatasetInstance> test;
  NeighbourFamily family;
  ModelSpec spec;
  TrainConfig train;  // steps and checkpoints resolved
  std::string digest;
  double delta;
  std::optional<double> lipschitz;
  std::optional<double> theoretical_sensitivity;

  std::size_t member_rows() const { return base.rows() - 1; }
  double passes() const { return train.Passes(member_rows()); }
};

inline std::string MemberId(std::size_t index) { return "S" + std::to_string(index); }

inline DatasetInstance LoadSource(const GridConfig& cfg) {
  if (const auto* s = std::get_if<SyntheticSource>(&cfg.source)) {
    return GenerateSynthetic(s->rows, s->dim, s->separation, s->seed);
  }
  const auto& csv = std::get<CsvSource>(cfg.source);
  return LoadCsv(csv.path, csv.label_column);
}

// Split, preprocess (projections fit on training rows), normalize, then
// build the neighbour family from the training rows.
inline Experiment PrepareExperiment(const GridConfig& cfg) {
  DatasetInstance data = LoadSource(cfg);
  const SplitIndices split = SplitRows(data.rows(), cfg.split);
  for (const auto& step : cfg.preprocessing) {
    switch (step.kind) {
      case PreprocessStep::Kind::kPca:
        data = PcaProject(data, step.dim, split.train).data;
        break;
      case PreprocessStep::Kind::kGrp:
        data = GrpProject(data, step.dim, step.seed);
        break;
      case PreprocessStep::Kind::kSelect:
        data = SelectFeatures(data, step.columns);
        break;
      case PreprocessStep::Kind::kCrop: {
        Require(step.width * step.height == data.dim(),
                "crop grid does not match the feature count");
        const auto cols = CentralCropIndices(step.width, step.height, step.size);
        data = SelectFeatures(data, cols);
        break;
      }
    }
  }
  double scale;
  if (cfg.normalize == NormalizeFit::kFull) {
    scale = NormalizeMaxNorm(data).scale;
  } else {
    scale = NormalizeMaxNorm(SelectRows(data, split.train, "train")).scale;
  }
  const DatasetInstance scaled = ScaleRows(data, scale);
  // Training rows have norm <= 1 under either fit; use the certified bound.
  const DatasetInstance train_rows = SelectRows(scaled, split.train, "train");
  DatasetInstance base(train_rows.features(), train_rows.labels(), "train",
                       1.0);
  auto part = [&](const std::vector<std::size_t>& rows, const char* id)
      -> std::optional<DatasetInstance> {
    if (rows.empty()) return std::nullopt;
    return SelectRows(scaled, rows, id);
  };

  for (std::size_t m : cfg.members) {
    Require(m >= 1 && m < base.rows(),
            "member index " + std::to_string(m) + " outside [1, " +
                std::to_string(base.rows() - 1) + "]");
  }
  NeighbourFamily family = MakeNeighbourFamily(base, cfg.members);

  ModelSpec spec = cfg.model;
  spec.input_dim = base.dim();
  spec.Validate();

  TrainConfig train = cfg.train;
  const std::size_t per_epoch = (base.rows() - 1) / train.batch_size;
  Require(per_epoch >= 1, "batch size exceeds the member size");
  if (cfg.epochs) train.total_steps = *cfg.epochs * per_epoch;
  if (cfg.checkpoint_every) {
    train.checkpoint_steps = EveryNthStep(train.total_steps, *cfg.checkpoint_every);
  }
  train.Validate();

  const double n = static_cast<double>(base.rows());
  const double delta = cfg.delta.value_or(1.0 / (n * n));
  const std::optional<double> lipschitz =
      ComputeLossConstants(spec, base.norm_bound()).lipschitz;
  std::optional<double> theoretical;
  if (lipschitz) {
    theoretical = TheoreticalSensitivity(train.Passes(base.rows() - 1), *lipschitz,
                                         train.learning_rate, train.batch_size);
  }
  return Experiment{cfg,
                    std::move(base),
                    part(split.validation, "validation"),
                    part(split.test, "test"),
                    std::move(family),
                    spec,
                    train,
                    ConfigDigest(cfg),
                    delta,
                    lipschitz,
                    theoretical};
}

struct GridOptions {
  std::size_t jobs = 1;
  // When set, runs execute in a seeded random order instead of key order.
  std::optional<std::uint64_t> execution_order_seed;
};

struct GridSummary {
  std::size_t planned = 0;
  std::size_t skipped = 0;  // already in the store
  std::size_t ran = 0;
};

// One record per (member, seed, init mode). Keys already in the store are
// skipped, so an interrupted grid resumes where it stopped. Records are
// committed only after every worker has finished.
inline GridSummary RunGrid(const Experiment& ex, ResultStore& store,
                           const GridOptions& options = {}) {
  Require(options.jobs >= 1, "jobs must be at least 1");
  struct Task {
    std::size_t member;
    std::uint64_t seed;
    InitMode mode;
  };
  std::vector<Task> tasks;
  GridSummary summary;
  for (std::size_t k = 0; k < ex.family.members.size(); ++k) {
    for (std::uint64_t seed : ex.config.seeds) {
      for (InitMode mode : ex.config.init_modes) {
        ++summary.planned;
        if (store.Contains({MemberId(ex.family.member_indices[k]), seed, mode})) {
          ++summary.skipped;
          continue;
        }
        tasks.push_back({k, seed, mode});
      }
    }
  }
  if (options.execution_order_seed) {
    RandomStream(*options.execution_order_seed, StreamDomain::kExecutionOrder)
        .Shuffle(std::span(tasks));
  }

  std::vector<std::optional<ExperimentRecord>> results(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        const Task& t = tasks[i];
        RunOptions run;
        run.dataset_id = MemberId(ex.family.member_indices[t.member]);
        run.master_seed = t.seed;
        run.init_mode = t.mode;
        run.config_digest = ex.digest;
        if (ex.validation) run.eval_data = &*ex.validation;
        ExperimentRecord r = RunSgd(ex.spec, ex.family.members[t.member], ex.train, run);
        store.WritePayload(r);
        results[i] = std::move(r);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  {
    const std::size_t n_threads = std::min(options.jobs, std::max<std::size_t>(tasks.size(), 1));
    std::vector<std::jthread> pool;
    for (std::size_t i = 1; i < n_threads; ++i) pool.emplace_back(worker);
    worker();
  }
  std::vector<ExperimentRecord> fresh;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (results[i]) fresh.push_back(std::move(*results[i]));
  }
  // Keep whatever finished so a rerun only repeats the failures.
  summary.ran = fresh.size();
  store.Commit(std::move(fresh));
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return summary;
}

}  // namespace sgdlab

#endif  // SGDLAB_GRID_HPP_
