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

#ifndef SGDLAB_TRAIN_HPP_
#define SGDLAB_TRAIN_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sgdlab/common.hpp"
#include "sgdlab/data.hpp"
#include "sgdlab/model.hpp"
#include "sgdlab/rng.hpp"

namespace sgdlab {

struct TrainConfig {
  double learning_rate = 0.5;
  std::size_t batch_size = 32;
  std::size_t total_steps = 0;
  std::vector<std::size_t> checkpoint_steps;  // sorted, within [0, T]
  std::size_t eval_every = 0;                 // 0 disables metrics

  void Validate() const {
    Require(learning_rate >= 0.0 && std::isfinite(learning_rate),
            "learning rate must be finite and non-negative");
    Require(batch_size >= 1, "batch size must be at least 1");
    Require(std::is_sorted(checkpoint_steps.begin(), checkpoint_steps.end()) &&
                std::adjacent_find(checkpoint_steps.begin(),
                                   checkpoint_steps.end()) ==
                    checkpoint_steps.end(),
            "checkpoint steps must be strictly increasing");
    Require(checkpoint_steps.empty() || checkpoint_steps.back() <= total_steps,
            "checkpoint step beyond total steps");
  }

  // Passes over a dataset of n rows, T * B / n.
  double Passes(std::size_t n) const {
    return static_cast<double>(total_steps) * static_cast<double>(batch_size) /
           static_cast<double>(n);
  }
};

inline std::vector<std::size_t> EveryNthStep(std::size_t total_steps,
                                             std::size_t every) {
  std::vector<std::size_t> steps;
  if (every == 0) return {total_steps};
  for (std::size_t t = 0; t <= total_steps; t += every) steps.push_back(t);
  if (steps.back() != total_steps) steps.push_back(total_steps);
  return steps;
}

struct ExperimentKey {
  std::string dataset_id;
  std::uint64_t seed = 0;
  InitMode init_mode = InitMode::kVary;

  auto operator<=>(const ExperimentKey&) const = default;
  bool operator==(const ExperimentKey&) const = default;

  std::string ToString() const {
    return dataset_id + "|" + std::to_string(seed) + "|" +
           sgdlab::ToString(init_mode);
  }
};

struct Metrics {
  double loss = 0.0;
  double accuracy = 0.0;
  bool operator==(const Metrics&) const = default;
};

// One SGD run. Weights at step t are the parameters after t updates.
struct ExperimentRecord {
  ExperimentKey key;
  WeightVector final_weights;
  std::map<std::size_t, WeightVector> checkpoints;
  std::map<std::size_t, Metrics> metrics;
  std::string config_digest;
};

// ---------------------------------------------------------------------------
// Batch schedule

// Epoch e visits the rows in the order of iota(n) shuffled with substream e
// of the shuffle stream. Each epoch yields floor(n / B) consecutive batches;
// the trailing n mod B rows of the permutation are skipped.
class BatchSchedule {
 public:
  BatchSchedule(std::size_t n, std::size_t batch_size, RandomStream shuffle)
      : n_(n), batch_size_(batch_size), shuffle_(shuffle),
        batches_per_epoch_(n / batch_size) {
    Require(batch_size >= 1 && batch_size <= n,
            "batch size " + std::to_string(batch_size) +
                " must lie in [1, " + std::to_string(n) + "]");
  }

  std::size_t batches_per_epoch() const { return batches_per_epoch_; }

  // Row indices used by update number `step` (0-based).
  std::span<const std::size_t> Batch(std::size_t step) {
    const std::size_t epoch = step / batches_per_epoch_;
    if (!have_epoch_ || epoch != epoch_) {
      permutation_ = EpochPermutation(epoch);
      epoch_ = epoch;
      have_epoch_ = true;
    }
    const std::size_t start = (step % batches_per_epoch_) * batch_size_;
    return std::span<const std::size_t>(permutation_).subspan(start,
                                                              batch_size_);
  }

  std::vector<std::size_t> EpochPermutation(std::size_t epoch) const {
    std::vector<std::size_t> perm(n_);
    std::iota(perm.begin(), perm.end(), 0);
    shuffle_.Substream(static_cast<std::uint32_t>(epoch))
        .Shuffle(std::span(perm));
    return perm;
  }

  // First update whose batch contains any of `positions`, searching at most
  // `max_steps` updates.
  std::optional<std::size_t> FirstStepContaining(
      std::span<const std::size_t> positions, std::size_t max_steps) {
    for (std::size_t t = 0; t < max_steps; ++t) {
      const auto batch = Batch(t);
      for (std::size_t p : positions) {
        if (std::find(batch.begin(), batch.end(), p) != batch.end()) return t;
      }
    }
    return std::nullopt;
  }

 private:
  std::size_t n_;
  std::size_t batch_size_;
  RandomStream shuffle_;
  std::size_t batches_per_epoch_;
  std::vector<std::size_t> permutation_;
  std::size_t epoch_ = 0;
  bool have_epoch_ = false;
};

// ---------------------------------------------------------------------------
// Evaluation

// Accuracy counts rows where (p >= 0.5) matches the label.
inline Metrics Evaluate(const ModelSpec& spec, const WeightVector& w,
                        const DatasetInstance& data) {
  CheckInput(spec, w, data.dim());
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const double p = ForwardRow(spec, w, data, i);
    loss += ExampleLoss(p, data.label(i));
    if ((p >= 0.5 ? 1 : 0) == data.label(i)) ++correct;
  }
  const double n = static_cast<double>(data.rows());
  return {loss / n, static_cast<double>(correct) / n};
}

inline double Accuracy(const ModelSpec& spec, const WeightVector& w,
                       const DatasetInstance& data) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    if ((ForwardRow(spec, w, data, i) >= 0.5 ? 1 : 0) == data.label(i)) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.rows());
}

// ---------------------------------------------------------------------------
// SGD

struct RunOptions {
  std::string dataset_id;
  std::uint64_t master_seed = 0;
  InitMode init_mode = InitMode::kVary;
  // Overrides init_mode when present.
  const WeightVector* fixed_init = nullptr;
  // Metrics are computed on this set when given, on the training data
  // otherwise.
  const DatasetInstance* eval_data = nullptr;
  std::string config_digest;
};

// Plain minibatch SGD, w <- w - eta * mean gradient, for exactly T updates.
inline ExperimentRecord RunSgd(const ModelSpec& spec,
                               const DatasetInstance& data,
                               const TrainConfig& cfg,
                               const RunOptions& options) {
  spec.Validate();
  cfg.Validate();
  Require(data.dim() == spec.input_dim, "dataset dimension does not match model");
  Require(cfg.batch_size <= data.rows(),
          "batch size " + std::to_string(cfg.batch_size) +
              " exceeds dataset size " + std::to_string(data.rows()));

  TrainStreams streams = DeriveStreams(options.master_seed);
  WeightVector w;
  if (options.fixed_init != nullptr) {
    Require(options.fixed_init->size() == spec.ParameterCount(),
            "fixed initial weights do not match model");
    w = *options.fixed_init;
  } else if (options.init_mode == InitMode::kFixed) {
    w = InitWeights(spec, options.master_seed, InitMode::kFixed);
  } else {
    w = InitWeights(spec, streams.init);
  }

  ExperimentRecord record;
  record.key = {options.dataset_id, options.master_seed, options.init_mode};
  record.config_digest = options.config_digest;
  const DatasetInstance& eval =
      options.eval_data != nullptr ? *options.eval_data : data;

  auto observe = [&](std::size_t step) {
    if (std::binary_search(cfg.checkpoint_steps.begin(),
                           cfg.checkpoint_steps.end(), step)) {
      record.checkpoints.emplace(step, w);
    }
    if (cfg.eval_every > 0 &&
        (step % cfg.eval_every == 0 || step == cfg.total_steps)) {
      const Metrics m = Evaluate(spec, w, eval);
      if (!std::isfinite(m.loss)) {
        throw NumericError("non-finite loss at step " + std::to_string(step));
      }
      record.metrics.emplace(step, m);
    }
  };

  BatchSchedule schedule(data.rows(), cfg.batch_size, streams.shuffle);
  Vector grad(static_cast<Eigen::Index>(w.size()));
  const double scale = cfg.learning_rate / static_cast<double>(cfg.batch_size);
  observe(0);
  for (std::size_t t = 0; t < cfg.total_steps; ++t) {
    grad.setZero();
    for (std::size_t i : schedule.Batch(t)) {
      detail::AccumulateGradient(spec, w.values(), data.row(i), data.label(i),
                                 grad);
    }
    w.mutable_values() -= scale * grad;
    if (!w.values().allFinite()) {
      throw NumericError("non-finite weights after step " +
                         std::to_string(t + 1));
    }
    observe(t + 1);
  }
  record.final_weights = std::move(w);
  return record;
}

// Smallest checkpointed step where the two runs' weights differ bitwise.
inline std::optional<std::size_t> DivergenceStep(const ExperimentRecord& a,
                                                 const ExperimentRecord& b) {
  Require(a.checkpoints.size() == b.checkpoints.size() &&
              std::equal(a.checkpoints.begin(), a.checkpoints.end(),
                         b.checkpoints.begin(),
                         [](const auto& x, const auto& y) {
                           return x.first == y.first;
                         }),
          "records have mismatched checkpoint schedules");
  for (const auto& [step, wa] : a.checkpoints) {
    if (!wa.BitEqual(b.checkpoints.at(step))) return step;
  }
  return std::nullopt;
}

// Offline early stopping: walks the recorded validation losses in step order
// and returns the step of the best loss seen before `patience` consecutive
// evaluations failed to improve on it.
inline std::optional<std::size_t> RecommendSteps(
    const std::map<std::size_t, Metrics>& metrics, std::size_t patience = 3) {
  if (metrics.empty()) return std::nullopt;
  std::size_t best_step = metrics.begin()->first;
  double best = metrics.begin()->second.loss;
  std::size_t misses = 0;
  for (auto it = std::next(metrics.begin()); it != metrics.end(); ++it) {
    if (it->second.loss < best) {
      best = it->second.loss;
      best_step = it->first;
      misses = 0;
    } else if (++misses >= patience) {
      break;
    }
  }
  return best_step;
}

}  // namespace sgdlab

#endif  // SGDLAB_TRAIN_HPP_
