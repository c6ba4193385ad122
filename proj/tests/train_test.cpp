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

#include "sgdlab/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "gtest/gtest.h"
#include "test_util.hpp"

namespace sgdlab {
namespace {

TrainConfig Config(double eta, std::size_t batch, std::size_t steps,
                   std::size_t checkpoint_every = 1) {
  TrainConfig cfg;
  cfg.learning_rate = eta;
  cfg.batch_size = batch;
  cfg.total_steps = steps;
  cfg.checkpoint_steps = EveryNthStep(steps, checkpoint_every);
  return cfg;
}

RunOptions Options(std::uint64_t seed, InitMode mode = InitMode::kVary) {
  RunOptions o;
  o.dataset_id = "d";
  o.master_seed = seed;
  o.init_mode = mode;
  return o;
}

DatasetInstance Normalized(std::size_t n, std::size_t d, std::uint64_t seed) {
  return NormalizeMaxNorm(GenerateSynthetic(n, d, 2.0, seed)).data;
}

TEST(RunSgdTest, ZeroLearningRateKeepsInitialWeights) {
  const DatasetInstance data = Normalized(40, 3, 1);
  const ModelSpec spec = ModelSpec::Mlp(3, 4);
  const ExperimentRecord r = RunSgd(spec, data, Config(0.0, 4, 25), Options(9));
  EXPECT_TRUE(r.final_weights.BitEqual(InitWeights(spec, 9, InitMode::kVary)));
}

TEST(RunSgdTest, SingleStepMatchesHandUpdate) {
  const DatasetInstance data = Normalized(12, 3, 2);
  const ModelSpec spec = ModelSpec::LogReg(3);
  const double eta = 0.7;
  const ExperimentRecord r = RunSgd(spec, data, Config(eta, 1, 1), Options(5));

  // First row visited: element 0 of iota(12) shuffled by substream 0 of the
  // shuffle stream of seed 5.
  std::vector<std::size_t> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  RandomStream(5, StreamDomain::kShuffle, 0).Shuffle(std::span(perm));
  const std::size_t i = perm[0];

  const WeightVector w0 = InitWeights(spec, 5, InitMode::kVary);
  double z = w0[3];
  for (std::size_t c = 0; c < 3; ++c) z += w0[c] * data.row(i)(static_cast<Eigen::Index>(c));
  const double p = 1.0 / (1.0 + std::exp(-z));
  const double dz = p - data.label(i);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_NEAR(r.final_weights[c],
                w0[c] - eta * dz * data.row(i)(static_cast<Eigen::Index>(c)), 1e-15);
  }
  EXPECT_NEAR(r.final_weights[3], w0[3] - eta * dz, 1e-15);
}

TEST(RunSgdTest, DeterministicBitIdenticalWeightFiles) {
  const DatasetInstance data = Normalized(50, 4, 3);
  for (const ModelSpec& spec : {ModelSpec::LogReg(4), ModelSpec::Mlp(4, 3)}) {
    const ExperimentRecord a = RunSgd(spec, data, Config(0.5, 8, 30), Options(4));
    const ExperimentRecord b = RunSgd(spec, data, Config(0.5, 8, 30), Options(4));
    EXPECT_EQ(EncodeWeights(a.final_weights.span()),
              EncodeWeights(b.final_weights.span()));
  }
}

TEST(RunSgdTest, ExactStepCountAcrossEpochBoundaries) {
  // 10 rows, B = 3: three batches per epoch, one row dropped.
  const DatasetInstance data = Normalized(10, 2, 4);
  const TrainConfig cfg = Config(0.5, 3, 11);
  const ExperimentRecord r = RunSgd(ModelSpec::LogReg(2), data, cfg, Options(1));
  EXPECT_EQ(r.checkpoints.size(), 12u);
  EXPECT_EQ(r.checkpoints.rbegin()->first, 11u);
  EXPECT_TRUE(r.checkpoints.at(11).BitEqual(r.final_weights));
}

TEST(RunSgdTest, Preconditions) {
  const DatasetInstance data = Normalized(10, 2, 4);
  EXPECT_THROW(RunSgd(ModelSpec::LogReg(2), data, Config(0.5, 11, 1), Options(1)),
               InvalidArgument);
  EXPECT_THROW(RunSgd(ModelSpec::LogReg(3), data, Config(0.5, 2, 1), Options(1)),
               InvalidArgument);
}

TEST(RunSgdTest, NonFiniteReportedWithStep) {
  Matrix x(2, 1);
  x << 10.0, -10.0;
  const DatasetInstance data(x, Labels{1, 0}, "huge");
  try {
    RunSgd(ModelSpec::LogReg(1), data, Config(1e308, 1, 5), Options(1));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
  }
}

TEST(RunSgdTest, UpdateNormBoundedByEtaL) {
  const DatasetInstance data = Normalized(64, 5, 5);
  const ModelSpec spec = ModelSpec::LogReg(5);
  const double eta = 0.5;
  const ExperimentRecord r = RunSgd(spec, data, Config(eta, 4, 60), Options(2));
  const double bound = eta * *ComputeLossConstants(spec, 1.0).lipschitz;
  for (std::size_t t = 1; t <= 60; ++t) {
    const double step = (r.checkpoints.at(t).values() -
                         r.checkpoints.at(t - 1).values()).norm();
    EXPECT_LE(step, bound * (1 + 1e-12));
  }
}

TEST(RunSgdTest, FixedInitOverridesMode) {
  const DatasetInstance data = Normalized(20, 2, 5);
  const ModelSpec spec = ModelSpec::LogReg(2);
  const WeightVector w0 = WeightVector::FromValues(spec, std::vector<double>{0.1, 0.2, 0.3});
  RunOptions o = Options(3);
  o.fixed_init = &w0;
  const ExperimentRecord r = RunSgd(spec, data, Config(0.5, 2, 3), o);
  EXPECT_TRUE(r.checkpoints.at(0).BitEqual(w0));
}

TEST(RunSgdTest, SeparableSyntheticReachesHighAccuracy) {
  const DatasetInstance data =
      NormalizeMaxNorm(GenerateSynthetic(1000, 2, 6.0, 1)).data;
  const ModelSpec spec = ModelSpec::LogReg(2);
  const ExperimentRecord r = RunSgd(spec, data, Config(0.5, 32, 600, 600), Options(1));
  EXPECT_GT(Evaluate(spec, r.final_weights, data).accuracy, 0.95);
}

TEST(RunSgdTest, MetricsRecordedOnCadence) {
  const DatasetInstance data = Normalized(40, 2, 6);
  TrainConfig cfg = Config(0.5, 4, 20, 20);
  cfg.eval_every = 7;
  const ExperimentRecord r = RunSgd(ModelSpec::LogReg(2), data, cfg, Options(1));
  std::vector<std::size_t> steps;
  for (const auto& [t, m] : r.metrics) steps.push_back(t);
  EXPECT_EQ(steps, (std::vector<std::size_t>{0, 7, 14, 20}));
}

TEST(BatchScheduleTest, EachEpochIsABijection) {
  BatchSchedule schedule(13, 4, RandomStream(3, StreamDomain::kShuffle));
  for (std::size_t e = 0; e < 5; ++e) {
    std::vector<std::size_t> perm = schedule.EpochPermutation(e);
    std::sort(perm.begin(), perm.end());
    for (std::size_t i = 0; i < 13; ++i) EXPECT_EQ(perm[i], i);
  }
  EXPECT_EQ(schedule.batches_per_epoch(), 3u);
  // Step 3 opens epoch 1.
  const auto epoch1 = schedule.EpochPermutation(1);
  const auto batch = schedule.Batch(3);
  EXPECT_TRUE(std::equal(batch.begin(), batch.end(), epoch1.begin()));
}

TEST(EvaluateTest, AccuracyAndTieRule) {
  Matrix x(4, 1);
  x << 1.0, -1.0, 2.0, -0.5;
  const DatasetInstance data(x, Labels{1, 0, 1, 1}, "fixture");
  const ModelSpec spec = ModelSpec::LogReg(1);
  // Zero weights: p = 0.5 everywhere, ties go to class 1.
  EXPECT_DOUBLE_EQ(Evaluate(spec, WeightVector::Zeros(spec), data).accuracy, 0.75);
  const WeightVector w = WeightVector::FromValues(spec, std::vector<double>{3.0, 0.0});
  const Metrics m = Evaluate(spec, w, data);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.75);  // row 3 (x = -0.5, y = 1) is wrong
  const double expected_loss =
      (std::log1p(std::exp(-3.0)) + std::log1p(std::exp(-3.0)) +
       std::log1p(std::exp(-6.0)) + std::log1p(std::exp(1.5))) / 4.0;
  EXPECT_NEAR(m.loss, expected_loss, 1e-14);
  EXPECT_DOUBLE_EQ(Accuracy(spec, w, data), 0.75);
}

class DivergenceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    base_ = NormalizeMaxNorm(GenerateSynthetic(41, 3, 2.0, 8)).data;
    const std::vector<std::size_t> idx = {5, 17, 33};
    family_ = std::make_unique<NeighbourFamily>(MakeNeighbourFamily(base_, idx));
  }
  DatasetInstance base_ = GenerateSynthetic(3, 1, 0.0, 0);
  std::unique_ptr<NeighbourFamily> family_;
};

TEST_F(DivergenceTest, IdenticalRecordsNeverDiverge) {
  const TrainConfig cfg = Config(0.5, 4, 30);
  const ExperimentRecord a = RunSgd(ModelSpec::LogReg(3), family_->members[0], cfg, Options(1));
  EXPECT_FALSE(DivergenceStep(a, a).has_value());
}

TEST_F(DivergenceTest, NeighboursDivergeAtFirstBatchWithDifferingRow) {
  const TrainConfig cfg = Config(0.5, 4, 40);
  for (const ModelSpec& spec : {ModelSpec::LogReg(3), ModelSpec::Mlp(3, 4)}) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const ExperimentRecord a = RunSgd(spec, family_->member(5), cfg, Options(seed, InitMode::kFixed));
      const ExperimentRecord b = RunSgd(spec, family_->member(17), cfg, Options(seed, InitMode::kFixed));
      // Positions 4 and 16 differ; find the first batch holding either.
      std::optional<std::size_t> first;
      const std::size_t per_epoch = 40 / 4;
      for (std::size_t t = 0; t < 40 && !first; ++t) {
        std::vector<std::size_t> perm(40);
        std::iota(perm.begin(), perm.end(), 0);
        RandomStream(seed, StreamDomain::kShuffle,
                     static_cast<std::uint32_t>(t / per_epoch)).Shuffle(std::span(perm));
        const std::size_t start = (t % per_epoch) * 4;
        for (std::size_t k = start; k < start + 4; ++k) {
          if (perm[k] == 4 || perm[k] == 16) first = t;
        }
      }
      ASSERT_TRUE(first.has_value());
      EXPECT_EQ(DivergenceStep(a, b), *first + 1) << "seed " << seed;
    }
  }
}

TEST_F(DivergenceTest, DifferentSeeds) {
  const TrainConfig cfg = Config(0.5, 4, 10);
  const ModelSpec spec = ModelSpec::LogReg(3);
  const auto& s = family_->members[0];
  EXPECT_EQ(DivergenceStep(RunSgd(spec, s, cfg, Options(1)),
                           RunSgd(spec, s, cfg, Options(2))), 0u);
  EXPECT_EQ(DivergenceStep(RunSgd(spec, s, cfg, Options(1, InitMode::kFixed)),
                           RunSgd(spec, s, cfg, Options(2, InitMode::kFixed))), 1u);
}

TEST_F(DivergenceTest, MismatchedSchedulesRejected) {
  const ModelSpec spec = ModelSpec::LogReg(3);
  const auto& s = family_->members[0];
  EXPECT_THROW(DivergenceStep(RunSgd(spec, s, Config(0.5, 4, 10, 1), Options(1)),
                              RunSgd(spec, s, Config(0.5, 4, 10, 2), Options(1))),
               InvalidArgument);
}

TEST(RecommendStepsTest, StopsAfterThreeMisses) {
  std::map<std::size_t, Metrics> m;
  const double losses[] = {0.9, 0.7, 0.6, 0.61, 0.62, 0.5, 0.63, 0.64, 0.65, 0.1};
  for (std::size_t i = 0; i < 10; ++i) m[i * 50] = {losses[i], 0.0};
  EXPECT_EQ(RecommendSteps(m), 250u);
  EXPECT_EQ(RecommendSteps(m, 10), 450u);
  EXPECT_FALSE(RecommendSteps({}).has_value());
}

}  // namespace
}  // namespace sgdlab
