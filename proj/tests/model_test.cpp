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

#include "sgdlab/model.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include "gtest/gtest.h"
#include "test_util.hpp"

namespace sgdlab {
namespace {

TEST(ModelSpecTest, ParameterCounts) {
  EXPECT_EQ(ModelSpec::LogReg(50).ParameterCount(), 51u);
  // Hidden size 10 on 50 inputs: 500 + 10 + 10 + 1.
  EXPECT_EQ(ModelSpec::Mlp(50, 10).ParameterCount(), 521u);
  EXPECT_EQ(ModelSpec::Mlp(100, 8).ParameterCount(), 817u);
  ModelSpec bad{ModelKind::kMlp, 3, std::nullopt};
  EXPECT_THROW(bad.Validate(), InvalidArgument);
  ModelSpec bad2{ModelKind::kLogReg, 3, 4};
  EXPECT_THROW(bad2.Validate(), InvalidArgument);
}

TEST(ModelSpecTest, LayoutCoversAllParameters) {
  for (const ModelSpec& spec : {ModelSpec::LogReg(7), ModelSpec::Mlp(7, 3)}) {
    std::size_t next = 0;
    for (const auto& slot : MakeLayout(spec)) {
      EXPECT_EQ(slot.offset, next);
      next += slot.size();
    }
    EXPECT_EQ(next, spec.ParameterCount());
  }
}

TEST(InitWeightsTest, BiasesZeroAndWeightsWithinGlorotBound) {
  const ModelSpec spec = ModelSpec::Mlp(6, 4);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const WeightVector w = InitWeights(spec, seed, InitMode::kVary);
    for (const auto& slot : w.layout()) {
      const double bound = GlorotBound(slot.cols, slot.rows);
      for (std::size_t i = 0; i < slot.size(); ++i) {
        const double v = w[slot.offset + i];
        if (slot.is_bias) {
          EXPECT_EQ(v, 0.0);
        } else {
          EXPECT_LE(std::abs(v), bound);
        }
      }
    }
  }
  // W: fan_in 6, fan_out 4; v: fan_in 4, fan_out 1.
  EXPECT_DOUBLE_EQ(GlorotBound(6, 4), std::sqrt(0.6));
  const WeightVector lr = InitWeights(ModelSpec::LogReg(5), 1, InitMode::kVary);
  EXPECT_EQ(lr[5], 0.0);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_LE(std::abs(lr[i]), 1.0);
}

TEST(InitWeightsTest, DeterminismContract) {
  const ModelSpec spec = ModelSpec::Mlp(4, 3);
  EXPECT_TRUE(InitWeights(spec, 3, InitMode::kVary)
                  .BitEqual(InitWeights(spec, 3, InitMode::kVary)));
  EXPECT_FALSE(InitWeights(spec, 3, InitMode::kVary)
                   .BitEqual(InitWeights(spec, 4, InitMode::kVary)));
  EXPECT_TRUE(InitWeights(spec, 3, InitMode::kFixed)
                  .BitEqual(InitWeights(spec, 4, InitMode::kFixed)));
}

TEST(ForwardTest, LogRegZeroWeightsIsHalf) {
  const ModelSpec spec = ModelSpec::LogReg(3);
  const WeightVector w = WeightVector::Zeros(spec);
  EXPECT_EQ(Forward(spec, w, std::vector<double>{0.3, -2, 7}), 0.5);
}

TEST(ForwardTest, LogRegKnownValue) {
  const ModelSpec spec = ModelSpec::LogReg(2);
  const WeightVector w = WeightVector::FromValues(spec, std::vector<double>{1, 0, 0});
  // sigmoid(ln 3) = 3 / (3 + 1).
  EXPECT_NEAR(Forward(spec, w, std::vector<double>{std::log(3.0), 0}), 0.75,
              1e-15);
}

TEST(ForwardTest, MlpDeadHiddenLayerGivesSigmoidOfOutputBias) {
  const ModelSpec spec = ModelSpec::Mlp(2, 3);
  // W rows all negative on a positive input, b = -1 so every unit is dead.
  std::vector<double> v = {-1, -1, -2, -1, -1, -3, -1, -1, -1, 5, 6, 7, 0.4};
  const WeightVector w = WeightVector::FromValues(spec, v);
  const double p = Forward(spec, w, std::vector<double>{0.5, 0.25});
  EXPECT_DOUBLE_EQ(p, 1.0 / (1.0 + std::exp(-0.4)));
}

TEST(ForwardTest, DimensionMismatch) {
  const ModelSpec spec = ModelSpec::LogReg(2);
  EXPECT_THROW(Forward(spec, WeightVector::Zeros(spec), std::vector<double>{1}),
               InvalidArgument);
}

TEST(ForwardTest, OutputStrictlyInsideUnitInterval) {
  const ModelSpec spec = ModelSpec::LogReg(1);
  for (double b : {-1000.0, -40.0, 0.0, 40.0, 1000.0}) {
    const WeightVector w = WeightVector::FromValues(spec, std::vector<double>{0, b});
    const double p = Forward(spec, w, std::vector<double>{0});
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
}

TEST(LossTest, ZeroWeightsGiveLn2) {
  const DatasetInstance d = testing_util::SmallData(6, 3, 1);
  const ModelSpec spec = ModelSpec::LogReg(3);
  EXPECT_NEAR(Loss(spec, WeightVector::Zeros(spec), d), std::numbers::ln2, 1e-15);
}

TEST(LossTest, ConfidentCorrectPredictionClamped) {
  const ModelSpec spec = ModelSpec::LogReg(1);
  Matrix x(1, 1);
  x(0, 0) = 0.0;
  const DatasetInstance d(x, Labels{1}, "one");
  const WeightVector w = WeightVector::FromValues(spec, std::vector<double>{0, 100});
  EXPECT_NEAR(Loss(spec, w, d), kLossClamp, 1e-16);
  const DatasetInstance wrong(x, Labels{0}, "one");
  // 1 - (1 - 1e-12) is not exactly 1e-12 in binary64.
  EXPECT_NEAR(Loss(spec, w, wrong), -std::log(kLossClamp), 1e-4);
}

TEST(LossTest, SingleExampleMatchesFormula) {
  const ModelSpec spec = ModelSpec::LogReg(2);
  Matrix x(1, 2);
  x << 0.3, -0.4;
  const DatasetInstance d(x, Labels{0}, "one");
  const WeightVector w =
      WeightVector::FromValues(spec, std::vector<double>{0.7, 0.2, -0.1});
  const double z = 0.7 * 0.3 + 0.2 * -0.4 - 0.1;
  const double p = 1.0 / (1.0 + std::exp(-z));
  EXPECT_NEAR(Loss(spec, w, d), -std::log(1.0 - p), 1e-15);
}

TEST(GradientTest, LogRegZeroWeights) {
  const ModelSpec spec = ModelSpec::LogReg(2);
  Matrix x(1, 2);
  x << 0.4, -0.2;
  const DatasetInstance d(x, Labels{1}, "one");
  const WeightVector g = Gradient(spec, WeightVector::Zeros(spec), d);
  EXPECT_DOUBLE_EQ(g[0], -0.2);
  EXPECT_DOUBLE_EQ(g[1], 0.1);
  EXPECT_DOUBLE_EQ(g[2], -0.5);
}

TEST(GradientTest, DuplicatedExampleEqualsSingle) {
  const DatasetInstance d = testing_util::SmallData(5, 3, 2);
  for (const ModelSpec& spec : {ModelSpec::LogReg(3), ModelSpec::Mlp(3, 4)}) {
    const WeightVector w = InitWeights(spec, 8, InitMode::kVary);
    const std::vector<std::size_t> one = {2};
    const std::vector<std::size_t> dup = {2, 2, 2};
    EXPECT_LT((Gradient(spec, w, d, one).values() -
               Gradient(spec, w, d, dup).values()).norm(), 1e-15);
  }
}

TEST(GradientTest, EmptyBatchRejected) {
  const DatasetInstance d = testing_util::SmallData(5, 3, 2);
  const ModelSpec spec = ModelSpec::LogReg(3);
  EXPECT_THROW(Gradient(spec, WeightVector::Zeros(spec), d,
                        std::vector<std::size_t>{}),
               InvalidArgument);
}

TEST(GradientTest, MatchesCentralFiniteDifferences) {
  for (std::uint64_t trial = 0; trial < 40; ++trial) {
    RandomStream rs(trial, StreamDomain::kMonteCarlo);
    const std::size_t d = 1 + rs.NextBelow(6);
    const ModelSpec spec = trial % 2 == 0
                               ? ModelSpec::LogReg(d)
                               : ModelSpec::Mlp(d, 1 + rs.NextBelow(5));
    const DatasetInstance data = testing_util::SmallData(1 + rs.NextBelow(8), d, trial);
    WeightVector w = WeightVector::Zeros(spec);
    for (Eigen::Index i = 0; i < w.mutable_values().size(); ++i) {
      w.mutable_values()(i) = rs.NextUniform(-1.5, 1.5);
    }
    const Vector analytic = Gradient(spec, w, data).values();
    const Vector numeric = testing_util::FiniteDifferenceGradient(spec, w, data);
    EXPECT_LT(testing_util::RelativeError(analytic, numeric), 1e-5)
        << "trial " << trial;
  }
}

TEST(GradientTest, PerExampleNormBoundedByLipschitz) {
  const DatasetInstance data = NormalizeMaxNorm(testing_util::SmallData(40, 4, 3)).data;
  const ModelSpec spec = ModelSpec::LogReg(4);
  const double lipschitz = *ComputeLossConstants(spec, 1.0).lipschitz;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const WeightVector w = InitWeights(spec, s, InitMode::kVary);
    for (std::size_t i = 0; i < data.rows(); ++i) {
      const std::vector<std::size_t> one = {i};
      EXPECT_LE(Gradient(spec, w, data, one).values().norm(), lipschitz);
    }
  }
}

TEST(LossConstantsTest, LogRegAndMlp) {
  const LossConstants c = ComputeLossConstants(ModelSpec::LogReg(3), 1.0);
  EXPECT_DOUBLE_EQ(*c.lipschitz, std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(*c.smoothness, 2.0);
  EXPECT_DOUBLE_EQ(*c.smoothness_features_only, 1.0);
  const LossConstants half = ComputeLossConstants(ModelSpec::LogReg(3), 0.5);
  EXPECT_NEAR(*half.lipschitz, 1.118033988749895, 1e-15);
  const LossConstants mlp = ComputeLossConstants(ModelSpec::Mlp(3, 2), 1.0);
  EXPECT_FALSE(mlp.lipschitz.has_value());
  EXPECT_FALSE(mlp.smoothness.has_value());
}

TEST(WeightFileTest, EncodingIsBitExactAndLittleEndian) {
  const std::vector<double> v = {1.0, -0.0, 3.141592653589793, 1e-310};
  const std::string bytes = EncodeWeights(v);
  ASSERT_EQ(bytes.size(), 9u + 32u);
  EXPECT_EQ(bytes.substr(0, 4), "SGDW");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5], 4);
  EXPECT_EQ(bytes[6], 0);
  // 1.0 = 0x3FF0000000000000, least significant byte first.
  EXPECT_EQ(static_cast<unsigned char>(bytes[9 + 7]), 0x3F);
  EXPECT_EQ(static_cast<unsigned char>(bytes[9 + 6]), 0xF0);
  const std::vector<double> back = DecodeWeights(bytes);
  ASSERT_EQ(back.size(), v.size());
  EXPECT_EQ(std::memcmp(back.data(), v.data(), 32), 0);
}

TEST(WeightFileTest, CorruptionDetected) {
  const std::string good = EncodeWeights(std::vector<double>{1, 2, 3});
  EXPECT_THROW(DecodeWeights(good.substr(0, good.size() - 1)), FormatError);
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(DecodeWeights(bad_magic), FormatError);
  std::string bad_version = good;
  bad_version[4] = 2;
  EXPECT_THROW(DecodeWeights(bad_version), FormatError);
  std::string bad_count = good;
  bad_count[5] = 4;
  EXPECT_THROW(DecodeWeights(bad_count), FormatError);
}

TEST(WeightFileTest, FileRoundTrip) {
  const WeightVector w = InitWeights(ModelSpec::Mlp(5, 3), 2, InitMode::kVary);
  const std::string path = ::testing::TempDir() + "/w.sgdw";
  WriteWeightFile(path, w.span());
  const WeightVector back =
      WeightVector::FromValues(ModelSpec::Mlp(5, 3), ReadWeightFile(path));
  EXPECT_TRUE(back.BitEqual(w));
  EXPECT_TRUE(back.SameLayout(w));
}

}  // namespace
}  // namespace sgdlab
