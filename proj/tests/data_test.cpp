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

#include "sgdlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "gtest/gtest.h"

namespace sgdlab {
namespace {

const std::string kDataDir = SGDLAB_TEST_DATA_DIR;

Matrix MakeMatrix(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()),
           static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

DatasetInstance MakeData(Matrix m) {
  Labels labels(static_cast<std::size_t>(m.rows()), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 2;
  return DatasetInstance(std::move(m), std::move(labels), "fixture");
}

TEST(LoadCsvTest, FirstSeenLabelMapsToZero) {
  const DatasetInstance d = LoadCsv(kDataDir + "/labels_abc.csv", "label");
  EXPECT_EQ(d.labels(), (Labels{0, 1, 0}));
  EXPECT_EQ(d.rows(), 3u);
  EXPECT_EQ(d.dim(), 2u);
  EXPECT_DOUBLE_EQ(d.features()(1, 0), 3.5);
  EXPECT_DOUBLE_EQ(d.features()(1, 1), -1.0);
}

TEST(LoadCsvTest, NormBoundIsObservedMaximum) {
  // Row norms: 5, sqrt(2), 2, 10.
  const DatasetInstance d = LoadCsv(kDataDir + "/four_by_two.csv", "cls");
  EXPECT_EQ(d.rows(), 4u);
  EXPECT_EQ(d.dim(), 2u);
  EXPECT_DOUBLE_EQ(d.norm_bound(), 10.0);
  EXPECT_EQ(d.labels(), (Labels{0, 1, 1, 0}));
}

TEST(LoadCsvTest, Errors) {
  EXPECT_THROW(LoadCsv(kDataDir + "/three_labels.csv", "label"), DataError);
  EXPECT_THROW(LoadCsv(kDataDir + "/bad_cell.csv", "label"), DataError);
  EXPECT_THROW(LoadCsv(kDataDir + "/header_only.csv", "label"), DataError);
  EXPECT_THROW(LoadCsv(kDataDir + "/does_not_exist.csv", "label"), IoError);
  EXPECT_THROW(LoadCsv(kDataDir + "/labels_abc.csv", "nope"), DataError);
}

TEST(LoadCsvTest, SaveRoundTripIsExact) {
  const DatasetInstance d = GenerateSynthetic(20, 3, 1.5, 9);
  const std::string path = ::testing::TempDir() + "/roundtrip.csv";
  SaveCsv(d, path);
  const DatasetInstance back = LoadCsv(path, "label");
  EXPECT_EQ(back.features(), d.features());
  // First-seen mapping may swap the label names; the partition is preserved.
  const bool same = back.labels() == d.labels();
  Labels flipped = d.labels();
  for (int& y : flipped) y = 1 - y;
  EXPECT_TRUE(same || back.labels() == flipped);
}

TEST(SyntheticTest, Deterministic) {
  const DatasetInstance a = GenerateSynthetic(10, 3, 0.0, 7);
  const DatasetInstance b = GenerateSynthetic(10, 3, 0.0, 7);
  EXPECT_EQ(a.features(), b.features());
  EXPECT_EQ(a.labels(), b.labels());
  const DatasetInstance c = GenerateSynthetic(10, 3, 0.0, 8);
  EXPECT_NE(a.features(), c.features());
}

TEST(SyntheticTest, Balanced) {
  const DatasetInstance even = GenerateSynthetic(10, 3, 1.0, 7);
  EXPECT_EQ(std::count(even.labels().begin(), even.labels().end(), 0), 5);
  const DatasetInstance odd = GenerateSynthetic(11, 3, 1.0, 7);
  EXPECT_EQ(std::count(odd.labels().begin(), odd.labels().end(), 0), 6);
}

TEST(SyntheticTest, ClassMeansSeparated) {
  const DatasetInstance d = GenerateSynthetic(4000, 2, 6.0, 1);
  double m0 = 0, m1 = 0;
  for (std::size_t i = 0; i < d.rows(); ++i) {
    (d.label(i) == 0 ? m0 : m1) += d.features()(static_cast<Eigen::Index>(i), 0);
  }
  EXPECT_NEAR(m0 / 2000, -3.0, 0.1);
  EXPECT_NEAR(m1 / 2000, 3.0, 0.1);
}

TEST(SyntheticTest, Preconditions) {
  EXPECT_THROW(GenerateSynthetic(1, 3, 1.0, 0), InvalidArgument);
  EXPECT_THROW(GenerateSynthetic(5, 0, 1.0, 0), InvalidArgument);
  EXPECT_THROW(GenerateSynthetic(5, 2, -1.0, 0), InvalidArgument);
}

TEST(NormalizeTest, SingleRow) {
  const auto n = NormalizeMaxNorm(MakeData(MakeMatrix({{3, 4}})));
  EXPECT_DOUBLE_EQ(n.data.features()(0, 0), 0.6);
  EXPECT_DOUBLE_EQ(n.data.features()(0, 1), 0.8);
  EXPECT_EQ(n.data.norm_bound(), 1.0);
  EXPECT_DOUBLE_EQ(n.scale, 0.2);
}

TEST(NormalizeTest, ScalesByMaxNorm) {
  const auto n = NormalizeMaxNorm(MakeData(MakeMatrix({{1, 0}, {0, 2}})));
  EXPECT_EQ(n.data.features(), MakeMatrix({{0.5, 0}, {0, 1}}));
}

TEST(NormalizeTest, AlreadyNormalizedUnchanged) {
  const Matrix m = MakeMatrix({{1, 0}, {0, 0.5}, {0.6, -0.8}});
  const auto n = NormalizeMaxNorm(MakeData(m));
  EXPECT_EQ(n.data.features(), m);
}

TEST(NormalizeTest, MaxNormIsOneWithinOneUlp) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto n = NormalizeMaxNorm(GenerateSynthetic(50, 7, 2.0, seed));
    EXPECT_NEAR(MaxRowNorm(n.data.features()), 1.0, 0x1.0p-52);
  }
}

TEST(NormalizeTest, AllZeroFails) {
  EXPECT_THROW(NormalizeMaxNorm(MakeData(MakeMatrix({{0, 0}, {0, 0}}))),
               DataError);
}

TEST(SelectFeaturesTest, IdentityPermutationAndErrors) {
  const DatasetInstance d = MakeData(MakeMatrix({{1, 2, 3}, {4, 5, 6}}));
  const std::vector<std::size_t> all = {0, 1, 2};
  EXPECT_EQ(SelectFeatures(d, all).features(), d.features());
  const std::vector<std::size_t> swap = {1, 0};
  EXPECT_EQ(SelectFeatures(d, swap).features(), MakeMatrix({{2, 1}, {5, 4}}));
  EXPECT_THROW(SelectFeatures(d, std::vector<std::size_t>{}), InvalidArgument);
  EXPECT_THROW(SelectFeatures(d, std::vector<std::size_t>{3}), InvalidArgument);
  EXPECT_THROW(SelectFeatures(d, std::vector<std::size_t>{1, 1}),
               InvalidArgument);
}

TEST(SelectFeaturesTest, CentralCrop) {
  // 4x4 image, central 2x2 square: rows 1-2, columns 1-2.
  EXPECT_EQ(CentralCropIndices(4, 4, 2), (std::vector<std::size_t>{5, 6, 9, 10}));
  EXPECT_EQ(CentralCropIndices(28, 28, 10).size(), 100u);
  EXPECT_EQ(CentralCropIndices(28, 28, 10).front(), 9u * 28 + 9);
}

TEST(PcaTest, AxisAlignedKeepsLargestVarianceAxis) {
  const DatasetInstance d =
      MakeData(MakeMatrix({{2, 0}, {-2, 0}, {0, 1}, {0, -1}}));
  const PcaProjection p = PcaProject(d, 1);
  EXPECT_NEAR(p.model.components(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(p.model.components(1, 0), 0.0, 1e-12);
  EXPECT_NEAR(p.data.features()(0, 0), 2.0, 1e-12);
  EXPECT_NEAR(p.model.eigenvalues[0], 8.0 / 3.0, 1e-12);
}

TEST(PcaTest, KnownCovarianceFirstComponent) {
  // Four points +-s1*u1, +-s2*u2 with u1 = (1,1)/sqrt2, u2 = (1,-1)/sqrt2.
  // Sample covariance (n-1 = 3) is 2 s1^2/3 u1u1' + 2 s2^2/3 u2u2', which is
  // [[2,1],[1,2]] for s1^2 = 4.5, s2^2 = 1.5.
  const double r = 1.0 / std::sqrt(2.0);
  const double s1 = std::sqrt(4.5), s2 = std::sqrt(1.5);
  const DatasetInstance d = MakeData(MakeMatrix({{s1 * r, s1 * r},
                                                 {-s1 * r, -s1 * r},
                                                 {s2 * r, -s2 * r},
                                                 {-s2 * r, s2 * r}}));
  const PcaModel m = FitPca(d, 2);
  EXPECT_NEAR(m.eigenvalues[0], 3.0, 1e-12);
  EXPECT_NEAR(m.eigenvalues[1], 1.0, 1e-12);
  EXPECT_NEAR(m.components(0, 0), r, 1e-12);
  EXPECT_NEAR(m.components(1, 0), r, 1e-12);
  // Largest-magnitude coordinate of the second axis is forced positive.
  EXPECT_NEAR(m.components(0, 1), r, 1e-12);
  EXPECT_NEAR(m.components(1, 1), -r, 1e-12);
}

TEST(PcaTest, FullRankProjectionIsIsometry) {
  const DatasetInstance d = GenerateSynthetic(30, 5, 1.0, 3);
  const PcaProjection p = PcaProject(d, 5);
  const Matrix centered =
      d.features().rowwise() - d.features().colwise().mean();
  for (Eigen::Index i = 0; i < 30; ++i) {
    for (Eigen::Index j = i + 1; j < 30; ++j) {
      const double before = (centered.row(i) - centered.row(j)).norm();
      const double after = (p.data.features().row(i) - p.data.features().row(j)).norm();
      EXPECT_NEAR(after / before, 1.0, 1e-9);
    }
  }
}

TEST(PcaTest, FitsOnTrainingRowsOnly) {
  const DatasetInstance d =
      MakeData(MakeMatrix({{2, 0}, {-2, 0}, {0, 1}, {0, -1}, {100, 100}}));
  const std::vector<std::size_t> train = {0, 1, 2, 3};
  const PcaProjection p = PcaProject(d, 1, train);
  EXPECT_NEAR(p.model.components(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(p.data.features()(4, 0), 100.0, 1e-9);
  EXPECT_THROW(PcaProject(d, 3), InvalidArgument);
}

TEST(GrpTest, DeterministicInSeed) {
  const DatasetInstance d = GenerateSynthetic(10, 6, 1.0, 3);
  EXPECT_EQ(GrpProject(d, 3, 5).features(), GrpProject(d, 3, 5).features());
  EXPECT_NE(GrpProject(d, 3, 5).features(), GrpProject(d, 3, 6).features());
}

TEST(GrpTest, SingleOutputEqualsDotProductWithStream) {
  const DatasetInstance d = GenerateSynthetic(8, 4, 1.0, 3);
  RandomStream stream(99, StreamDomain::kProjection);
  std::vector<double> v(4);
  for (double& x : v) x = stream.NextNormal();  // scale 1/sqrt(1) = 1
  const DatasetInstance p = GrpProject(d, 1, 99);
  for (std::size_t i = 0; i < d.rows(); ++i) {
    double dot = 0;
    for (std::size_t c = 0; c < 4; ++c) {
      dot += d.features()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) * v[c];
    }
    EXPECT_NEAR(p.features()(static_cast<Eigen::Index>(i), 0), dot, 1e-12);
  }
}

TEST(GrpTest, SquaredNormPreservedInExpectation) {
  const DatasetInstance d = GenerateSynthetic(2, 20, 1.0, 4);
  const double target = d.row(0).squaredNorm();
  double total = 0;
  constexpr int kSeeds = 10000;
  for (int s = 0; s < kSeeds; ++s) {
    const Matrix proj = GaussianProjectionMatrix(20, 5, static_cast<std::uint64_t>(s));
    total += (d.row(0) * proj).squaredNorm();
  }
  EXPECT_NEAR(total / kSeeds / target, 1.0, 0.05);
}

TEST(SplitTest, PartitionsRows) {
  const SplitIndices s = SplitRows(100, {0.1, 0.15, 3});
  EXPECT_EQ(s.test.size(), 15u);
  EXPECT_EQ(s.validation.size(), 10u);
  EXPECT_EQ(s.train.size(), 75u);
  std::vector<std::size_t> all;
  for (const auto* part : {&s.train, &s.validation, &s.test}) {
    EXPECT_TRUE(std::is_sorted(part->begin(), part->end()));
    all.insert(all.end(), part->begin(), part->end());
  }
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(all[i], i);
  EXPECT_THROW(SplitRows(100, {0.5, 0.5, 0}), InvalidArgument);
}

class NeighbourFamilyTest : public ::testing::Test {
 protected:
  static DatasetInstance TenRows() {
    Matrix m(10, 2);
    for (int i = 0; i < 10; ++i) {
      m(i, 0) = i;
      m(i, 1) = -0.5 * i;
    }
    return MakeData(m);
  }

  static std::vector<std::vector<double>> SortedRows(const Matrix& m) {
    std::vector<std::vector<double>> rows;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      rows.push_back({m.row(i).begin(), m.row(i).end()});
    }
    std::sort(rows.begin(), rows.end());
    return rows;
  }
};

TEST_F(NeighbourFamilyTest, ReplaceWithFirstThenDrop) {
  const DatasetInstance base =
      MakeData(MakeMatrix({{0, 0}, {1, 1}, {2, 2}, {3, 3}}));
  const std::vector<std::size_t> idx = {2};
  const NeighbourFamily f = MakeNeighbourFamily(base, idx);
  EXPECT_EQ(f.member(2).features(), MakeMatrix({{1, 1}, {0, 0}, {3, 3}}));
  EXPECT_EQ(f.member(2).labels(), (Labels{1, 0, 1}));
}

TEST_F(NeighbourFamilyTest, SameIndexSameMember) {
  const DatasetInstance base = TenRows();
  const std::vector<std::size_t> idx = {4, 4};
  const NeighbourFamily f = MakeNeighbourFamily(base, idx);
  EXPECT_EQ(f.members[0].features(), f.members[1].features());
}

TEST_F(NeighbourFamilyTest, MultisetIsBaseMinusOneRow) {
  const DatasetInstance base = TenRows();
  std::vector<std::size_t> idx;
  for (std::size_t i = 1; i < 10; ++i) idx.push_back(i);
  const NeighbourFamily f = MakeNeighbourFamily(base, idx);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    Matrix expected(9, 2);
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < 10; ++i) {
      if (static_cast<std::size_t>(i) != idx[k]) expected.row(r++) = base.features().row(i);
    }
    EXPECT_EQ(SortedRows(f.members[k].features()), SortedRows(expected));
  }
  // Ordered lists differ at exactly positions i-1 and j-1.
  for (std::size_t a = 0; a < idx.size(); ++a) {
    for (std::size_t b = a + 1; b < idx.size(); ++b) {
      std::vector<std::size_t> diff;
      for (Eigen::Index p = 0; p < 9; ++p) {
        if (f.members[a].features().row(p) != f.members[b].features().row(p)) {
          diff.push_back(static_cast<std::size_t>(p));
        }
      }
      EXPECT_EQ(diff, (std::vector<std::size_t>{idx[a] - 1, idx[b] - 1}));
    }
  }
}

TEST_F(NeighbourFamilyTest, RejectsBadIndices) {
  const DatasetInstance base = TenRows();
  EXPECT_THROW(MakeNeighbour(base, 0), InvalidArgument);
  EXPECT_THROW(MakeNeighbour(base, 10), InvalidArgument);
  EXPECT_THROW(MakeNeighbour(MakeData(MakeMatrix({{1, 0}, {0, 1}})), 1),
               InvalidArgument);
}

}  // namespace
}  // namespace sgdlab
