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

#ifndef SGDLAB_DATA_HPP_
#define SGDLAB_DATA_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sgdlab/common.hpp"
#include "sgdlab/rng.hpp"

namespace sgdlab {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Labels = std::vector<int>;

inline double MaxRowNorm(const Matrix& features) {
  double max_norm = 0.0;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    max_norm = std::max(max_norm, features.row(i).norm());
  }
  return max_norm;
}

// Feature matrix with binary labels. Immutable once built; every row norm is
// certified to be at most norm_bound().
class DatasetInstance {
 public:
  DatasetInstance(Matrix features, Labels labels, std::string source_id)
      : features_(std::move(features)),
        labels_(std::move(labels)),
        source_id_(std::move(source_id)) {
    Validate();
    norm_bound_ = MaxRowNorm(features_);
  }

  DatasetInstance(Matrix features, Labels labels, std::string source_id,
                  double norm_bound)
      : features_(std::move(features)),
        labels_(std::move(labels)),
        norm_bound_(norm_bound),
        source_id_(std::move(source_id)) {
    Validate();
    // One ulp of slack for rows that were divided by the bound.
    const double observed = MaxRowNorm(features_);
    if (observed > norm_bound_ * (1.0 + 4e-16)) {
      throw InvalidArgument("row norm " + std::to_string(observed) +
                            " exceeds certified bound " +
                            std::to_string(norm_bound_));
    }
  }

  std::size_t rows() const { return static_cast<std::size_t>(features_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(features_.cols()); }
  const Matrix& features() const { return features_; }
  const Labels& labels() const { return labels_; }
  double norm_bound() const { return norm_bound_; }
  const std::string& source_id() const { return source_id_; }

  auto row(std::size_t i) const {
    return features_.row(static_cast<Eigen::Index>(i));
  }
  int label(std::size_t i) const { return labels_[i]; }

 private:
  void Validate() const {
    if (features_.rows() < 1 || features_.cols() < 1) {
      throw DataError("dataset must have at least one row and one column");
    }
    if (labels_.size() != static_cast<std::size_t>(features_.rows())) {
      throw DataError("label count does not match row count");
    }
    for (int y : labels_) {
      if (y != 0 && y != 1) throw DataError("labels must be 0 or 1");
    }
    if (!features_.allFinite()) throw DataError("non-finite feature value");
  }

  Matrix features_;
  Labels labels_;
  double norm_bound_ = 0.0;
  std::string source_id_;
};

// ---------------------------------------------------------------------------
// CSV ingestion

namespace detail {

inline std::string_view Trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

inline std::vector<std::string_view> SplitComma(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(Trim(line.substr(start)));
      return cells;
    }
    cells.push_back(Trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

inline double ParseDouble(std::string_view cell, std::size_t line_no) {
  double value = 0.0;
  const auto [ptr, ec] =
      std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() ||
      !std::isfinite(value)) {
    throw DataError("non-numeric cell '" + std::string(cell) + "' on line " +
                    std::to_string(line_no));
  }
  return value;
}

}  // namespace detail

// Reads a comma-separated file with a header row. The first label value seen
// maps to 0, the other one to 1. Every other column must be numeric.
inline DatasetInstance LoadCsv(const std::string& path,
                               const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open CSV file: " + path);

  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw DataError("empty CSV file: " + path);
  ++line_no;
  const auto header = detail::SplitComma(line);
  const auto label_it =
      std::find(header.begin(), header.end(), std::string_view(label_column));
  if (label_it == header.end()) {
    throw DataError("label column '" + label_column + "' not found in " + path);
  }
  const std::size_t label_index =
      static_cast<std::size_t>(label_it - header.begin());
  const std::size_t d = header.size() - 1;
  if (d == 0) throw DataError("CSV has no feature columns: " + path);

  std::vector<double> values;
  Labels labels;
  std::vector<std::string> label_values;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::Trim(line).empty()) continue;
    const auto cells = detail::SplitComma(line);
    if (cells.size() != header.size()) {
      throw DataError("line " + std::to_string(line_no) + " has " +
                      std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(header.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c == label_index) continue;
      values.push_back(detail::ParseDouble(cells[c], line_no));
    }
    const std::string label(cells[label_index]);
    auto seen = std::find(label_values.begin(), label_values.end(), label);
    if (seen == label_values.end()) {
      if (label_values.size() == 2) {
        throw DataError("label column has more than two distinct values "
                        "(third value '" + label + "' on line " +
                        std::to_string(line_no) + ")");
      }
      label_values.push_back(label);
      seen = label_values.end() - 1;
    }
    labels.push_back(static_cast<int>(seen - label_values.begin()));
  }
  if (labels.empty()) throw DataError("CSV has no data rows: " + path);

  Matrix features(static_cast<Eigen::Index>(labels.size()),
                  static_cast<Eigen::Index>(d));
  std::copy(values.begin(), values.end(), features.data());
  return DatasetInstance(std::move(features), std::move(labels), path);
}

// Writes features and a trailing "label" column. Values use round-trip
// precision so LoadCsv reproduces the matrix exactly.
inline void SaveCsv(const DatasetInstance& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write CSV file: " + path);
  for (std::size_t c = 0; c < data.dim(); ++c) out << 'x' << c << ',';
  out << "label\n";
  for (std::size_t i = 0; i < data.rows(); ++i) {
    for (std::size_t c = 0; c < data.dim(); ++c) {
      out << FormatDouble(data.features()(static_cast<Eigen::Index>(i),
                                          static_cast<Eigen::Index>(c)))
          << ',';
    }
    out << data.label(i) << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Synthetic data

// Two isotropic unit-variance Gaussian classes whose means sit at
// -separation/2 and +separation/2 along the first axis. Class 0 receives
// n - n/2 rows, class 1 receives n/2. Rows are emitted in a seeded shuffled
// order.
inline DatasetInstance GenerateSynthetic(std::size_t n, std::size_t d,
                                         double separation,
                                         std::uint64_t seed) {
  Require(n >= 2, "synthetic data needs n >= 2");
  Require(d >= 1, "synthetic data needs d >= 1");
  Require(separation >= 0.0 && std::isfinite(separation),
          "separation must be a finite non-negative value");

  RandomStream stream(seed, StreamDomain::kSynthetic);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  stream.Substream(1).Shuffle(std::span(order));

  const std::size_t n_class0 = n - n / 2;
  Matrix features(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  Labels labels(n);
  for (std::size_t k = 0; k < n; ++k) {
    const int y = k < n_class0 ? 0 : 1;
    const std::size_t row = order[k];
    labels[row] = y;
    for (std::size_t c = 0; c < d; ++c) {
      double v = stream.NextNormal();
      if (c == 0) v += (y == 0 ? -0.5 : 0.5) * separation;
      features(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c)) = v;
    }
  }
  return DatasetInstance(std::move(features), std::move(labels),
                         "synthetic(n=" + std::to_string(n) +
                             ",d=" + std::to_string(d) + ",seed=" +
                             std::to_string(seed) + ")");
}

// ---------------------------------------------------------------------------
// Row/column selection and scaling

inline DatasetInstance SelectRows(const DatasetInstance& data,
                                  std::span<const std::size_t> rows,
                                  const std::string& source_id) {
  Require(!rows.empty(), "row selection must be nonempty");
  Matrix features(static_cast<Eigen::Index>(rows.size()),
                  static_cast<Eigen::Index>(data.dim()));
  Labels labels(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    Require(rows[k] < data.rows(), "row index out of range");
    features.row(static_cast<Eigen::Index>(k)) = data.row(rows[k]);
    labels[k] = data.label(rows[k]);
  }
  return DatasetInstance(std::move(features), std::move(labels), source_id);
}

// Multiplies every row by `factor`. Used to apply a normalization scale fit
// elsewhere (e.g. on the training rows) to held-out data.
inline DatasetInstance ScaleRows(const DatasetInstance& data, double factor) {
  Require(factor > 0.0 && std::isfinite(factor), "scale must be positive");
  Matrix scaled = data.features() * factor;
  return DatasetInstance(std::move(scaled), data.labels(), data.source_id());
}

struct NormalizedDataset {
  DatasetInstance data;
  // Multiply held-out rows by this factor to put them on the same scale.
  double scale;
};

inline NormalizedDataset NormalizeMaxNorm(const DatasetInstance& data) {
  const double max_norm = MaxRowNorm(data.features());
  if (!(max_norm > 0.0)) {
    throw DataError("cannot normalize an all-zero dataset");
  }
  Matrix scaled = data.features() / max_norm;
  return {DatasetInstance(std::move(scaled), data.labels(), data.source_id(),
                          1.0),
          1.0 / max_norm};
}

inline DatasetInstance SelectFeatures(const DatasetInstance& data,
                                      std::span<const std::size_t> columns) {
  Require(!columns.empty(), "feature selection must keep at least one column");
  std::vector<bool> used(data.dim(), false);
  for (std::size_t c : columns) {
    Require(c < data.dim(), "feature index " + std::to_string(c) +
                                " out of range for dimension " +
                                std::to_string(data.dim()));
    Require(!used[c], "duplicate feature index " + std::to_string(c));
    used[c] = true;
  }
  Matrix out(static_cast<Eigen::Index>(data.rows()),
             static_cast<Eigen::Index>(columns.size()));
  for (std::size_t k = 0; k < columns.size(); ++k) {
    out.col(static_cast<Eigen::Index>(k)) =
        data.features().col(static_cast<Eigen::Index>(columns[k]));
  }
  return DatasetInstance(std::move(out), data.labels(), data.source_id());
}

// Row-major flat indices of the central crop x crop square of a
// width x height image.
inline std::vector<std::size_t> CentralCropIndices(std::size_t width,
                                                   std::size_t height,
                                                   std::size_t crop) {
  Require(crop >= 1 && crop <= width && crop <= height,
          "crop size must fit inside the image");
  const std::size_t top = (height - crop) / 2;
  const std::size_t left = (width - crop) / 2;
  std::vector<std::size_t> indices;
  indices.reserve(crop * crop);
  for (std::size_t r = top; r < top + crop; ++r) {
    for (std::size_t c = left; c < left + crop; ++c) {
      indices.push_back(r * width + c);
    }
  }
  return indices;
}

// ---------------------------------------------------------------------------
// Projections

// Mean-centering plus projection onto the leading principal axes.
struct PcaModel {
  Vector mean;              // length d
  Matrix components;        // d x d_out, columns ordered by eigenvalue
  std::vector<double> eigenvalues;  // descending, length d_out

  DatasetInstance Apply(const DatasetInstance& data) const {
    Require(static_cast<Eigen::Index>(data.dim()) == mean.size(),
            "PCA input dimension mismatch");
    Matrix centered = data.features().rowwise() - mean.transpose();
    Matrix projected = centered * components;
    return DatasetInstance(std::move(projected), data.labels(),
                           data.source_id());
  }
};

// Fits PCA on `train_rows` (all rows when empty) using the sample covariance.
// Eigenvector signs are fixed so that the largest-magnitude coordinate is
// positive (first such coordinate on ties).
inline PcaModel FitPca(const DatasetInstance& data, std::size_t d_out,
                       std::span<const std::size_t> train_rows = {}) {
  Require(d_out >= 1, "PCA output dimension must be at least 1");
  Require(d_out <= data.dim(), "PCA output dimension " + std::to_string(d_out) +
                                   " exceeds input dimension " +
                                   std::to_string(data.dim()));
  Matrix train;
  if (train_rows.empty()) {
    train = data.features();
  } else {
    train.resize(static_cast<Eigen::Index>(train_rows.size()),
                 static_cast<Eigen::Index>(data.dim()));
    for (std::size_t k = 0; k < train_rows.size(); ++k) {
      Require(train_rows[k] < data.rows(), "PCA training row out of range");
      train.row(static_cast<Eigen::Index>(k)) = data.row(train_rows[k]);
    }
  }
  const double n = static_cast<double>(train.rows());
  Vector mean = train.colwise().mean().transpose();
  Matrix centered = train.rowwise() - mean.transpose();
  Eigen::MatrixXd cov = (centered.transpose() * centered) /
                        std::max(1.0, n - 1.0);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) {
    throw NumericError("covariance eigendecomposition failed");
  }
  const Eigen::VectorXd& values = solver.eigenvalues();   // ascending
  const Eigen::MatrixXd& vectors = solver.eigenvectors();
  const Eigen::Index d = values.size();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) {
                     return values(a) > values(b);
                   });

  PcaModel model;
  model.mean = std::move(mean);
  model.components.resize(d, static_cast<Eigen::Index>(d_out));
  for (std::size_t k = 0; k < d_out; ++k) {
    Eigen::VectorXd v = vectors.col(order[k]);
    Eigen::Index arg = 0;
    for (Eigen::Index i = 1; i < d; ++i) {
      if (std::abs(v(i)) > std::abs(v(arg))) arg = i;
    }
    if (v(arg) < 0.0) v = -v;
    model.components.col(static_cast<Eigen::Index>(k)) = v;
    model.eigenvalues.push_back(values(order[k]));
  }
  return model;
}

struct PcaProjection {
  DatasetInstance data;
  PcaModel model;
};

inline PcaProjection PcaProject(const DatasetInstance& data, std::size_t d_out,
                                std::span<const std::size_t> train_rows = {}) {
  PcaModel model = FitPca(data, d_out, train_rows);
  DatasetInstance projected = model.Apply(data);
  return {std::move(projected), std::move(model)};
}

// d x d_out matrix of standard normals scaled by 1/sqrt(d_out), drawn
// row-major from the projection stream of `seed`.
inline Matrix GaussianProjectionMatrix(std::size_t d, std::size_t d_out,
                                       std::uint64_t seed) {
  Require(d_out >= 1, "projection dimension must be at least 1");
  RandomStream stream(seed, StreamDomain::kProjection);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_out));
  Matrix proj(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d_out));
  for (Eigen::Index r = 0; r < proj.rows(); ++r) {
    for (Eigen::Index c = 0; c < proj.cols(); ++c) {
      proj(r, c) = stream.NextNormal() * scale;
    }
  }
  return proj;
}

inline DatasetInstance GrpProject(const DatasetInstance& data,
                                  std::size_t d_out, std::uint64_t seed) {
  Matrix projected =
      data.features() * GaussianProjectionMatrix(data.dim(), d_out, seed);
  return DatasetInstance(std::move(projected), data.labels(),
                         data.source_id());
}

// ---------------------------------------------------------------------------
// Splits

struct SplitSpec {
  double validation_fraction = 0.0;
  double test_fraction = 0.0;
  std::uint64_t split_seed = 0;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

// Fractions are of the full dataset. Each part keeps the original row order.
inline SplitIndices SplitRows(std::size_t n, const SplitSpec& spec) {
  Require(spec.validation_fraction >= 0.0 && spec.validation_fraction < 1.0,
          "validation fraction must lie in [0, 1)");
  Require(spec.test_fraction >= 0.0 && spec.test_fraction < 1.0,
          "test fraction must lie in [0, 1)");
  Require(spec.validation_fraction + spec.test_fraction < 1.0,
          "split fractions must sum to less than 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  RandomStream(spec.split_seed, StreamDomain::kSplit).Shuffle(std::span(order));

  const auto n_test = static_cast<std::size_t>(
      std::floor(spec.test_fraction * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(
      std::floor(spec.validation_fraction * static_cast<double>(n)));
  SplitIndices split;
  split.test.assign(order.begin(), order.begin() + n_test);
  split.validation.assign(order.begin() + n_test,
                          order.begin() + n_test + n_val);
  split.train.assign(order.begin() + n_test + n_val, order.end());
  std::sort(split.test.begin(), split.test.end());
  std::sort(split.validation.begin(), split.validation.end());
  std::sort(split.train.begin(), split.train.end());
  Require(!split.train.empty(), "split leaves no training rows");
  return split;
}

// ---------------------------------------------------------------------------
// Neighbouring datasets

// A base dataset of N rows and replace-one neighbours. Member S_i is the base
// with row i overwritten by row 0, after which row 0 is dropped; S_i therefore
// holds x_0 at position i-1 and x_{p+1} at every other position p.
struct NeighbourFamily {
  DatasetInstance base;
  std::vector<std::size_t> member_indices;
  std::vector<DatasetInstance> members;

  const DatasetInstance& member(std::size_t index) const {
    for (std::size_t k = 0; k < member_indices.size(); ++k) {
      if (member_indices[k] == index) return members[k];
    }
    throw InvalidArgument("no family member S_" + std::to_string(index));
  }
};

inline DatasetInstance MakeNeighbour(const DatasetInstance& base,
                                     std::size_t index) {
  const std::size_t n = base.rows();
  Require(n >= 3, "neighbour family needs at least 3 base rows");
  Require(index >= 1 && index < n,
          "member index " + std::to_string(index) + " outside [1, " +
              std::to_string(n - 1) + "]");
  Matrix features(static_cast<Eigen::Index>(n - 1),
                  static_cast<Eigen::Index>(base.dim()));
  Labels labels(n - 1);
  for (std::size_t p = 0; p + 1 < n; ++p) {
    const std::size_t src = (p + 1 == index) ? 0 : p + 1;
    features.row(static_cast<Eigen::Index>(p)) = base.row(src);
    labels[p] = base.label(src);
  }
  return DatasetInstance(std::move(features), std::move(labels),
                         base.source_id() + "/S" + std::to_string(index),
                         base.norm_bound());
}

inline NeighbourFamily MakeNeighbourFamily(
    const DatasetInstance& base, std::span<const std::size_t> member_indices) {
  NeighbourFamily family{base, {member_indices.begin(), member_indices.end()},
                         {}};
  family.members.reserve(member_indices.size());
  for (std::size_t index : member_indices) {
    family.members.push_back(MakeNeighbour(base, index));
  }
  return family;
}

}  // namespace sgdlab

#endif  // SGDLAB_DATA_HPP_
