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

#ifndef SGDLAB_MODEL_HPP_
#define SGDLAB_MODEL_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sgdlab/common.hpp"
#include "sgdlab/data.hpp"
#include "sgdlab/rng.hpp"

namespace sgdlab {

enum class ModelKind { kLogReg, kMlp };

inline const char* ToString(ModelKind kind) {
  return kind == ModelKind::kLogReg ? "logreg" : "mlp";
}

struct ModelSpec {
  ModelKind kind = ModelKind::kLogReg;
  std::size_t input_dim = 1;
  std::optional<std::size_t> hidden_size;  // set iff kind == kMlp

  static ModelSpec LogReg(std::size_t input_dim) {
    return {ModelKind::kLogReg, input_dim, std::nullopt};
  }
  static ModelSpec Mlp(std::size_t input_dim, std::size_t hidden) {
    return {ModelKind::kMlp, input_dim, hidden};
  }

  void Validate() const {
    Require(input_dim >= 1, "model input dimension must be at least 1");
    if (kind == ModelKind::kMlp) {
      Require(hidden_size.has_value() && *hidden_size >= 1,
              "mlp requires a positive hidden size");
    } else {
      Require(!hidden_size.has_value(), "logreg takes no hidden size");
    }
  }

  std::size_t hidden() const { return hidden_size.value_or(0); }

  std::size_t ParameterCount() const {
    if (kind == ModelKind::kLogReg) return input_dim + 1;
    const std::size_t h = hidden();
    return h * input_dim + h + h + 1;
  }

  bool operator==(const ModelSpec&) const = default;
};

struct TensorSlot {
  std::string name;
  std::size_t rows;
  std::size_t cols;
  std::size_t offset;
  bool is_bias;

  std::size_t size() const { return rows * cols; }
  bool operator==(const TensorSlot&) const = default;
};

// Flat layout: logreg = [w (d), b]; mlp = [W (h x d, row-major), b (h),
// v (h), c].
using WeightLayout = std::vector<TensorSlot>;

inline WeightLayout MakeLayout(const ModelSpec& spec) {
  spec.Validate();
  const std::size_t d = spec.input_dim;
  if (spec.kind == ModelKind::kLogReg) {
    return {{"w", 1, d, 0, false}, {"b", 1, 1, d, true}};
  }
  const std::size_t h = spec.hidden();
  return {{"W", h, d, 0, false},
          {"b", 1, h, h * d, true},
          {"v", 1, h, h * d + h, false},
          {"c", 1, 1, h * d + 2 * h, true}};
}

// Flattened model parameters plus the layout describing them.
class WeightVector {
 public:
  WeightVector() = default;
  WeightVector(std::shared_ptr<const WeightLayout> layout, Vector values)
      : layout_(std::move(layout)), values_(std::move(values)) {
    std::size_t total = 0;
    for (const auto& slot : *layout_) total += slot.size();
    Require(total == static_cast<std::size_t>(values_.size()),
            "weight values do not match layout extent");
  }

  static WeightVector Zeros(const ModelSpec& spec) {
    auto layout = std::make_shared<const WeightLayout>(MakeLayout(spec));
    return WeightVector(layout, Vector::Zero(static_cast<Eigen::Index>(
                                    spec.ParameterCount())));
  }

  static WeightVector FromValues(const ModelSpec& spec,
                                 std::span<const double> values) {
    Require(values.size() == spec.ParameterCount(),
            "expected " + std::to_string(spec.ParameterCount()) +
                " parameters, got " + std::to_string(values.size()));
    Vector v(static_cast<Eigen::Index>(values.size()));
    std::copy(values.begin(), values.end(), v.data());
    return WeightVector(std::make_shared<const WeightLayout>(MakeLayout(spec)),
                        std::move(v));
  }

  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }
  const Vector& values() const { return values_; }
  Vector& mutable_values() { return values_; }
  const WeightLayout& layout() const { return *layout_; }
  std::shared_ptr<const WeightLayout> shared_layout() const { return layout_; }
  double operator[](std::size_t i) const {
    return values_(static_cast<Eigen::Index>(i));
  }

  std::span<const double> span() const {
    return {values_.data(), static_cast<std::size_t>(values_.size())};
  }

  bool SameLayout(const WeightVector& other) const {
    return layout_ == other.layout_ ||
           (layout_ && other.layout_ && *layout_ == *other.layout_);
  }

  // Bitwise equality of values (distinguishes -0.0 and NaN payloads).
  bool BitEqual(const WeightVector& other) const {
    return size() == other.size() &&
           std::memcmp(values_.data(), other.values_.data(),
                       size() * sizeof(double)) == 0;
  }

 private:
  std::shared_ptr<const WeightLayout> layout_;
  Vector values_;
};

// ---------------------------------------------------------------------------
// Initialization

enum class InitMode { kFixed, kVary };

inline const char* ToString(InitMode mode) {
  return mode == InitMode::kFixed ? "fixed" : "vary";
}

inline InitMode ParseInitMode(const std::string& name) {
  if (name == "fixed") return InitMode::kFixed;
  if (name == "vary") return InitMode::kVary;
  throw InvalidArgument("init mode must be 'fixed' or 'vary', got '" + name + "'");
}

// Seed used for every run in fixed-init mode, whatever the run seed.
inline constexpr std::uint64_t kFixedInitSeed = 0x5eedf1dULL;

inline double GlorotBound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

// Glorot-uniform weight matrices, zero biases. Matrix entries are drawn in
// layout order from `stream`.
inline WeightVector InitWeights(const ModelSpec& spec, RandomStream& stream) {
  WeightVector w = WeightVector::Zeros(spec);
  Vector& values = w.mutable_values();
  for (const auto& slot : w.layout()) {
    if (slot.is_bias) continue;
    // Matrix slots are stored output-major: rows = fan_out, cols = fan_in.
    const double bound = GlorotBound(slot.cols, slot.rows);
    for (std::size_t i = 0; i < slot.size(); ++i) {
      values(static_cast<Eigen::Index>(slot.offset + i)) =
          stream.NextUniform(-bound, bound);
    }
  }
  return w;
}

inline WeightVector InitWeights(const ModelSpec& spec, std::uint64_t seed,
                                InitMode mode) {
  RandomStream stream(mode == InitMode::kFixed ? kFixedInitSeed : seed,
                      StreamDomain::kInit);
  return InitWeights(spec, stream);
}

// ---------------------------------------------------------------------------
// Forward pass, loss and gradient

inline double Sigmoid(double z) {
  double p;
  if (z >= 0.0) {
    p = 1.0 / (1.0 + std::exp(-z));
  } else {
    const double e = std::exp(z);
    p = e / (1.0 + e);
  }
  // Keep the output strictly inside (0, 1).
  constexpr double kHi = 1.0 - 0x1.0p-53;
  return std::clamp(p, std::numeric_limits<double>::denorm_min(), kHi);
}

namespace detail {

template <typename Row>
double Logit(const ModelSpec& spec, const Vector& w, const Row& x,
             Vector* hidden_pre = nullptr) {
  const auto d = static_cast<Eigen::Index>(spec.input_dim);
  if (spec.kind == ModelKind::kLogReg) {
    return w.head(d).dot(x.transpose()) + w(d);
  }
  const auto h = static_cast<Eigen::Index>(spec.hidden());
  Eigen::Map<const Matrix> W(w.data(), h, d);
  Vector pre = W * x.transpose() + w.segment(h * d, h);
  const double z = pre.cwiseMax(0.0).dot(w.segment(h * d + h, h)) +
                   w(h * d + 2 * h);
  if (hidden_pre != nullptr) *hidden_pre = std::move(pre);
  return z;
}

// grad += d loss(x, y) / d w for one example (before batch averaging).
template <typename Row>
void AccumulateGradient(const ModelSpec& spec, const Vector& w, const Row& x,
                        int y, Vector& grad) {
  const auto d = static_cast<Eigen::Index>(spec.input_dim);
  if (spec.kind == ModelKind::kLogReg) {
    const double dz = Sigmoid(Logit(spec, w, x)) - y;
    grad.head(d) += dz * x.transpose();
    grad(d) += dz;
    return;
  }
  const auto h = static_cast<Eigen::Index>(spec.hidden());
  Vector pre;
  const double dz = Sigmoid(Logit(spec, w, x, &pre)) - y;
  const auto v = w.segment(h * d + h, h);
  grad.segment(h * d + h, h) += dz * pre.cwiseMax(0.0);
  grad(h * d + 2 * h) += dz;
  for (Eigen::Index j = 0; j < h; ++j) {
    if (pre(j) <= 0.0) continue;
    const double dh = dz * v(j);
    grad.segment(j * d, d) += dh * x.transpose();
    grad(h * d + j) += dh;
  }
}

}  // namespace detail

inline void CheckInput(const ModelSpec& spec, const WeightVector& w,
                       std::size_t input_dim) {
  Require(input_dim == spec.input_dim,
          "input dimension " + std::to_string(input_dim) +
              " does not match model dimension " +
              std::to_string(spec.input_dim));
  Require(w.size() == spec.ParameterCount(),
          "weight vector size does not match model");
}

inline double Forward(const ModelSpec& spec, const WeightVector& w,
                      std::span<const double> x) {
  CheckInput(spec, w, x.size());
  Eigen::Map<const Eigen::RowVectorXd> row(x.data(),
                                           static_cast<Eigen::Index>(x.size()));
  return Sigmoid(detail::Logit(spec, w.values(), row));
}

inline double ForwardRow(const ModelSpec& spec, const WeightVector& w,
                         const DatasetInstance& data, std::size_t i) {
  return Sigmoid(detail::Logit(spec, w.values(), data.row(i)));
}

// Probability clamp used inside the loss only.
inline constexpr double kLossClamp = 1e-12;

inline double ExampleLoss(double p, int y) {
  const double pc = std::clamp(p, kLossClamp, 1.0 - kLossClamp);
  return y == 1 ? -std::log(pc) : -std::log(1.0 - pc);
}

namespace detail {

// rows == nullptr means every row of `data`.
inline double MeanLoss(const ModelSpec& spec, const WeightVector& w,
                       const DatasetInstance& data,
                       const std::span<const std::size_t>* rows) {
  CheckInput(spec, w, data.dim());
  const std::size_t n = rows == nullptr ? data.rows() : rows->size();
  Require(n >= 1, "loss needs a nonempty batch");
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = rows == nullptr ? k : (*rows)[k];
    Require(i < data.rows(), "batch row out of range");
    total += ExampleLoss(ForwardRow(spec, w, data, i), data.label(i));
  }
  return total / static_cast<double>(n);
}

inline WeightVector MeanGradient(const ModelSpec& spec, const WeightVector& w,
                                 const DatasetInstance& data,
                                 const std::span<const std::size_t>* rows) {
  CheckInput(spec, w, data.dim());
  const std::size_t n = rows == nullptr ? data.rows() : rows->size();
  Require(n >= 1, "gradient needs a nonempty batch");
  Vector grad = Vector::Zero(static_cast<Eigen::Index>(w.size()));
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = rows == nullptr ? k : (*rows)[k];
    Require(i < data.rows(), "batch row out of range");
    AccumulateGradient(spec, w.values(), data.row(i), data.label(i), grad);
  }
  grad /= static_cast<double>(n);
  return WeightVector(w.shared_layout(), std::move(grad));
}

}  // namespace detail

// Mean binary cross-entropy over the whole dataset.
inline double Loss(const ModelSpec& spec, const WeightVector& w,
                   const DatasetInstance& data) {
  return detail::MeanLoss(spec, w, data, nullptr);
}

// Mean binary cross-entropy over the batch `rows` (must be nonempty).
inline double Loss(const ModelSpec& spec, const WeightVector& w,
                   const DatasetInstance& data,
                   std::span<const std::size_t> rows) {
  return detail::MeanLoss(spec, w, data, &rows);
}

// Exact gradient of the mean loss over the whole dataset.
inline WeightVector Gradient(const ModelSpec& spec, const WeightVector& w,
                             const DatasetInstance& data) {
  return detail::MeanGradient(spec, w, data, nullptr);
}

// Exact gradient of the mean loss over the batch `rows` (must be nonempty).
inline WeightVector Gradient(const ModelSpec& spec, const WeightVector& w,
                             const DatasetInstance& data,
                             std::span<const std::size_t> rows) {
  return detail::MeanGradient(spec, w, data, &rows);
}

// ---------------------------------------------------------------------------
// Loss constants

struct LossConstants {
  std::optional<double> lipschitz;
  // Smoothness on the bias-augmented input (sup ||x||^2 + 1).
  std::optional<double> smoothness;
  // Smoothness on the raw features (sup ||x||^2). Reported for comparison
  // only; never used in a computation.
  std::optional<double> smoothness_features_only;
};

// For logistic regression with a bias the per-example gradient is
// (p - y)(x, 1), so L = sqrt(B^2 + 1) for rows bounded by B.
inline LossConstants ComputeLossConstants(const ModelSpec& spec,
                                          double norm_bound) {
  if (spec.kind != ModelKind::kLogReg) return {};
  Require(norm_bound >= 0.0, "norm bound must be non-negative");
  const double sq = norm_bound * norm_bound;
  return {std::sqrt(sq + 1.0), sq + 1.0, sq};
}

// ---------------------------------------------------------------------------
// Weight files: "SGDW", version byte, u32 LE count, count x f64 LE.

inline constexpr std::array<char, 4> kWeightMagic = {'S', 'G', 'D', 'W'};
inline constexpr std::uint8_t kWeightVersion = 1;

inline std::string EncodeWeights(std::span<const double> values) {
  Require(values.size() <= 0xFFFFFFFFull, "too many parameters to encode");
  std::string out(kWeightMagic.begin(), kWeightMagic.end());
  out.push_back(static_cast<char>(kWeightVersion));
  const auto count = static_cast<std::uint32_t>(values.size());
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>(count >> (8 * b)));
  for (double v : values) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>(bits >> (8 * b)));
  }
  return out;
}

inline std::vector<double> DecodeWeights(const std::string& bytes,
                                         const std::string& what = "weights") {
  if (bytes.size() < 9 ||
      !std::equal(kWeightMagic.begin(), kWeightMagic.end(), bytes.begin())) {
    throw FormatError(what + ": bad magic");
  }
  if (static_cast<std::uint8_t>(bytes[4]) != kWeightVersion) {
    throw FormatError(what + ": unsupported version " +
                      std::to_string(static_cast<unsigned char>(bytes[4])));
  }
  std::uint32_t count = 0;
  for (int b = 0; b < 4; ++b) {
    count |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[5 + b]))
             << (8 * b);
  }
  if (bytes.size() != 9 + 8ull * count) {
    throw FormatError(what + ": expected " + std::to_string(count) +
                      " parameters, payload has " +
                      std::to_string(bytes.size()) + " bytes");
  }
  std::vector<double> values(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(
                  static_cast<unsigned char>(bytes[9 + 8 * i + b]))
              << (8 * b);
    }
    values[i] = std::bit_cast<double>(bits);
  }
  return values;
}

inline void WriteWeightFile(const std::string& path,
                            std::span<const double> values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write weight file: " + path);
  const std::string bytes = EncodeWeights(values);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

inline std::vector<double> ReadWeightFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open weight file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return DecodeWeights(bytes, path);
}

}  // namespace sgdlab

#endif  // SGDLAB_MODEL_HPP_
