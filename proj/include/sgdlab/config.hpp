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

#ifndef SGDLAB_CONFIG_HPP_
#define SGDLAB_CONFIG_HPP_

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "sgdlab/common.hpp"
#include "sgdlab/data.hpp"
#include "sgdlab/model.hpp"
#include "sgdlab/train.hpp"

namespace sgdlab {

using Json = nlohmann::json;

inline constexpr int kConfigSchemaVersion = 1;

struct SyntheticSource {
  std::size_t rows = 500;
  std::size_t dim = 5;
  double separation = 2.0;
  std::uint64_t seed = 0;
};

struct CsvSource {
  std::string path;
  std::string label_column = "label";
};

struct PreprocessStep {
  enum class Kind { kPca, kGrp, kSelect, kCrop } kind = Kind::kPca;
  std::size_t dim = 0;                // pca, grp
  std::uint64_t seed = 0;             // grp
  std::vector<std::size_t> columns;   // select
  std::size_t width = 0, height = 0, size = 0;  // crop
};

enum class NormalizeFit { kFull, kTrain };

struct UtilityConfig {
  std::vector<double> epsilons = {0.5, 1.0};
  std::uint64_t noise_seed = 0;
  double alpha = 1e-6;
};

struct GridConfig {
  std::variant<SyntheticSource, CsvSource> source;
  std::vector<PreprocessStep> preprocessing;
  NormalizeFit normalize = NormalizeFit::kFull;
  SplitSpec split;
  std::vector<std::size_t> members;
  std::vector<std::uint64_t> seeds;
  std::vector<InitMode> init_modes = {InitMode::kVary};
  ModelSpec model = ModelSpec::LogReg(1);  // input_dim resolved from the data
  TrainConfig train;
  std::optional<std::size_t> epochs;        // sets total_steps when given
  std::optional<std::size_t> checkpoint_every;
  std::optional<double> delta;
  std::string output_dir;
  UtilityConfig utility;
  std::uint64_t report_seed = 0;
  std::vector<std::size_t> convergence_sizes;
  // Canonical JSON of the fields that influence training.
  Json training_fields;
};

namespace detail {

inline void CheckKeys(const Json& obj, std::initializer_list<const char*> allowed,
                      const std::string& where) {
  if (!obj.is_object()) throw InvalidArgument(where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(),
                     [&](const char* a) { return key == a; })) {
      throw InvalidArgument("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
T Get(const Json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) {
    throw InvalidArgument("missing key '" + std::string(key) + "' in " + where);
  }
  try {
    return obj.at(key).get<T>();
  } catch (const Json::exception&) {
    throw InvalidArgument("key '" + std::string(key) + "' in " + where +
                          " has the wrong type");
  }
}

template <typename T>
T GetOr(const Json& obj, const char* key, T fallback, const std::string& where) {
  return obj.contains(key) ? Get<T>(obj, key, where) : fallback;
}

// A list of integers, or {"first": a, "count": n} for a..a+n-1.
template <typename T>
std::vector<T> IndexList(const Json& v, const std::string& where) {
  std::vector<T> out;
  if (v.is_array()) {
    for (const auto& x : v) {
      if (!x.is_number_integer() || x.get<long long>() < 0) {
        throw InvalidArgument(where + " entries must be non-negative integers");
      }
      out.push_back(x.get<T>());
    }
  } else {
    CheckKeys(v, {"first", "count"}, where);
    const auto first = Get<T>(v, "first", where);
    const auto count = Get<std::size_t>(v, "count", where);
    for (std::size_t i = 0; i < count; ++i) out.push_back(first + static_cast<T>(i));
  }
  return out;
}

}  // namespace detail

// Parses a GridConfig document. Paths inside are resolved against
// `base_dir`.
inline GridConfig ParseGridConfig(const Json& doc,
                                  const std::filesystem::path& base_dir = {}) {
  using detail::CheckKeys;
  using detail::Get;
  using detail::GetOr;
  CheckKeys(doc, {"schema_version", "data", "preprocessing", "normalize", "split",
                  "members", "seeds", "init_modes", "model", "train", "delta",
                  "output_dir", "utility", "report_seed", "convergence_sizes"},
            "config");
  const int version = Get<int>(doc, "schema_version", "config");
  if (version != kConfigSchemaVersion) {
    throw InvalidArgument("unsupported schema_version " + std::to_string(version));
  }
  GridConfig cfg;

  const Json& data = doc.contains("data") ? doc.at("data") : Json();
  if (!data.is_object()) throw InvalidArgument("missing key 'data' in config");
  const auto source = Get<std::string>(data, "source", "data");
  Json canonical_data;
  if (source == "synthetic") {
    CheckKeys(data, {"source", "rows", "dim", "separation", "seed"}, "data");
    SyntheticSource s;
    s.rows = Get<std::size_t>(data, "rows", "data");
    s.dim = Get<std::size_t>(data, "dim", "data");
    s.separation = GetOr<double>(data, "separation", 2.0, "data");
    s.seed = GetOr<std::uint64_t>(data, "seed", 0, "data");
    cfg.source = s;
    canonical_data = {{"source", source}, {"rows", s.rows}, {"dim", s.dim},
                      {"separation", s.separation}, {"seed", s.seed}};
  } else if (source == "csv") {
    CheckKeys(data, {"source", "path", "label_column"}, "data");
    CsvSource s;
    std::filesystem::path p = Get<std::string>(data, "path", "data");
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    s.path = p.string();
    s.label_column = GetOr<std::string>(data, "label_column", "label", "data");
    cfg.source = s;
    // The file content, not its location, defines the data.
    std::ifstream in(s.path, std::ios::binary);
    if (!in) throw IoError("cannot read CSV file: " + s.path);
    std::ostringstream bytes;
    bytes << in.rdbuf();
    canonical_data = {{"source", source},
                      {"content_fnv", HexDigest(Fnv1a64(bytes.str()))},
                      {"label_column", s.label_column}};
  } else {
    throw InvalidArgument("data.source must be 'synthetic' or 'csv'");
  }

  Json canonical_pre = Json::array();
  if (doc.contains("preprocessing")) {
    if (!doc.at("preprocessing").is_array()) {
      throw InvalidArgument("preprocessing must be a list");
    }
    for (const auto& step : doc.at("preprocessing")) {
      const std::string where = "preprocessing step";
      const auto op = Get<std::string>(step, "op", where);
      PreprocessStep p;
      if (op == "pca") {
        CheckKeys(step, {"op", "dim"}, where);
        p.kind = PreprocessStep::Kind::kPca;
        p.dim = Get<std::size_t>(step, "dim", where);
      } else if (op == "grp") {
        CheckKeys(step, {"op", "dim", "seed"}, where);
        p.kind = PreprocessStep::Kind::kGrp;
        p.dim = Get<std::size_t>(step, "dim", where);
        p.seed = GetOr<std::uint64_t>(step, "seed", 0, where);
      } else if (op == "select") {
        CheckKeys(step, {"op", "columns"}, where);
        p.kind = PreprocessStep::Kind::kSelect;
        p.columns = Get<std::vector<std::size_t>>(step, "columns", where);
      } else if (op == "crop") {
        CheckKeys(step, {"op", "width", "height", "size"}, where);
        p.kind = PreprocessStep::Kind::kCrop;
        p.width = Get<std::size_t>(step, "width", where);
        p.height = Get<std::size_t>(step, "height", where);
        p.size = Get<std::size_t>(step, "size", where);
      } else {
        throw InvalidArgument("unknown preprocessing op '" + op + "'");
      }
      cfg.preprocessing.push_back(p);
      canonical_pre.push_back(step);
    }
  }

  const auto normalize = GetOr<std::string>(doc, "normalize", "full", "config");
  if (normalize == "full") {
    cfg.normalize = NormalizeFit::kFull;
  } else if (normalize == "train") {
    cfg.normalize = NormalizeFit::kTrain;
  } else {
    throw InvalidArgument("normalize must be 'full' or 'train'");
  }

  if (doc.contains("split")) {
    const Json& s = doc.at("split");
    CheckKeys(s, {"validation_fraction", "test_fraction", "seed"}, "split");
    cfg.split.validation_fraction = GetOr<double>(s, "validation_fraction", 0.0, "split");
    cfg.split.test_fraction = GetOr<double>(s, "test_fraction", 0.0, "split");
    cfg.split.split_seed = GetOr<std::uint64_t>(s, "seed", 0, "split");
  }

  if (!doc.contains("members")) throw InvalidArgument("missing key 'members' in config");
  cfg.members = detail::IndexList<std::size_t>(doc.at("members"), "members");
  Require(!cfg.members.empty(), "members must be nonempty");
  if (!doc.contains("seeds")) throw InvalidArgument("missing key 'seeds' in config");
  cfg.seeds = detail::IndexList<std::uint64_t>(doc.at("seeds"), "seeds");
  Require(!cfg.seeds.empty(), "seed list must be nonempty");
  if (std::set<std::uint64_t>(cfg.seeds.begin(), cfg.seeds.end()).size() !=
      cfg.seeds.size()) {
    throw InvalidArgument("seed list has duplicates");
  }
  if (std::set<std::size_t>(cfg.members.begin(), cfg.members.end()).size() !=
      cfg.members.size()) {
    throw InvalidArgument("member list has duplicates");
  }

  if (doc.contains("init_modes")) {
    cfg.init_modes.clear();
    for (const auto& m : Get<std::vector<std::string>>(doc, "init_modes", "config")) {
      if (m == "fixed") {
        cfg.init_modes.push_back(InitMode::kFixed);
      } else if (m == "vary") {
        cfg.init_modes.push_back(InitMode::kVary);
      } else {
        throw InvalidArgument("init mode must be 'fixed' or 'vary', got '" + m + "'");
      }
    }
    Require(!cfg.init_modes.empty(), "init_modes must be nonempty");
    std::sort(cfg.init_modes.begin(), cfg.init_modes.end());
    Require(std::adjacent_find(cfg.init_modes.begin(), cfg.init_modes.end()) ==
                cfg.init_modes.end(),
            "init_modes has duplicates");
  }

  const Json& model = doc.contains("model") ? doc.at("model") : Json::object();
  CheckKeys(model, {"kind", "hidden"}, "model");
  const auto kind = GetOr<std::string>(model, "kind", "logreg", "model");
  Json canonical_model;
  if (kind == "logreg") {
    Require(!model.contains("hidden"), "logreg takes no hidden size");
    cfg.model = ModelSpec::LogReg(1);
    canonical_model = {{"kind", kind}};
  } else if (kind == "mlp") {
    const auto h = Get<std::size_t>(model, "hidden", "model");
    cfg.model = ModelSpec::Mlp(1, h);
    canonical_model = {{"kind", kind}, {"hidden", h}};
  } else {
    throw InvalidArgument("model.kind must be 'logreg' or 'mlp'");
  }

  if (!doc.contains("train")) throw InvalidArgument("missing key 'train' in config");
  const Json& train = doc.at("train");
  CheckKeys(train, {"learning_rate", "batch_size", "total_steps", "epochs",
                    "checkpoint_every", "checkpoint_steps", "eval_every"},
            "train");
  cfg.train.learning_rate = Get<double>(train, "learning_rate", "train");
  cfg.train.batch_size = Get<std::size_t>(train, "batch_size", "train");
  Require(train.contains("total_steps") != train.contains("epochs"),
          "train needs exactly one of total_steps or epochs");
  if (train.contains("total_steps")) {
    cfg.train.total_steps = Get<std::size_t>(train, "total_steps", "train");
  } else {
    cfg.epochs = Get<std::size_t>(train, "epochs", "train");
  }
  Require(!(train.contains("checkpoint_every") && train.contains("checkpoint_steps")),
          "train takes checkpoint_every or checkpoint_steps, not both");
  if (train.contains("checkpoint_every")) {
    cfg.checkpoint_every = Get<std::size_t>(train, "checkpoint_every", "train");
    Require(*cfg.checkpoint_every >= 1, "checkpoint_every must be positive");
  } else if (train.contains("checkpoint_steps")) {
    cfg.train.checkpoint_steps =
        Get<std::vector<std::size_t>>(train, "checkpoint_steps", "train");
  }
  cfg.train.eval_every = GetOr<std::size_t>(train, "eval_every", 0, "train");

  if (doc.contains("delta")) {
    cfg.delta = Get<double>(doc, "delta", "config");
    Require(*cfg.delta > 0.0 && *cfg.delta < 1.0, "delta must lie in (0, 1)");
  }
  cfg.output_dir = GetOr<std::string>(doc, "output_dir", "", "config");

  if (doc.contains("utility")) {
    const Json& u = doc.at("utility");
    CheckKeys(u, {"epsilons", "noise_seed", "alpha"}, "utility");
    cfg.utility.epsilons =
        GetOr<std::vector<double>>(u, "epsilons", cfg.utility.epsilons, "utility");
    for (double e : cfg.utility.epsilons) Require(e > 0.0, "epsilons must be positive");
    cfg.utility.noise_seed = GetOr<std::uint64_t>(u, "noise_seed", 0, "utility");
    cfg.utility.alpha = GetOr<double>(u, "alpha", 1e-6, "utility");
    Require(cfg.utility.alpha > 0.0 && cfg.utility.alpha < 1.0,
            "utility.alpha must lie in (0, 1)");
  }
  cfg.report_seed = GetOr<std::uint64_t>(doc, "report_seed", 0, "config");
  if (doc.contains("convergence_sizes")) {
    cfg.convergence_sizes =
        Get<std::vector<std::size_t>>(doc, "convergence_sizes", "config");
  }

  cfg.training_fields = {
      {"schema_version", version},
      {"data", canonical_data},
      {"preprocessing", canonical_pre},
      {"normalize", normalize},
      {"split",
       {{"validation_fraction", cfg.split.validation_fraction},
        {"test_fraction", cfg.split.test_fraction},
        {"seed", cfg.split.split_seed}}},
      {"model", canonical_model},
      {"train", train}};
  return cfg;
}

inline GridConfig LoadGridConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file: " + path);
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw InvalidArgument("config file " + path + " is not valid JSON: " + e.what());
  }
  return ParseGridConfig(doc, std::filesystem::path(path).parent_path());
}

// Fingerprint of everything that affects a single run's weights. Member,
// seed and init mode are part of each record's key instead.
inline std::string ConfigDigest(const GridConfig& cfg) {
  return HexDigest(Fnv1a64(cfg.training_fields.dump()));
}

}  // namespace sgdlab

#endif  // SGDLAB_CONFIG_HPP_
