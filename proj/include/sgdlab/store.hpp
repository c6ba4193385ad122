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

#ifndef SGDLAB_STORE_HPP_
#define SGDLAB_STORE_HPP_

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sgdlab/common.hpp"
#include "sgdlab/model.hpp"
#include "sgdlab/train.hpp"

namespace sgdlab {

namespace fs = std::filesystem;

// On-disk layout under the store root:
//   manifest.json   model spec and config digest shared by every record
//   records.jsonl   one record per line, sorted by key
//   weights/<dataset>__<seed>__<mode>/final.sgdw, t<step>.sgdw
class ResultStore {
 public:
  static constexpr const char* kManifest = "manifest.json";
  static constexpr const char* kRecords = "records.jsonl";

  // Opens (or prepares) the store at `root`. An existing store must have
  // been produced with the same digest and model.
  ResultStore(fs::path root, const ModelSpec& spec, std::string config_digest)
      : root_(std::move(root)), spec_(spec), digest_(std::move(config_digest)) {
    if (fs::exists(root_ / kManifest)) {
      const nlohmann::json m = ReadJson(root_ / kManifest);
      const std::string digest = m.value("config_digest", "");
      if (digest != digest_) {
        throw FormatError("store at " + root_.string() +
                          " was built with config digest " + digest +
                          ", refusing to mix with " + digest_);
      }
      if (m.value("model", nlohmann::json()) != SpecJson(spec_)) {
        throw FormatError("store model does not match the config");
      }
    }
    if (fs::exists(root_ / kRecords)) LoadAll();
  }

  // Reads a store without knowing the config up front.
  static ResultStore Open(const fs::path& root) {
    if (!fs::exists(root / kManifest)) {
      throw IoError("no store manifest at " + (root / kManifest).string());
    }
    const nlohmann::json m = ReadJson(root / kManifest);
    return ResultStore(root, SpecFromJson(m.at("model")),
                       m.at("config_digest").get<std::string>());
  }

  const fs::path& root() const { return root_; }
  const ModelSpec& spec() const { return spec_; }
  const std::string& config_digest() const { return digest_; }
  const std::vector<ExperimentRecord>& records() const { return records_; }

  bool Contains(const ExperimentKey& key) const { return index_.contains(key); }

  const ExperimentRecord& Get(const ExperimentKey& key) const {
    const auto it = index_.find(key);
    if (it == index_.end()) throw InvalidArgument("no record " + key.ToString());
    return records_[it->second];
  }

  static std::string WeightDir(const ExperimentKey& key) {
    return "weights/" + key.dataset_id + "__" + std::to_string(key.seed) + "__" +
           ToString(key.init_mode);
  }

  static std::string CheckpointName(std::size_t step) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "t%08zu.sgdw", step);
    return buf;
  }

  // Writes the weight payloads of one record. Safe to call concurrently for
  // distinct keys: each key owns its directory.
  void WritePayload(const ExperimentRecord& r) const {
    const fs::path dir = root_ / WeightDir(r.key);
    fs::create_directories(dir);
    WriteWeightFile((dir / "final.sgdw").string(), r.final_weights.span());
    for (const auto& [step, w] : r.checkpoints) {
      WriteWeightFile((dir / CheckpointName(step)).string(), w.span());
    }
  }

  // Adds records whose payloads were already written, then rewrites the
  // manifest and the sorted record index.
  void Commit(std::vector<ExperimentRecord> fresh) {
    for (auto& r : fresh) {
      if (r.config_digest != digest_) {
        throw FormatError("record " + r.key.ToString() + " has a foreign digest");
      }
      if (Contains(r.key)) {
        throw InvalidArgument("duplicate record " + r.key.ToString());
      }
      index_[r.key] = records_.size();
      records_.push_back(std::move(r));
    }
    std::sort(records_.begin(), records_.end(),
              [](const auto& a, const auto& b) { return a.key < b.key; });
    index_.clear();
    for (std::size_t i = 0; i < records_.size(); ++i) index_[records_[i].key] = i;

    fs::create_directories(root_);
    nlohmann::json manifest = {{"format", "sgdlab-store"},
                               {"version", 1},
                               {"config_digest", digest_},
                               {"model", SpecJson(spec_)}};
    WriteAtomically(root_ / kManifest, manifest.dump(2) + "\n");
    std::string lines;
    for (const auto& r : records_) lines += RecordJson(r).dump() + "\n";
    WriteAtomically(root_ / kRecords, lines);
  }

  void Persist(const ExperimentRecord& r) {
    WritePayload(r);
    Commit({r});
  }

  static nlohmann::json SpecJson(const ModelSpec& spec) {
    nlohmann::json j = {{"kind", ToString(spec.kind)}, {"input_dim", spec.input_dim}};
    if (spec.kind == ModelKind::kMlp) j["hidden"] = spec.hidden();
    return j;
  }

  static ModelSpec SpecFromJson(const nlohmann::json& j) {
    const auto kind = j.at("kind").get<std::string>();
    const auto d = j.at("input_dim").get<std::size_t>();
    if (kind == "logreg") return ModelSpec::LogReg(d);
    if (kind == "mlp") return ModelSpec::Mlp(d, j.at("hidden").get<std::size_t>());
    throw FormatError("unknown model kind in store: " + kind);
  }

 private:
  static nlohmann::json ReadJson(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    try {
      return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + " is corrupt: " + e.what());
    }
  }

  static void WriteAtomically(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw IoError("cannot write " + tmp.string());
      out << text;
      if (!out) throw IoError("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
  }

  static nlohmann::json RecordJson(const ExperimentRecord& r) {
    const std::string dir = WeightDir(r.key);
    nlohmann::json checkpoints = nlohmann::json::array();
    for (const auto& [step, w] : r.checkpoints) {
      checkpoints.push_back({{"step", step}, {"path", dir + "/" + CheckpointName(step)}});
    }
    nlohmann::json metrics = nlohmann::json::array();
    for (const auto& [step, m] : r.metrics) {
      metrics.push_back({{"step", step}, {"loss", m.loss}, {"accuracy", m.accuracy}});
    }
    return {{"dataset_id", r.key.dataset_id},
            {"seed", r.key.seed},
            {"init_mode", ToString(r.key.init_mode)},
            {"config_digest", r.config_digest},
            {"final", dir + "/final.sgdw"},
            {"checkpoints", checkpoints},
            {"metrics", metrics}};
  }

  WeightVector LoadWeights(const std::string& rel) const {
    const std::vector<double> v = ReadWeightFile((root_ / rel).string());
    if (v.size() != spec_.ParameterCount()) {
      throw FormatError(rel + ": parameter count " + std::to_string(v.size()) +
                        " does not match the model");
    }
    return WeightVector(layout_, Eigen::Map<const Vector>(v.data(),
                                                          static_cast<Eigen::Index>(v.size())));
  }

  void LoadAll() {
    std::ifstream in(root_ / kRecords);
    if (!in) throw IoError("cannot read " + (root_ / kRecords).string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      ExperimentRecord r;
      try {
        const auto j = nlohmann::json::parse(line);
        r.key = {j.at("dataset_id").get<std::string>(), j.at("seed").get<std::uint64_t>(),
                 ParseInitMode(j.at("init_mode").get<std::string>())};
        r.config_digest = j.at("config_digest").get<std::string>();
        if (r.config_digest != digest_) {
          throw FormatError("record " + r.key.ToString() + " has digest " +
                            r.config_digest + ", expected " + digest_);
        }
        r.final_weights = LoadWeights(j.at("final").get<std::string>());
        for (const auto& c : j.at("checkpoints")) {
          r.checkpoints.emplace(c.at("step").get<std::size_t>(),
                                LoadWeights(c.at("path").get<std::string>()));
        }
        for (const auto& m : j.at("metrics")) {
          r.metrics[m.at("step").get<std::size_t>()] = {m.at("loss").get<double>(),
                                                        m.at("accuracy").get<double>()};
        }
      } catch (const nlohmann::json::exception& e) {
        throw FormatError(kRecords + std::string(":") + std::to_string(line_no) +
                          " is corrupt: " + e.what());
      }
      if (Contains(r.key)) throw FormatError("duplicate record " + r.key.ToString());
      index_[r.key] = records_.size();
      records_.push_back(std::move(r));
    }
  }

  fs::path root_;
  ModelSpec spec_;
  std::string digest_;
  std::shared_ptr<const WeightLayout> layout_ =
      std::make_shared<const WeightLayout>(MakeLayout(spec_));
  std::vector<ExperimentRecord> records_;
  std::map<ExperimentKey, std::size_t> index_;
};

}  // namespace sgdlab

#endif  // SGDLAB_STORE_HPP_
