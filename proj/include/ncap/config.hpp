// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: datasets, candidate pool, probe head, fine-tuning
// schedule. Parsed from JSON, validated before anything runs, and hashed so
// that every artifact can name the configuration that produced it.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "ncap/dataset.hpp"

namespace ncap {

struct DatasetSpec {
  std::string source = "synthetic-blobs";  // or "csv"
  std::size_t n_classes = 3;
  std::size_t n_features = 8;
  SplitSizes sizes{600, 300, 300};
  std::uint64_t seed = 0;
  double separation = 5.0;
  double cluster_std = 1.0;
  std::size_t clusters_per_class = 1;
  double label_noise = 0.0;
  std::filesystem::path path;  // csv only
  std::string label_col;       // csv only
};

DataSplits load_dataset(const DatasetSpec& spec);

// Backbone hidden widths; the source net adds the input and output layers.
struct Architecture {
  std::vector<std::size_t> hidden;

  // Weight layers of the pre-trained source net (hidden + output).
  std::size_t depth() const { return hidden.size() + 1; }
  std::string id() const;  // "h16-16" style
  bool operator==(const Architecture&) const = default;
};

struct PoolSpec {
  std::vector<Architecture> architectures;
  std::size_t pretrain_epochs = 20;
  double pretrain_learning_rate = 0.05;
};

struct NcpSpec {
  std::vector<std::size_t> hidden{64, 32, 16};
  std::uint64_t seed = 0;
};

struct RunConfig {
  DatasetSpec source;
  DatasetSpec target;
  PoolSpec pool;
  NcpSpec ncp;
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::size_t epochs = 50;  // T
  std::vector<std::size_t> llc{5, 10};
  std::size_t probe_size = 256;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";

  // Throws ConfigError on the first invalid field.
  void validate() const;
};

// Accepts the layout written by to_json. "pool.architectures" may also be a
// grid {"depths": [...], "widths": [...]}, expanded depth-major with
// depth - 1 hidden layers of the given width. Throws ConfigError.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);

// Lower-case hex SHA-256 of the canonical JSON form (sorted keys, no
// whitespace). output_dir is excluded.
std::string config_digest(const RunConfig& config);
std::string sha256_hex(const std::string& data);

}  // namespace ncap
