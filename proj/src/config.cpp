// SPDX-License-Identifier: Apache-2.0

#include "ncap/config.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <iomanip>
#include <sstream>

#include "ncap/errors.hpp"

namespace ncap {

DataSplits load_dataset(const DatasetSpec& spec) {
  if (spec.source == "synthetic-blobs") {
    BlobSpec b;
    b.n_classes = spec.n_classes;
    b.n_features = spec.n_features;
    b.sizes = spec.sizes;
    b.separation = spec.separation;
    b.cluster_std = spec.cluster_std;
    b.clusters_per_class = spec.clusters_per_class;
    b.label_noise = spec.label_noise;
    b.seed = spec.seed;
    return generate_blobs(b);
  }
  if (spec.source == "csv") return load_csv(spec.path, spec.label_col, spec.sizes);
  throw ConfigError("dataset source must be 'synthetic-blobs' or 'csv', got '" + spec.source + "'");
}

std::string Architecture::id() const {
  std::string s = "h";
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    if (i) s += '-';
    s += std::to_string(hidden[i]);
  }
  return s;
}

namespace {

void validate_dataset(const DatasetSpec& d, const std::string& what) {
  if (d.source != "synthetic-blobs" && d.source != "csv") throw ConfigError(what + ".source: unknown source '" + d.source + "'");
  if (d.sizes.train < 1 || d.sizes.val < 1 || d.sizes.test < 1) throw ConfigError(what + ".sizes: every split needs >= 1 row");
  if (d.source == "csv") {
    if (d.path.empty() || d.label_col.empty()) throw ConfigError(what + ": csv source needs path and label_col");
    return;
  }
  if (d.n_classes < 2) throw ConfigError(what + ".n_classes must be >= 2");
  if (d.n_features < 1) throw ConfigError(what + ".n_features must be >= 1");
  if (!(d.cluster_std > 0.0)) throw ConfigError(what + ".cluster_std must be positive");
  if (!(d.separation >= 0.0)) throw ConfigError(what + ".separation must be non-negative");
  if (d.clusters_per_class < 1) throw ConfigError(what + ".clusters_per_class must be >= 1");
  if (d.label_noise < 0.0 || d.label_noise > 1.0) throw ConfigError(what + ".label_noise must lie in [0, 1]");
}

nlohmann::json dataset_json(const DatasetSpec& d) {
  nlohmann::json j = {{"source", d.source},
                      {"sizes", {{"train", d.sizes.train}, {"val", d.sizes.val}, {"test", d.sizes.test}}},
                      {"seed", d.seed}};
  if (d.source == "csv") {
    j["path"] = d.path.string();
    j["label_col"] = d.label_col;
  } else {
    j["n_classes"] = d.n_classes;
    j["n_features"] = d.n_features;
    j["separation"] = d.separation;
    j["cluster_std"] = d.cluster_std;
    j["clusters_per_class"] = d.clusters_per_class;
    j["label_noise"] = d.label_noise;
  }
  return j;
}

DatasetSpec parse_dataset(const nlohmann::json& j) {
  DatasetSpec d;
  d.source = j.value("source", d.source);
  if (j.contains("sizes")) {
    const auto& s = j.at("sizes");
    d.sizes = {s.at("train").get<std::size_t>(), s.at("val").get<std::size_t>(), s.at("test").get<std::size_t>()};
  }
  d.seed = j.value("seed", d.seed);
  d.n_classes = j.value("n_classes", d.n_classes);
  d.n_features = j.value("n_features", d.n_features);
  d.separation = j.value("separation", d.separation);
  d.cluster_std = j.value("cluster_std", d.cluster_std);
  d.clusters_per_class = j.value("clusters_per_class", d.clusters_per_class);
  d.label_noise = j.value("label_noise", d.label_noise);
  if (j.contains("path")) d.path = j.at("path").get<std::string>();
  d.label_col = j.value("label_col", d.label_col);
  return d;
}

}  // namespace

void RunConfig::validate() const {
  validate_dataset(source, "source");
  validate_dataset(target, "target");
  if (source.source == "synthetic-blobs" && target.source == "synthetic-blobs" &&
      source.n_features != target.n_features) {
    throw ConfigError("source and target must have the same number of features");
  }
  if (pool.architectures.size() < 2) throw ConfigError("pool.architectures needs at least two entries");
  for (const auto& a : pool.architectures) {
    if (a.hidden.empty()) throw ConfigError("architecture " + a.id() + ": need L >= 2 (at least one hidden layer)");
    for (std::size_t w : a.hidden)
      if (w == 0) throw ConfigError("architecture " + a.id() + ": zero width");
  }
  if (!(pool.pretrain_learning_rate > 0.0)) throw ConfigError("pool.pretrain_learning_rate must be positive");
  if (ncp.hidden.size() < 3) throw ConfigError("ncp.hidden needs at least three layers");
  for (std::size_t w : ncp.hidden)
    if (w == 0) throw ConfigError("ncp.hidden: zero width");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (llc.empty()) throw ConfigError("llc needs at least one value");
  for (std::size_t k : llc) {
    if (k < 3) throw ConfigError("llc values must be >= 3");
    if (k > epochs) throw ConfigError("llc value " + std::to_string(k) + " exceeds epochs");
  }
  if (probe_size < 1) throw ConfigError("probe_size must be >= 1");
}

RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig c;
  try {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    c.source = parse_dataset(j.at("source"));
    c.target = parse_dataset(j.at("target"));
    const auto& pool = j.at("pool");
    const auto& arch = pool.at("architectures");
    if (arch.is_array()) {
      for (const auto& a : arch) c.pool.architectures.push_back({a.at("hidden").get<std::vector<std::size_t>>()});
    } else {
      for (auto depth : arch.at("depths").get<std::vector<std::size_t>>()) {
        if (depth < 2) throw ConfigError("architecture depth must be >= 2");
        for (auto width : arch.at("widths").get<std::vector<std::size_t>>()) {
          c.pool.architectures.push_back({std::vector<std::size_t>(depth - 1, width)});
        }
      }
    }
    c.pool.pretrain_epochs = pool.value("pretrain_epochs", c.pool.pretrain_epochs);
    c.pool.pretrain_learning_rate = pool.value("pretrain_learning_rate", c.pool.pretrain_learning_rate);
    if (j.contains("ncp")) {
      c.ncp.hidden = j.at("ncp").value("hidden", c.ncp.hidden);
      c.ncp.seed = j.at("ncp").value("seed", c.ncp.seed);
    }
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.llc = j.value("llc", c.llc);
    c.probe_size = j.value("probe_size", c.probe_size);
    c.seed = j.value("seed", c.seed);
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json arch = nlohmann::json::array();
  for (const auto& a : c.pool.architectures) arch.push_back({{"hidden", a.hidden}});
  return {{"source", dataset_json(c.source)},
          {"target", dataset_json(c.target)},
          {"pool",
           {{"architectures", arch},
            {"pretrain_epochs", c.pool.pretrain_epochs},
            {"pretrain_learning_rate", c.pool.pretrain_learning_rate}}},
          {"ncp", {{"hidden", c.ncp.hidden}, {"seed", c.ncp.seed}}},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"llc", c.llc},
          {"probe_size", c.probe_size},
          {"seed", c.seed},
          {"output_dir", c.output_dir.string()}};
}

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return out.str();
}

std::string config_digest(const RunConfig& config) {
  nlohmann::json j = to_json(config);
  j.erase("output_dir");
  return sha256_hex(j.dump());
}

}  // namespace ncap
