// SPDX-License-Identifier: Apache-2.0
//
// Labelled datasets, the synthetic Gaussian-blob generator and CSV ingestion.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ncap/matrix.hpp"

namespace ncap {

struct Dataset {
  Matrix features;          // n x d
  std::vector<int> labels;  // class index per row, in [0, n_classes)
  std::size_t n_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t n_features() const { return features.cols(); }
  Vector one_hot(std::size_t row) const;
  // One-hot targets for all rows (n x n_classes).
  Matrix targets() const;
  // Rows picked by index, in the given order.
  Dataset subset(std::span<const std::size_t> rows) const;
};

struct DataSplits {
  Dataset train;
  Dataset val;
  Dataset test;
};

struct SplitSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
  std::size_t total() const { return train + val + test; }
};

struct BlobSpec {
  std::size_t n_classes = 2;
  std::size_t n_features = 2;
  SplitSizes sizes;
  // Distance scale between cluster centres, in units of the cluster std.
  double separation = 5.0;
  double cluster_std = 1.0;
  // Each class is a mixture of this many Gaussian clusters.
  std::size_t clusters_per_class = 1;
  // Fraction of rows whose label is replaced by a uniformly drawn class.
  double label_noise = 0.0;
  std::uint64_t seed = 0;
};

// Gaussian class clusters; rows are generated in one pass and assigned to the
// train/val/test splits by position, so the splits never share a row.
DataSplits generate_blobs(const BlobSpec& spec);

// Reads a rectangular numeric CSV with a header row. The first `sizes.train`
// rows form the train split, then val, then test. Features are standardized
// with train-split statistics (population std, floored at 1e-12).
DataSplits load_csv(const std::filesystem::path& path, const std::string& label_col,
                    const SplitSizes& sizes);

// Writes header f0..f{d-1},label followed by one row per sample (17
// significant digits).
void write_csv(std::ostream& out, const Dataset& data);
void write_csv(const std::filesystem::path& path, const Dataset& data);

struct Standardizer {
  Vector mean;
  Vector stddev;
  static Standardizer fit(const Matrix& features);
  void apply(Matrix& features) const;
};

// Fits a Standardizer on splits.train and applies it to every split.
void standardize(DataSplits& splits);

}  // namespace ncap
