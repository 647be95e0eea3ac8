// SPDX-License-Identifier: Apache-2.0

#include "ncap/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "ncap/errors.hpp"

namespace ncap {

inline constexpr double kStdFloor = 1e-12;

Vector Dataset::one_hot(std::size_t row) const {
  Vector y(n_classes, 0.0);
  y[static_cast<std::size_t>(labels[row])] = 1.0;
  return y;
}

Matrix Dataset::targets() const {
  Matrix t(size(), n_classes, 0.0);
  for (std::size_t r = 0; r < size(); ++r) t(r, static_cast<std::size_t>(labels[r])) = 1.0;
  return t;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.n_classes = n_classes;
  out.features = Matrix(rows.size(), n_features());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = features.row(rows[i]);
    std::copy(src.begin(), src.end(), out.features.row(i).begin());
    out.labels.push_back(labels[rows[i]]);
  }
  return out;
}

namespace {

Dataset slice_rows(const Matrix& features, const std::vector<int>& labels, std::size_t n_classes,
                   std::size_t begin, std::size_t count) {
  Dataset d;
  d.n_classes = n_classes;
  d.features = Matrix(count, features.cols());
  d.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                  labels.begin() + static_cast<std::ptrdiff_t>(begin + count));
  for (std::size_t r = 0; r < count; ++r) {
    const auto src = features.row(begin + r);
    std::copy(src.begin(), src.end(), d.features.row(r).begin());
  }
  return d;
}

DataSplits split_by_position(const Matrix& features, const std::vector<int>& labels,
                             std::size_t n_classes, const SplitSizes& s) {
  DataSplits out;
  out.train = slice_rows(features, labels, n_classes, 0, s.train);
  out.val = slice_rows(features, labels, n_classes, s.train, s.val);
  out.test = slice_rows(features, labels, n_classes, s.train + s.val, s.test);
  return out;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

}  // namespace

DataSplits generate_blobs(const BlobSpec& spec) {
  if (spec.n_classes < 2) throw std::invalid_argument("generate_blobs: need at least two classes");
  if (spec.n_features == 0 || spec.clusters_per_class == 0) {
    throw std::invalid_argument("generate_blobs: sizes must be positive");
  }
  if (spec.sizes.train == 0 || spec.sizes.val == 0 || spec.sizes.test == 0) {
    throw std::invalid_argument("generate_blobs: split sizes must be positive");
  }
  if (!(spec.cluster_std > 0.0) || !(spec.separation > 0.0)) {
    throw std::invalid_argument("generate_blobs: separation and cluster_std must be positive");
  }
  if (spec.label_noise < 0.0 || spec.label_noise > 1.0) {
    throw std::invalid_argument("generate_blobs: label_noise must lie in [0, 1]");
  }
  std::mt19937_64 rng(spec.seed);
  const std::size_t d = spec.n_features;
  // E|c1 - c2|^2 = (separation * std)^2 for independent centres.
  const double centre_sd = spec.separation * spec.cluster_std / std::sqrt(2.0 * static_cast<double>(d));
  std::normal_distribution<double> centre_dist(0.0, centre_sd);
  Matrix centres(spec.n_classes * spec.clusters_per_class, d);
  for (double& v : centres.data()) v = centre_dist(rng);

  const std::size_t n = spec.sizes.total();
  Matrix features(n, d);
  std::vector<int> labels(n);
  std::uniform_int_distribution<std::size_t> class_dist(0, spec.n_classes - 1);
  std::uniform_int_distribution<std::size_t> cluster_dist(0, spec.clusters_per_class - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, spec.cluster_std);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t cls = class_dist(rng);
    const std::size_t centre = cls * spec.clusters_per_class + cluster_dist(rng);
    for (std::size_t c = 0; c < d; ++c) features(r, c) = centres(centre, c) + noise(rng);
    std::size_t label = cls;
    if (spec.label_noise > 0.0 && unit(rng) < spec.label_noise) label = class_dist(rng);
    labels[r] = static_cast<int>(label);
  }
  return split_by_position(features, labels, spec.n_classes, spec.sizes);
}

Standardizer Standardizer::fit(const Matrix& features) {
  if (features.rows() == 0) throw DataError("standardize: empty train split");
  Standardizer s;
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  s.mean.assign(d, 0.0);
  s.stddev.assign(d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) s.mean[c] += features(r, c);
  for (double& m : s.mean) m /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      const double dv = features(r, c) - s.mean[c];
      s.stddev[c] += dv * dv;
    }
  }
  for (double& v : s.stddev) v = std::max(std::sqrt(v / static_cast<double>(n)), kStdFloor);
  return s;
}

void Standardizer::apply(Matrix& features) const {
  for (std::size_t r = 0; r < features.rows(); ++r)
    for (std::size_t c = 0; c < features.cols(); ++c)
      features(r, c) = (features(r, c) - mean[c]) / stddev[c];
}

void standardize(DataSplits& splits) {
  const Standardizer s = Standardizer::fit(splits.train.features);
  s.apply(splits.train.features);
  s.apply(splits.val.features);
  s.apply(splits.test.features);
}

DataSplits load_csv(const std::filesystem::path& path, const std::string& label_col,
                    const SplitSizes& sizes) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  const std::vector<std::string> header = split_line(line);
  const auto label_it = std::find(header.begin(), header.end(), label_col);
  if (label_it == header.end()) throw DataError(path.string() + ": no column named '" + label_col + "'");
  const auto label_idx = static_cast<std::size_t>(label_it - header.begin());
  const std::size_t d = header.size() - 1;

  std::vector<double> values;
  std::vector<std::string> raw_labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != header.size()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": ragged row (" +
                      std::to_string(cells.size()) + " cells, header has " +
                      std::to_string(header.size()) + ")");
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c == label_idx) {
        raw_labels.push_back(cells[c]);
        continue;
      }
      double v = 0.0;
      if (!parse_double(cells[c], v) || !std::isfinite(v)) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": non-numeric cell '" +
                        cells[c] + "'");
      }
      values.push_back(v);
    }
  }
  const std::size_t n = raw_labels.size();
  if (sizes.total() != n) {
    throw DataError(path.string() + ": split sizes sum to " + std::to_string(sizes.total()) +
                    " but the file has " + std::to_string(n) + " rows");
  }
  if (sizes.train == 0) throw DataError(path.string() + ": train split is empty");

  // Classes are defined by the train split; numeric labels sort numerically.
  std::vector<std::string> classes(raw_labels.begin(),
                                   raw_labels.begin() + static_cast<std::ptrdiff_t>(sizes.train));
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  const bool numeric = std::all_of(classes.begin(), classes.end(), [](const std::string& s) {
    double v = 0.0;
    return parse_double(s, v);
  });
  if (numeric) {
    std::sort(classes.begin(), classes.end(), [](const std::string& a, const std::string& b) {
      double x = 0.0, y = 0.0;
      parse_double(a, x);
      parse_double(b, y);
      return x < y;
    });
  }
  std::map<std::string, int> class_id;
  for (std::size_t i = 0; i < classes.size(); ++i) class_id[classes[i]] = static_cast<int>(i);

  Matrix features(n, d);
  std::copy(values.begin(), values.end(), features.data().begin());
  std::vector<int> labels(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto it = class_id.find(raw_labels[r]);
    if (it == class_id.end()) {
      throw DataError(path.string() + ": label '" + raw_labels[r] + "' in row " + std::to_string(r + 1) +
                      " does not occur in the train split");
    }
    labels[r] = it->second;
  }
  DataSplits splits = split_by_position(features, labels, classes.size(), sizes);
  standardize(splits);
  return splits;
}

void write_csv(std::ostream& out, const Dataset& data) {
  out << std::setprecision(17);
  for (std::size_t c = 0; c < data.n_features(); ++c) out << 'f' << c << ',';
  out << "label\n";
  for (std::size_t r = 0; r < data.size(); ++r) {
    for (std::size_t c = 0; c < data.n_features(); ++c) out << data.features(r, c) << ',';
    out << data.labels[r] << '\n';
  }
}

void write_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_csv(out, data);
}

}  // namespace ncap
