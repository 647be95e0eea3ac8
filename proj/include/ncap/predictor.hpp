// SPDX-License-Identifier: Apache-2.0
//
// Accuracy extrapolation from (beta_eff, validation accuracy) pairs: Bayesian
// ridge on the design [1, beta_eff], readout at beta_eff = 0, BIC choice of
// the window start, and the last/best-seen-value baselines.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ncap/matrix.hpp"

namespace ncap {

struct Observation {
  std::size_t epoch = 0;
  double beta_eff = 0.0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;

  bool operator==(const Observation&) const = default;
};

struct SeriesMeta {
  std::uint64_t seed = 0;
  std::string dataset;
  double learning_rate = 0.0;

  bool operator==(const SeriesMeta&) const = default;
};

class ObservationSeries {
 public:
  ObservationSeries() = default;
  explicit ObservationSeries(std::string model_id, SeriesMeta meta = {})
      : model_id_(std::move(model_id)), meta_(std::move(meta)) {}

  // Throws std::invalid_argument unless epochs strictly increase and the
  // accuracies lie in [0, 1].
  void append(const Observation& obs);

  const std::string& model_id() const { return model_id_; }
  const SeriesMeta& meta() const { return meta_; }
  const std::vector<Observation>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  // Records with first <= epoch <= last.
  std::vector<Observation> window(std::size_t first, std::size_t last) const;
  // Validation accuracy at the given epoch; throws std::out_of_range.
  double val_accuracy_at(std::size_t epoch) const;

  bool operator==(const ObservationSeries&) const = default;

 private:
  std::string model_id_;
  SeriesMeta meta_;
  std::vector<Observation> records_;
};

// CSV: model_id,epoch,beta_eff,train_loss,train_acc,val_acc (17 digits). Several
// series may share one file; read_observations groups rows by model_id in
// order of first appearance.
void write_observations(std::ostream& out, std::span<const ObservationSeries> series, bool header = true);
std::vector<ObservationSeries> read_observations(std::istream& in);

inline constexpr double kGammaShape = 1e-6;
inline constexpr double kGammaRate = 1e-6;

struct RidgeOptions {
  std::size_t max_iterations = 300;
  double tol = 1e-6;  // relative change of both precisions
  // The intercept shares the prior with the slope when true. Off by default so
  // that rescaling beta_eff leaves the intercept untouched.
  bool penalize_intercept = false;
  // Skip evidence maximization and use these values.
  std::optional<double> fixed_lambda;
  std::optional<double> fixed_sigma;
};

struct RidgePosterior {
  std::array<double, 2> theta{};  // intercept, slope
  double lambda = 1.0;            // sigma^2 / tau^2
  double tau = 1.0;               // prior scale
  double sigma = 1.0;             // noise scale
  std::array<std::array<double, 2>, 2> covariance{};
  std::size_t n_obs = 0;
  std::size_t iterations = 0;
  bool converged = false;
  bool intercept_only = false;
  std::vector<std::string> warnings;
};

struct Prediction {
  double I_star = 0.0;
  double std = 0.0;
  std::size_t t0_used = 0;
  std::size_t n_points_used = 0;
};

// theta = (X^T X + lambda D)^-1 X^T y with X = [1, x] and D = I (penalized
// intercept) or diag(0, 1).
std::array<double, 2> ridge_map(std::span<const double> x, std::span<const double> y, double lambda,
                                bool penalize_intercept);

// Evidence maximization for the noise precision 1/sigma^2 and weight precision
// 1/tau^2, starting from lambda = tau = 1. Throws std::invalid_argument with
// fewer than three points or non-finite input. Identical x values give an
// intercept-only fit and a warning.
RidgePosterior fit_bayesian_ridge(std::span<const double> x, std::span<const double> y,
                                  const RidgeOptions& options = {});

// Intercept readout with variance sigma^2 + Cov_00.
Prediction predict_at_zero(const RidgePosterior& posterior);

struct BicEntry {
  std::size_t t0 = 0;
  std::size_t n = 0;
  double rss = 0.0;
  double bic = 0.0;
  bool valid = false;
};

struct BicSelection {
  std::size_t t0 = 0;
  RidgePosterior posterior;
  std::vector<BicEntry> table;
};

// Fits each window [t0, t_end] and keeps the smallest BIC = n ln(RSS/n) + 2 ln n
// (RSS/n floored at 1e-12; near ties go to the smaller t0). Candidates with
// fewer than three points are marked invalid; throws std::invalid_argument
// when none is valid.
BicSelection bic_select_t0(const ObservationSeries& series, std::span<const std::size_t> t0_candidates,
                           std::size_t t_end, const RidgeOptions& options = {});

double baseline_lsv(std::span<const double> curve);
double baseline_bsv(std::span<const double> curve);

Vector average_ranks(std::span<const double> v);

struct RankCorrelation {
  double rho = 0.0;
  bool degenerate = false;  // one input had no rank variance
};

RankCorrelation spearman(std::span<const double> a, std::span<const double> b);
double spearman_rho(std::span<const double> a, std::span<const double> b);

struct FitReport {
  std::string model_id;
  std::size_t llc = 0;
  BicSelection selection;
  Prediction prediction;
};

// Uses records with 1 <= epoch <= llc, t0 in 1..llc-2.
FitReport fit_and_predict(const ObservationSeries& series, std::size_t llc, const RidgeOptions& options = {});

nlohmann::json to_json(const FitReport& report);

}  // namespace ncap
