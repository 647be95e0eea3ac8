// SPDX-License-Identifier: Apache-2.0

#include "ncap/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "ncap/errors.hpp"

namespace ncap {

void ObservationSeries::append(const Observation& obs) {
  if (!records_.empty() && obs.epoch <= records_.back().epoch) {
    throw std::invalid_argument("observation series: epochs must increase");
  }
  const auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(obs.val_accuracy) || !in_unit(obs.train_accuracy)) {
    throw std::invalid_argument("observation series: accuracy outside [0, 1]");
  }
  records_.push_back(obs);
}

std::vector<Observation> ObservationSeries::window(std::size_t first, std::size_t last) const {
  std::vector<Observation> out;
  for (const auto& r : records_)
    if (r.epoch >= first && r.epoch <= last) out.push_back(r);
  return out;
}

double ObservationSeries::val_accuracy_at(std::size_t epoch) const {
  for (const auto& r : records_)
    if (r.epoch == epoch) return r.val_accuracy;
  throw std::out_of_range("observation series '" + model_id_ + "' has no epoch " + std::to_string(epoch));
}

void write_observations(std::ostream& out, std::span<const ObservationSeries> series, bool header) {
  if (header) out << "model_id,epoch,beta_eff,train_loss,train_acc,val_acc\n";
  out << std::setprecision(17);
  for (const auto& s : series) {
    for (const auto& r : s.records()) {
      out << s.model_id() << ',' << r.epoch << ',' << r.beta_eff << ',' << r.train_loss << ','
          << r.train_accuracy << ',' << r.val_accuracy << '\n';
    }
  }
}

std::vector<ObservationSeries> read_observations(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("observations: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "model_id,epoch,beta_eff,train_loss,train_acc,val_acc") {
    throw DataError("observations: unexpected header '" + line + "'");
  }
  std::vector<ObservationSeries> out;
  std::map<std::string, std::size_t> index;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw DataError("observations: line " + std::to_string(line_no) + " needs 6 columns");
    Observation obs;
    try {
      obs.epoch = std::stoul(cells[1]);
      obs.beta_eff = std::stod(cells[2]);
      obs.train_loss = std::stod(cells[3]);
      obs.train_accuracy = std::stod(cells[4]);
      obs.val_accuracy = std::stod(cells[5]);
    } catch (const std::logic_error&) {
      throw DataError("observations: line " + std::to_string(line_no) + " is not numeric");
    }
    auto [it, inserted] = index.try_emplace(cells[0], out.size());
    if (inserted) out.emplace_back(cells[0]);
    try {
      out[it->second].append(obs);
    } catch (const std::invalid_argument& e) {
      throw DataError("observations: line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

namespace {

using Mat2 = std::array<std::array<double, 2>, 2>;

Mat2 inverse(const Mat2& a) {
  const double det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
  if (det == 0.0 || !std::isfinite(det)) throw std::runtime_error("ridge: singular system");
  return {{{a[1][1] / det, -a[0][1] / det}, {-a[1][0] / det, a[0][0] / det}}};
}

void check_inputs(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("ridge: x and y lengths differ");
  if (x.size() < 3) throw std::invalid_argument("ridge: need at least three observations");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw std::invalid_argument("ridge: non-finite input");
  }
}

struct Gram {
  Mat2 xtx{};
  std::array<double, 2> xty{};
};

Gram gram(std::span<const double> x, std::span<const double> y) {
  Gram g;
  for (std::size_t i = 0; i < x.size(); ++i) {
    g.xtx[0][0] += 1.0;
    g.xtx[0][1] += x[i];
    g.xtx[1][1] += x[i] * x[i];
    g.xty[0] += y[i];
    g.xty[1] += x[i] * y[i];
  }
  g.xtx[1][0] = g.xtx[0][1];
  return g;
}

double residual_ss(std::span<const double> x, std::span<const double> y, const std::array<double, 2>& theta) {
  double rss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - theta[0] - theta[1] * x[i];
    rss += r * r;
  }
  return rss;
}

bool relative_close(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max(std::abs(b), 1e-300);
}

// Posterior for precisions alpha (noise) and lw (weights).
void posterior_at(const Gram& g, double alpha, double lw, bool penalize_intercept, Mat2& cov,
                  std::array<double, 2>& theta) {
  Mat2 a{};
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) a[r][c] = alpha * g.xtx[r][c];
  if (penalize_intercept) a[0][0] += lw;
  a[1][1] += lw;
  cov = inverse(a);
  for (int r = 0; r < 2; ++r) theta[r] = alpha * (cov[r][0] * g.xty[0] + cov[r][1] * g.xty[1]);
}

}  // namespace

std::array<double, 2> ridge_map(std::span<const double> x, std::span<const double> y, double lambda,
                                bool penalize_intercept) {
  if (x.size() != y.size() || x.empty()) throw std::invalid_argument("ridge_map: bad input sizes");
  if (!(lambda >= 0.0)) throw std::invalid_argument("ridge_map: lambda must be non-negative");
  const Gram g = gram(x, y);
  Mat2 cov;
  std::array<double, 2> theta;
  posterior_at(g, 1.0, lambda, penalize_intercept, cov, theta);
  return theta;
}

RidgePosterior fit_bayesian_ridge(std::span<const double> x, std::span<const double> y,
                                  const RidgeOptions& options) {
  check_inputs(x, y);
  if (options.fixed_lambda.has_value() != options.fixed_sigma.has_value()) {
    throw std::invalid_argument("ridge: fixed_lambda and fixed_sigma go together");
  }
  const double n = static_cast<double>(x.size());
  RidgePosterior post;
  post.n_obs = x.size();

  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  const double scale = std::max({1.0, std::abs(*lo), std::abs(*hi)});
  if (*hi - *lo <= 1e-12 * scale) {
    post.intercept_only = true;
    post.warnings.push_back("degenerate design: all beta_eff values identical, intercept-only fit");
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / n;
    post.theta = {mean, 0.0};
    double alpha;
    if (options.fixed_sigma) {
      alpha = 1.0 / (*options.fixed_sigma * *options.fixed_sigma);
    } else {
      alpha = (n - 1.0 + 2.0 * kGammaShape) / (residual_ss(x, y, post.theta) + 2.0 * kGammaRate);
    }
    post.sigma = 1.0 / std::sqrt(alpha);
    post.covariance = {{{1.0 / (alpha * n), 0.0}, {0.0, 0.0}}};
    post.lambda = options.fixed_lambda.value_or(post.sigma * post.sigma / (post.tau * post.tau));
    post.tau = post.sigma / std::sqrt(post.lambda);
    post.converged = true;
    return post;
  }

  const Gram g = gram(x, y);
  const bool pen0 = options.penalize_intercept;
  // lambda = tau = 1 means both precisions start at 1.
  double alpha = 1.0;
  double lw = 1.0;
  if (options.fixed_lambda) {
    if (!(*options.fixed_lambda > 0.0) || !(*options.fixed_sigma > 0.0)) {
      throw std::invalid_argument("ridge: fixed lambda and sigma must be positive");
    }
    alpha = 1.0 / (*options.fixed_sigma * *options.fixed_sigma);
    lw = *options.fixed_lambda * alpha;
    post.converged = true;
  } else {
    Mat2 cov;
    std::array<double, 2> theta;
    for (std::size_t it = 0; it < options.max_iterations; ++it) {
      posterior_at(g, alpha, lw, pen0, cov, theta);
      const double rss = residual_ss(x, y, theta);
      double gamma = 1.0 - lw * cov[1][1];
      double msq = theta[1] * theta[1];
      if (pen0) {
        gamma += 1.0 - lw * cov[0][0];
        msq += theta[0] * theta[0];
      }
      const double free = pen0 ? 0.0 : 1.0;
      const double alpha_new = (n - gamma - free + 2.0 * kGammaShape) / (rss + 2.0 * kGammaRate);
      const double lw_new = (gamma + 2.0 * kGammaShape) / (msq + 2.0 * kGammaRate);
      post.iterations = it + 1;
      const bool done = relative_close(alpha_new, alpha, options.tol) && relative_close(lw_new, lw, options.tol);
      alpha = alpha_new;
      lw = lw_new;
      if (done) {
        post.converged = true;
        break;
      }
    }
    if (!post.converged) post.warnings.push_back("evidence maximization hit the iteration limit");
  }
  Mat2 cov;
  posterior_at(g, alpha, lw, pen0, cov, post.theta);
  post.covariance = cov;
  post.sigma = 1.0 / std::sqrt(alpha);
  post.tau = 1.0 / std::sqrt(lw);
  post.lambda = lw / alpha;
  return post;
}

Prediction predict_at_zero(const RidgePosterior& posterior) {
  Prediction p;
  p.I_star = posterior.theta[0];
  p.std = std::sqrt(std::max(0.0, posterior.sigma * posterior.sigma + posterior.covariance[0][0]));
  p.n_points_used = posterior.n_obs;
  return p;
}

BicSelection bic_select_t0(const ObservationSeries& series, std::span<const std::size_t> t0_candidates,
                           std::size_t t_end, const RidgeOptions& options) {
  std::vector<std::size_t> candidates(t0_candidates.begin(), t0_candidates.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  BicSelection best;
  bool found = false;
  double best_bic = 0.0;
  for (std::size_t t0 : candidates) {
    BicEntry entry;
    entry.t0 = t0;
    const auto win = series.window(t0, t_end);
    entry.n = win.size();
    if (win.size() >= 3) {
      Vector xs, ys;
      for (const auto& r : win) {
        xs.push_back(r.beta_eff);
        ys.push_back(r.val_accuracy);
      }
      RidgePosterior post = fit_bayesian_ridge(xs, ys, options);
      const double n = static_cast<double>(win.size());
      entry.rss = residual_ss(xs, ys, post.theta);
      entry.bic = n * std::log(std::max(entry.rss / n, 1e-12)) + 2.0 * std::log(n);
      entry.valid = true;
      if (!found || entry.bic < best_bic - 1e-9 * std::max(1.0, std::abs(best_bic))) {
        best_bic = entry.bic;
        best.t0 = t0;
        best.posterior = std::move(post);
        found = true;
      }
    }
    best.table.push_back(entry);
  }
  if (!found) throw std::invalid_argument("bic_select_t0: no candidate window has three points");
  return best;
}

double baseline_lsv(std::span<const double> curve) {
  if (curve.empty()) throw std::invalid_argument("baseline_lsv: empty curve");
  return curve.back();
}

double baseline_bsv(std::span<const double> curve) {
  if (curve.empty()) throw std::invalid_argument("baseline_bsv: empty curve");
  return *std::max_element(curve.begin(), curve.end());
}

Vector average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  Vector ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    // positions i..j share the mean of ranks i+1..j+1
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

RankCorrelation spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("spearman: lengths differ");
  if (a.size() < 2) throw std::invalid_argument("spearman: need at least two values");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::isnan(a[i]) || std::isnan(b[i])) throw std::invalid_argument("spearman: NaN input");
  }
  const Vector ra = average_ranks(a), rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = sum(ra) / n, mb = sum(rb) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return {0.0, true};
  return {std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0), false};
}

double spearman_rho(std::span<const double> a, std::span<const double> b) { return spearman(a, b).rho; }

FitReport fit_and_predict(const ObservationSeries& series, std::size_t llc, const RidgeOptions& options) {
  if (llc < 3) throw std::invalid_argument("fit_and_predict: llc must be at least 3");
  if (series.empty() || series.records().back().epoch < llc) {
    throw std::invalid_argument("fit_and_predict: llc " + std::to_string(llc) + " exceeds the records of '" +
                                series.model_id() + "'");
  }
  std::vector<std::size_t> candidates;
  for (std::size_t t0 = 1; t0 + 2 <= llc; ++t0) candidates.push_back(t0);
  FitReport report;
  report.model_id = series.model_id();
  report.llc = llc;
  report.selection = bic_select_t0(series, candidates, llc, options);
  report.prediction = predict_at_zero(report.selection.posterior);
  report.prediction.t0_used = report.selection.t0;
  return report;
}

nlohmann::json to_json(const FitReport& report) {
  const auto& post = report.selection.posterior;
  nlohmann::json table = nlohmann::json::array();
  for (const auto& e : report.selection.table) {
    table.push_back({{"t0", e.t0}, {"n", e.n}, {"rss", e.rss}, {"bic", e.valid ? nlohmann::json(e.bic) : nlohmann::json()},
                     {"valid", e.valid}});
  }
  return {{"model_id", report.model_id},
          {"llc", report.llc},
          {"t0", report.selection.t0},
          {"theta", {post.theta[0], post.theta[1]}},
          {"lambda", post.lambda},
          {"tau", post.tau},
          {"sigma", post.sigma},
          {"I_star", report.prediction.I_star},
          {"std", report.prediction.std},
          {"n_points", report.prediction.n_points_used},
          {"warnings", post.warnings},
          {"bic_table", table}};
}

}  // namespace ncap
