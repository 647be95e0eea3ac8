// SPDX-License-Identifier: Apache-2.0
//
// Acceptance runner. `acceptance` runs every criterion, `acceptance c4` just
// one. Prints one PASS/FAIL line per criterion; exit status 1 if any failed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ncap/capacitance.hpp"
#include "ncap/config.hpp"
#include "ncap/harness.hpp"
#include "ncap/line_graph.hpp"
#include "ncap/mean_field.hpp"
#include "ncap/predictor.hpp"
#include "oracles.hpp"
#include "suites.hpp"

using namespace ncap;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

SampleTrace traced(const oracle::Case& c) {
  SampleTrace t = forward(c.model, c.x);
  backward(c.model, t, c.y);
  return t;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// c1: analytic gradients vs central differences
Outcome gradients() {
  std::mt19937_64 rng(101);
  std::size_t checked = 0, bad = 0;
  double worst = 0.0;
  for (int m = 0; m < 25; ++m) {
    const auto c = oracle::random_case(oracle::random_sizes(rng, 1, 5, 8), rng);
    SampleTrace t = forward(c.model, c.x);
    backward(c.model, t, c.y);
    const auto g = weight_gradients(t);
    for (std::size_t l = 1; l <= c.model.depth(); ++l)
      for (std::size_t r = 0; r < g[l - 1].rows(); ++r)
        for (std::size_t col = 0; col < g[l - 1].cols(); ++col) {
          const double fd = oracle::fd_gradient(c.model, c.x, c.y, l, r, col, 1e-6);
          const double an = g[l - 1](r, col);
          ++checked;
          if (std::abs(an) < 1e-9 && std::abs(fd) < 1e-9) continue;
          const double e = oracle::rel_err(an, fd, 1e-8);
          worst = std::max(worst, e);
          if (!(e < 1e-5)) ++bad;
        }
  }
  return {bad == 0, fmt("25 models, %zu weights, %zu over 1e-5, worst rel err %.2e", checked, bad, worst)};
}

// c2: 1'delta_in = 1'delta_out
Outcome degree_conservation() {
  std::mt19937_64 rng(102);
  std::size_t bad = 0;
  double worst = 0.0;
  for (int n = 0; n < 120; ++n) {
    const auto c = oracle::random_case(oracle::random_sizes(rng, 2, 5, 8), rng);
    const SampleTrace t = traced(c);
    const WeightedAdjacency adj = assemble_adjacency(build_topology(c.model.spec), t);
    const DegreeVectors d = closed_form_degrees(t);
    for (const auto& [in, out] : {std::pair{sum(adj.in_degree), sum(adj.out_degree)},
                                  std::pair{sum(d.in_degree), sum(d.out_degree)}}) {
      const double gap = std::abs(in - out) / (1.0 + std::abs(in));
      worst = std::max(worst, gap);
      if (!(gap <= 1e-9)) ++bad;
    }
  }
  return {bad == 0, fmt("120 traces (explicit and closed-form degrees), worst scaled gap %.2e", worst)};
}

// c3: closed form vs explicit adjacency
Outcome dual_path() {
  std::mt19937_64 rng(103);
  std::size_t bad = 0;
  double worst = 0.0;
  for (int n = 0; n < 60; ++n) {
    const auto c = oracle::random_case(oracle::random_sizes(rng, 4, 6, 6), rng);
    const SampleTrace t = traced(c);
    const double e = oracle::rel_err(beta_mlp(t).beta_eff,
                                     beta_general(assemble_adjacency(build_topology(c.model.spec), t)).beta_eff);
    worst = std::max(worst, e);
    if (!(e < 1e-8)) ++bad;
  }
  return {bad == 0, fmt("60 nets with L in [4, 6], worst rel err %.2e", worst)};
}

// c4: L = 2, 3 give zero
Outcome shallow_zeros() {
  std::mt19937_64 rng(104);
  std::size_t bad = 0, n = 0;
  double worst_general = 0.0;
  for (std::size_t L : {2u, 3u})
    for (int rep = 0; rep < 60; ++rep, ++n) {
      const auto c = oracle::random_case(oracle::random_sizes(rng, L, L, 16), rng);
      const SampleTrace t = traced(c);
      const double a = beta_mlp(t).beta_eff;
      const double b = beta_general(assemble_adjacency(build_topology(c.model.spec), t)).beta_eff;
      worst_general = std::max(worst_general, std::abs(b));
      if (a != 0.0 || !(std::abs(b) <= kBetaEpsilon)) ++bad;
    }
  return {bad == 0, fmt("%zu traces; closed form exactly 0, explicit P max |beta| %.2e", n, worst_general)};
}

// c5: final |beta| <= 0.1 x epoch-1 |beta|, median of 5 seeds
Outcome convergence() {
  std::vector<double> ratios;
  std::string per;
  bool all_converged = true;
  for (const auto& r : suite::toy_convergence_suite()) {
    ratios.push_back(r.ratio());
    all_converged = all_converged && r.final_loss < 1e-3;
    per += fmt(" %.3g@%zu", r.ratio(), r.epochs);
  }
  const double med = median(ratios);
  return {all_converged && med <= 0.1, fmt("median ratio %.3g (ratio@epochs:%s)", med, per.c_str())};
}

// c6: link weight vs finite-difference mixed partial of the loss
Outcome second_derivative() {
  std::mt19937_64 rng(106);
  std::size_t sampled = 0, bad = 0;
  std::vector<double> errs, frozen_errs;
  while (sampled < 120) {
    const auto c = oracle::random_case(oracle::random_sizes(rng, 3, 5, 6), rng);
    const SampleTrace t = traced(c);
    const auto& s = c.model.spec.layer_sizes;
    const std::size_t L = c.model.depth();
    for (int pick = 0; pick < 10; ++pick) {
      const std::size_t l = std::uniform_int_distribution<std::size_t>(1, L - 1)(rng);
      const std::size_t k = std::uniform_int_distribution<std::size_t>(0, s[l + 1] - 1)(rng);
      const std::size_t i = std::uniform_int_distribution<std::size_t>(0, s[l] - 1)(rng);
      const std::size_t j = std::uniform_int_distribution<std::size_t>(0, s[l - 1] - 1)(rng);
      const double p = pair_weight(t, l, k, i, j);
      // d/dw_ki^(l+1) of the backprop gradient dC/dw_ij^(l)
      const double h = 1e-5;
      auto grad_ij = [&](double shift) {
        MlpModel m = c.model;
        m.W(l + 1)(k, i) += shift;
        SampleTrace tt = forward(m, c.x);
        backward(m, tt, c.y);
        return weight_gradients(tt)[l - 1](i, j);
      };
      const double fd = (grad_ij(h) - grad_ij(-h)) / (2 * h);
      const double e = oracle::rel_err(p, fd, 1e-8);
      errs.push_back(e);
      if (!(e < 1e-4)) ++bad;
      const Vector upstream = (l + 1 == L) ? t.residual : t.delta[l + 1];
      frozen_errs.push_back(oracle::rel_err(p, oracle::fd_frozen_link(c.model, c.x, upstream, l, k, i, j, h), 1e-8));
      ++sampled;
    }
  }
  std::printf("  info c6: same entries against the difference with the upstream delta held fixed: max rel err %.2e\n",
              *std::max_element(frozen_errs.begin(), frozen_errs.end()));
  return {bad == 0, fmt("%zu entries, %zu over 1e-4, median rel err %.3g, max %.3g", sampled, bad, median(errs),
                        *std::max_element(errs.begin(), errs.end()))};
}

// c7: Bayesian ridge identities
Outcome ridge() {
  std::mt19937_64 rng(107);
  std::normal_distribution<double> n01;
  double worst_map = 0.0, worst_line = 0.0, worst_id = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 5 + rep;
    Vector x(n), y(n), clean(n);
    const double a = n01(rng), b = n01(rng);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = n01(rng);
      clean[i] = a + b * x[i];
      y[i] = clean[i] + 0.05 * n01(rng);
    }
    RidgeOptions fixed;
    fixed.penalize_intercept = true;
    fixed.fixed_lambda = std::exp(n01(rng));
    fixed.fixed_sigma = 0.1;
    const RidgePosterior p = fit_bayesian_ridge(x, y, fixed);
    const Vector ref = oracle::ridge_closed_form(x, y, *fixed.fixed_lambda);
    worst_map = std::max({worst_map, std::abs(p.theta[0] - ref[0]), std::abs(p.theta[1] - ref[1])});
    const RidgePosterior q = fit_bayesian_ridge(x, clean);
    worst_line = std::max({worst_line, std::abs(q.theta[0] - a), std::abs(q.theta[1] - b)});
    const RidgePosterior r = fit_bayesian_ridge(x, y);
    if (!r.converged) worst_id = INFINITY;
    worst_id = std::max(worst_id, std::abs(r.sigma - r.tau * std::sqrt(r.lambda)) / r.sigma);
  }
  const bool ok = worst_map <= 1e-8 && worst_line < 1e-4 && worst_id <= 1e-12;
  return {ok, fmt("MAP vs closed form %.2e, noiseless recovery %.2e, sigma - tau sqrt(lambda) rel %.2e", worst_map,
                  worst_line, worst_id)};
}

// c8: mean-field reduction
Outcome mean_field() {
  double worst_beta = 0.0, worst_traj = 0.0, worst_het = 0.0;
  for (std::size_t k : {1u, 2u, 4u, 6u}) {
    const double w = 0.1;
    const Matrix p = k_regular_adjacency(24, k, w);
    worst_beta = std::max(worst_beta, oracle::rel_err(beta_eff(p), static_cast<double>(k) * w));
    for (const auto& [f, g] : {std::pair{dynamics::linear_decay(1.0, 1.0), dynamics::linear()},
                               std::pair{dynamics::logistic(1.0, 3.0), dynamics::diffusive()},
                               std::pair{dynamics::linear_decay(2.0), dynamics::saturating()}}) {
      const NetworkedSystem s{p, f, g};
      SimulationOptions o;
      o.t_max = 30.0;
      const Trajectory full = simulate(s, Vector(24, 0.2), o);
      const MeanFieldReduction r = reduce_mean_field(s, 0.2, o);
      const std::size_t n = std::min(full.states.size(), r.reduced.states.size());
      for (std::size_t step = 0; step < n; ++step)
        for (double v : full.states[step]) worst_traj = std::max(worst_traj, std::abs(v - r.reduced.states[step][0]));
    }
  }
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix p = random_adjacency(60, 0.15, 0.0, 0.08, seed);
    const NetworkedSystem s{p, dynamics::linear_decay(1.0, 1.0), dynamics::linear()};
    const Trajectory full = simulate(s, Vector(60, 0.0), {});
    const MeanFieldReduction r = reduce_mean_field(s, 0.0, {});
    double mean = 0.0;
    for (double v : full.x_final) mean += v / 60.0;
    worst_het = std::max(worst_het, std::abs(r.x_eff - mean) / std::abs(r.x_eff));
  }
  const bool ok = worst_beta <= 1e-14 && worst_traj <= 1e-6 && worst_het < 0.05;
  return {ok, fmt("k-regular beta rel err %.1e, trajectory gap %.2e, heterogeneous worst rel gap %.4f", worst_beta,
                  worst_traj, worst_het)};
}

// c9: desk-scale ranking on configs/demo.json
Outcome ranking() {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig config = load_run_config(NCAP_DEMO_CONFIG);
  const std::size_t threads = threads_from_env();
  const ExperimentResult a = run_experiment(config, threads);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const ExperimentResult b = run_experiment(config, threads);
  RankingReport full = rank_models(a.series, a.true_finals, config.epochs);
  bool identical = a.reports.size() == b.reports.size();
  for (std::size_t i = 0; identical && i < a.reports.size(); ++i)
    identical = to_json(a.reports[i]).dump() == to_json(b.reports[i]).dump();
  identical = identical && a.series == b.series;
  const RankingReport* early = nullptr;
  for (const auto& r : a.reports)
    if (r.llc == 5) early = &r;
  std::string ctx = "llc 5 not configured";
  if (early)
    ctx = fmt("llc 5: ours %.3f, LSV %.3f, BSV %.3f (reference at ImageNet scale: ours 0.93 vs BSV 0.86)",
              early->rho_ours.rho, early->rho_lsv.rho, early->rho_bsv.rho);
  std::printf("  info c9: %s\n", ctx.c_str());
  const bool ok = a.pool.size() >= 6 && config.epochs == 50 && early && full.rho_ours.rho >= 0.9 && identical &&
                  secs < 15 * 60;
  return {ok, fmt("%zu candidates, T=%zu, full-curve rho(ours) %.3f, reproducible %s, one run %.1f s", a.pool.size(),
                  config.epochs, full.rho_ours.rho, identical ? "yes" : "no", secs)};
}

// c10: Spearman vs rank-then-Pearson brute force
Outcome spearman_oracle() {
  std::mt19937_64 rng(110);
  double worst = 0.0;
  std::size_t with_ties = 0;
  for (int n = 0; n < 1200; ++n) {
    const std::size_t len = std::uniform_int_distribution<std::size_t>(2, 30)(rng);
    const int range = std::uniform_int_distribution<int>(1, 40)(rng);
    std::uniform_int_distribution<int> u(0, range);
    Vector a(len), b(len);
    for (auto& v : a) v = u(rng) * 0.25;
    for (auto& v : b) v = u(rng) * 0.5 - 3;
    Vector sa = a;
    std::sort(sa.begin(), sa.end());
    if (std::adjacent_find(sa.begin(), sa.end()) != sa.end()) ++with_ties;
    worst = std::max(worst, std::abs(spearman_rho(a, b) - oracle::spearman(a, b)));
  }
  return {worst <= 1e-12, fmt("1200 pairs (%zu with ties), worst abs diff %.2e", with_ties, worst)};
}

struct Criterion {
  int id;
  double limit_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, 60, gradients},      {2, 60, degree_conservation}, {3, 120, dual_path}, {4, 60, shallow_zeros},
      {5, 300, convergence},   {6, 120, second_derivative},  {7, 30, ridge},      {8, 60, mean_field},
      {9, 900, ranking},       {10, 10, spearman_oracle},
  };
  std::string only = argc > 1 ? argv[1] : "";
  bool failed = false;
  for (const Criterion& c : all) {
    if (!only.empty() && only != "c" + std::to_string(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool pass = o.pass && secs < c.limit_s;
    failed = failed || !pass;
    std::printf("criterion %d: %s  %s [%.2f s, limit %.0f s]\n", c.id, pass ? "PASS" : "FAIL", o.detail.c_str(), secs,
                c.limit_s);
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
