// SPDX-License-Identifier: Apache-2.0

#include "ncap/mean_field.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <stdexcept>

#include "ncap/errors.hpp"

namespace ncap {

namespace dynamics {

SelfDynamics linear_decay(double rate, double drive) {
  return {"linear_decay", [rate, drive](std::size_t, double x) { return drive - rate * x; }, true};
}

SelfDynamics constant_force(double c) {
  return {"constant_force", [c](std::size_t, double) { return c; }, true};
}

SelfDynamics constant_force(Vector per_node) {
  return {"constant_force", [v = std::move(per_node)](std::size_t i, double) { return v.at(i); }, false};
}

SelfDynamics logistic(double r, double capacity) {
  if (!(capacity > 0.0)) throw std::invalid_argument("logistic: capacity must be positive");
  return {"logistic", [r, capacity](std::size_t, double x) { return r * x * (1.0 - x / capacity); }, true};
}

Coupling none() {
  return {"none", [](double, double, std::size_t) { return 0.0; }, true};
}

Coupling linear(double offset) {
  return {"linear", [offset](double, double xj, std::size_t) { return xj - offset; }, true};
}

Coupling linear(Vector per_node_offsets) {
  return {"linear",
          [v = std::move(per_node_offsets)](double, double xj, std::size_t j) { return xj - v.at(j); },
          false};
}

Coupling diffusive() {
  return {"diffusive", [](double xi, double xj, std::size_t) { return xj - xi; }, true};
}

Coupling saturating() {
  return {"saturating", [](double, double xj, std::size_t) { return xj / (1.0 + xj); }, true};
}

}  // namespace dynamics

namespace {

double param(const nlohmann::json& p, const char* key, double fallback) {
  return p.is_object() && p.contains(key) ? p.at(key).get<double>() : fallback;
}

}  // namespace

DynamicsCatalog::DynamicsCatalog() {
  register_self("linear_decay", [](const nlohmann::json& p) {
    return dynamics::linear_decay(param(p, "rate", 1.0), param(p, "drive", 0.0));
  });
  register_self("constant_force", [](const nlohmann::json& p) {
    if (p.is_object() && p.contains("c") && p.at("c").is_array()) {
      return dynamics::constant_force(p.at("c").get<Vector>());
    }
    return dynamics::constant_force(param(p, "c", 0.0));
  });
  register_self("logistic", [](const nlohmann::json& p) {
    return dynamics::logistic(param(p, "r", 1.0), param(p, "capacity", 1.0));
  });
  register_coupling("none", [](const nlohmann::json&) { return dynamics::none(); });
  register_coupling("linear", [](const nlohmann::json& p) {
    if (p.is_object() && p.contains("offset") && p.at("offset").is_array()) {
      return dynamics::linear(p.at("offset").get<Vector>());
    }
    return dynamics::linear(param(p, "offset", 0.0));
  });
  register_coupling("diffusive", [](const nlohmann::json&) { return dynamics::diffusive(); });
  register_coupling("saturating", [](const nlohmann::json&) { return dynamics::saturating(); });
}

DynamicsCatalog& DynamicsCatalog::instance() {
  static DynamicsCatalog catalog;
  return catalog;
}

void DynamicsCatalog::register_self(const std::string& name, SelfFactory factory) {
  self_[name] = std::move(factory);
}

void DynamicsCatalog::register_coupling(const std::string& name, CouplingFactory factory) {
  coupling_[name] = std::move(factory);
}

SelfDynamics DynamicsCatalog::make_self(const std::string& name, const nlohmann::json& params) const {
  const auto it = self_.find(name);
  if (it == self_.end()) throw ConfigError("unknown self dynamics '" + name + "'");
  return it->second(params);
}

Coupling DynamicsCatalog::make_coupling(const std::string& name, const nlohmann::json& params) const {
  const auto it = coupling_.find(name);
  if (it == coupling_.end()) throw ConfigError("unknown coupling '" + name + "'");
  return it->second(params);
}

std::vector<std::string> DynamicsCatalog::self_names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : self_) out.push_back(name);
  return out;
}

std::vector<std::string> DynamicsCatalog::coupling_names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : coupling_) out.push_back(name);
  return out;
}

void NetworkedSystem::validate() const {
  if (adjacency.rows() == 0 || adjacency.rows() != adjacency.cols()) {
    throw std::invalid_argument("networked system: adjacency must be square and non-empty");
  }
  if (!self.f || !coupling.g) throw std::invalid_argument("networked system: dynamics not set");
}

Vector NetworkedSystem::rate(const Vector& x) const {
  const std::size_t n = size();
  Vector dx(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = self.f(i, x[i]);
    const auto row = adjacency.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (row[j] != 0.0) s += row[j] * coupling.g(x[i], x[j], j);
    }
    dx[i] = s;
  }
  return dx;
}

NetworkedSystem edge_dynamics_system(Matrix adjacency, Vector forcing, Vector equilibrium) {
  if (forcing.size() != adjacency.rows() || equilibrium.size() != adjacency.rows()) {
    throw std::invalid_argument("edge dynamics: vector sizes must match the adjacency");
  }
  NetworkedSystem s{std::move(adjacency), dynamics::constant_force(std::move(forcing)),
                    dynamics::linear(std::move(equilibrium))};
  s.validate();
  return s;
}

Vector in_degrees(const Matrix& p) {
  Vector d(p.rows(), 0.0);
  for (std::size_t i = 0; i < p.rows(); ++i) d[i] = sum(p.row(i));
  return d;
}

Vector out_degrees(const Matrix& p) {
  Vector d(p.cols(), 0.0);
  for (std::size_t i = 0; i < p.rows(); ++i)
    for (std::size_t j = 0; j < p.cols(); ++j) d[j] += p(i, j);
  return d;
}

double lp_operator(const Matrix& p, std::span<const double> z) {
  if (z.size() != p.cols()) throw std::invalid_argument("lp_operator: dimension mismatch");
  const Vector out = out_degrees(p);
  double denom = sum(out);
  if (denom == 0.0) denom = kLpEpsilon;
  return dot(out, z) / denom;
}

double beta_eff(const Matrix& p) { return lp_operator(p, in_degrees(p)); }

double beta_eff(const NetworkedSystem& system) { return beta_eff(system.adjacency); }

namespace {

bool all_finite(const Vector& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double max_abs(const Vector& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

template <typename Rate>
Trajectory integrate_rk4(Rate&& rate, Vector x, const SimulationOptions& opt) {
  if (!(opt.dt > 0.0)) throw std::invalid_argument("simulate: dt must be positive");
  if (!(opt.tol > 0.0)) throw std::invalid_argument("simulate: tol must be positive");
  if (!(opt.t_max >= 0.0)) throw std::invalid_argument("simulate: t_max must be non-negative");
  if (!all_finite(x)) throw std::invalid_argument("simulate: non-finite initial state");
  const std::size_t record_every = std::max<std::size_t>(1, opt.record_every);
  const auto n_steps = static_cast<std::size_t>(std::llround(std::ceil(opt.t_max / opt.dt - 1e-9)));

  Trajectory tr;
  tr.times.push_back(0.0);
  tr.states.push_back(x);
  Vector k1 = rate(x), k2, k3, k4, tmp(x.size());
  std::size_t step = 0;
  const double h = opt.dt;
  while (true) {
    if (!all_finite(k1)) {
      tr.status = SimulationStatus::kDiverged;
      break;
    }
    if (max_abs(k1) < opt.tol) {
      tr.status = SimulationStatus::kConverged;
      break;
    }
    if (step == n_steps) {
      tr.status = SimulationStatus::kTimeLimit;
      break;
    }
    for (std::size_t i = 0; i < x.size(); ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
    k2 = rate(tmp);
    for (std::size_t i = 0; i < x.size(); ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
    k3 = rate(tmp);
    for (std::size_t i = 0; i < x.size(); ++i) tmp[i] = x[i] + h * k3[i];
    k4 = rate(tmp);
    for (std::size_t i = 0; i < x.size(); ++i) tmp[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    if (!all_finite(tmp)) {
      tr.status = SimulationStatus::kDiverged;
      break;
    }
    x = tmp;
    ++step;
    k1 = rate(x);
    if (step % record_every == 0) {
      tr.times.push_back(static_cast<double>(step) * h);
      tr.states.push_back(x);
    }
  }
  if (tr.times.back() != static_cast<double>(step) * h) {
    tr.times.push_back(static_cast<double>(step) * h);
    tr.states.push_back(x);
  }
  tr.x_final = x;
  return tr;
}

}  // namespace

Trajectory simulate(const NetworkedSystem& system, const Vector& x0, const SimulationOptions& options) {
  system.validate();
  if (x0.size() != system.size()) throw std::invalid_argument("simulate: initial state has wrong size");
  return integrate_rk4([&](const Vector& x) { return system.rate(x); }, x0, options);
}

MeanFieldReduction reduce_mean_field(const NetworkedSystem& system, double x0_av,
                                     const SimulationOptions& options) {
  system.validate();
  if (!system.self.homogeneous || !system.coupling.homogeneous) {
    throw std::invalid_argument("reduce_mean_field: dynamics differ per node");
  }
  MeanFieldReduction r;
  r.beta_eff = beta_eff(system.adjacency);
  const double beta = r.beta_eff;
  r.reduced = integrate_rk4(
      [&](const Vector& x) { return Vector{system.self.f(0, x[0]) + beta * system.coupling.g(x[0], x[0], 0)}; },
      Vector{x0_av}, options);
  r.x_eff = r.reduced.x_final[0];
  return r;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory) {
  out << "t";
  const std::size_t n = trajectory.states.empty() ? 0 : trajectory.states.front().size();
  for (std::size_t i = 1; i <= n; ++i) out << ",x_" << i;
  out << '\n' << std::setprecision(17);
  for (std::size_t s = 0; s < trajectory.times.size(); ++s) {
    out << trajectory.times[s];
    for (double v : trajectory.states[s]) out << ',' << v;
    out << '\n';
  }
}

void write_reduced_csv(std::ostream& out, const Trajectory& reduced) {
  out << "t,x_av\n" << std::setprecision(17);
  for (std::size_t s = 0; s < reduced.times.size(); ++s) {
    out << reduced.times[s] << ',' << reduced.states[s].at(0) << '\n';
  }
}

Matrix k_regular_adjacency(std::size_t n, std::size_t k, double weight) {
  if (k >= n) throw std::invalid_argument("k_regular_adjacency: need k < n");
  Matrix p(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t s = 1; s <= k; ++s) p(i, (i + s) % n) = weight;
  return p;
}

Matrix random_adjacency(std::size_t n, double prob, double w_min, double w_max, std::uint64_t seed) {
  if (prob < 0.0 || prob > 1.0) throw std::invalid_argument("random_adjacency: p must lie in [0, 1]");
  if (w_max < w_min) throw std::invalid_argument("random_adjacency: w_max < w_min");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix p(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double u = unit(rng);
      const double w = w_min + (w_max - w_min) * unit(rng);
      if (i != j && u < prob) p(i, j) = w;
    }
  }
  return p;
}

SystemConfig parse_system_config(const nlohmann::json& j) {
  try {
    SystemConfig cfg;
    const auto& adj = j.at("adjacency");
    if (adj.is_array()) {
      const std::size_t n = adj.size();
      cfg.system.adjacency = Matrix(n, n);
      for (std::size_t r = 0; r < n; ++r) {
        if (adj[r].size() != n) throw ConfigError("adjacency must be square");
        for (std::size_t c = 0; c < n; ++c) cfg.system.adjacency(r, c) = adj[r][c].get<double>();
      }
    } else if (adj.contains("k_regular")) {
      const auto& k = adj.at("k_regular");
      cfg.system.adjacency = k_regular_adjacency(k.at("n").get<std::size_t>(), k.at("k").get<std::size_t>(),
                                                 k.at("weight").get<double>());
    } else if (adj.contains("random")) {
      const auto& r = adj.at("random");
      cfg.system.adjacency =
          random_adjacency(r.at("n").get<std::size_t>(), r.at("p").get<double>(), r.at("w_min").get<double>(),
                           r.at("w_max").get<double>(), r.value("seed", std::uint64_t{0}));
    } else {
      throw ConfigError("adjacency must be a matrix, k_regular or random");
    }
    const auto& catalog = DynamicsCatalog::instance();
    const auto& self = j.at("self");
    cfg.system.self = catalog.make_self(self.at("name").get<std::string>(), self.value("params", nlohmann::json::object()));
    const auto& coupling = j.at("coupling");
    cfg.system.coupling =
        catalog.make_coupling(coupling.at("name").get<std::string>(), coupling.value("params", nlohmann::json::object()));
    const std::size_t n = cfg.system.adjacency.rows();
    const auto& x0 = j.at("x0");
    cfg.x0 = x0.is_array() ? x0.get<Vector>() : Vector(n, x0.get<double>());
    if (cfg.x0.size() != n) throw ConfigError("x0 has the wrong length");
    cfg.options.dt = j.value("dt", cfg.options.dt);
    cfg.options.t_max = j.value("t_max", cfg.options.t_max);
    cfg.options.tol = j.value("tol", cfg.options.tol);
    cfg.options.record_every = j.value("record_every", cfg.options.record_every);
    cfg.system.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("system config: ") + e.what());
  }
}

}  // namespace ncap
