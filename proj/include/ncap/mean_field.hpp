// SPDX-License-Identifier: Apache-2.0
//
// Networked dynamics  dx_i/dt = f(x_i) + sum_j P_ij g(x_i, x_j)  on a dense
// weighted digraph, the L_P averaging operator, and the one-dimensional
// mean-field reduction  dx/dt = f(x) + beta_eff g(x, x).

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ncap/matrix.hpp"

namespace ncap {

inline constexpr double kLpEpsilon = 1e-12;

struct SelfDynamics {
  std::string name;
  std::function<double(std::size_t node, double x)> f;
  // Same f on every node; required by the mean-field reduction.
  bool homogeneous = true;
};

struct Coupling {
  std::string name;
  std::function<double(double xi, double xj, std::size_t j)> g;
  bool homogeneous = true;
};

namespace dynamics {
// f(x) = drive - rate * x
SelfDynamics linear_decay(double rate, double drive = 0.0);
SelfDynamics constant_force(double c);
SelfDynamics constant_force(Vector per_node);
// f(x) = r x (1 - x / capacity)
SelfDynamics logistic(double r, double capacity);

Coupling none();
// g(x_i, x_j) = x_j - offset
Coupling linear(double offset = 0.0);
Coupling linear(Vector per_node_offsets);
// g(x_i, x_j) = x_j - x_i
Coupling diffusive();
// g(x_i, x_j) = x_j / (1 + x_j)
Coupling saturating();
}  // namespace dynamics

// Name -> factory(params) registry used by config files. The built-in entries
// are "linear_decay" {rate, drive}, "constant_force" {c}, "logistic" {r,
// capacity}; couplings "none", "linear" {offset}, "diffusive", "saturating".
class DynamicsCatalog {
 public:
  using SelfFactory = std::function<SelfDynamics(const nlohmann::json&)>;
  using CouplingFactory = std::function<Coupling(const nlohmann::json&)>;

  static DynamicsCatalog& instance();

  void register_self(const std::string& name, SelfFactory factory);
  void register_coupling(const std::string& name, CouplingFactory factory);
  SelfDynamics make_self(const std::string& name, const nlohmann::json& params) const;
  Coupling make_coupling(const std::string& name, const nlohmann::json& params) const;
  std::vector<std::string> self_names() const;
  std::vector<std::string> coupling_names() const;

 private:
  DynamicsCatalog();
  std::map<std::string, SelfFactory> self_;
  std::map<std::string, CouplingFactory> coupling_;
};

struct NetworkedSystem {
  Matrix adjacency;  // P, n x n; P(i, j) is the influence of j on i
  SelfDynamics self;
  Coupling coupling;

  std::size_t size() const { return adjacency.rows(); }
  void validate() const;
  // Right-hand side at state x.
  Vector rate(const Vector& x) const;
};

// Edge-dynamics instance: f(w_i) = forcing_i, g(w_i, w_j) = w_j - w_j*.
NetworkedSystem edge_dynamics_system(Matrix adjacency, Vector forcing, Vector equilibrium);

Vector in_degrees(const Matrix& p);   // P 1
Vector out_degrees(const Matrix& p);  // 1^T P

// (1^T P z) / (1^T P 1); a zero denominator is replaced by kLpEpsilon.
double lp_operator(const Matrix& p, std::span<const double> z);
// L_P(delta_in).
double beta_eff(const Matrix& p);
double beta_eff(const NetworkedSystem& system);

struct SimulationOptions {
  double dt = 0.01;
  double t_max = 100.0;
  double tol = 1e-9;
  std::size_t record_every = 1;
};

enum class SimulationStatus { kConverged, kTimeLimit, kDiverged };

struct Trajectory {
  std::vector<double> times;
  std::vector<Vector> states;
  SimulationStatus status = SimulationStatus::kTimeLimit;
  Vector x_final;  // last finite state

  bool converged() const { return status == SimulationStatus::kConverged; }
};

// Fixed-step classical RK4. Stops when max_i |dx_i/dt| < tol, at t_max, or at
// the first non-finite state (status kDiverged, x_final = last finite state).
Trajectory simulate(const NetworkedSystem& system, const Vector& x0, const SimulationOptions& options);

struct MeanFieldReduction {
  double beta_eff = 0.0;
  Trajectory reduced;  // one-dimensional states
  double x_eff = 0.0;
};

// Integrates dx/dt = f(x) + beta_eff g(x, x) from x0_av. Throws
// std::invalid_argument when f or g differ per node.
MeanFieldReduction reduce_mean_field(const NetworkedSystem& system, double x0_av,
                                     const SimulationOptions& options);

// CSV: t,x_1,...,x_n
void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory);
// CSV: t,x_av
void write_reduced_csv(std::ostream& out, const Trajectory& reduced);

// System config JSON:
// {"adjacency": [[...]] | {"k_regular": {"n", "k", "weight"}} |
//                {"random": {"n", "p", "w_min", "w_max", "seed"}},
//  "self": {"name", "params"}, "coupling": {"name", "params"},
//  "x0": number | [...], "dt", "t_max", "tol"}
struct SystemConfig {
  NetworkedSystem system;
  Vector x0;
  SimulationOptions options;
};
SystemConfig parse_system_config(const nlohmann::json& j);

// Directed circulant graph: node i receives from i+1..i+k (mod n).
Matrix k_regular_adjacency(std::size_t n, std::size_t k, double weight);
// Directed Erdos-Renyi graph without self-loops, weights uniform in [w_min, w_max].
Matrix random_adjacency(std::size_t n, double p, double w_min, double w_max, std::uint64_t seed);

}  // namespace ncap
