// SPDX-License-Identifier: Apache-2.0
//
// Neural capacitance beta_eff = (delta_out . delta_in) / (1 . delta_in + eps),
// either from explicit degree vectors or from the closed form for ReLU MLPs
// evaluated directly on a trace.

#pragma once

#include <cstddef>
#include <cstdint>

#include "ncap/dataset.hpp"
#include "ncap/line_graph.hpp"
#include "ncap/mlp.hpp"

namespace ncap {

inline constexpr double kBetaEpsilon = 1e-12;
// Hidden layers needed below the output for a non-trivial beta_eff.
inline constexpr std::size_t kMinProbeDepth = 4;

struct BetaResult {
  double beta_eff = 0.0;
  double numerator = 0.0;
  double denominator = 0.0;
  double epsilon_used = kBetaEpsilon;
  std::size_t n_samples = 0;
};

struct BetaTerms {
  double numerator = 0.0;
  double denominator = 0.0;
  BetaTerms& operator+=(const BetaTerms& o) {
    numerator += o.numerator;
    denominator += o.denominator;
    return *this;
  }
};

BetaResult make_beta(const BetaTerms& terms, std::size_t n_samples);

BetaResult beta_general(const WeightedAdjacency& adjacency);
BetaResult beta_general(const DegreeVectors& degrees);

// Numerator and denominator of the closed form on the sub-network whose input
// is layer `first_layer` of the trace (0 = whole network). The sub-network
// must have at least one hidden layer.
BetaTerms beta_terms(const SampleTrace& trace, std::size_t first_layer = 0);

BetaResult beta_mlp(const SampleTrace& trace);

struct ProbeBatch {
  Matrix inputs;
  Matrix targets;  // one-hot
  std::size_t size() const { return inputs.rows(); }
};

// First `probe_size` rows of a seeded permutation of the dataset.
ProbeBatch make_probe_batch(const Dataset& data, std::size_t probe_size, std::uint64_t seed);

// Sums per-sample numerators and denominators over the batch, then divides
// once. No depth requirement.
BetaResult beta_batch(const MlpModel& model, const ProbeBatch& batch, std::size_t first_layer = 0);

// As beta_batch, but throws DepthError unless the probed sub-network has
// L - first_layer >= 4.
BetaResult beta_probe(const MlpModel& model, const ProbeBatch& batch, std::size_t first_layer = 0);

}  // namespace ncap
