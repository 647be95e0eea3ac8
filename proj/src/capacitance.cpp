// SPDX-License-Identifier: Apache-2.0

#include "ncap/capacitance.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "ncap/errors.hpp"

namespace ncap {

namespace {

double masked_sum(const Vector& v, const Vector& mask) {
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += v[i] * mask[i];
  return s;
}

}  // namespace

BetaResult make_beta(const BetaTerms& terms, std::size_t n_samples) {
  BetaResult r;
  r.numerator = terms.numerator;
  r.denominator = terms.denominator;
  r.epsilon_used = kBetaEpsilon;
  r.beta_eff = terms.numerator / (terms.denominator + kBetaEpsilon);
  r.n_samples = n_samples;
  return r;
}

BetaResult beta_general(const DegreeVectors& degrees) {
  if (degrees.in_degree.size() != degrees.out_degree.size()) {
    throw std::invalid_argument("beta_general: degree vectors differ in length");
  }
  return make_beta({dot(degrees.out_degree, degrees.in_degree), sum(degrees.in_degree)}, 1);
}

BetaResult beta_general(const WeightedAdjacency& adjacency) {
  return beta_general(DegreeVectors{adjacency.in_degree, adjacency.out_degree});
}

BetaTerms beta_terms(const SampleTrace& t, std::size_t first_layer) {
  if (!t.has_backward) throw std::invalid_argument("beta: trace has no backward pass");
  const std::size_t L = t.depth();
  if (first_layer + 2 > L) {
    throw std::invalid_argument("beta: probed sub-network needs at least one hidden layer");
  }
  const std::size_t sub_depth = L - first_layer;
  // s[l] = 1^T (delta^(l) .* sigma'_l) for absolute hidden layers.
  auto grad_sum = [&](std::size_t l) { return masked_sum(t.delta[l], t.dact[l]); };

  BetaTerms terms;
  for (std::size_t l = 2; l + 2 <= sub_depth; ++l) {
    const std::size_t a = first_layer + l;
    terms.numerator += sum(t.act[a - 2]) * masked_sum(t.act[a - 1], t.dact[a - 1]) * grad_sum(a) *
                       grad_sum(a + 1);
  }
  for (std::size_t l = 2; l + 1 <= sub_depth; ++l) {
    const std::size_t a = first_layer + l;
    terms.denominator += sum(t.act[a - 2]) * sum(t.dact[a - 1]) * grad_sum(a);
  }
  return terms;
}

BetaResult beta_mlp(const SampleTrace& trace) { return make_beta(beta_terms(trace, 0), 1); }

ProbeBatch make_probe_batch(const Dataset& data, std::size_t probe_size, std::uint64_t seed) {
  if (data.size() == 0) throw std::invalid_argument("probe batch: empty dataset");
  if (probe_size == 0) throw std::invalid_argument("probe batch: probe size must be positive");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(std::min(probe_size, order.size()));
  const Dataset picked = data.subset(order);
  return {picked.features, picked.targets()};
}

BetaResult beta_batch(const MlpModel& model, const ProbeBatch& batch, std::size_t first_layer) {
  if (batch.size() == 0) throw std::invalid_argument("beta: empty probe batch");
  BetaTerms total;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    SampleTrace t = forward(model, batch.inputs.row(s));
    backward(model, t, batch.targets.row(s));
    total += beta_terms(t, first_layer);
  }
  return make_beta(total, batch.size());
}

BetaResult beta_probe(const MlpModel& model, const ProbeBatch& batch, std::size_t first_layer) {
  const std::size_t L = model.depth();
  if (first_layer >= L || L - first_layer < kMinProbeDepth) {
    throw DepthError("beta_probe: probed sub-network has depth " +
                     std::to_string(first_layer >= L ? 0 : L - first_layer) +
                     "; at least three hidden layers (depth 4) are required");
  }
  return beta_batch(model, batch, first_layer);
}

}  // namespace ncap
