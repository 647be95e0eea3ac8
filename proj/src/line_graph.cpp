// SPDX-License-Identifier: Apache-2.0

#include "ncap/line_graph.hpp"

#include <iomanip>
#include <ostream>
#include <stdexcept>
#include <string>

namespace ncap {

LineGraphTopology::LineGraphTopology(std::vector<std::size_t> layer_sizes)
    : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2) throw std::invalid_argument("line graph: need at least one weight layer");
  offsets_.assign(sizes_.size(), 0);
  for (std::size_t l = 1; l < sizes_.size(); ++l) {
    offsets_[l] = offsets_[l - 1] + sizes_[l] * sizes_[l - 1];
  }
}

std::size_t LineGraphTopology::link_count(std::size_t target_layer) const {
  if (target_layer < 1 || target_layer >= depth()) return 0;
  return sizes_[target_layer - 1] * sizes_[target_layer] * sizes_[target_layer + 1];
}

std::size_t LineGraphTopology::link_count() const {
  std::size_t n = 0;
  for (std::size_t l = 1; l < depth(); ++l) n += link_count(l);
  return n;
}

std::size_t LineGraphTopology::node_of(const WeightIndex& w) const {
  if (w.layer < 1 || w.layer > depth() || w.row >= sizes_[w.layer] || w.col >= sizes_[w.layer - 1]) {
    throw std::out_of_range("line graph: weight index out of range");
  }
  return offsets_[w.layer - 1] + w.row * sizes_[w.layer - 1] + w.col;
}

WeightIndex LineGraphTopology::weight_of(std::size_t node) const {
  if (node >= node_count()) throw std::out_of_range("line graph: node index out of range");
  std::size_t l = 1;
  while (node >= offsets_[l]) ++l;
  const std::size_t local = node - offsets_[l - 1];
  return {l, local / sizes_[l - 1], local % sizes_[l - 1]};
}

std::vector<Link> LineGraphTopology::links() const {
  if (link_count() > kMaxExplicitLinks) {
    throw std::invalid_argument("line graph: " + std::to_string(link_count()) +
                                " links exceed the explicit-adjacency limit");
  }
  std::vector<Link> out;
  out.reserve(link_count());
  for_each_link([&](const WeightIndex& t, const WeightIndex& s) {
    out.push_back({node_of(t), node_of(s)});
  });
  return out;
}

LineGraphTopology build_topology(const MlpSpec& spec) {
  spec.validate();
  return LineGraphTopology(spec.layer_sizes);
}

double pair_weight(const SampleTrace& t, std::size_t layer, std::size_t k, std::size_t i,
                   std::size_t j) {
  const std::size_t L = t.depth();
  if (!t.has_backward) throw std::invalid_argument("pair_weight: trace has no backward pass");
  if (layer < 1 || layer >= L) throw std::out_of_range("pair_weight: layer out of range");
  if (j >= t.act[layer - 1].size() || i >= t.act[layer].size() || k >= t.act[layer + 1].size()) {
    throw std::out_of_range("pair_weight: neuron index out of range");
  }
  const double lower = t.act[layer - 1][j] * t.dact[layer][i];
  if (layer + 1 == L) return lower * t.residual[k];
  return lower * t.delta[layer + 1][k] * t.dact[layer + 1][k];
}

namespace {

void check_trace(const LineGraphTopology& topology, const SampleTrace& t) {
  if (!t.has_backward) throw std::invalid_argument("line graph: trace has no backward pass");
  if (t.depth() != topology.depth()) throw std::invalid_argument("line graph: trace depth mismatch");
  for (std::size_t l = 0; l <= t.depth(); ++l) {
    if (t.act[l].size() != topology.layer_sizes()[l]) {
      throw std::invalid_argument("line graph: trace width mismatch on layer " + std::to_string(l));
    }
  }
}

}  // namespace

WeightedAdjacency assemble_adjacency(const LineGraphTopology& topology, const SampleTrace& t) {
  check_trace(topology, t);
  if (topology.link_count() > kMaxExplicitLinks) {
    throw std::invalid_argument("assemble_adjacency: " + std::to_string(topology.link_count()) +
                                " links exceed the explicit-adjacency limit; use closed_form_degrees");
  }
  WeightedAdjacency adj;
  adj.node_count = topology.node_count();
  adj.entries.reserve(topology.link_count());
  adj.in_degree.assign(adj.node_count, 0.0);
  adj.out_degree.assign(adj.node_count, 0.0);
  topology.for_each_link([&](const WeightIndex& tgt, const WeightIndex& src) {
    const double p = pair_weight(t, tgt.layer, src.row, tgt.row, tgt.col);
    const std::size_t a = topology.node_of(tgt);
    const std::size_t b = topology.node_of(src);
    adj.entries.push_back({a, b, p});
    adj.in_degree[a] += p;
    adj.out_degree[b] += p;
  });
  return adj;
}

DegreeVectors closed_form_degrees(const SampleTrace& t) {
  if (!t.has_backward) throw std::invalid_argument("closed_form_degrees: trace has no backward pass");
  const std::size_t L = t.depth();
  std::vector<std::size_t> sizes(L + 1);
  for (std::size_t l = 0; l <= L; ++l) sizes[l] = t.act[l].size();
  const LineGraphTopology topo(sizes);
  DegreeVectors d;
  d.in_degree.assign(topo.node_count(), 0.0);
  d.out_degree.assign(topo.node_count(), 0.0);

  for (std::size_t l = 1; l <= L; ++l) {
    const std::size_t base = topo.layer_offset(l);
    const std::size_t n_row = sizes[l], n_col = sizes[l - 1];
    // In-degree: only target layers 1..L-2 (layer L-1 sums (z - y) to 0).
    if (l + 2 <= L) {
      double s_next = 0.0;
      for (std::size_t k = 0; k < sizes[l + 1]; ++k) s_next += t.delta[l + 1][k] * t.dact[l + 1][k];
      for (std::size_t i = 0; i < n_row; ++i)
        for (std::size_t j = 0; j < n_col; ++j)
          d.in_degree[base + i * n_col + j] = t.act[l - 1][j] * t.dact[l][i] * s_next;
    }
    // Out-degree: layer 1 has no lower neighbours.
    if (l >= 2) {
      const double s_lower = sum(t.act[l - 2]);
      for (std::size_t i = 0; i < n_row; ++i) {
        const double upper = (l == L) ? t.residual[i] : t.delta[l][i] * t.dact[l][i];
        for (std::size_t j = 0; j < n_col; ++j)
          d.out_degree[base + i * n_col + j] = s_lower * t.dact[l - 1][j] * upper;
      }
    }
  }
  return d;
}

void write_adjacency_csv(std::ostream& out, const LineGraphTopology& topology,
                         const WeightedAdjacency& adjacency) {
  out << "target_layer,target_row,target_col,source_layer,source_row,source_col,weight\n";
  out << std::setprecision(17);
  for (const auto& e : adjacency.entries) {
    const WeightIndex t = topology.weight_of(e.target);
    const WeightIndex s = topology.weight_of(e.source);
    out << t.layer << ',' << t.row << ',' << t.col << ',' << s.layer << ',' << s.row << ',' << s.col
        << ',' << e.weight << '\n';
  }
}

}  // namespace ncap
