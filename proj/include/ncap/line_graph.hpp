// SPDX-License-Identifier: Apache-2.0
//
// Line graph over the weights of an MLP. Every weight w_ij^(l) is a node; for
// each hidden neuron i on layer l there is a link from every w_ki^(l+1)
// (source, upper layer) to every w_ij^(l) (target, lower layer), i.e. links
// run against the forward direction. Link weights come from a per-sample
// trace.

#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "ncap/matrix.hpp"
#include "ncap/mlp.hpp"

namespace ncap {

// Explicit adjacency is refused above this many links.
inline constexpr std::size_t kMaxExplicitLinks = 1'000'000;

struct WeightIndex {
  std::size_t layer = 0;  // 1-based weight layer
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const WeightIndex&) const = default;
};

struct Link {
  std::size_t target = 0;  // node on layer l
  std::size_t source = 0;  // node on layer l + 1
};

class LineGraphTopology {
 public:
  explicit LineGraphTopology(std::vector<std::size_t> layer_sizes);

  std::size_t depth() const { return sizes_.size() - 1; }
  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
  std::size_t node_count() const { return offsets_.back(); }
  // Links whose target lies on `target_layer` (1 <= target_layer < L).
  std::size_t link_count(std::size_t target_layer) const;
  std::size_t link_count() const;

  // Layer-major, then row-major node numbering.
  std::size_t node_of(const WeightIndex& w) const;
  WeightIndex weight_of(std::size_t node) const;
  std::size_t layer_offset(std::size_t layer) const { return offsets_[layer - 1]; }

  // Calls f(target, source) for every (w_ki^(l+1), w_ij^(l)) pair, in
  // order of target layer, then i, j, k.
  template <typename F>
  void for_each_link(F&& f) const {
    for (std::size_t l = 1; l < depth(); ++l) {
      const std::size_t n_prev = sizes_[l - 1], n_mid = sizes_[l], n_next = sizes_[l + 1];
      for (std::size_t i = 0; i < n_mid; ++i)
        for (std::size_t j = 0; j < n_prev; ++j)
          for (std::size_t k = 0; k < n_next; ++k)
            f(WeightIndex{l, i, j}, WeightIndex{l + 1, k, i});
    }
  }

  std::vector<Link> links() const;

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;  // offsets_[l - 1] = first node of layer l
};

LineGraphTopology build_topology(const MlpSpec& spec);

// Link weight p{w_ki^(l+1) -> w_ij^(l)} for the given sample:
//   z_j^(l-1) sigma'_l(a_i^(l)) delta_k^(l+1) sigma'_{l+1}(a_k^(l+1))   for l + 1 < L
//   z_j^(L-2) sigma'_{L-1}(a_i^(L-1)) (z_k^(L) - y_k)                   for l + 1 = L
double pair_weight(const SampleTrace& trace, std::size_t layer, std::size_t k, std::size_t i,
                   std::size_t j);

struct WeightedAdjacency {
  struct Entry {
    std::size_t target = 0;
    std::size_t source = 0;
    double weight = 0.0;
  };
  std::size_t node_count = 0;
  std::vector<Entry> entries;  // P[target, source]
  Vector in_degree;            // P 1
  Vector out_degree;           // 1^T P
};

// Throws std::invalid_argument on trace/topology mismatch or when the link
// count exceeds kMaxExplicitLinks.
WeightedAdjacency assemble_adjacency(const LineGraphTopology& topology, const SampleTrace& trace);

struct DegreeVectors {
  Vector in_degree;
  Vector out_degree;
};

// Degree vectors from their closed forms, without materializing P. The
// in-degrees of layers L-1 and L and the out-degrees of layer 1 are zero.
DegreeVectors closed_form_degrees(const SampleTrace& trace);

// CSV with columns target_layer,target_row,target_col,source_layer,source_row,
// source_col,weight.
void write_adjacency_csv(std::ostream& out, const LineGraphTopology& topology,
                         const WeightedAdjacency& adjacency);

}  // namespace ncap
