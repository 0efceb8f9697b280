#pragma once

#include "pspool/mesh.hpp"

#include <cstdint>
#include <vector>

namespace pspool {

/// Attention neighbourhoods: for each node, its neighbours plus itself,
/// sorted by index, in CSR form.
struct Adjacency {
    std::vector<std::uint32_t> offsets{0};
    std::vector<std::uint32_t> neighbors;

    std::size_t node_count() const { return offsets.size() - 1; }
    std::size_t entry_count() const { return neighbors.size(); }
};

/// Undirected edges to attention neighbourhoods (self-loops added).
Adjacency make_adjacency(std::size_t node_count, const std::vector<Edge>& edges);

/// Edges (a < b) of the subgraph induced by `kept` (sorted), relabeled to
/// positions within `kept`.
std::vector<Edge> induced_edges(const std::vector<Edge>& edges, const std::vector<std::uint32_t>& kept,
                                std::size_t node_count);

}  // namespace pspool
