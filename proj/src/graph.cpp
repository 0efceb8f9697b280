#include "pspool/graph.hpp"

#include "pspool/errors.hpp"

#include <algorithm>
#include <limits>

namespace pspool {

Adjacency make_adjacency(std::size_t node_count, const std::vector<Edge>& edges) {
    std::vector<std::vector<std::uint32_t>> lists(node_count);
    for (std::uint32_t i = 0; i < node_count; ++i) lists[i].push_back(i);
    for (const auto& [a, b] : edges) {
        if (a >= node_count || b >= node_count) throw ShapeMismatch("edge index out of range");
        if (a == b) continue;
        lists[a].push_back(b);
        lists[b].push_back(a);
    }
    Adjacency adj;
    adj.offsets.reserve(node_count + 1);
    for (auto& l : lists) {
        std::sort(l.begin(), l.end());
        l.erase(std::unique(l.begin(), l.end()), l.end());
        adj.neighbors.insert(adj.neighbors.end(), l.begin(), l.end());
        adj.offsets.push_back(static_cast<std::uint32_t>(adj.neighbors.size()));
    }
    return adj;
}

std::vector<Edge> induced_edges(const std::vector<Edge>& edges, const std::vector<std::uint32_t>& kept,
                                std::size_t node_count) {
    constexpr auto kDropped = std::numeric_limits<std::uint32_t>::max();
    std::vector<std::uint32_t> position(node_count, kDropped);
    for (std::uint32_t k = 0; k < kept.size(); ++k) position[kept[k]] = k;
    std::vector<Edge> out;
    for (const auto& [a, b] : edges) {
        std::uint32_t pa = position[a], pb = position[b];
        if (pa == kDropped || pb == kDropped) continue;
        out.emplace_back(std::min(pa, pb), std::max(pa, pb));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

}  // namespace pspool
