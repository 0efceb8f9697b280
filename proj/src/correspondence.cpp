#include "pspool/correspondence.hpp"

#include "pspool/errors.hpp"
#include "pspool/parallel.hpp"

#include <algorithm>
#include <functional>
#include <queue>
#include <unordered_map>
#include <unordered_set>
#include <stdexcept>

namespace pspool {

namespace {

using QueueEntry = std::pair<double, std::uint32_t>;
using MinQueue = std::priority_queue<QueueEntry, std::vector<QueueEntry>, std::greater<>>;

bool heavier(const WeightedIndex& x, const WeightedIndex& y) {
    if (x.weight != y.weight) return x.weight > y.weight;
    return x.index < y.index;
}

void keep_heaviest(std::vector<WeightedIndex>& list, int k) {
    std::sort(list.begin(), list.end(), heavier);
    if (list.size() > static_cast<std::size_t>(k)) list.resize(static_cast<std::size_t>(k));
}

void sort_by_index(std::vector<WeightedIndex>& list) {
    std::sort(list.begin(), list.end(),
              [](const WeightedIndex& x, const WeightedIndex& y) { return x.index < y.index; });
}

}  // namespace

EdgeGraph make_edge_graph(const Mesh& mesh) {
    const std::size_t n = mesh.vertices.size();
    EdgeGraph g;
    g.offsets.assign(n + 1, 0);
    for (const auto& [a, b] : mesh.edges) {
        ++g.offsets[a + 1];
        ++g.offsets[b + 1];
    }
    for (std::size_t i = 0; i < n; ++i) g.offsets[i + 1] += g.offsets[i];
    g.targets.resize(g.offsets.back());
    g.lengths.resize(g.offsets.back());
    std::vector<std::uint32_t> fill(g.offsets.begin(), g.offsets.end() - 1);
    // mesh.edges is sorted, so each adjacency row comes out sorted too.
    for (const auto& [a, b] : mesh.edges) {
        double len = (mesh.vertices[a] - mesh.vertices[b]).norm();
        g.targets[fill[a]] = b;
        g.lengths[fill[a]++] = len;
    }
    for (const auto& [a, b] : mesh.edges) {
        double len = (mesh.vertices[a] - mesh.vertices[b]).norm();
        g.targets[fill[b]] = a;
        g.lengths[fill[b]++] = len;
    }
    for (std::size_t v = 0; v < n; ++v) {
        // Rows hold the lower neighbours (second pass) after the higher ones; restore order.
        std::vector<std::pair<std::uint32_t, double>> row;
        for (std::uint32_t e = g.offsets[v]; e < g.offsets[v + 1]; ++e) row.emplace_back(g.targets[e], g.lengths[e]);
        std::sort(row.begin(), row.end());
        for (std::size_t e = 0; e < row.size(); ++e) {
            g.targets[g.offsets[v] + e] = row[e].first;
            g.lengths[g.offsets[v] + e] = row[e].second;
        }
    }
    return g;
}

std::vector<double> geodesic_distances(const Mesh& mesh, std::uint32_t source, double cutoff) {
    if (source >= mesh.vertices.size()) throw std::out_of_range("geodesic_distances: bad source");
    EdgeGraph g = make_edge_graph(mesh);
    std::vector<double> dist(g.vertex_count(), kInfiniteDistance);
    std::vector<char> settled(g.vertex_count(), 0);
    MinQueue queue;
    dist[source] = 0.0;
    queue.emplace(0.0, source);
    while (!queue.empty()) {
        auto [d, v] = queue.top();
        queue.pop();
        if (settled[v]) continue;
        if (d > cutoff) break;
        settled[v] = 1;
        for (std::uint32_t e = g.offsets[v]; e < g.offsets[v + 1]; ++e) {
            std::uint32_t w = g.targets[e];
            double nd = d + g.lengths[e];
            if (nd < dist[w]) {
                dist[w] = nd;
                queue.emplace(nd, w);
            }
        }
    }
    for (std::size_t v = 0; v < dist.size(); ++v) {
        if (!settled[v]) dist[v] = kInfiniteDistance;
    }
    return dist;
}

namespace {

/// Dijkstra from `source`, calling visit(vertex, distance) in settle order
/// (distance, then index) until it returns false.
template <class Visit>
void dijkstra_visit(const EdgeGraph& g, std::uint32_t source, Visit&& visit) {
    // Sparse bookkeeping keeps each query proportional to the explored region.
    std::unordered_map<std::uint32_t, double> best;
    std::unordered_set<std::uint32_t> done;
    MinQueue queue;
    queue.emplace(0.0, source);
    best.emplace(source, 0.0);
    while (!queue.empty()) {
        auto [d, v] = queue.top();
        queue.pop();
        if (!done.insert(v).second) continue;
        if (!visit(v, d)) return;
        for (std::uint32_t e = g.offsets[v]; e < g.offsets[v + 1]; ++e) {
            std::uint32_t w = g.targets[e];
            double nd = d + g.lengths[e];
            auto [it, inserted] = best.emplace(w, nd);
            if (inserted || nd < it->second) {
                it->second = nd;
                queue.emplace(nd, w);
            }
        }
    }
}

}  // namespace

std::vector<GeodesicHit> geodesic_knn(const EdgeGraph& g, std::uint32_t source, std::size_t k) {
    std::vector<GeodesicHit> hits;
    if (k == 0) return hits;
    dijkstra_visit(g, source, [&](std::uint32_t v, double d) {
        hits.push_back({v, d});
        return hits.size() < k;
    });
    return hits;
}

CorrespondenceSet build_correspondence(const Mesh& fine, const Mesh& coarse,
                                       const std::vector<std::uint32_t>& seed_map, int k_s, int k_aug,
                                       int jobs) {
    if (k_s < 1 || k_aug < k_s) throw std::invalid_argument("build_correspondence: need k_aug >= k_s >= 1");
    if (seed_map.size() != coarse.vertices.size()) {
        throw ShapeMismatch("seed map has " + std::to_string(seed_map.size()) + " entries for " +
                            std::to_string(coarse.vertices.size()) + " coarse vertices");
    }
    const std::size_t n_fine = fine.vertices.size();
    const std::size_t n_coarse = coarse.vertices.size();
    for (std::size_t c = 0; c < n_coarse; ++c) {
        if (seed_map[c] >= n_fine) {
            throw DisconnectedSeed("coarse node " + std::to_string(c) + " has seed " +
                                   std::to_string(seed_map[c]) + " outside the fine level");
        }
    }

    const EdgeGraph graph = make_edge_graph(fine);

    // (a) augmented sets
    std::vector<std::vector<WeightedIndex>> augmented(n_coarse);
    parallel_for(n_coarse, jobs, [&](std::size_t c) {
        auto hits = geodesic_knn(graph, seed_map[c], static_cast<std::size_t>(k_aug));
        if (hits.empty()) throw DisconnectedSeed("coarse node " + std::to_string(c) + " reached no fine node");
        auto& set = augmented[c];
        set.reserve(hits.size());
        for (const auto& h : hits) set.push_back({h.vertex, weight_fn(h.distance)});
    });

    // (b) transpose, (c) truncate fine-side lists
    std::vector<std::vector<WeightedIndex>> parents(n_fine);
    for (std::uint32_t c = 0; c < n_coarse; ++c) {
        for (const auto& [j, w] : augmented[c]) parents[j].push_back({c, w});
    }
    for (auto& list : parents) keep_heaviest(list, k_s);

    // (d) truncate coarse-side lists over the surviving pairs
    std::vector<std::vector<WeightedIndex>> pool(n_coarse);
    for (std::uint32_t j = 0; j < n_fine; ++j) {
        for (const auto& [c, w] : parents[j]) pool[c].push_back({j, w});
    }
    for (auto& set : pool) keep_heaviest(set, k_s);
    std::vector<int> parent_count(n_fine, 0);
    for (const auto& set : pool) {
        for (const auto& e : set) ++parent_count[e.index];
    }
    for (std::uint32_t c = 0; c < n_coarse; ++c) {
        if (!pool[c].empty()) continue;
        // Only possible when many coarse nodes share one seed: take the
        // nearest augmented child that can still accept a parent.
        const WeightedIndex* pick = &augmented[c].front();
        for (const auto& e : augmented[c]) {
            if (parent_count[e.index] < k_s) {
                pick = &e;
                break;
            }
        }
        pool[c].push_back(*pick);
        ++parent_count[pick->index];
    }

    // (e) orphan repair: nearest coarse node with room, or one that can drop
    // its weakest link to a fine node that keeps another parent
    std::vector<std::vector<std::uint32_t>> coarse_at(n_fine);
    for (std::uint32_t c = 0; c < n_coarse; ++c) coarse_at[seed_map[c]].push_back(c);

    CorrespondenceSet out;
    for (std::uint32_t j = 0; j < n_fine; ++j) {
        if (parent_count[j] > 0) continue;
        bool attached = false;
        dijkstra_visit(graph, j, [&](std::uint32_t v, double d) {
            for (std::uint32_t c : coarse_at[v]) {
                auto& set = pool[c];
                if (set.size() >= static_cast<std::size_t>(k_s)) {
                    auto victim = set.end();
                    for (auto it = set.begin(); it != set.end(); ++it) {
                        if (parent_count[it->index] < 2) continue;
                        if (victim == set.end() || it->weight < victim->weight ||
                            (it->weight == victim->weight && it->index > victim->index)) {
                            victim = it;
                        }
                    }
                    if (victim == set.end()) continue;
                    --parent_count[victim->index];
                    set.erase(victim);
                }
                set.push_back({j, weight_fn(d)});
                ++parent_count[j];
                attached = true;
                return false;
            }
            return true;
        });
        if (!attached) throw DisconnectedSeed("fine node " + std::to_string(j) +
                                              " has no reachable coarse node with a free or redundant slot");
        out.repaired.push_back(j);
    }

    out.fine_count = n_fine;
    out.coarse_count = n_coarse;
    out.k_s = k_s;
    out.k_aug = k_aug;
    out.unpool_sets.assign(n_fine, {});
    for (std::uint32_t c = 0; c < n_coarse; ++c) {
        sort_by_index(pool[c]);
        for (const auto& [j, w] : pool[c]) out.unpool_sets[j].push_back({c, w});
    }
    out.pool_sets = std::move(pool);
    return out;
}

CorrespondenceSet build_correspondence(const Mesh& fine, const Mesh& coarse,
                                       const std::vector<std::uint32_t>& seed_map, int k_s) {
    return build_correspondence(fine, coarse, seed_map, k_s, 2 * k_s);
}

}  // namespace pspool
