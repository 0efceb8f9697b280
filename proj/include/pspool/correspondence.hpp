#pragma once

#include "pspool/mesh.hpp"

#include <cstdint>
#include <limits>
#include <vector>

namespace pspool {

/// Edge-length-weighted vertex adjacency in CSR form.
struct EdgeGraph {
    std::vector<std::uint32_t> offsets;
    std::vector<std::uint32_t> targets;
    std::vector<double> lengths;

    std::size_t vertex_count() const { return offsets.empty() ? 0 : offsets.size() - 1; }
};

EdgeGraph make_edge_graph(const Mesh& mesh);

inline constexpr double kInfiniteDistance = std::numeric_limits<double>::infinity();

/// Single-source shortest-path distances over mesh edges weighted by
/// Euclidean length. Entries beyond `cutoff` (or unreachable) are infinity.
std::vector<double> geodesic_distances(const Mesh& mesh, std::uint32_t source,
                                       double cutoff = kInfiniteDistance);

struct GeodesicHit {
    std::uint32_t vertex;
    double distance;
};

/// The k geodesically nearest vertices to `source` (including itself), in
/// settle order: increasing distance, ties to the lower index.
std::vector<GeodesicHit> geodesic_knn(const EdgeGraph& graph, std::uint32_t source, std::size_t k);

/// Offset keeping correspondence weights finite at zero distance, in canonical units.
inline constexpr double kWeightEpsilon = 1e-3;

/// Inverse-distance weight 1 / (epsilon + distance).
inline double weight_fn(double distance) { return 1.0 / (kWeightEpsilon + distance); }

struct WeightedIndex {
    std::uint32_t index;
    double weight;
};

/// Support-balanced relation between a fine level and the next coarse level.
struct CorrespondenceSet {
    std::size_t fine_count = 0;
    std::size_t coarse_count = 0;
    int k_s = 0;
    int k_aug = 0;
    /// Per coarse node: fine nodes it aggregates, sorted by index.
    std::vector<std::vector<WeightedIndex>> pool_sets;
    /// Per fine node: coarse nodes it receives from, sorted by index. The
    /// exact transpose of pool_sets.
    std::vector<std::vector<WeightedIndex>> unpool_sets;
    /// Fine nodes reattached by the orphan repair pass.
    std::vector<std::uint32_t> repaired;
};

inline constexpr int kDefaultKs = 8;

/// Builds the relation in five steps:
///  (a) each coarse node takes the k_aug geodesically nearest fine nodes of its seed;
///  (b) the relation is transposed;
///  (c) every fine node keeps its k_s largest-weight coarse parents;
///  (d) every coarse node keeps its k_s largest-weight surviving children;
///  (e) fine nodes left without a parent attach to the nearest coarse node
///      (by seed geodesic distance); a full node first drops its weakest
///      child that still has another parent, and is skipped when it has none.
/// Ties in (c) and (d) go to the lower index.
CorrespondenceSet build_correspondence(const Mesh& fine, const Mesh& coarse,
                                       const std::vector<std::uint32_t>& seed_map, int k_s,
                                       int k_aug, int jobs = 1);

/// Same as above with k_aug = 2 * k_s.
CorrespondenceSet build_correspondence(const Mesh& fine, const Mesh& coarse,
                                       const std::vector<std::uint32_t>& seed_map, int k_s = kDefaultKs);

}  // namespace pspool
