#pragma once

#include "pspool/mesh.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pspool {

struct DecimationResult {
    Mesh mesh;
    /// For each output vertex, the input vertex it survived as.
    std::vector<std::uint32_t> origin;
    /// False when no legal collapse remained before the face target.
    bool reached_target = true;
};

/// Quadric-error edge collapse until the face count is at most target_faces.
/// Collapses keep the surface a 2-manifold (link condition, no fold-overs,
/// no duplicate faces). Collapsed vertices move to the quadric-optimal
/// position, or to the edge midpoint when the quadric is singular.
/// Throws std::invalid_argument when target_faces < 4.
DecimationResult decimate(const Mesh& mesh, std::size_t target_faces);

struct MeshHierarchy {
    /// levels[0] is the finest mesh.
    std::vector<Mesh> levels;
    /// seed_maps[l - 1][c] is the level l-1 vertex nearest to coarse vertex c of level l.
    std::vector<std::vector<std::uint32_t>> seed_maps;
    std::vector<std::string> warnings;

    std::size_t depth() const { return levels.empty() ? 0 : levels.size() - 1; }
};

inline constexpr double kDefaultVertexRatio = 0.25;

/// Face target that yields roughly `target_vertices` on a mesh with the
/// Euler characteristic of `mesh` (F = 2 (V - chi) for closed triangle meshes).
std::size_t face_target_for_vertices(const Mesh& mesh, std::size_t target_vertices);

/// Nearest fine vertex (Euclidean) for each coarse vertex; ties go to the lower index.
std::vector<std::uint32_t> nearest_vertex_map(const Mesh& fine, const Mesh& coarse);

/// Level l targets ceil(|V0| * vertex_ratio^l) vertices. Throws
/// CannotDecimate when a level fails to shrink.
MeshHierarchy build_hierarchy(const Mesh& mesh, int depth, double vertex_ratio = kDefaultVertexRatio);

}  // namespace pspool
