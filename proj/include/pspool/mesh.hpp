#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace pspool {

using Vec3 = Eigen::Vector3d;
using Face = std::array<std::uint32_t, 3>;
/// Undirected edge, always stored with first < second.
using Edge = std::pair<std::uint32_t, std::uint32_t>;
/// Row-major dense matrix used for node features throughout the library.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Indexed triangle mesh. The edge list is derived from the faces and kept
/// sorted and deduplicated; use make_mesh() to construct a consistent value.
struct Mesh {
    std::vector<Vec3> vertices;
    std::vector<Face> faces;
    std::vector<Edge> edges;

    std::size_t vertex_count() const { return vertices.size(); }
    std::size_t face_count() const { return faces.size(); }
};

/// Builds a mesh and derives its edge set. Throws ParseError if a face
/// references a vertex out of range.
Mesh make_mesh(std::vector<Vec3> vertices, std::vector<Face> faces);

/// Union of face boundary edges, deduplicated, self-loops dropped.
std::vector<Edge> derive_edges(const std::vector<Face>& faces);

/// Loads an ASCII OFF or OBJ file (chosen by extension, OFF header sniffed
/// otherwise). Only triangles are accepted.
Mesh load_mesh(const std::filesystem::path& path);
Mesh parse_off(const std::string& text);
Mesh parse_obj(const std::string& text);

void write_off(const Mesh& mesh, const std::filesystem::path& path);
std::string format_off(const Mesh& mesh);

struct ValidationReport {
    std::size_t face_count = 0;
    bool is_manifold = false;
    bool accepted = false;
    std::vector<std::string> reasons;
};

/// Faces below this count are only kept when manifold.
inline constexpr std::size_t kSmallMeshFaces = 1000;

/// Pure accept/reject rule; validate_mesh() defers to it.
bool validation_verdict(std::size_t face_count, bool is_manifold);

/// Every edge borders one or two faces, every vertex star is a single fan,
/// and no face repeats a vertex.
bool is_manifold(const Mesh& mesh, std::vector<std::string>* reasons = nullptr);

ValidationReport validate_mesh(const Mesh& mesh);

/// Translates the centroid to the origin and scales so the largest vertex
/// norm is 1. Throws DegenerateMesh when every vertex coincides.
Mesh canonicalize(const Mesh& mesh);

/// Euler characteristic V - E + F.
long euler_characteristic(const Mesh& mesh);

struct FeatureGraph {
    /// |V| x 6: position followed by unit vertex normal.
    Matrix node_features;
    std::vector<Edge> edges;
    /// Vertices whose accumulated normal vanished; their normal columns are zero.
    std::vector<std::uint32_t> degenerate_normals;
};

/// Area-weighted vertex normals, renormalized per row.
Matrix vertex_normals(const Mesh& mesh, std::vector<std::uint32_t>* degenerate = nullptr);

FeatureGraph mesh_to_graph(const Mesh& mesh);

}  // namespace pspool
