#include "pspool/mesh.hpp"

#include "pspool/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

namespace pspool {

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Non-empty lines with '#' comments stripped.
std::vector<std::string> content_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        lines.push_back(line);
    }
    return lines;
}

double parse_double(const std::string& token, std::size_t line_no) {
    try {
        std::size_t used = 0;
        double v = std::stod(token, &used);
        if (used != token.size()) throw std::invalid_argument(token);
        if (!std::isfinite(v)) throw std::invalid_argument(token);
        return v;
    } catch (const std::exception&) {
        throw ParseError("bad number '" + token + "' on line " + std::to_string(line_no));
    }
}

long parse_long(const std::string& token, std::size_t line_no) {
    try {
        std::size_t used = 0;
        long v = std::stol(token, &used);
        if (used != token.size()) throw std::invalid_argument(token);
        return v;
    } catch (const std::exception&) {
        throw ParseError("bad integer '" + token + "' on line " + std::to_string(line_no));
    }
}

std::vector<std::string> split_ws(const std::string& line) {
    std::istringstream in(line);
    std::vector<std::string> out;
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

Vec3 face_cross(const Mesh& mesh, const Face& f) {
    const Vec3& a = mesh.vertices[f[0]];
    const Vec3& b = mesh.vertices[f[1]];
    const Vec3& c = mesh.vertices[f[2]];
    return (b - a).cross(c - a);
}

}  // namespace

std::vector<Edge> derive_edges(const std::vector<Face>& faces) {
    std::vector<Edge> edges;
    edges.reserve(faces.size() * 3);
    for (const Face& f : faces) {
        for (int k = 0; k < 3; ++k) {
            std::uint32_t a = f[k];
            std::uint32_t b = f[(k + 1) % 3];
            if (a == b) continue;
            edges.emplace_back(std::min(a, b), std::max(a, b));
        }
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    return edges;
}

Mesh make_mesh(std::vector<Vec3> vertices, std::vector<Face> faces) {
    for (const Face& f : faces) {
        for (std::uint32_t idx : f) {
            if (idx >= vertices.size()) {
                throw ParseError("face index " + std::to_string(idx) + " out of range (" +
                                 std::to_string(vertices.size()) + " vertices)");
            }
        }
    }
    Mesh mesh;
    mesh.vertices = std::move(vertices);
    mesh.faces = std::move(faces);
    mesh.edges = derive_edges(mesh.faces);
    return mesh;
}

Mesh parse_off(const std::string& text) {
    auto lines = content_lines(text);
    if (lines.empty()) throw ParseError("empty OFF file");

    auto header = split_ws(lines[0]);
    if (header.empty() || header[0] != "OFF") throw ParseError("missing OFF header");
    std::size_t cursor = 1;
    std::vector<std::string> counts(header.begin() + 1, header.end());
    if (counts.empty()) {
        if (lines.size() < 2) throw ParseError("missing OFF counts");
        counts = split_ws(lines[cursor++]);
    }
    if (counts.size() < 2) throw ParseError("malformed OFF counts line");
    long nv = parse_long(counts[0], cursor);
    long nf = parse_long(counts[1], cursor);
    if (nv < 0 || nf < 0) throw ParseError("negative OFF counts");
    if (lines.size() < cursor + static_cast<std::size_t>(nv + nf)) {
        throw ParseError("OFF file truncated");
    }

    std::vector<Vec3> vertices;
    vertices.reserve(static_cast<std::size_t>(nv));
    for (long i = 0; i < nv; ++i, ++cursor) {
        auto tok = split_ws(lines[cursor]);
        if (tok.size() < 3) throw ParseError("vertex line " + std::to_string(cursor + 1));
        vertices.emplace_back(parse_double(tok[0], cursor + 1), parse_double(tok[1], cursor + 1),
                              parse_double(tok[2], cursor + 1));
    }
    std::vector<Face> faces;
    faces.reserve(static_cast<std::size_t>(nf));
    for (long i = 0; i < nf; ++i, ++cursor) {
        auto tok = split_ws(lines[cursor]);
        if (tok.empty()) throw ParseError("face line " + std::to_string(cursor + 1));
        long n = parse_long(tok[0], cursor + 1);
        if (n != 3) {
            throw NonTriangleFace("face " + std::to_string(i) + " has " + std::to_string(n) +
                                  " vertices");
        }
        if (tok.size() < 4) throw ParseError("face line " + std::to_string(cursor + 1));
        Face f{};
        for (int k = 0; k < 3; ++k) {
            long idx = parse_long(tok[k + 1], cursor + 1);
            if (idx < 0) throw ParseError("negative face index");
            f[k] = static_cast<std::uint32_t>(idx);
        }
        faces.push_back(f);
    }
    return make_mesh(std::move(vertices), std::move(faces));
}

Mesh parse_obj(const std::string& text) {
    std::vector<Vec3> vertices;
    std::vector<Face> faces;
    std::size_t line_no = 0;
    for (const auto& line : content_lines(text)) {
        ++line_no;
        auto tok = split_ws(line);
        if (tok[0] == "v") {
            if (tok.size() < 4) throw ParseError("vertex line " + std::to_string(line_no));
            vertices.emplace_back(parse_double(tok[1], line_no), parse_double(tok[2], line_no),
                                  parse_double(tok[3], line_no));
        } else if (tok[0] == "f") {
            if (tok.size() != 4) {
                throw NonTriangleFace("face with " + std::to_string(tok.size() - 1) +
                                      " vertices on line " + std::to_string(line_no));
            }
            Face f{};
            for (int k = 0; k < 3; ++k) {
                // "v", "v/vt", "v//vn", "v/vt/vn"; negative indices are relative.
                std::string head = tok[k + 1].substr(0, tok[k + 1].find('/'));
                long idx = parse_long(head, line_no);
                if (idx < 0) idx += static_cast<long>(vertices.size()) + 1;
                if (idx < 1) throw ParseError("bad face index on line " + std::to_string(line_no));
                f[k] = static_cast<std::uint32_t>(idx - 1);
            }
            faces.push_back(f);
        }
    }
    return make_mesh(std::move(vertices), std::move(faces));
}

Mesh load_mesh(const std::filesystem::path& path) {
    std::string text = read_file(path);
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".obj") return parse_obj(text);
    if (ext == ".off") return parse_off(text);
    if (text.rfind("OFF", 0) == 0) return parse_off(text);
    throw ParseError("unsupported mesh format: " + path.string());
}

std::string format_off(const Mesh& mesh) {
    std::ostringstream out;
    out << "OFF\n" << mesh.vertices.size() << ' ' << mesh.faces.size() << " 0\n";
    out << std::setprecision(17);
    for (const Vec3& v : mesh.vertices) out << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    for (const Face& f : mesh.faces) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
    return out.str();
}

void write_off(const Mesh& mesh, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << format_off(mesh);
    if (!out) throw IoError("write failed for " + path.string());
}

bool validation_verdict(std::size_t face_count, bool manifold) {
    return !(face_count < kSmallMeshFaces && !manifold);
}

bool is_manifold(const Mesh& mesh, std::vector<std::string>* reasons) {
    bool ok = true;
    auto note = [&](std::string msg) {
        ok = false;
        if (reasons && reasons->size() < 16) reasons->push_back(std::move(msg));
    };

    std::vector<std::vector<std::uint32_t>> vertex_faces(mesh.vertices.size());
    std::map<Edge, int> edge_faces;
    for (std::uint32_t fi = 0; fi < mesh.faces.size(); ++fi) {
        const Face& f = mesh.faces[fi];
        if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
            note("face " + std::to_string(fi) + " repeats a vertex");
            continue;
        }
        for (int k = 0; k < 3; ++k) {
            vertex_faces[f[k]].push_back(fi);
            std::uint32_t a = f[k], b = f[(k + 1) % 3];
            ++edge_faces[{std::min(a, b), std::max(a, b)}];
        }
    }
    for (const auto& [edge, count] : edge_faces) {
        if (count > 2) {
            note("edge (" + std::to_string(edge.first) + "," + std::to_string(edge.second) +
                 ") borders " + std::to_string(count) + " faces");
        }
    }

    // A vertex star is a single fan when its incident faces are connected
    // through edges that contain the vertex.
    for (std::uint32_t v = 0; v < vertex_faces.size(); ++v) {
        const auto& star = vertex_faces[v];
        if (star.size() <= 1) continue;
        std::vector<int> parent(star.size());
        std::iota(parent.begin(), parent.end(), 0);
        auto find = [&](int x) {
            while (parent[x] != x) x = parent[x] = parent[parent[x]];
            return x;
        };
        std::map<std::uint32_t, int> spoke_owner;
        for (int i = 0; i < static_cast<int>(star.size()); ++i) {
            for (std::uint32_t w : mesh.faces[star[i]]) {
                if (w == v) continue;
                auto [it, inserted] = spoke_owner.emplace(w, i);
                if (!inserted) parent[find(i)] = find(it->second);
            }
        }
        int root = find(0);
        for (int i = 1; i < static_cast<int>(star.size()); ++i) {
            if (find(i) != root) {
                note("vertex " + std::to_string(v) + " star is not a single fan");
                break;
            }
        }
    }
    return ok;
}

ValidationReport validate_mesh(const Mesh& mesh) {
    ValidationReport report;
    report.face_count = mesh.faces.size();
    report.is_manifold = is_manifold(mesh, &report.reasons);
    report.accepted = validation_verdict(report.face_count, report.is_manifold);
    if (report.face_count < kSmallMeshFaces) {
        report.reasons.push_back(report.is_manifold ? "small mesh kept: manifold"
                                                    : "small mesh rejected: not manifold");
    } else if (!report.is_manifold) {
        report.reasons.push_back("non-manifold mesh kept: face count >= 1000");
    }
    return report;
}

Mesh canonicalize(const Mesh& mesh) {
    if (mesh.vertices.empty()) throw DegenerateMesh("mesh has no vertices");
    Vec3 centroid = Vec3::Zero();
    for (const Vec3& v : mesh.vertices) centroid += v;
    centroid /= static_cast<double>(mesh.vertices.size());
    double max_norm = 0.0;
    for (const Vec3& v : mesh.vertices) max_norm = std::max(max_norm, (v - centroid).norm());
    if (!(max_norm > 0.0)) throw DegenerateMesh("all vertices coincide");

    Mesh out = mesh;
    for (Vec3& v : out.vertices) v = (v - centroid) / max_norm;
    return out;
}

long euler_characteristic(const Mesh& mesh) {
    return static_cast<long>(mesh.vertices.size()) - static_cast<long>(mesh.edges.size()) +
           static_cast<long>(mesh.faces.size());
}

Matrix vertex_normals(const Mesh& mesh, std::vector<std::uint32_t>* degenerate) {
    Matrix normals = Matrix::Zero(static_cast<Eigen::Index>(mesh.vertices.size()), 3);
    for (const Face& f : mesh.faces) {
        // Unnormalized cross product = 2 * area * unit normal.
        Vec3 n = face_cross(mesh, f);
        for (std::uint32_t v : f) normals.row(v) += n.transpose();
    }
    for (Eigen::Index i = 0; i < normals.rows(); ++i) {
        double len = normals.row(i).norm();
        if (len > 1e-300) {
            normals.row(i) /= len;
        } else {
            normals.row(i).setZero();
            if (degenerate) degenerate->push_back(static_cast<std::uint32_t>(i));
        }
    }
    return normals;
}

FeatureGraph mesh_to_graph(const Mesh& mesh) {
    FeatureGraph graph;
    const auto n = static_cast<Eigen::Index>(mesh.vertices.size());
    graph.node_features.resize(n, 6);
    for (Eigen::Index i = 0; i < n; ++i) graph.node_features.block<1, 3>(i, 0) = mesh.vertices[i].transpose();
    graph.node_features.rightCols(3) = vertex_normals(mesh, &graph.degenerate_normals);
    graph.edges = mesh.edges;
    return graph;
}

}  // namespace pspool
