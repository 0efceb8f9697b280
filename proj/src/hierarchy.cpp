#include "pspool/hierarchy.hpp"

#include "pspool/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

namespace pspool {

namespace {

using Quadric = Eigen::Matrix4d;

constexpr double kSingularDet = 1e-12;
// Minimum cosine between a face normal before and after a collapse.
constexpr double kFoldCos = 0.1;

struct Candidate {
    double cost;
    std::uint32_t a, b;          // a < b; a survives
    std::uint32_t stamp_a, stamp_b;
};

struct CandidateAfter {
    bool operator()(const Candidate& x, const Candidate& y) const {
        if (x.cost != y.cost) return x.cost > y.cost;
        if (x.a != y.a) return x.a > y.a;
        return x.b > y.b;
    }
};

class Decimator {
public:
    explicit Decimator(const Mesh& mesh)
        : pos_(mesh.vertices),
          faces_(mesh.faces),
          face_alive_(mesh.faces.size(), 1),
          vertex_alive_(mesh.vertices.size(), 1),
          stamp_(mesh.vertices.size(), 0),
          quadric_(mesh.vertices.size(), Quadric::Zero()),
          vfaces_(mesh.vertices.size()),
          alive_faces_(mesh.faces.size()) {
        for (std::uint32_t fi = 0; fi < faces_.size(); ++fi) {
            const Face& f = faces_[fi];
            if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
                face_alive_[fi] = 0;
                --alive_faces_;
                continue;
            }
            for (std::uint32_t v : f) vfaces_[v].push_back(fi);
            Vec3 n = (pos_[f[1]] - pos_[f[0]]).cross(pos_[f[2]] - pos_[f[0]]);
            double len = n.norm();
            if (len <= 0.0) continue;
            n /= len;
            Quadric k = plane_quadric(n, pos_[f[0]]);
            for (std::uint32_t v : f) quadric_[v] += k;
        }
        add_boundary_constraints(mesh);
    }

    DecimationResult run(std::size_t target_faces) {
        for (std::uint32_t v = 0; v < pos_.size(); ++v) {
            for (std::uint32_t w : neighbors(v)) {
                if (v < w) push(v, w);
            }
        }
        bool reached = alive_faces_ <= target_faces;
        std::vector<std::pair<std::uint32_t, std::uint32_t>> deferred;
        std::size_t collapses_since_refill = 0;
        while (!reached) {
            if (queue_.empty()) {
                if (collapses_since_refill == 0 || deferred.empty()) break;
                std::sort(deferred.begin(), deferred.end());
                deferred.erase(std::unique(deferred.begin(), deferred.end()), deferred.end());
                for (auto [a, b] : deferred) {
                    if (vertex_alive_[a] && vertex_alive_[b]) push(a, b);
                }
                deferred.clear();
                collapses_since_refill = 0;
                continue;
            }
            Candidate c = queue_.top();
            queue_.pop();
            if (!vertex_alive_[c.a] || !vertex_alive_[c.b]) continue;
            if (stamp_[c.a] != c.stamp_a || stamp_[c.b] != c.stamp_b) continue;
            Vec3 target = placement(c.a, c.b);
            if (!collapse_is_legal(c.a, c.b, target)) {
                deferred.emplace_back(c.a, c.b);
                continue;
            }
            collapse(c.a, c.b, target);
            ++collapses_since_refill;
            reached = alive_faces_ <= target_faces;
        }
        return compact(reached);
    }

private:
    static Quadric plane_quadric(const Vec3& n, const Vec3& p) {
        Eigen::Vector4d plane(n.x(), n.y(), n.z(), -n.dot(p));
        return plane * plane.transpose();
    }

    // Planes through each boundary edge, perpendicular to its face, keep
    // open borders from drifting.
    void add_boundary_constraints(const Mesh& mesh) {
        std::vector<std::pair<Edge, std::uint32_t>> half;
        for (std::uint32_t fi = 0; fi < faces_.size(); ++fi) {
            if (!face_alive_[fi]) continue;
            const Face& f = faces_[fi];
            for (int k = 0; k < 3; ++k) {
                std::uint32_t a = f[k], b = f[(k + 1) % 3];
                half.push_back({{std::min(a, b), std::max(a, b)}, fi});
            }
        }
        std::sort(half.begin(), half.end());
        for (std::size_t i = 0; i < half.size(); ++i) {
            bool single = (i == 0 || half[i - 1].first != half[i].first) &&
                          (i + 1 == half.size() || half[i + 1].first != half[i].first);
            if (!single) continue;
            auto [a, b] = half[i].first;
            const Face& f = faces_[half[i].second];
            Vec3 fn = (pos_[f[1]] - pos_[f[0]]).cross(pos_[f[2]] - pos_[f[0]]);
            Vec3 e = mesh.vertices[b] - mesh.vertices[a];
            Vec3 n = e.cross(fn);
            double len = n.norm();
            if (len <= 0.0) continue;
            Quadric k = plane_quadric(n / len, mesh.vertices[a]);
            quadric_[a] += k;
            quadric_[b] += k;
        }
    }

    std::vector<std::uint32_t> neighbors(std::uint32_t v) const {
        std::vector<std::uint32_t> out;
        for (std::uint32_t fi : vfaces_[v]) {
            for (std::uint32_t w : faces_[fi]) {
                if (w != v) out.push_back(w);
            }
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    bool is_boundary_vertex(std::uint32_t v) const {
        for (std::uint32_t w : neighbors(v)) {
            if (shared_faces(v, w).size() == 1) return true;
        }
        return false;
    }

    std::vector<std::uint32_t> shared_faces(std::uint32_t a, std::uint32_t b) const {
        std::vector<std::uint32_t> out;
        for (std::uint32_t fi : vfaces_[a]) {
            const Face& f = faces_[fi];
            if (f[0] == b || f[1] == b || f[2] == b) out.push_back(fi);
        }
        return out;
    }

    Vec3 placement(std::uint32_t a, std::uint32_t b) const {
        Quadric q = quadric_[a] + quadric_[b];
        Eigen::Matrix3d m = q.topLeftCorner<3, 3>();
        Vec3 mid = 0.5 * (pos_[a] + pos_[b]);
        if (std::abs(m.determinant()) < kSingularDet) return mid;
        Vec3 x = m.fullPivLu().solve(-q.topRightCorner<3, 1>());
        // A nearly singular system can place the vertex far off the surface.
        double edge = (pos_[a] - pos_[b]).norm();
        if (!x.allFinite() || (x - mid).norm() > 2.0 * edge) return mid;
        return x;
    }

    double cost_at(std::uint32_t a, std::uint32_t b, const Vec3& x) const {
        Eigen::Vector4d h(x.x(), x.y(), x.z(), 1.0);
        return std::max(0.0, h.dot((quadric_[a] + quadric_[b]) * h));
    }

    void push(std::uint32_t a, std::uint32_t b) {
        if (a > b) std::swap(a, b);
        Vec3 x = placement(a, b);
        queue_.push({cost_at(a, b, x), a, b, stamp_[a], stamp_[b]});
    }

    bool collapse_is_legal(std::uint32_t a, std::uint32_t b, const Vec3& target) const {
        auto shared = shared_faces(a, b);
        if (shared.empty() || shared.size() > 2) return false;

        std::vector<std::uint32_t> opposite;
        for (std::uint32_t fi : shared) {
            for (std::uint32_t w : faces_[fi]) {
                if (w != a && w != b) opposite.push_back(w);
            }
        }
        std::sort(opposite.begin(), opposite.end());

        auto na = neighbors(a);
        auto nb = neighbors(b);
        std::vector<std::uint32_t> common;
        std::set_intersection(na.begin(), na.end(), nb.begin(), nb.end(), std::back_inserter(common));
        if (common != opposite) return false;
        if (shared.size() == 2 && is_boundary_vertex(a) && is_boundary_vertex(b)) return false;

        auto in_shared = [&](std::uint32_t fi) {
            return std::find(shared.begin(), shared.end(), fi) != shared.end();
        };

        // Faces of b that would coincide with an existing face of a.
        for (std::uint32_t fb : vfaces_[b]) {
            if (in_shared(fb)) continue;
            Face moved = faces_[fb];
            for (auto& w : moved) if (w == b) w = a;
            std::sort(moved.begin(), moved.end());
            for (std::uint32_t fa : vfaces_[a]) {
                if (in_shared(fa)) continue;
                Face existing = faces_[fa];
                std::sort(existing.begin(), existing.end());
                if (existing == moved) return false;
            }
        }

        for (std::uint32_t v : {a, b}) {
            for (std::uint32_t fi : vfaces_[v]) {
                if (in_shared(fi)) continue;
                const Face& f = faces_[fi];
                std::array<Vec3, 3> p{pos_[f[0]], pos_[f[1]], pos_[f[2]]};
                Vec3 before = (p[1] - p[0]).cross(p[2] - p[0]);
                for (int k = 0; k < 3; ++k) {
                    if (f[k] == a || f[k] == b) p[k] = target;
                }
                Vec3 after = (p[1] - p[0]).cross(p[2] - p[0]);
                double lb = before.norm(), la = after.norm();
                if (la <= 1e-14 * std::max(1.0, lb)) return false;
                if (lb > 0.0 && before.dot(after) < kFoldCos * lb * la) return false;
            }
        }
        return true;
    }

    void collapse(std::uint32_t a, std::uint32_t b, const Vec3& target) {
        auto shared = shared_faces(a, b);
        for (std::uint32_t fi : shared) {
            face_alive_[fi] = 0;
            --alive_faces_;
            for (std::uint32_t w : faces_[fi]) {
                auto& list = vfaces_[w];
                list.erase(std::remove(list.begin(), list.end(), fi), list.end());
            }
        }
        for (std::uint32_t fi : vfaces_[b]) {
            for (auto& w : faces_[fi]) if (w == b) w = a;
            vfaces_[a].push_back(fi);
        }
        std::sort(vfaces_[a].begin(), vfaces_[a].end());
        vfaces_[b].clear();
        vertex_alive_[b] = 0;
        pos_[a] = target;
        quadric_[a] += quadric_[b];
        ++stamp_[a];
        ++stamp_[b];
        for (std::uint32_t w : neighbors(a)) push(a, w);
    }

    DecimationResult compact(bool reached) const {
        std::vector<std::uint32_t> remap(pos_.size(), std::numeric_limits<std::uint32_t>::max());
        DecimationResult result;
        std::vector<Vec3> vertices;
        for (std::uint32_t v = 0; v < pos_.size(); ++v) {
            if (!vertex_alive_[v]) continue;
            remap[v] = static_cast<std::uint32_t>(vertices.size());
            vertices.push_back(pos_[v]);
            result.origin.push_back(v);
        }
        std::vector<Face> faces;
        for (std::uint32_t fi = 0; fi < faces_.size(); ++fi) {
            if (!face_alive_[fi]) continue;
            const Face& f = faces_[fi];
            faces.push_back({remap[f[0]], remap[f[1]], remap[f[2]]});
        }
        result.mesh = make_mesh(std::move(vertices), std::move(faces));
        result.reached_target = reached;
        return result;
    }

    std::vector<Vec3> pos_;
    std::vector<Face> faces_;
    std::vector<char> face_alive_;
    std::vector<char> vertex_alive_;
    std::vector<std::uint32_t> stamp_;
    std::vector<Quadric> quadric_;
    std::vector<std::vector<std::uint32_t>> vfaces_;
    std::size_t alive_faces_;
    std::priority_queue<Candidate, std::vector<Candidate>, CandidateAfter> queue_;
};

}  // namespace

DecimationResult decimate(const Mesh& mesh, std::size_t target_faces) {
    if (target_faces < 4) throw std::invalid_argument("decimate: target_faces must be >= 4");
    if (mesh.faces.size() <= target_faces) {
        DecimationResult same;
        same.mesh = mesh;
        same.origin.resize(mesh.vertices.size());
        for (std::uint32_t i = 0; i < same.origin.size(); ++i) same.origin[i] = i;
        return same;
    }
    return Decimator(mesh).run(target_faces);
}

std::size_t face_target_for_vertices(const Mesh& mesh, std::size_t target_vertices) {
    long chi = euler_characteristic(mesh);
    long faces = 2 * (static_cast<long>(target_vertices) - chi);
    return static_cast<std::size_t>(std::max<long>(4, faces));
}

std::vector<std::uint32_t> nearest_vertex_map(const Mesh& fine, const Mesh& coarse) {
    if (fine.vertices.empty()) throw DegenerateMesh("fine level has no vertices");
    std::vector<std::uint32_t> seeds(coarse.vertices.size());
    for (std::size_t c = 0; c < coarse.vertices.size(); ++c) {
        double best = std::numeric_limits<double>::infinity();
        std::uint32_t arg = 0;
        for (std::uint32_t f = 0; f < fine.vertices.size(); ++f) {
            double d = (fine.vertices[f] - coarse.vertices[c]).squaredNorm();
            if (d < best) {
                best = d;
                arg = f;
            }
        }
        seeds[c] = arg;
    }
    return seeds;
}

MeshHierarchy build_hierarchy(const Mesh& mesh, int depth, double vertex_ratio) {
    if (depth < 1) throw std::invalid_argument("build_hierarchy: depth must be >= 1");
    if (!(vertex_ratio > 0.0 && vertex_ratio < 1.0)) {
        throw std::invalid_argument("build_hierarchy: vertex_ratio must lie in (0, 1)");
    }
    MeshHierarchy h;
    h.levels.push_back(mesh);
    const double v0 = static_cast<double>(mesh.vertices.size());
    for (int level = 1; level <= depth; ++level) {
        const Mesh& prev = h.levels.back();
        auto target_v = static_cast<std::size_t>(std::ceil(v0 * std::pow(vertex_ratio, level)));
        DecimationResult res = decimate(prev, face_target_for_vertices(prev, target_v));
        if (res.mesh.vertices.size() >= prev.vertices.size()) {
            throw CannotDecimate("level " + std::to_string(level) + " did not shrink (" +
                                 std::to_string(prev.vertices.size()) + " vertices)");
        }
        if (!res.reached_target) {
            h.warnings.push_back("level " + std::to_string(level) + " stopped early at " +
                                 std::to_string(res.mesh.faces.size()) + " faces");
        }
        h.seed_maps.push_back(nearest_vertex_map(prev, res.mesh));
        h.levels.push_back(std::move(res.mesh));
    }
    return h;
}

}  // namespace pspool
