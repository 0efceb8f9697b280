#include "pspool/shapes.hpp"

#include <cmath>
#include <map>
#include <numbers>

namespace pspool::shapes {

Mesh icosahedron() {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> v = {
        {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
        {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
        {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1},
    };
    for (auto& p : v) p.normalize();
    std::vector<Face> f = {
        {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
        {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
        {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1},
    };
    return make_mesh(std::move(v), std::move(f));
}

Mesh icosphere(int levels) {
    Mesh mesh = icosahedron();
    for (int l = 0; l < levels; ++l) {
        std::vector<Vec3> v = mesh.vertices;
        std::vector<Face> faces;
        std::map<Edge, std::uint32_t> midpoint;
        auto mid = [&](std::uint32_t a, std::uint32_t b) {
            Edge key{std::min(a, b), std::max(a, b)};
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            v.push_back((0.5 * (v[a] + v[b])).normalized());
            auto idx = static_cast<std::uint32_t>(v.size() - 1);
            midpoint.emplace(key, idx);
            return idx;
        };
        for (const Face& f : mesh.faces) {
            std::uint32_t ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
            faces.push_back({f[0], ab, ca});
            faces.push_back({f[1], bc, ab});
            faces.push_back({f[2], ca, bc});
            faces.push_back({ab, bc, ca});
        }
        mesh = make_mesh(std::move(v), std::move(faces));
    }
    return mesh;
}

Mesh uv_sphere(int slices, int stacks) {
    std::vector<Vec3> v;
    std::vector<Face> f;
    v.emplace_back(0, 0, 1);
    for (int i = 1; i < stacks; ++i) {
        double theta = std::numbers::pi * i / stacks;
        for (int j = 0; j < slices; ++j) {
            double phi = 2.0 * std::numbers::pi * j / slices;
            v.emplace_back(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta));
        }
    }
    v.emplace_back(0, 0, -1);
    const auto south = static_cast<std::uint32_t>(v.size() - 1);
    auto ring = [&](int i, int j) { return static_cast<std::uint32_t>(1 + (i - 1) * slices + (j % slices)); };
    for (int j = 0; j < slices; ++j) f.push_back({0, ring(1, j), ring(1, j + 1)});
    for (int i = 1; i + 1 < stacks; ++i) {
        for (int j = 0; j < slices; ++j) {
            f.push_back({ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)});
            f.push_back({ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)});
        }
    }
    for (int j = 0; j < slices; ++j) f.push_back({south, ring(stacks - 1, j + 1), ring(stacks - 1, j)});
    return make_mesh(std::move(v), std::move(f));
}

Mesh torus(int rings, int sides, double minor_radius) {
    std::vector<Vec3> v;
    std::vector<Face> f;
    for (int i = 0; i < rings; ++i) {
        double u = 2.0 * std::numbers::pi * i / rings;
        for (int j = 0; j < sides; ++j) {
            double w = 2.0 * std::numbers::pi * j / sides;
            double r = 1.0 + minor_radius * std::cos(w);
            v.emplace_back(r * std::cos(u), r * std::sin(u), minor_radius * std::sin(w));
        }
    }
    auto at = [&](int i, int j) { return static_cast<std::uint32_t>((i % rings) * sides + (j % sides)); };
    for (int i = 0; i < rings; ++i) {
        for (int j = 0; j < sides; ++j) {
            f.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1)});
            f.push_back({at(i, j), at(i + 1, j + 1), at(i, j + 1)});
        }
    }
    return make_mesh(std::move(v), std::move(f));
}

Mesh tetrahedron() {
    std::vector<Vec3> v = {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
    std::vector<Face> f = {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}};
    return make_mesh(std::move(v), std::move(f));
}

}  // namespace pspool::shapes
