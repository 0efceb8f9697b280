#include "oracles.hpp"

#include "pspool/errors.hpp"
#include "pspool/hierarchy.hpp"
#include "pspool/shapes.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

using namespace pspool;

namespace {

bool same_mesh(const Mesh& a, const Mesh& b) {
    if (a.faces != b.faces || a.vertices.size() != b.vertices.size()) return false;
    for (std::size_t i = 0; i < a.vertices.size(); ++i) {
        if (a.vertices[i] != b.vertices[i]) return false;
    }
    return true;
}

Mesh thousand_vertex_sphere() {
    // 32 * 31 + 2 = 994 vertices
    return canonicalize(shapes::uv_sphere(32, 32));
}

}  // namespace

TEST_CASE("decimate leaves a mesh already at target untouched") {
    Mesh ico = shapes::icosahedron();
    DecimationResult r = decimate(ico, 20);
    CHECK(same_mesh(r.mesh, ico));
    CHECK(r.reached_target);
    CHECK_THROWS_AS(decimate(ico, 3), std::invalid_argument);
}

TEST_CASE("icosphere 320 -> 80 faces stays a closed manifold") {
    Mesh sphere = shapes::icosphere(2);
    REQUIRE(sphere.face_count() == 320);
    DecimationResult r = decimate(sphere, 80);
    CHECK(r.reached_target);
    CHECK(r.mesh.face_count() <= 80);
    CHECK(r.mesh.face_count() >= 72);
    CHECK(is_manifold(r.mesh));
    CHECK(euler_characteristic(r.mesh) == 2);
    // every edge of a closed mesh borders exactly two faces
    std::map<Edge, int> uses;
    for (const auto& f : r.mesh.faces)
        for (int k = 0; k < 3; ++k) ++uses[{std::min(f[k], f[(k + 1) % 3]), std::max(f[k], f[(k + 1) % 3])}];
    for (const auto& [e, n] : uses) CHECK(n == 2);
    REQUIRE(r.origin.size() == r.mesh.vertex_count());
    for (std::size_t i = 0; i < r.origin.size(); ++i) CHECK(r.origin[i] < sphere.vertex_count());
}

TEST_CASE("decimation of a torus keeps genus") {
    Mesh t = shapes::torus(24, 12, 0.35);
    DecimationResult r = decimate(t, 150);
    CHECK(r.mesh.face_count() <= 150);
    CHECK(r.mesh.face_count() >= 135);
    CHECK(euler_characteristic(r.mesh) == 0);
    CHECK(is_manifold(r.mesh));
}

TEST_CASE("geometric level schedule, depth 2, ratio 0.25") {
    Mesh m = thousand_vertex_sphere();
    MeshHierarchy h = build_hierarchy(m, 2, 0.25);
    REQUIRE(h.levels.size() == 3);
    REQUIRE(h.seed_maps.size() == 2);
    const double v0 = static_cast<double>(m.vertex_count());
    CHECK(h.levels[0].vertex_count() == m.vertex_count());
    const double t1 = std::ceil(v0 * 0.25), t2 = std::ceil(v0 * 0.0625);
    CHECK(std::abs(static_cast<double>(h.levels[1].vertex_count()) - t1) <= 0.1 * t1);
    CHECK(std::abs(static_cast<double>(h.levels[2].vertex_count()) - t2) <= 0.1 * t2);
    CHECK(h.depth() == 2);
}

TEST_CASE("hierarchy invariants") {
    for (int depth : {1, 2, 3}) {
        CAPTURE(depth);
        Mesh m = thousand_vertex_sphere();
        MeshHierarchy h = build_hierarchy(m, depth, 0.25);
        REQUIRE(h.levels.size() == static_cast<std::size_t>(depth) + 1);
        for (std::size_t l = 1; l < h.levels.size(); ++l) {
            const Mesh& fine = h.levels[l - 1];
            const Mesh& coarse = h.levels[l];
            CHECK(coarse.vertex_count() < fine.vertex_count());
            REQUIRE(h.seed_maps[l - 1].size() == coarse.vertex_count());
            double radius = 0;
            Vec3 center = Vec3::Zero();
            for (const auto& p : fine.vertices) center += p;
            center /= static_cast<double>(fine.vertex_count());
            for (const auto& p : fine.vertices) radius = std::max(radius, (p - center).norm());
            for (std::size_t c = 0; c < coarse.vertex_count(); ++c) {
                const auto s = h.seed_maps[l - 1][c];
                REQUIRE(s < fine.vertex_count());
                CHECK((fine.vertices[s] - center).norm() <= radius + 1e-12);
                // nearest by brute force, ties to the lower index
                std::uint32_t best = 0;
                double bd = std::numeric_limits<double>::infinity();
                for (std::uint32_t j = 0; j < fine.vertex_count(); ++j) {
                    const double d = (fine.vertices[j] - coarse.vertices[c]).squaredNorm();
                    if (d < bd) bd = d, best = j;
                }
                CHECK(s == best);
            }
        }
    }
}

TEST_CASE("depth 1 on an icosphere: survivor seeds are injective") {
    Mesh sphere = shapes::icosphere(3);
    for (double ratio : {0.25, 0.75}) {
        CAPTURE(ratio);
        MeshHierarchy h = build_hierarchy(sphere, 1, ratio);
        REQUIRE(h.levels.size() == 2);
        DecimationResult d = decimate(sphere, face_target_for_vertices(sphere, static_cast<std::size_t>(std::ceil(
                                                                                   sphere.vertex_count() * ratio))));
        REQUIRE(d.mesh.vertex_count() == h.levels[1].vertex_count());
        // coarse vertices still sitting on their original fine vertex map to it, one-to-one
        std::set<std::uint32_t> hit;
        std::size_t survivors = 0;
        for (std::size_t c = 0; c < h.levels[1].vertex_count(); ++c) {
            if (h.levels[1].vertices[c] != sphere.vertices[d.origin[c]]) continue;
            ++survivors;
            CHECK(h.seed_maps[0][c] == d.origin[c]);
            CHECK(hit.insert(h.seed_maps[0][c]).second);
        }
        if (ratio > 0.5) CHECK(survivors > 0);
    }
}

TEST_CASE("depth 3 gives four levels") {
    MeshHierarchy h = build_hierarchy(thousand_vertex_sphere(), 3, 0.25);
    CHECK(h.levels.size() == 4);
}

TEST_CASE("hierarchy construction is deterministic") {
    Mesh m = shapes::torus(40, 20, 0.3);
    MeshHierarchy a = build_hierarchy(m, 2, 0.25);
    MeshHierarchy b = build_hierarchy(m, 2, 0.25);
    REQUIRE(a.levels.size() == b.levels.size());
    for (std::size_t l = 0; l < a.levels.size(); ++l) CHECK(same_mesh(a.levels[l], b.levels[l]));
    CHECK(a.seed_maps == b.seed_maps);
}

TEST_CASE("bad arguments") {
    CHECK_THROWS(build_hierarchy(shapes::icosphere(2), 0, 0.25));
    CHECK_THROWS(build_hierarchy(shapes::icosphere(2), 2, 1.0));
    CHECK_THROWS(build_hierarchy(shapes::icosphere(2), 2, 0.0));
    // a tetrahedron cannot lose a vertex and stay a closed triangle mesh
    CHECK_THROWS_AS(build_hierarchy(shapes::tetrahedron(), 1, 0.5), CannotDecimate);
}
