#include "oracles.hpp"

#include "pspool/correspondence.hpp"
#include "pspool/errors.hpp"
#include "pspool/hierarchy.hpp"
#include "pspool/shapes.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>

using namespace pspool;

namespace {

Mesh edge_only(std::vector<Vec3> v, std::vector<Edge> e) {
    Mesh m;
    m.vertices = std::move(v);
    m.edges = std::move(e);
    return m;
}

struct Pair {
    Mesh fine, coarse;
    std::vector<std::uint32_t> seeds;
};

Pair icosphere_pair(int levels, double ratio) {
    MeshHierarchy h = build_hierarchy(canonicalize(shapes::icosphere(levels)), 1, ratio);
    return {h.levels[0], h.levels[1], h.seed_maps[0]};
}

void check_invariants(const CorrespondenceSet& c, int k_s) {
    REQUIRE(c.pool_sets.size() == c.coarse_count);
    REQUIRE(c.unpool_sets.size() == c.fine_count);
    for (const auto& set : c.pool_sets) {
        CHECK(!set.empty());
        CHECK(set.size() <= static_cast<std::size_t>(k_s));
        bool positive = false;
        for (std::size_t k = 0; k < set.size(); ++k) {
            CHECK(std::isfinite(set[k].weight));
            CHECK(set[k].weight >= 0.0);
            positive = positive || set[k].weight > 0.0;
            if (k) CHECK(set[k - 1].index < set[k].index);
        }
        CHECK(positive);
    }
    for (const auto& set : c.unpool_sets) {
        CHECK(!set.empty());
        CHECK(set.size() <= static_cast<std::size_t>(k_s));
    }
    // unpool_sets is the transpose of pool_sets
    std::set<std::tuple<std::uint32_t, std::uint32_t, double>> fwd, bwd;
    for (std::uint32_t i = 0; i < c.coarse_count; ++i)
        for (const auto& e : c.pool_sets[i]) fwd.insert({i, e.index, e.weight});
    for (std::uint32_t j = 0; j < c.fine_count; ++j)
        for (const auto& e : c.unpool_sets[j]) bwd.insert({e.index, j, e.weight});
    CHECK(fwd == bwd);
}

}  // namespace

TEST_CASE("geodesic distances on small graphs") {
    SUBCASE("path with lengths 1 and 2") {
        Mesh m = edge_only({{0, 0, 0}, {1, 0, 0}, {1, 2, 0}}, {{0, 1}, {1, 2}});
        auto d = geodesic_distances(m, 0);
        CHECK(d[2] == doctest::Approx(3.0).epsilon(1e-15));
        auto cut = geodesic_distances(m, 0, 2.0);
        CHECK(std::isinf(cut[2]));
        CHECK(cut[1] == doctest::Approx(1.0));
    }
    SUBCASE("equilateral triangle") {
        Mesh m = make_mesh({{0, 0, 0}, {1, 0, 0}, {0.5, std::sqrt(3.0) / 2, 0}}, {{0, 1, 2}});
        for (std::uint32_t s = 0; s < 3; ++s) {
            auto d = geodesic_distances(m, s);
            for (std::uint32_t t = 0; t < 3; ++t) CHECK(d[t] == doctest::Approx(s == t ? 0.0 : 1.0).epsilon(1e-12));
        }
    }
    SUBCASE("icosphere against Bellman-Ford") {
        std::mt19937_64 rng(1);
        Mesh m = shapes::icosphere(2);  // 162 vertices
        for (auto& p : m.vertices) p *= oracle::uniform(rng, 0.8, 1.2);
        for (std::uint32_t s : {0u, 17u, 80u, 161u}) {
            auto d = geodesic_distances(m, s);
            auto e = oracle::bellman_ford(m, s);
            for (std::size_t v = 0; v < d.size(); ++v) CHECK(std::abs(d[v] - e[v]) < 1e-12);
        }
    }
    SUBCASE("unreachable vertices are infinite") {
        Mesh m = edge_only({{0, 0, 0}, {1, 0, 0}, {5, 0, 0}, {6, 0, 0}}, {{0, 1}, {2, 3}});
        auto d = geodesic_distances(m, 0);
        CHECK(std::isinf(d[2]));
        CHECK(std::isinf(d[3]));
    }
}

TEST_CASE("geodesic k-NN settles by distance then index") {
    // square: 0-1-2-3-0 with unit sides; 1 and 3 are tied from 0
    Mesh m = edge_only({{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}}, {{0, 1}, {1, 2}, {2, 3}, {0, 3}});
    auto hits = geodesic_knn(make_edge_graph(m), 0, 3);
    REQUIRE(hits.size() == 3);
    CHECK(hits[0].vertex == 0);
    CHECK(hits[1].vertex == 1);
    CHECK(hits[2].vertex == 3);
    CHECK(geodesic_knn(make_edge_graph(m), 0, 10).size() == 4);
}

TEST_CASE("weight function") {
    CHECK(weight_fn(0.0) == doctest::Approx(1000.0).epsilon(1e-15));
    CHECK(weight_fn(kWeightEpsilon) == doctest::Approx(500.0).epsilon(1e-15));
    std::mt19937_64 rng(7);
    for (int i = 0; i < 1000; ++i) {
        const double d = oracle::uniform(rng, 0.0, 10.0);
        CHECK(weight_fn(d) > 0.0);
        CHECK(weight_fn(2.0 * d) <= weight_fn(d));
    }
}

TEST_CASE("three fine nodes gathered by one coarse node") {
    Mesh fine = make_mesh({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2}});
    Mesh coarse;
    coarse.vertices = {{0.3, 0.3, 0}};
    CorrespondenceSet c = build_correspondence(fine, coarse, {0}, 3, 3);
    REQUIRE(c.pool_sets.size() == 1);
    std::vector<std::uint32_t> idx;
    for (const auto& e : c.pool_sets[0]) idx.push_back(e.index);
    CHECK(idx == std::vector<std::uint32_t>{0, 1, 2});
    check_invariants(c, 3);
}

TEST_CASE("k_s = 1 on an identity level is the identity bijection") {
    Mesh m = canonicalize(shapes::icosphere(2));
    std::vector<std::uint32_t> seeds(m.vertex_count());
    std::iota(seeds.begin(), seeds.end(), 0u);
    for (int k_aug : {1, 2, 4}) {
        CorrespondenceSet c = build_correspondence(m, m, seeds, 1, k_aug);
        for (std::uint32_t i = 0; i < m.vertex_count(); ++i) {
            REQUIRE(c.pool_sets[i].size() == 1);
            CHECK(c.pool_sets[i][0].index == i);
            REQUIRE(c.unpool_sets[i].size() == 1);
            CHECK(c.unpool_sets[i][0].index == i);
        }
        CHECK(c.repaired.empty());
    }
}

TEST_CASE("icosphere pairs: caps, coverage, locality") {
    for (auto [levels, ratio, k_s, k_aug] : {std::tuple{2, 0.25, 4, 8}, std::tuple{3, 0.25, 4, 8},
                                             std::tuple{3, 0.25, 8, 16}, std::tuple{3, 0.5, 2, 4},
                                             std::tuple{2, 0.25, 8, 8}}) {
        CAPTURE(levels);
        CAPTURE(k_s);
        CAPTURE(k_aug);
        Pair p = icosphere_pair(levels, ratio);
        CorrespondenceSet c = build_correspondence(p.fine, p.coarse, p.seeds, k_s, k_aug);
        check_invariants(c, k_s);
        // locality: non-repaired links lie within the k_aug-th smallest seed distance
        std::set<std::uint32_t> repaired(c.repaired.begin(), c.repaired.end());
        for (std::uint32_t i = 0; i < c.coarse_count; ++i) {
            auto d = oracle::bellman_ford(p.fine, p.seeds[i]);
            std::vector<double> sorted = d;
            std::sort(sorted.begin(), sorted.end());
            const double radius = sorted[std::min<std::size_t>(sorted.size(), k_aug) - 1];
            for (const auto& e : c.pool_sets[i]) {
                if (repaired.count(e.index)) continue;
                CHECK(d[e.index] <= radius + 1e-12);
                CHECK(e.weight == doctest::Approx(weight_fn(d[e.index])).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("repair pass reattaches every orphan") {
    // k_aug = k_s leaves fine nodes far from any seed without parents
    Pair p = icosphere_pair(3, 0.5);
    CorrespondenceSet c = build_correspondence(p.fine, p.coarse, p.seeds, 2, 2);
    check_invariants(c, 2);
    CHECK(!c.repaired.empty());
}

TEST_CASE("sets never cross connected components") {
    Mesh a = shapes::icosahedron();
    std::vector<Vec3> v = a.vertices;
    std::vector<Face> f = a.faces;
    const auto n = static_cast<std::uint32_t>(v.size());
    for (const auto& p : a.vertices) v.push_back(p + Vec3(10, 0, 0));
    for (const auto& face : a.faces) f.push_back({face[0] + n, face[1] + n, face[2] + n});
    Mesh fine = make_mesh(v, f);
    Mesh coarse;
    coarse.vertices = {fine.vertices[0], fine.vertices[5], fine.vertices[n], fine.vertices[n + 7]};
    CorrespondenceSet c = build_correspondence(fine, coarse, {0, 5, n, n + 7}, 8, 16);
    check_invariants(c, 8);
    for (std::uint32_t i = 0; i < 4; ++i) {
        const bool left = i < 2;
        for (const auto& e : c.pool_sets[i]) CHECK((e.index < n) == left);
    }
}

TEST_CASE("too few coarse slots cannot cover the fine level") {
    Pair p = icosphere_pair(3, 0.25);
    REQUIRE(p.coarse.vertices.size() * 2 < p.fine.vertices.size());
    CHECK_THROWS_AS(build_correspondence(p.fine, p.coarse, p.seeds, 2, 2), DisconnectedSeed);
}

TEST_CASE("determinism across runs and thread counts") {
    Pair p = icosphere_pair(3, 0.25);
    CorrespondenceSet a = build_correspondence(p.fine, p.coarse, p.seeds, 8, 16, 1);
    CorrespondenceSet b = build_correspondence(p.fine, p.coarse, p.seeds, 8, 16, 4);
    REQUIRE(a.pool_sets.size() == b.pool_sets.size());
    for (std::size_t i = 0; i < a.pool_sets.size(); ++i) {
        REQUIRE(a.pool_sets[i].size() == b.pool_sets[i].size());
        for (std::size_t k = 0; k < a.pool_sets[i].size(); ++k) {
            CHECK(a.pool_sets[i][k].index == b.pool_sets[i][k].index);
            CHECK(a.pool_sets[i][k].weight == b.pool_sets[i][k].weight);
        }
    }
    CHECK(a.repaired == b.repaired);
}

TEST_CASE("argument and seed errors") {
    Pair p = icosphere_pair(2, 0.25);
    CHECK_THROWS_AS(build_correspondence(p.fine, p.coarse, p.seeds, 0, 4), std::invalid_argument);
    CHECK_THROWS_AS(build_correspondence(p.fine, p.coarse, p.seeds, 4, 2), std::invalid_argument);
    auto bad = p.seeds;
    bad[0] = static_cast<std::uint32_t>(p.fine.vertex_count());
    CHECK_THROWS_AS(build_correspondence(p.fine, p.coarse, bad, 4, 8), DisconnectedSeed);
    CorrespondenceSet d = build_correspondence(p.fine, p.coarse, p.seeds);
    CHECK(d.k_s == kDefaultKs);
    CHECK(d.k_aug == 2 * kDefaultKs);
}
