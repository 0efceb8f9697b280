#pragma once

// Brute-force references the library is checked against. Everything here is
// dense, quadratic or worse, and written without calling the code under test.

#include "pspool/correspondence.hpp"
#include "pspool/mesh.hpp"
#include "pspool/nn.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <vector>

namespace oracle {

using pspool::Matrix;
using pspool::Mesh;

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double lo = -1.0,
                            double hi = 1.0) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, lo, hi);
    return m;
}

/// Bellman-Ford over the undirected edge list of `mesh`.
inline std::vector<double> bellman_ford(const Mesh& mesh, std::uint32_t source) {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> d(mesh.vertices.size(), inf);
    d[source] = 0.0;
    for (std::size_t round = 0; round < mesh.vertices.size(); ++round) {
        bool changed = false;
        for (const auto& [a, b] : mesh.edges) {
            const double w = (mesh.vertices[a] - mesh.vertices[b]).norm();
            if (d[a] + w < d[b]) d[b] = d[a] + w, changed = true;
            if (d[b] + w < d[a]) d[a] = d[b] + w, changed = true;
        }
        if (!changed) break;
    }
    return d;
}

/// Dense raw weight matrix of a correspondence (coarse x fine).
inline Matrix dense_raw(const pspool::CorrespondenceSet& c) {
    Matrix p = Matrix::Zero(static_cast<Eigen::Index>(c.coarse_count), static_cast<Eigen::Index>(c.fine_count));
    for (std::size_t i = 0; i < c.pool_sets.size(); ++i) {
        for (const auto& e : c.pool_sets[i]) p(static_cast<Eigen::Index>(i), e.index) += e.weight;
    }
    return p;
}

inline Matrix normalize_rows(Matrix m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < m.cols(); ++j) s += m(i, j);
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) /= s;
    }
    return m;
}

inline Matrix dense_multiply(const Matrix& a, const Matrix& b) {
    Matrix c = Matrix::Zero(a.rows(), b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index k = 0; k < a.cols(); ++k)
            for (Eigen::Index j = 0; j < b.cols(); ++j) c(i, j) += a(i, k) * b(k, j);
    return c;
}

inline Matrix dense_pool_max(const pspool::CorrespondenceSet& c, const Matrix& x) {
    Matrix out(static_cast<Eigen::Index>(c.coarse_count), x.cols());
    for (std::size_t i = 0; i < c.pool_sets.size(); ++i) {
        for (Eigen::Index ch = 0; ch < x.cols(); ++ch) {
            double m = -std::numeric_limits<double>::infinity();
            for (const auto& e : c.pool_sets[i]) m = std::max(m, x(e.index, ch));
            out(static_cast<Eigen::Index>(i), ch) = m;
        }
    }
    return out;
}

/// Random correspondence in which every fine node has a parent and every
/// coarse node has between 1 and k children.
inline pspool::CorrespondenceSet random_correspondence(std::mt19937_64& rng, std::size_t n_fine, std::size_t n_coarse,
                                                       int k) {
    pspool::CorrespondenceSet c;
    c.fine_count = n_fine;
    c.coarse_count = n_coarse;
    c.k_s = k;
    c.k_aug = k;
    std::vector<std::set<std::uint32_t>> sets(n_coarse);
    for (std::uint32_t j = 0; j < n_fine; ++j) sets[rng() % n_coarse].insert(j);
    for (auto& s : sets) {
        const std::size_t extra = rng() % static_cast<std::size_t>(k);
        for (std::size_t t = 0; t < extra; ++t) s.insert(static_cast<std::uint32_t>(rng() % n_fine));
        if (s.empty()) s.insert(static_cast<std::uint32_t>(rng() % n_fine));
    }
    c.pool_sets.resize(n_coarse);
    c.unpool_sets.resize(n_fine);
    for (std::uint32_t i = 0; i < n_coarse; ++i) {
        for (std::uint32_t j : sets[i]) {
            const double w = uniform(rng, 0.05, 10.0);
            c.pool_sets[i].push_back({j, w});
        }
    }
    for (std::uint32_t i = 0; i < n_coarse; ++i)
        for (const auto& e : c.pool_sets[i]) c.unpool_sets[e.index].push_back({i, e.weight});
    return c;
}

/// Per-face cross products accumulated onto corners, then normalized.
inline Matrix brute_normals(const Mesh& m) {
    Matrix n = Matrix::Zero(static_cast<Eigen::Index>(m.vertices.size()), 3);
    for (const auto& f : m.faces) {
        const Eigen::Vector3d a = m.vertices[f[0]], b = m.vertices[f[1]], c = m.vertices[f[2]];
        const Eigen::Vector3d cr((b - a).y() * (c - a).z() - (b - a).z() * (c - a).y(),
                                 (b - a).z() * (c - a).x() - (b - a).x() * (c - a).z(),
                                 (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x());
        for (auto v : f) n.row(v) += cr.transpose();
    }
    for (Eigen::Index i = 0; i < n.rows(); ++i) {
        const double len = std::sqrt(n.row(i).squaredNorm());
        if (len > 0) n.row(i) /= len;
    }
    return n;
}

/// Dense GAT: node i attends over {j : adj(i, j)} including itself.
inline Matrix dense_gat(const Matrix& x, const Matrix& w, const Matrix& a_src, const Matrix& a_dst, const Matrix& bias,
                        const std::vector<std::vector<bool>>& adj, int heads, double slope,
                        std::vector<std::vector<double>>* alpha_sums = nullptr) {
    const Matrix h = dense_multiply(x, w);
    const Eigen::Index n = x.rows(), out = w.cols(), dh = out / heads;
    Matrix y(n, out);
    if (alpha_sums) alpha_sums->assign(static_cast<std::size_t>(n), std::vector<double>(heads, 0.0));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int hd = 0; hd < heads; ++hd) {
            std::vector<double> e(static_cast<std::size_t>(n), -std::numeric_limits<double>::infinity());
            double mx = -std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < n; ++j) {
                if (!(adj[i][j] || i == j)) continue;
                double s = 0.0;
                for (Eigen::Index c = 0; c < dh; ++c) {
                    s += a_dst(0, hd * dh + c) * h(i, hd * dh + c) + a_src(0, hd * dh + c) * h(j, hd * dh + c);
                }
                e[j] = s > 0 ? s : slope * s;
                mx = std::max(mx, e[j]);
            }
            double z = 0.0;
            for (Eigen::Index j = 0; j < n; ++j)
                if (std::isfinite(e[j])) z += std::exp(e[j] - mx);
            for (Eigen::Index c = 0; c < dh; ++c) y(i, hd * dh + c) = bias(0, hd * dh + c);
            for (Eigen::Index j = 0; j < n; ++j) {
                if (!std::isfinite(e[j])) continue;
                const double a = std::exp(e[j] - mx) / z;
                if (alpha_sums) (*alpha_sums)[i][hd] += a;
                for (Eigen::Index c = 0; c < dh; ++c) y(i, hd * dh + c) += a * h(j, hd * dh + c);
            }
        }
    }
    return y;
}

inline double elu(double v) { return v > 0 ? v : std::exp(v) - 1.0; }

/// Affine chain with ELU between layers, final layer linear.
inline Matrix mlp(const Matrix& x, const std::vector<std::pair<Matrix, Matrix>>& layers) {
    Matrix h = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Matrix next = dense_multiply(h, layers[l].first);
        for (Eigen::Index i = 0; i < next.rows(); ++i)
            for (Eigen::Index j = 0; j < next.cols(); ++j) {
                next(i, j) += layers[l].second(0, j);
                if (l + 1 < layers.size()) next(i, j) = elu(next(i, j));
            }
        h = next;
    }
    return h;
}

/// Central differences of a scalar function with respect to every entry of `m`.
inline Matrix numeric_gradient(Matrix& m, const std::function<double()>& f, double step = 1e-5) {
    Matrix g(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        const double keep = m.data()[i];
        m.data()[i] = keep + step;
        const double up = f();
        m.data()[i] = keep - step;
        const double down = f();
        m.data()[i] = keep;
        g.data()[i] = (up - down) / (2.0 * step);
    }
    return g;
}

/// ||a - b|| / max(||a||, ||b||), zero when both vanish.
inline double relative_error(const Matrix& a, const Matrix& b) {
    const double scale = std::max(a.norm(), b.norm());
    return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

/// Relative error for gradient checks; the denominator never drops below
/// `floor`, since central differences carry ~1e-11 absolute round-off.
inline double gradient_error(const Matrix& analytic, const Matrix& numeric, double floor = 1e-6) {
    return (analytic - numeric).norm() / std::max({analytic.norm(), numeric.norm(), floor});
}

}  // namespace oracle
