#include "pspool/sparse.hpp"

#include "pspool/errors.hpp"
#include "pspool/parallel.hpp"

#include <algorithm>
#include <string>

namespace pspool {

namespace {

std::string dims(std::size_t r, std::size_t c) {
    return std::to_string(r) + "x" + std::to_string(c);
}

SparseOperator from_sets(const std::vector<std::vector<WeightedIndex>>& sets, std::size_t cols) {
    SparseOperator op;
    op.rows = sets.size();
    op.cols = cols;
    op.offsets.assign(1, 0);
    for (const auto& set : sets) {
        std::vector<WeightedIndex> row = set;
        std::sort(row.begin(), row.end(),
                  [](const WeightedIndex& a, const WeightedIndex& b) { return a.index < b.index; });
        for (std::size_t k = 0; k < row.size(); ++k) {
            if (row[k].index >= cols) throw ShapeMismatch("correspondence index out of range");
            if (k > 0 && row[k].index == row[k - 1].index) throw ShapeMismatch("duplicate correspondence entry");
            if (row[k].weight == 0.0) continue;
            op.indices.push_back(row[k].index);
            op.values.push_back(row[k].weight);
        }
        op.offsets.push_back(static_cast<std::uint32_t>(op.indices.size()));
    }
    return op;
}

}  // namespace

Matrix SparseOperator::to_dense() const {
    Matrix d = Matrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::uint32_t e = offsets[r]; e < offsets[r + 1]; ++e) d(r, indices[e]) = values[e];
    }
    return d;
}

void SparseOperator::check_structure() const {
    if (offsets.size() != rows + 1 || offsets.front() != 0 || offsets.back() != indices.size() ||
        indices.size() != values.size()) {
        throw ShapeMismatch("inconsistent CSR arrays");
    }
    for (std::size_t r = 0; r < rows; ++r) {
        if (offsets[r] > offsets[r + 1]) throw ShapeMismatch("decreasing CSR offsets");
        for (std::uint32_t e = offsets[r]; e < offsets[r + 1]; ++e) {
            if (indices[e] >= cols) throw ShapeMismatch("column index out of range");
            if (e > offsets[r] && indices[e] <= indices[e - 1]) throw ShapeMismatch("unsorted CSR row");
        }
    }
}

SparseOperator identity_operator(std::size_t n) {
    SparseOperator op;
    op.rows = op.cols = n;
    op.offsets.resize(n + 1);
    op.indices.resize(n);
    op.values.assign(n, 1.0);
    for (std::size_t i = 0; i <= n; ++i) op.offsets[i] = static_cast<std::uint32_t>(i);
    for (std::size_t i = 0; i < n; ++i) op.indices[i] = static_cast<std::uint32_t>(i);
    return op;
}

SparseOperator transpose(const SparseOperator& a) {
    SparseOperator t;
    t.rows = a.cols;
    t.cols = a.rows;
    t.offsets.assign(a.cols + 1, 0);
    for (std::uint32_t c : a.indices) ++t.offsets[c + 1];
    for (std::size_t i = 0; i < a.cols; ++i) t.offsets[i + 1] += t.offsets[i];
    t.indices.resize(a.nnz());
    t.values.resize(a.nnz());
    std::vector<std::uint32_t> fill(t.offsets.begin(), t.offsets.end() - 1);
    // Walking rows in order keeps the transposed rows sorted.
    for (std::size_t r = 0; r < a.rows; ++r) {
        for (std::uint32_t e = a.offsets[r]; e < a.offsets[r + 1]; ++e) {
            std::uint32_t slot = fill[a.indices[e]]++;
            t.indices[slot] = static_cast<std::uint32_t>(r);
            t.values[slot] = a.values[e];
        }
    }
    return t;
}

SparseOperator row_normalize(const SparseOperator& a) {
    SparseOperator n = a;
    for (std::size_t r = 0; r < a.rows; ++r) {
        double sum = 0.0;
        for (std::uint32_t e = a.offsets[r]; e < a.offsets[r + 1]; ++e) sum += a.values[e];
        if (!(sum > 0.0)) throw ZeroRow("row " + std::to_string(r) + " sums to " + std::to_string(sum));
        for (std::uint32_t e = a.offsets[r]; e < a.offsets[r + 1]; ++e) n.values[e] = a.values[e] / sum;
    }
    return n;
}

PoolingMatrices build_pooling_matrix(const CorrespondenceSet& corr) {
    if (corr.pool_sets.size() != corr.coarse_count) throw ShapeMismatch("pool_sets size != coarse_count");
    PoolingMatrices m;
    m.raw = from_sets(corr.pool_sets, corr.fine_count);
    m.normalized = row_normalize(m.raw);
    return m;
}

SparseOperator build_unpooling_matrix(const SparseOperator& p_raw) {
    SparseOperator t = transpose(p_raw);
    for (std::size_t r = 0; r < t.rows; ++r) {
        if (t.offsets[r] == t.offsets[r + 1]) {
            throw OrphanRow("fine node " + std::to_string(r) + " has no coarse parent");
        }
    }
    return row_normalize(t);
}

Matrix spmm(const SparseOperator& a, const Matrix& b, int jobs) {
    if (a.cols != static_cast<std::size_t>(b.rows())) {
        throw ShapeMismatch("spmm " + dims(a.rows, a.cols) + " * " + dims(b.rows(), b.cols()));
    }
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(a.rows), b.cols());
    constexpr std::size_t kChunk = 256;
    const std::size_t chunks = (a.rows + kChunk - 1) / kChunk;
    parallel_for(chunks, jobs, [&](std::size_t chunk) {
        const std::size_t end = std::min(a.rows, (chunk + 1) * kChunk);
        for (std::size_t r = chunk * kChunk; r < end; ++r) {
            auto row = out.row(static_cast<Eigen::Index>(r));
            for (std::uint32_t e = a.offsets[r]; e < a.offsets[r + 1]; ++e) {
                row.noalias() += a.values[e] * b.row(a.indices[e]);
            }
        }
    });
    return out;
}

Matrix spmm_transposed(const SparseOperator& a, const Matrix& b) {
    if (a.rows != static_cast<std::size_t>(b.rows())) {
        throw ShapeMismatch("spmm_transposed " + dims(a.rows, a.cols) + "^T * " + dims(b.rows(), b.cols()));
    }
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(a.cols), b.cols());
    for (std::size_t r = 0; r < a.rows; ++r) {
        for (std::uint32_t e = a.offsets[r]; e < a.offsets[r + 1]; ++e) {
            out.row(a.indices[e]).noalias() += a.values[e] * b.row(static_cast<Eigen::Index>(r));
        }
    }
    return out;
}

Matrix pool_mean(const SparseOperator& p_norm, const Matrix& x) { return spmm(p_norm, x); }

MaxPoolResult pool_max(const SparseOperator& pattern, const Matrix& x) {
    if (pattern.cols != static_cast<std::size_t>(x.rows())) {
        throw ShapeMismatch("pool_max " + dims(pattern.rows, pattern.cols) + " over " + dims(x.rows(), x.cols()));
    }
    MaxPoolResult res;
    res.values.resize(static_cast<Eigen::Index>(pattern.rows), x.cols());
    res.argmax.resize(static_cast<Eigen::Index>(pattern.rows), x.cols());
    for (std::size_t r = 0; r < pattern.rows; ++r) {
        if (pattern.offsets[r] == pattern.offsets[r + 1]) {
            throw ShapeMismatch("pool_max: empty correspondence set for coarse node " + std::to_string(r));
        }
        const auto ri = static_cast<Eigen::Index>(r);
        const std::uint32_t first = pattern.indices[pattern.offsets[r]];
        res.values.row(ri) = x.row(first);
        res.argmax.row(ri).setConstant(first);
        for (std::uint32_t e = pattern.offsets[r] + 1; e < pattern.offsets[r + 1]; ++e) {
            const std::uint32_t j = pattern.indices[e];
            for (Eigen::Index c = 0; c < x.cols(); ++c) {
                // Strict comparison: indices ascend, so ties keep the lower index.
                if (x(j, c) > res.values(ri, c)) {
                    res.values(ri, c) = x(j, c);
                    res.argmax(ri, c) = j;
                }
            }
        }
    }
    return res;
}

MaxPoolResult pool_max(const CorrespondenceSet& corr, const Matrix& x) {
    SparseOperator pattern;
    pattern.rows = corr.pool_sets.size();
    pattern.cols = corr.fine_count;
    for (const auto& set : corr.pool_sets) {
        std::vector<std::uint32_t> idx;
        for (const auto& e : set) idx.push_back(e.index);
        std::sort(idx.begin(), idx.end());
        pattern.indices.insert(pattern.indices.end(), idx.begin(), idx.end());
        pattern.offsets.push_back(static_cast<std::uint32_t>(pattern.indices.size()));
    }
    pattern.values.assign(pattern.indices.size(), 1.0);
    return pool_max(pattern, x);
}

Matrix unpool(const SparseOperator& u, const Matrix& coarse) { return spmm(u, coarse); }

}  // namespace pspool
