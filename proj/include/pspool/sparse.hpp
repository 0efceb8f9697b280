#pragma once

#include "pspool/correspondence.hpp"
#include "pspool/mesh.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace pspool {

/// CSR sparse matrix. Column indices are strictly increasing within a row
/// and no explicit zeros are stored.
struct SparseOperator {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint32_t> offsets{0};
    std::vector<std::uint32_t> indices;
    std::vector<double> values;

    std::size_t nnz() const { return indices.size(); }
    Matrix to_dense() const;
    /// Throws ShapeMismatch when the CSR structure is inconsistent.
    void check_structure() const;
};

SparseOperator identity_operator(std::size_t n);
SparseOperator transpose(const SparseOperator& a);

/// Divides each row by its sum. Throws ZeroRow on a row that sums to zero.
SparseOperator row_normalize(const SparseOperator& a);

/// P_raw holds the raw correspondence weights; P_norm is its row-normalized copy.
struct PoolingMatrices {
    SparseOperator normalized;
    SparseOperator raw;
};

PoolingMatrices build_pooling_matrix(const CorrespondenceSet& corr);

/// U = row_normalize(transpose(P_raw)). Throws OrphanRow for a fine node
/// without any coarse parent.
SparseOperator build_unpooling_matrix(const SparseOperator& p_raw);

/// Exact CSR x dense product. Rows are independent, so splitting them over
/// `jobs` threads gives bit-identical output.
Matrix spmm(const SparseOperator& a, const Matrix& b, int jobs = 1);

/// A^T * B without materializing the transpose.
Matrix spmm_transposed(const SparseOperator& a, const Matrix& b);

/// X' = P_norm X.
Matrix pool_mean(const SparseOperator& p_norm, const Matrix& x);

struct MaxPoolResult {
    Matrix values;
    /// Fine row chosen per (coarse row, channel); ties go to the lower index.
    Eigen::Matrix<std::uint32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> argmax;
};

/// Channel-wise maximum over each coarse node's correspondence set; weights are ignored.
MaxPoolResult pool_max(const CorrespondenceSet& corr, const Matrix& x);
/// Same, using the sparsity pattern of a pooling operator as the sets.
MaxPoolResult pool_max(const SparseOperator& pattern, const Matrix& x);

/// X = U Xc.
Matrix unpool(const SparseOperator& u, const Matrix& coarse);

}  // namespace pspool
