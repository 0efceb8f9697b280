#pragma once

#include "pspool/correspondence.hpp"
#include "pspool/hierarchy.hpp"
#include "pspool/sparse.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace pspool {

/// Operators between level l (fine) and level l + 1 (coarse).
struct LevelOperators {
    CorrespondenceSet correspondence;
    SparseOperator pool_normalized;  // coarse x fine
    SparseOperator pool_raw;         // coarse x fine
    SparseOperator unpool;           // fine x coarse
};

LevelOperators make_level_operators(CorrespondenceSet corr);

/// Everything precomputed for one mesh.
struct Precomputed {
    MeshHierarchy hierarchy;
    std::vector<LevelOperators> operators;
    /// Hash of the source mesh bytes and the precompute parameters.
    std::uint64_t content_hash = 0;
    /// Parameters as key=value lines.
    std::string params;
};

inline constexpr std::uint32_t kContainerVersion = 1;

/// FNV-1a, 64 bit.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// Binary "PSPH" container, little-endian:
///
///   magic "PSPH" | u32 version | u64 content_hash | u32 len, params bytes
///   u32 level_count
///   per level:  u32 nv | u32 nf | f64 xyz[nv*3] | u32 faces[nf*3]
///   per level pair (level_count - 1 times):
///     u32 seed_map[nv_coarse] | u32 k_s | u32 k_aug
///     csr pool_sets | csr unpool_sets | u32 n, u32 repaired[n]
///     csr P_norm | csr P_raw | csr U
///   csr := u32 rows | u32 cols | u32 nnz | u32 offsets[rows+1] | u32 cols[nnz] | f32 values[nnz]
///
/// Loading rebuilds P_norm and U in double precision from the stored raw
/// weights and checks them against the stored f32 copies.
std::string encode_container(const Precomputed& pre);
Precomputed decode_container(std::string_view bytes);

void write_container(const Precomputed& pre, const std::filesystem::path& path);
Precomputed read_container(const std::filesystem::path& path);

/// Reads only the header hash; returns false when the file is missing or unreadable.
bool read_container_hash(const std::filesystem::path& path, std::uint64_t& hash);

/// Debug view: level sizes, seed maps and correspondence sets.
std::string container_to_json(const Precomputed& pre, bool include_vertices = false);

}  // namespace pspool
