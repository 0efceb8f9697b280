#pragma once

#include "pspool/container.hpp"
#include "pspool/mesh.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace pspool {

enum class Split { Train, Val, Test };

std::string to_string(Split s);
Split parse_split(const std::string& s);

struct ManifestEntry {
    std::string id;
    /// Relative paths resolve against the manifest's root directory.
    std::string path;
    int label = 0;
    Split split = Split::Train;
};

struct DatasetManifest {
    std::vector<std::string> class_names;
    std::vector<ManifestEntry> entries;
    std::uint64_t seed = 0;
    std::filesystem::path root;

    std::vector<ManifestEntry> select(Split s) const;
    std::filesystem::path resolve(const ManifestEntry& e) const;
    /// Throws FormatError on duplicate ids/paths or out-of-range labels.
    void check() const;
};

/// JSON manifest: {"seed", "classes": [...], "entries": [{"id", "path", "label", "split"}]}.
std::string manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const std::string& text, const std::filesystem::path& root);
void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);
/// Throws IoError when missing, FormatError when malformed.
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Per class: seeded shuffle, then round(0.8 n) train, round(0.1 n) val, the rest test.
void assign_splits(DatasetManifest& m, std::uint64_t seed);

/// Shape families in class order.
const std::vector<std::string>& synth_class_names();

/// One deformed primitive of family `cls` (modulo the family count), roughly 2,000 faces.
Mesh synth_shape(int cls, std::mt19937_64& rng);

/// Writes <out>/meshes/<class>_<nnn>.off and <out>/manifest.json. Throws ConfigError when
/// classes < 2 and IoError on write failures.
DatasetManifest synth_dataset(const std::filesystem::path& out_dir, int classes, int per_class, std::uint64_t seed);

/// Builds a manifest from <root>/<class>/*.{off,obj}, one subdirectory per class.
DatasetManifest ingest_directory(const std::filesystem::path& root, std::uint64_t seed);

struct LabelSubset {
    double fraction = 1.0;
    DatasetManifest manifest;
    std::vector<std::string> warnings;
};

/// Stratified prefixes of a seeded per-class permutation of the train split;
/// max(1, round(f n)) per class, so smaller fractions nest in larger ones.
/// val/test entries are kept unchanged. Throws ConfigError for f outside (0, 1].
std::vector<LabelSubset> make_label_subsets(const DatasetManifest& m, const std::vector<double>& fractions,
                                            std::uint64_t seed);

struct PrecomputeParams {
    int depth = 2;
    double vertex_ratio = 0.25;
    int k_s = 8;
    int k_aug = 16;

    std::string to_text() const;
};

/// Load, canonicalize, build the hierarchy and operators for every level pair.
Precomputed precompute_mesh(const Mesh& mesh, const PrecomputeParams& params, std::uint64_t content_hash = 0);

std::filesystem::path container_path(const std::filesystem::path& dir, const ManifestEntry& e);

struct PrecomputeReport {
    std::size_t written = 0;
    std::size_t skipped = 0;
    std::vector<std::string> failures;  // "id: message"
};

/// One container per manifest entry; entries whose container already carries
/// the same content hash are skipped. Failures are collected, not thrown.
PrecomputeReport run_precompute(const DatasetManifest& m, const std::filesystem::path& out_dir,
                                const PrecomputeParams& params, int jobs = 1);

}  // namespace pspool
