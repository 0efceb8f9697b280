#include "pspool/container.hpp"

#include "pspool/errors.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace pspool {

namespace {

constexpr char kMagic[4] = {'P', 'S', 'P', 'H'};

class Writer {
public:
    void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
    void u32(std::uint32_t v) { put_le(v); }
    void u64(std::uint64_t v) { put_le(v); }
    void f32(float v) { put_le(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }
    std::string take() { return std::move(buf_); }

private:
    template <class T>
    void put_le(T v) {
        for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    std::string buf_;
};

class Reader {
public:
    explicit Reader(std::string_view data) : data_(data) {}
    void bytes(void* p, std::size_t n) {
        need(n);
        std::memcpy(p, data_.data() + pos_, n);
        pos_ += n;
    }
    std::uint32_t u32() { return get_le<std::uint32_t>(); }
    std::uint64_t u64() { return get_le<std::uint64_t>(); }
    float f32() { return std::bit_cast<float>(get_le<std::uint32_t>()); }
    double f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }
    bool done() const { return pos_ == data_.size(); }
    /// Guards element counts against the remaining payload before allocating.
    std::size_t count(std::size_t per_item) {
        std::uint32_t n = u32();
        if (per_item > 0 && n > (data_.size() - pos_) / per_item) throw FormatError("count exceeds payload");
        return n;
    }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw FormatError("truncated container");
    }
    template <class T>
    T get_le() {
        need(sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            v |= static_cast<T>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(T);
        return v;
    }
    std::string_view data_;
    std::size_t pos_ = 0;
};

void write_csr(Writer& w, const SparseOperator& op) {
    w.u32(static_cast<std::uint32_t>(op.rows));
    w.u32(static_cast<std::uint32_t>(op.cols));
    w.u32(static_cast<std::uint32_t>(op.nnz()));
    for (auto o : op.offsets) w.u32(o);
    for (auto i : op.indices) w.u32(i);
    for (double v : op.values) w.f32(static_cast<float>(v));
}

SparseOperator read_csr(Reader& r) {
    SparseOperator op;
    op.rows = r.u32();
    op.cols = r.u32();
    std::size_t nnz = r.count(8);
    op.offsets.resize(op.rows + 1);
    for (auto& o : op.offsets) o = r.u32();
    op.indices.resize(nnz);
    for (auto& i : op.indices) i = r.u32();
    op.values.resize(nnz);
    for (auto& v : op.values) v = r.f32();
    op.check_structure();
    return op;
}

SparseOperator sets_to_csr(const std::vector<std::vector<WeightedIndex>>& sets, std::size_t cols) {
    SparseOperator op;
    op.rows = sets.size();
    op.cols = cols;
    for (const auto& set : sets) {
        for (const auto& e : set) {
            op.indices.push_back(e.index);
            op.values.push_back(e.weight);
        }
        op.offsets.push_back(static_cast<std::uint32_t>(op.indices.size()));
    }
    return op;
}

std::vector<std::vector<WeightedIndex>> csr_to_sets(const SparseOperator& op) {
    std::vector<std::vector<WeightedIndex>> sets(op.rows);
    for (std::size_t r = 0; r < op.rows; ++r) {
        for (std::uint32_t e = op.offsets[r]; e < op.offsets[r + 1]; ++e) {
            sets[r].push_back({op.indices[e], op.values[e]});
        }
    }
    return sets;
}

void check_against_stored(const SparseOperator& rebuilt, const SparseOperator& stored, const char* name) {
    if (rebuilt.offsets != stored.offsets || rebuilt.indices != stored.indices) {
        throw FormatError(std::string(name) + " pattern disagrees with the stored correspondence");
    }
    for (std::size_t e = 0; e < rebuilt.values.size(); ++e) {
        if (std::abs(rebuilt.values[e] - stored.values[e]) > 1e-5) {
            throw FormatError(std::string(name) + " values disagree with the stored correspondence");
        }
    }
}

}  // namespace

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

LevelOperators make_level_operators(CorrespondenceSet corr) {
    // weights are stored as f32; rounding here keeps fresh and reloaded operators identical
    for (auto* sets : {&corr.pool_sets, &corr.unpool_sets})
        for (auto& set : *sets)
            for (auto& e : set) e.weight = static_cast<double>(static_cast<float>(e.weight));
    LevelOperators ops;
    PoolingMatrices p = build_pooling_matrix(corr);
    ops.pool_normalized = std::move(p.normalized);
    ops.pool_raw = std::move(p.raw);
    ops.unpool = build_unpooling_matrix(ops.pool_raw);
    ops.correspondence = std::move(corr);
    return ops;
}

std::string encode_container(const Precomputed& pre) {
    const auto& levels = pre.hierarchy.levels;
    if (pre.operators.size() + 1 != levels.size() || pre.hierarchy.seed_maps.size() + 1 != levels.size()) {
        throw ShapeMismatch("container: operator count does not match hierarchy depth");
    }
    Writer w;
    w.bytes(kMagic, 4);
    w.u32(kContainerVersion);
    w.u64(pre.content_hash);
    w.u32(static_cast<std::uint32_t>(pre.params.size()));
    w.bytes(pre.params.data(), pre.params.size());
    w.u32(static_cast<std::uint32_t>(levels.size()));
    for (const Mesh& m : levels) {
        w.u32(static_cast<std::uint32_t>(m.vertices.size()));
        w.u32(static_cast<std::uint32_t>(m.faces.size()));
        for (const Vec3& v : m.vertices) {
            w.f64(v.x());
            w.f64(v.y());
            w.f64(v.z());
        }
        for (const Face& f : m.faces) {
            for (auto i : f) w.u32(i);
        }
    }
    for (std::size_t l = 0; l < pre.operators.size(); ++l) {
        for (auto s : pre.hierarchy.seed_maps[l]) w.u32(s);
        const LevelOperators& ops = pre.operators[l];
        const CorrespondenceSet& c = ops.correspondence;
        w.u32(static_cast<std::uint32_t>(c.k_s));
        w.u32(static_cast<std::uint32_t>(c.k_aug));
        write_csr(w, sets_to_csr(c.pool_sets, c.fine_count));
        write_csr(w, sets_to_csr(c.unpool_sets, c.coarse_count));
        w.u32(static_cast<std::uint32_t>(c.repaired.size()));
        for (auto j : c.repaired) w.u32(j);
        write_csr(w, ops.pool_normalized);
        write_csr(w, ops.pool_raw);
        write_csr(w, ops.unpool);
    }
    return w.take();
}

Precomputed decode_container(std::string_view bytes) {
    Reader r(bytes);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a PSPH container");
    std::uint32_t version = r.u32();
    if (version != kContainerVersion) throw FormatError("unsupported PSPH version " + std::to_string(version));
    Precomputed pre;
    pre.content_hash = r.u64();
    pre.params.resize(r.count(1));
    r.bytes(pre.params.data(), pre.params.size());
    std::size_t level_count = r.count(8);
    if (level_count == 0) throw FormatError("container holds no levels");
    for (std::size_t l = 0; l < level_count; ++l) {
        std::size_t nv = r.count(24);
        std::size_t nf = r.u32();
        std::vector<Vec3> vertices(nv);
        for (auto& v : vertices) {
            double x = r.f64(), y = r.f64(), z = r.f64();
            v = Vec3(x, y, z);
        }
        std::vector<Face> faces(nf);
        for (auto& f : faces) {
            for (auto& i : f) i = r.u32();
        }
        try {
            pre.hierarchy.levels.push_back(make_mesh(std::move(vertices), std::move(faces)));
        } catch (const ParseError& e) {
            throw FormatError(e.what());
        }
    }
    for (std::size_t l = 0; l + 1 < level_count; ++l) {
        const std::size_t n_fine = pre.hierarchy.levels[l].vertices.size();
        const std::size_t n_coarse = pre.hierarchy.levels[l + 1].vertices.size();
        std::vector<std::uint32_t> seeds(n_coarse);
        for (auto& s : seeds) {
            s = r.u32();
            if (s >= n_fine) throw FormatError("seed index out of range");
        }
        pre.hierarchy.seed_maps.push_back(std::move(seeds));

        CorrespondenceSet c;
        c.fine_count = n_fine;
        c.coarse_count = n_coarse;
        c.k_s = static_cast<int>(r.u32());
        c.k_aug = static_cast<int>(r.u32());
        SparseOperator pool_sets = read_csr(r);
        SparseOperator unpool_sets = read_csr(r);
        if (pool_sets.rows != n_coarse || pool_sets.cols != n_fine || unpool_sets.rows != n_fine ||
            unpool_sets.cols != n_coarse) {
            throw FormatError("correspondence shape does not match level sizes");
        }
        c.pool_sets = csr_to_sets(pool_sets);
        c.unpool_sets = csr_to_sets(unpool_sets);
        c.repaired.resize(r.count(4));
        for (auto& j : c.repaired) j = r.u32();
        SparseOperator stored_norm = read_csr(r);
        SparseOperator stored_raw = read_csr(r);
        SparseOperator stored_unpool = read_csr(r);

        LevelOperators ops = make_level_operators(std::move(c));
        check_against_stored(ops.pool_normalized, stored_norm, "P_norm");
        check_against_stored(ops.pool_raw, stored_raw, "P_raw");
        check_against_stored(ops.unpool, stored_unpool, "U");
        pre.operators.push_back(std::move(ops));
    }
    if (!r.done()) throw FormatError("trailing bytes in container");
    return pre;
}

void write_container(const Precomputed& pre, const std::filesystem::path& path) {
    std::string bytes = encode_container(pre);
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Precomputed read_container(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return decode_container(ss.str());
}

bool read_container_hash(const std::filesystem::path& path, std::uint64_t& hash) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return false;
    char head[16];
    if (!in.read(head, sizeof head)) return false;
    Reader r(std::string_view(head, sizeof head));
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0 || r.u32() != kContainerVersion) return false;
    hash = r.u64();
    return true;
}

std::string container_to_json(const Precomputed& pre, bool include_vertices) {
    using nlohmann::json;
    json j;
    j["content_hash"] = pre.content_hash;
    j["params"] = pre.params;
    json levels = json::array();
    for (const Mesh& m : pre.hierarchy.levels) {
        json lv{{"vertices", m.vertices.size()}, {"faces", m.faces.size()}, {"edges", m.edges.size()}};
        if (include_vertices) {
            json pts = json::array();
            for (const Vec3& v : m.vertices) pts.push_back({v.x(), v.y(), v.z()});
            lv["positions"] = pts;
        }
        levels.push_back(lv);
    }
    j["levels"] = levels;
    json pairs = json::array();
    for (std::size_t l = 0; l < pre.operators.size(); ++l) {
        const auto& c = pre.operators[l].correspondence;
        json sets = json::array();
        for (const auto& set : c.pool_sets) {
            json s = json::array();
            for (const auto& e : set) s.push_back({e.index, e.weight});
            sets.push_back(s);
        }
        pairs.push_back({{"fine_level", l},
                         {"k_s", c.k_s},
                         {"k_aug", c.k_aug},
                         {"seed_map", pre.hierarchy.seed_maps[l]},
                         {"repaired", c.repaired},
                         {"pool_sets", sets}});
    }
    j["correspondences"] = pairs;
    return j.dump(2);
}

}  // namespace pspool
