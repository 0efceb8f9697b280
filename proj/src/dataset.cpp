#include "pspool/dataset.hpp"

#include "pspool/correspondence.hpp"
#include "pspool/errors.hpp"
#include "pspool/hierarchy.hpp"
#include "pspool/parallel.hpp"
#include "pspool/params.hpp"
#include "pspool/shapes.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

namespace pspool {

using json = nlohmann::json;

std::string to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw FormatError("unknown split '" + s + "'");
}

std::vector<ManifestEntry> DatasetManifest::select(Split s) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries) {
        if (e.split == s) out.push_back(e);
    }
    return out;
}

std::filesystem::path DatasetManifest::resolve(const ManifestEntry& e) const {
    std::filesystem::path p(e.path);
    return p.is_absolute() ? p : root / p;
}

void DatasetManifest::check() const {
    std::set<std::string> ids, paths;
    for (const auto& e : entries) {
        if (!ids.insert(e.id).second) throw FormatError("duplicate id " + e.id);
        if (!paths.insert(e.path).second) throw FormatError("duplicate path " + e.path);
        if (e.label < 0 || static_cast<std::size_t>(e.label) >= class_names.size()) {
            throw FormatError("label out of range for " + e.id);
        }
    }
}

std::string manifest_to_json(const DatasetManifest& m) {
    json j;
    j["seed"] = m.seed;
    j["classes"] = m.class_names;
    j["entries"] = json::array();
    for (const auto& e : m.entries) {
        j["entries"].push_back({{"id", e.id}, {"path", e.path}, {"label", e.label}, {"split", to_string(e.split)}});
    }
    return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text, const std::filesystem::path& root) {
    DatasetManifest m;
    m.root = root;
    try {
        json j = json::parse(text);
        m.seed = j.value("seed", std::uint64_t{0});
        m.class_names = j.at("classes").get<std::vector<std::string>>();
        for (const auto& e : j.at("entries")) {
            m.entries.push_back({e.at("id").get<std::string>(), e.at("path").get<std::string>(),
                                 e.at("label").get<int>(), parse_split(e.at("split").get<std::string>())});
        }
    } catch (const json::exception& ex) {
        throw FormatError(std::string("manifest: ") + ex.what());
    }
    m.check();
    return m;
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << manifest_to_json(m);
    if (!out) throw IoError("write failed: " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read manifest " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return manifest_from_json(ss.str(), path.parent_path());
}

void assign_splits(DatasetManifest& m, std::uint64_t seed) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < m.entries.size(); ++i) by_class[m.entries[i].label].push_back(i);
    for (auto& [label, idx] : by_class) {
        std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(label + 1)));
        for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
        const auto n = static_cast<double>(idx.size());
        const auto n_train = static_cast<std::size_t>(std::lround(0.8 * n));
        const auto n_val = std::min(idx.size() - n_train, static_cast<std::size_t>(std::lround(0.1 * n)));
        for (std::size_t k = 0; k < idx.size(); ++k) {
            m.entries[idx[k]].split = k < n_train ? Split::Train : k < n_train + n_val ? Split::Val : Split::Test;
        }
    }
}

const std::vector<std::string>& synth_class_names() {
    static const std::vector<std::string> names = {"ellipsoid", "torus", "box", "capsule", "blob"};
    return names;
}

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
    return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

double signed_pow(double x, double e) { return std::copysign(std::pow(std::abs(x), e), x); }

Mesh sphere_topology(std::mt19937_64& rng) {
    const int slices = uniform_int(rng, 28, 36);
    const int stacks = static_cast<int>(std::lround(1000.0 / slices)) + uniform_int(rng, -2, 2) + 1;
    return shapes::uv_sphere(slices, stacks);
}

Vec3 random_unit(std::mt19937_64& rng) {
    const double z = uniform(rng, -1.0, 1.0);
    const double phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double r = std::sqrt(1.0 - z * z);
    return {r * std::cos(phi), r * std::sin(phi), z};
}

}  // namespace

Mesh synth_shape(int cls, std::mt19937_64& rng) {
    const int family = cls % static_cast<int>(synth_class_names().size());
    Mesh mesh;
    switch (family) {
        case 0: {  // ellipsoid
            mesh = sphere_topology(rng);
            const Vec3 radii(uniform(rng, 0.6, 1.4), uniform(rng, 0.6, 1.4), uniform(rng, 0.6, 1.4));
            for (Vec3& p : mesh.vertices) p = p.cwiseProduct(radii);
            break;
        }
        case 1: {  // torus
            const int rings = uniform_int(rng, 36, 48);
            const int sides = static_cast<int>(std::lround(1000.0 / rings)) + uniform_int(rng, -2, 2);
            mesh = shapes::torus(rings, sides, uniform(rng, 0.25, 0.45));
            break;
        }
        case 2: {  // rounded box
            mesh = sphere_topology(rng);
            const double e = uniform(rng, 0.2, 0.35);
            const Vec3 half(uniform(rng, 0.6, 1.3), uniform(rng, 0.6, 1.3), uniform(rng, 0.6, 1.3));
            for (Vec3& p : mesh.vertices) {
                p = Vec3(signed_pow(p.x(), e), signed_pow(p.y(), e), signed_pow(p.z(), e)).cwiseProduct(half);
            }
            break;
        }
        case 3: {  // capsule
            mesh = sphere_topology(rng);
            const double r = uniform(rng, 0.35, 0.6);
            const double h = uniform(rng, 0.6, 1.2);
            for (Vec3& p : mesh.vertices) {
                const double s = std::abs(p.z()) >= 0.2 ? std::copysign(1.0, p.z()) : p.z() / 0.2;
                p = Vec3(r * p.x(), r * p.y(), r * p.z() + h * s);
            }
            break;
        }
        default: {  // fused blobs
            mesh = sphere_topology(rng);
            const int lobes = uniform_int(rng, 3, 4);
            std::vector<Vec3> centers;
            std::vector<double> amp;
            for (int k = 0; k < lobes; ++k) {
                centers.push_back(random_unit(rng));
                amp.push_back(uniform(rng, 0.4, 0.8));
            }
            const double sigma2 = 0.35;
            for (Vec3& p : mesh.vertices) {
                double r = 0.7;
                for (int k = 0; k < lobes; ++k) r += amp[k] * std::exp(-(p - centers[k]).squaredNorm() / sigma2);
                p *= r;
            }
            break;
        }
    }

    // anisotropic scale, bend, noise, overall scale
    const Vec3 aniso(uniform(rng, 0.75, 1.25), uniform(rng, 0.75, 1.25), uniform(rng, 0.75, 1.25));
    const double bend = uniform(rng, -0.25, 0.25);
    const double noise = 0.01;
    const double scale = uniform(rng, 0.5, 2.0);
    for (Vec3& p : mesh.vertices) {
        p = p.cwiseProduct(aniso);
        p.z() += bend * p.x() * p.x();
        p += Vec3(uniform(rng, -noise, noise), uniform(rng, -noise, noise), uniform(rng, -noise, noise));
        p *= scale;
    }
    return mesh;
}

DatasetManifest synth_dataset(const std::filesystem::path& out_dir, int classes, int per_class, std::uint64_t seed) {
    if (classes < 2) throw ConfigError("synth needs at least 2 classes");
    if (classes > static_cast<int>(synth_class_names().size())) {
        throw ConfigError("synth supports at most " + std::to_string(synth_class_names().size()) + " classes");
    }
    if (per_class < 1) throw ConfigError("per_class must be >= 1");
    DatasetManifest m;
    m.seed = seed;
    m.root = out_dir;
    m.class_names.assign(synth_class_names().begin(), synth_class_names().begin() + classes);
    std::filesystem::create_directories(out_dir / "meshes");
    for (int c = 0; c < classes; ++c) {
        for (int i = 0; i < per_class; ++i) {
            std::mt19937_64 rng(seed * 1000003ULL + static_cast<std::uint64_t>(c) * 65537ULL +
                                static_cast<std::uint64_t>(i));
            Mesh mesh = synth_shape(c, rng);
            std::ostringstream id;
            id << m.class_names[c] << '_' << std::setw(3) << std::setfill('0') << i;
            const std::string rel = "meshes/" + id.str() + ".off";
            write_off(mesh, out_dir / rel);
            m.entries.push_back({id.str(), rel, c, Split::Train});
        }
    }
    assign_splits(m, seed);
    write_manifest(m, out_dir / "manifest.json");
    return m;
}

DatasetManifest ingest_directory(const std::filesystem::path& root, std::uint64_t seed) {
    if (!std::filesystem::is_directory(root)) throw IoError("not a directory: " + root.string());
    DatasetManifest m;
    m.seed = seed;
    m.root = root;
    std::vector<std::filesystem::path> class_dirs;
    for (const auto& d : std::filesystem::directory_iterator(root)) {
        if (d.is_directory()) class_dirs.push_back(d.path());
    }
    std::sort(class_dirs.begin(), class_dirs.end());
    for (const auto& dir : class_dirs) {
        std::vector<std::filesystem::path> files;
        for (const auto& f : std::filesystem::directory_iterator(dir)) {
            auto ext = f.path().extension().string();
            std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
            if (f.is_regular_file() && (ext == ".off" || ext == ".obj")) files.push_back(f.path());
        }
        if (files.empty()) continue;
        std::sort(files.begin(), files.end());
        const int label = static_cast<int>(m.class_names.size());
        m.class_names.push_back(dir.filename().string());
        for (const auto& f : files) {
            const std::string rel = std::filesystem::relative(f, root).generic_string();
            m.entries.push_back({dir.filename().string() + "/" + f.stem().string(), rel, label, Split::Train});
        }
    }
    if (m.class_names.size() < 2) throw FormatError("need at least two class directories with meshes");
    assign_splits(m, seed);
    m.check();
    return m;
}

std::vector<LabelSubset> make_label_subsets(const DatasetManifest& m, const std::vector<double>& fractions,
                                            std::uint64_t seed) {
    std::map<int, std::vector<std::size_t>> train_by_class;
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        if (m.entries[i].split == Split::Train) train_by_class[m.entries[i].label].push_back(i);
    }
    for (auto& [label, idx] : train_by_class) {
        std::mt19937_64 rng(seed ^ (0xd1b54a32d192ed03ULL * static_cast<std::uint64_t>(label + 1)));
        for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
    }
    std::vector<LabelSubset> out;
    for (double f : fractions) {
        if (!(f > 0.0 && f <= 1.0)) throw ConfigError("label fraction must lie in (0, 1]");
        LabelSubset sub;
        sub.fraction = f;
        std::vector<bool> keep(m.entries.size(), true);
        for (const auto& [label, idx] : train_by_class) {
            const auto wanted = std::lround(f * static_cast<double>(idx.size()));
            std::size_t n = static_cast<std::size_t>(std::max<long>(1, wanted));
            if (wanted < 1) {
                sub.warnings.push_back("EmptyClass: fraction " + std::to_string(f) + " gives no sample of class " +
                                       m.class_names.at(label) + "; keeping 1");
            }
            for (std::size_t k = n; k < idx.size(); ++k) keep[idx[k]] = false;
        }
        sub.manifest = m;
        sub.manifest.entries.clear();
        for (std::size_t i = 0; i < m.entries.size(); ++i) {
            if (keep[i]) sub.manifest.entries.push_back(m.entries[i]);
        }
        out.push_back(std::move(sub));
    }
    return out;
}

std::string PrecomputeParams::to_text() const {
    std::ostringstream out;
    out << std::setprecision(17) << "depth=" << depth << '\n'
        << "vertex_ratio=" << vertex_ratio << '\n'
        << "k_s=" << k_s << '\n'
        << "k_aug=" << k_aug << '\n';
    return out.str();
}

Precomputed precompute_mesh(const Mesh& mesh, const PrecomputeParams& params, std::uint64_t content_hash) {
    Precomputed pre;
    pre.hierarchy = build_hierarchy(canonicalize(mesh), params.depth, params.vertex_ratio);
    const auto& levels = pre.hierarchy.levels;
    for (std::size_t l = 0; l + 1 < levels.size(); ++l) {
        pre.operators.push_back(make_level_operators(
            build_correspondence(levels[l], levels[l + 1], pre.hierarchy.seed_maps[l], params.k_s, params.k_aug)));
    }
    pre.content_hash = content_hash;
    pre.params = params.to_text();
    return pre;
}

std::filesystem::path container_path(const std::filesystem::path& dir, const ManifestEntry& e) {
    std::string name = e.id;
    std::replace(name.begin(), name.end(), '/', '_');
    return dir / (name + ".psph");
}

PrecomputeReport run_precompute(const DatasetManifest& m, const std::filesystem::path& out_dir,
                                const PrecomputeParams& params, int jobs) {
    std::filesystem::create_directories(out_dir);
    const std::uint64_t params_hash = fnv1a(params.to_text());
    enum class Outcome { Written, Skipped, Failed };
    std::vector<Outcome> outcome(m.entries.size(), Outcome::Failed);
    std::vector<std::string> message(m.entries.size());

    parallel_for(m.entries.size(), jobs, [&](std::size_t i) {
        const ManifestEntry& e = m.entries[i];
        try {
            const auto src = m.resolve(e);
            std::ifstream in(src, std::ios::binary);
            if (!in) throw IoError("cannot read " + src.string());
            std::stringstream ss;
            ss << in.rdbuf();
            const std::uint64_t hash = fnv1a(ss.str(), params_hash);
            const auto dst = container_path(out_dir, e);
            std::uint64_t existing = 0;
            if (read_container_hash(dst, existing) && existing == hash) {
                outcome[i] = Outcome::Skipped;
                return;
            }
            Mesh mesh = load_mesh(src);
            ValidationReport report = validate_mesh(mesh);
            if (!report.accepted) {
                std::string why;
                for (const auto& r : report.reasons) why += (why.empty() ? "" : "; ") + r;
                throw DegenerateMesh("rejected by validation: " + why);
            }
            write_container(precompute_mesh(mesh, params, hash), dst);
            outcome[i] = Outcome::Written;
        } catch (const std::exception& ex) {
            message[i] = e.id + ": " + ex.what();
        }
    });

    PrecomputeReport report;
    for (std::size_t i = 0; i < outcome.size(); ++i) {
        if (outcome[i] == Outcome::Written) ++report.written;
        else if (outcome[i] == Outcome::Skipped) ++report.skipped;
        else report.failures.push_back(message[i]);
    }
    return report;
}

}  // namespace pspool
