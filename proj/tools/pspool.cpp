#include "pspool/container.hpp"
#include "pspool/dataset.hpp"
#include "pspool/errors.hpp"
#include "pspool/mesh.hpp"
#include "pspool/model.hpp"
#include "pspool/training.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace pspool;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kDiverged = 3 };

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;
    std::optional<double> label_fraction;
    std::string pooling;
    std::string size;
};

struct Settings {
    ModelConfig model;
    TrainOptions train;
    PrecomputeParams precompute;
};

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError("cannot read config " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Settings resolve(const Globals& g) {
    std::map<std::string, std::string> kv;
    if (!g.config.empty()) kv = parse_key_values(read_text(g.config));
    if (!g.size.empty()) {
        // a size flag resets the size-bound fields before the remaining keys apply
        kv["size"] = g.size;
        kv.erase("pooling_depth");
        kv.erase("bottleneck");
        kv.erase("widths");
        kv.erase("mlp_hidden");
    }
    if (!g.pooling.empty()) kv["pooling"] = g.pooling;
    Settings s;
    s.model = ModelConfig::from_keys(kv);
    s.train = TrainOptions::from_keys(kv);
    if (g.seed) s.train.seed = *g.seed;
    if (g.jobs) s.train.jobs = *g.jobs;
    if (g.label_fraction) s.train.label_fraction = *g.label_fraction;
    if (!(s.train.label_fraction > 0.0 && s.train.label_fraction <= 1.0)) {
        throw ConfigError("--label-fraction must lie in (0, 1]");
    }
    if (s.train.jobs < 1) throw ConfigError("--jobs must be >= 1");
    s.precompute.depth = s.model.pooling_depth;
    s.precompute.vertex_ratio = s.model.vertex_ratio;
    s.precompute.k_s = s.model.k_s;
    s.precompute.k_aug = s.model.k_aug;
    return s;
}

void print_metrics(const MetricsRecord& r) {
    std::cout << r.run_id << ": " << r.epochs.size() << " epochs, best epoch " << r.best_epoch << ", best val loss "
              << r.best_val_loss;
    if (std::isfinite(r.test_loss)) std::cout << ", test loss " << r.test_loss;
    if (std::isfinite(r.test_accuracy)) std::cout << ", test accuracy " << r.test_accuracy;
    std::cout << " (" << std::fixed << std::setprecision(1) << r.wall_seconds << " s)\n";
}

int run(int argc, char** argv) {
    CLI::App app{"pspool: precomputed structural mesh pooling toolkit"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "key=value config file")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "random seed");
    app.add_option("--jobs,-j", g.jobs, "worker threads");
    app.add_option("--label-fraction", g.label_fraction, "fraction of labeled training data");
    app.add_option("--pooling", g.pooling, "pooling variant")->check(CLI::IsMember({"ps-mean", "ps-max", "sag"}));
    app.add_option("--size", g.size, "architecture size")->check(CLI::IsMember({"S", "M", "L"}));

    std::function<int()> action;

    auto* synth = app.add_subcommand("synth", "generate the synthetic shape corpus");
    fs::path synth_out;
    int classes = 3, per_class = 50;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--classes", classes, "class count (2-5)");
    synth->add_option("--per-class", per_class, "meshes per class");
    synth->callback([&] {
        action = [&] {
            const Settings s = resolve(g);
            DatasetManifest m = synth_dataset(synth_out, classes, per_class, s.train.seed);
            std::cout << "wrote " << m.entries.size() << " meshes and " << (synth_out / "manifest.json").string() << '\n';
            return kOk;
        };
    });

    auto* ingest = app.add_subcommand("ingest", "build a manifest from <root>/<class>/*.off|obj");
    fs::path ingest_root, ingest_out;
    ingest->add_option("--root", ingest_root, "dataset root")->required();
    ingest->add_option("--out", ingest_out, "manifest path (default <root>/manifest.json)");
    ingest->callback([&] {
        action = [&] {
            const Settings s = resolve(g);
            DatasetManifest m = ingest_directory(ingest_root, s.train.seed);
            const fs::path out = ingest_out.empty() ? ingest_root / "manifest.json" : ingest_out;
            if (fs::absolute(out).parent_path() != fs::absolute(ingest_root)) {
                for (auto& e : m.entries) e.path = fs::absolute(m.resolve(e)).string();
            }
            write_manifest(m, out);
            std::cout << m.entries.size() << " meshes in " << m.class_names.size() << " classes -> " << out.string()
                      << '\n';
            return kOk;
        };
    });

    auto* validate = app.add_subcommand("validate", "check meshes against the face-count/manifold rule");
    std::vector<fs::path> validate_files;
    fs::path validate_manifest;
    validate->add_option("files", validate_files, "OFF/OBJ files");
    validate->add_option("--manifest", validate_manifest, "validate every manifest entry");
    validate->callback([&] {
        action = [&] {
            std::vector<std::pair<std::string, fs::path>> items;
            for (const auto& f : validate_files) items.emplace_back(f.string(), f);
            if (!validate_manifest.empty()) {
                DatasetManifest m = read_manifest(validate_manifest);
                for (const auto& e : m.entries) items.emplace_back(e.id, m.resolve(e));
            }
            if (items.empty()) throw CLI::ValidationError("validate", "no meshes given");
            int rejected = 0;
            for (const auto& [name, path] : items) {
                ValidationReport r = validate_mesh(load_mesh(path));
                std::cout << name << ": " << (r.accepted ? "accept" : "reject") << " faces=" << r.face_count
                          << " manifold=" << (r.is_manifold ? "yes" : "no");
                for (const auto& why : r.reasons) std::cout << " | " << why;
                std::cout << '\n';
                rejected += r.accepted ? 0 : 1;
            }
            std::cout << items.size() - static_cast<std::size_t>(rejected) << " accepted, " << rejected << " rejected\n";
            return rejected ? kData : kOk;
        };
    });

    auto* precompute = app.add_subcommand("precompute", "build hierarchies and pooling operators");
    fs::path pre_manifest, pre_out;
    precompute->add_option("--manifest", pre_manifest, "dataset manifest")->required();
    precompute->add_option("--out", pre_out, "container directory")->required();
    precompute->callback([&] {
        action = [&] {
            const Settings s = resolve(g);
            PrecomputeReport r = run_precompute(read_manifest(pre_manifest), pre_out, s.precompute, s.train.jobs);
            for (const auto& f : r.failures) std::cerr << "failed: " << f << '\n';
            std::cout << r.written << " written, " << r.skipped << " unchanged, " << r.failures.size() << " failed\n";
            return r.failures.empty() ? kOk : kData;
        };
    });

    RunPaths paths;
    fs::path checkpoint;
    auto add_paths = [&](CLI::App* sub, bool needs_checkpoint) {
        sub->add_option("--manifest", paths.manifest, "dataset manifest")->required();
        sub->add_option("--precompute", paths.precompute_dir, "container directory")->required();
        if (needs_checkpoint) sub->add_option("--checkpoint", checkpoint, "PSPW checkpoint")->required();
    };

    auto* train_ae = app.add_subcommand("train-ae", "pretrain the autoencoder");
    add_paths(train_ae, false);
    train_ae->add_option("--out", paths.out_dir, "run directory")->required();
    train_ae->callback([&] {
        action = [&] {
            const Settings s = resolve(g);
            print_metrics(run_pretrain(s.model, s.train, paths));
            return kOk;
        };
    });

    auto* probe = app.add_subcommand("probe", "linear probe on a frozen pretrained encoder");
    add_paths(probe, true);
    probe->add_option("--out", paths.out_dir, "run directory")->required();
    probe->callback([&] {
        action = [&] {
            const Settings s = resolve(g);
            print_metrics(run_probe(checkpoint, s.train, paths));
            return kOk;
        };
    });

    auto* train_clf = app.add_subcommand("train-clf", "train the classifier end to end");
    add_paths(train_clf, false);
    train_clf->add_option("--out", paths.out_dir, "run directory")->required();
    train_clf->callback([&] {
        action = [&] {
            const Settings s = resolve(g);
            print_metrics(run_supervised(s.model, s.train, paths));
            return kOk;
        };
    });

    auto* eval = app.add_subcommand("eval", "test-split metrics of a checkpoint");
    add_paths(eval, true);
    eval->add_option("--out", paths.out_dir, "metrics directory")->required();
    eval->callback([&] {
        action = [&] {
            const Settings s = resolve(g);
            print_metrics(run_eval(checkpoint, paths, s.train.jobs));
            return kOk;
        };
    });

    auto* export_cmd = app.add_subcommand("export-embeddings", "write latent vectors as CSV");
    add_paths(export_cmd, true);
    fs::path export_out;
    export_cmd->add_option("--out", export_out, "CSV path")->required();
    export_cmd->callback([&] {
        action = [&] {
            const Settings s = resolve(g);
            std::cout << export_embeddings(checkpoint, paths, export_out, s.train.jobs) << " rows -> "
                      << export_out.string() << '\n';
            return kOk;
        };
    });

    auto* dump = app.add_subcommand("dump-op", "print an operator of a container as COO triplets");
    fs::path dump_file;
    std::size_t dump_level = 0;
    std::string dump_op = "pool";
    bool dump_json = false;
    dump->add_option("container", dump_file, "PSPH file")->required();
    dump->add_option("--level", dump_level, "level pair index (0 = finest)");
    dump->add_option("--op", dump_op, "operator")->check(CLI::IsMember({"pool", "pool-raw", "unpool"}));
    dump->add_flag("--json", dump_json, "print the container summary as JSON instead");
    dump->callback([&] {
        action = [&] {
            Precomputed pre = read_container(dump_file);
            if (dump_json) {
                std::cout << container_to_json(pre);
                return kOk;
            }
            if (dump_level >= pre.operators.size()) {
                throw CLI::ValidationError("--level", "container has " + std::to_string(pre.operators.size()) +
                                                          " level pairs");
            }
            const LevelOperators& ops = pre.operators[dump_level];
            const SparseOperator& op =
                dump_op == "pool" ? ops.pool_normalized : dump_op == "pool-raw" ? ops.pool_raw : ops.unpool;
            std::cout << "# " << dump_op << " level " << dump_level << ": " << op.rows << " x " << op.cols << ", "
                      << op.nnz() << " entries\n"
                      << std::setprecision(17);
            for (std::size_t r = 0; r < op.rows; ++r) {
                for (std::size_t k = op.offsets[r]; k < op.offsets[r + 1]; ++k) {
                    std::cout << r << ' ' << op.indices[k] << ' ' << op.values[k] << '\n';
                }
            }
            return kOk;
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }
    try {
        return action ? action() : kUsage;
    } catch (const CLI::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kUsage;
    } catch (const DivergedLoss& e) {
        std::cerr << "training diverged: " << e.what() << '\n';
        return kDiverged;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    }
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
