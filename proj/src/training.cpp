#include "pspool/training.hpp"

#include "pspool/errors.hpp"
#include "pspool/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace pspool {

using json = nlohmann::json;

std::string TrainOptions::to_text() const {
    std::ostringstream out;
    out << std::setprecision(17) << "lr=" << lr << '\n'
        << "batch=" << batch << '\n'
        << "epochs=" << max_epochs << '\n'
        << "patience=" << patience << '\n'
        << "seed=" << seed << '\n'
        << "label_fraction=" << label_fraction << '\n'
        << "probe_lr=" << probe_lr << '\n'
        << "probe_epochs=" << probe_epochs << '\n'
        << "probe_patience=" << probe_patience << '\n';
    return out.str();
}

TrainOptions TrainOptions::from_keys(const std::map<std::string, std::string>& kv) {
    TrainOptions o;
    auto num = [&](const char* key, auto& field) {
        auto it = kv.find(key);
        if (it == kv.end()) return;
        try {
            using T = std::decay_t<decltype(field)>;
            if constexpr (std::is_same_v<T, double>) field = std::stod(it->second);
            else if constexpr (std::is_same_v<T, std::uint64_t>) field = std::stoull(it->second);
            else field = std::stoi(it->second);
        } catch (const std::exception&) {
            throw ConfigError(std::string("bad value for ") + key + ": " + it->second);
        }
    };
    num("lr", o.lr);
    num("batch", o.batch);
    num("epochs", o.max_epochs);
    num("patience", o.patience);
    num("seed", o.seed);
    num("jobs", o.jobs);
    num("label_fraction", o.label_fraction);
    num("probe_lr", o.probe_lr);
    num("probe_epochs", o.probe_epochs);
    num("probe_patience", o.probe_patience);
    if (!(o.lr > 0) || o.batch < 1 || o.max_epochs < 1 || o.patience < 1 || o.probe_epochs < 1 ||
        o.probe_patience < 1 || !(o.probe_lr > 0)) {
        throw ConfigError("training options out of range");
    }
    if (!(o.label_fraction > 0.0 && o.label_fraction <= 1.0)) throw ConfigError("label_fraction must lie in (0, 1]");
    return o;
}

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

std::string MetricsRecord::to_json() const {
    json j;
    j["run_id"] = run_id;
    j["kind"] = kind;
    std::ostringstream hash;
    hash << std::hex << std::setw(16) << std::setfill('0') << config_hash;
    j["config_hash"] = hash.str();
    j["config"] = config_text;
    j["epochs"] = json::array();
    for (const auto& e : epochs) {
        j["epochs"].push_back(
            {{"epoch", e.epoch}, {"train_loss", number_or_null(e.train_loss)}, {"val_loss", number_or_null(e.val_loss)}});
    }
    j["best_epoch"] = best_epoch;
    j["best_val_loss"] = number_or_null(best_val_loss);
    j["test_loss"] = number_or_null(test_loss);
    j["test_accuracy"] = number_or_null(test_accuracy);
    j["val_accuracy"] = number_or_null(val_accuracy);
    j["label_fraction"] = label_fraction;
    j["train_samples"] = train_samples;
    j["wall_seconds"] = wall_seconds;
    return j.dump(2) + "\n";
}

std::string MetricsRecord::to_csv() const {
    std::ostringstream out;
    out << std::setprecision(10) << "epoch,train_loss,val_loss\n";
    for (const auto& e : epochs) out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << '\n';
    return out.str();
}

void MetricsRecord::write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    for (const auto& [ext, text] : {std::pair{".json", to_json()}, std::pair{".csv", to_csv()}}) {
        const auto path = dir / (run_id + ext);
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write " + path.string());
        out << text;
    }
}

std::uint64_t config_hash(const ModelConfig& config, const TrainOptions& opts, const std::string& kind) {
    return fnv1a(kind + "\n" + config.to_text() + opts.to_text());
}

std::vector<GraphSample> load_samples(const DatasetManifest& m, const std::vector<ManifestEntry>& entries,
                                      const std::filesystem::path& precompute_dir) {
    std::vector<GraphSample> out;
    out.reserve(entries.size());
    for (const auto& e : entries) {
        const auto path = container_path(precompute_dir, e);
        if (!std::filesystem::exists(path)) throw MissingPrecompute(path.string() + " (run precompute first)");
        out.push_back(make_sample(read_container(path), e.label));
    }
    (void)m;
    return out;
}

namespace {

void check_finite(double loss, const std::string& where) {
    if (!std::isfinite(loss)) throw DivergedLoss("non-finite loss " + std::to_string(loss) + " at " + where);
}

using LossFn = std::function<nn::Var(const Model&, const GraphSample&, Forward&)>;

nn::Var reconstruction_objective(const Model& model, const GraphSample& s, Forward& fwd) {
    encode(model, s, fwd);
    decode(model, s, fwd);
    return reconstruction_loss(fwd.tape, fwd.coords, s.target);
}

nn::Var classification_objective(const Model& model, const GraphSample& s, Forward& fwd) {
    return nn::cross_entropy(fwd.tape, classify(model, s, fwd, false), s.label);
}

/// Gradients of the mean loss over `batch`, summed in batch order.
double batch_gradients(const Model& model, const std::vector<GraphSample>& samples,
                       const std::vector<std::size_t>& batch, const LossFn& fn, int jobs, Gradients& total) {
    std::vector<Gradients> parts(batch.size());
    std::vector<double> losses(batch.size());
    parallel_for(batch.size(), jobs, [&](std::size_t k) {
        Forward fwd;
        nn::Var loss = fn(model, samples[batch[k]], fwd);
        losses[k] = fwd.tape.value(loss)(0, 0);
        fwd.tape.backward(loss);
        parts[k] = zero_gradients(model.params);
        fwd.tape.collect(parts[k]);
    });
    total = zero_gradients(model.params);
    double sum = 0.0;
    for (std::size_t k = 0; k < batch.size(); ++k) {
        add_into(total, parts[k]);
        sum += losses[k];
    }
    scale(total, 1.0 / static_cast<double>(batch.size()));
    return sum / static_cast<double>(batch.size());
}

double mean_loss(const Model& model, const std::vector<GraphSample>& samples, const LossFn& fn, int jobs) {
    if (samples.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::vector<double> losses(samples.size());
    parallel_for(samples.size(), jobs, [&](std::size_t i) {
        Forward fwd;
        losses[i] = fwd.tape.value(fn(model, samples[i], fwd))(0, 0);
    });
    return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(samples.size());
}

TrainResult fit(Model& model, const std::vector<GraphSample>& train, const std::vector<GraphSample>& val,
                const TrainOptions& opts, const LossFn& fn, const std::vector<std::size_t>& trainable) {
    if (train.empty()) throw ConfigError("no training samples");
    TrainResult result;
    Adam adam(model.params);
    std::mt19937_64 rng(opts.seed ^ 0x5851f42d4c957f2dULL);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    ParameterSet best = model.params;
    int since_best = 0;
    for (int epoch = 1; epoch <= opts.max_epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
        double train_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opts.batch)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(opts.batch));
            std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
            Gradients grads;
            const double loss = batch_gradients(model, train, batch, fn, opts.jobs, grads);
            check_finite(loss, "epoch " + std::to_string(epoch));
            train_sum += loss * static_cast<double>(batch.size());
            adam.step(model.params, grads, opts.lr, trainable);
        }
        if (!model.params.all_finite()) throw DivergedLoss("non-finite parameters after epoch " + std::to_string(epoch));
        EpochRecord rec{epoch, train_sum / static_cast<double>(train.size()), std::numeric_limits<double>::quiet_NaN()};
        rec.val_loss = val.empty() ? rec.train_loss : mean_loss(model, val, fn, opts.jobs);
        check_finite(rec.val_loss, "validation, epoch " + std::to_string(epoch));
        result.epochs.push_back(rec);
        if (rec.val_loss < result.best_val_loss) {
            result.best_val_loss = rec.val_loss;
            result.best_epoch = epoch;
            best = model.params;
            since_best = 0;
        } else if (++since_best >= opts.patience) {
            break;
        }
    }
    model.params = std::move(best);
    return result;
}

}  // namespace

double evaluate_reconstruction(const Model& model, const std::vector<GraphSample>& samples) {
    return mean_loss(model, samples, reconstruction_objective, 1);
}

ClassificationScore evaluate_classifier(const Model& model, const std::vector<GraphSample>& samples) {
    ClassificationScore score;
    if (samples.empty()) return score;
    std::size_t correct = 0;
    for (const auto& s : samples) {
        Forward fwd;
        nn::Var logits = classify(model, s, fwd, true);
        const Matrix& z = fwd.tape.value(logits);
        Eigen::Index arg = 0;
        z.row(0).maxCoeff(&arg);
        if (arg == s.label) ++correct;
        score.loss += fwd.tape.value(nn::cross_entropy(fwd.tape, logits, s.label))(0, 0);
    }
    score.loss /= static_cast<double>(samples.size());
    score.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
    return score;
}

Matrix embed_all(const Model& model, const std::vector<GraphSample>& samples, int jobs) {
    Matrix z(static_cast<Eigen::Index>(samples.size()), model.config.bottleneck);
    parallel_for(samples.size(), jobs, [&](std::size_t i) { z.row(static_cast<Eigen::Index>(i)) = embed(model, samples[i]); });
    return z;
}

TrainResult train_autoencoder(Model& model, const std::vector<GraphSample>& train,
                              const std::vector<GraphSample>& val, const TrainOptions& opts) {
    std::vector<std::size_t> trainable = model.parameter_indices("enc.");
    for (std::size_t i : model.parameter_indices("dec.")) trainable.push_back(i);
    return fit(model, train, val, opts, reconstruction_objective, trainable);
}

TrainResult train_supervised(Model& model, const std::vector<GraphSample>& train,
                             const std::vector<GraphSample>& val, const TrainOptions& opts) {
    if (!model.head) throw ConfigError("supervised training needs a classification head");
    std::vector<std::size_t> trainable = model.parameter_indices("enc.");
    for (std::size_t i : model.parameter_indices("head.")) trainable.push_back(i);
    return fit(model, train, val, opts, classification_objective, trainable);
}

namespace {

/// Mean softmax cross-entropy of z w + b; fills the gradients when asked.
double probe_loss(const Matrix& z, const std::vector<int>& labels, const Matrix& w, const Matrix& b, Matrix* gw,
                  Matrix* gb) {
    Matrix logits = (z * w).rowwise() + b.row(0);
    const auto n = static_cast<double>(z.rows());
    double loss = 0.0;
    Matrix g = Matrix::Zero(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        Eigen::RowVectorXd p = (logits.row(i).array() - m).exp().matrix();
        const double sum = p.sum();
        loss -= logits(i, labels[static_cast<std::size_t>(i)]) - m - std::log(sum);
        g.row(i) = p / sum;
        g(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
    }
    if (gw) *gw = z.transpose() * g / n;
    if (gb) *gb = g.colwise().sum() / n;
    return loss / n;
}

}  // namespace

TrainResult train_probe(Model& model, const std::vector<GraphSample>& train, const std::vector<GraphSample>& val,
                        const TrainOptions& opts) {
    if (!model.head) throw ConfigError("probe training needs a classification head");
    if (train.empty()) throw ConfigError("no training samples");
    const Matrix z_train = embed_all(model, train, opts.jobs);
    const Matrix z_val = val.empty() ? Matrix() : embed_all(model, val, opts.jobs);
    std::vector<int> y_train, y_val;
    for (const auto& s : train) y_train.push_back(s.label);
    for (const auto& s : val) y_val.push_back(s.label);

    const Eigen::RowVectorXd mu = z_train.colwise().mean();
    Eigen::RowVectorXd sigma = ((z_train.rowwise() - mu).array().square().colwise().sum() /
                                static_cast<double>(z_train.rows()))
                                   .sqrt()
                                   .matrix();
    for (Eigen::Index c = 0; c < sigma.size(); ++c) {
        if (!(sigma(c) > 1e-12)) sigma(c) = 1.0;
    }
    auto standardize = [&](const Matrix& z) -> Matrix {
        return ((z.rowwise() - mu).array().rowwise() / sigma.array()).matrix();
    };
    const Matrix s_train = standardize(z_train);
    const Matrix s_val = val.empty() ? Matrix() : standardize(z_val);

    ParameterSet head;
    std::mt19937_64 rng(opts.seed ^ 0x2545f4914f6cdd1dULL);
    head.add("w", glorot_uniform(z_train.cols(), model.classes, rng));
    head.add("b", Matrix::Zero(1, model.classes));
    Adam adam(head);
    ParameterSet best = head;
    TrainResult result;
    int since_best = 0;
    for (int epoch = 1; epoch <= opts.probe_epochs; ++epoch) {
        Gradients g(2);
        const double loss = probe_loss(s_train, y_train, head[0].value, head[1].value, &g[0], &g[1]);
        check_finite(loss, "probe epoch " + std::to_string(epoch));
        adam.step(head, g, opts.probe_lr);
        EpochRecord rec{epoch, loss, loss};
        if (!val.empty()) rec.val_loss = probe_loss(s_val, y_val, head[0].value, head[1].value, nullptr, nullptr);
        result.epochs.push_back(rec);
        if (rec.val_loss < result.best_val_loss) {
            result.best_val_loss = rec.val_loss;
            result.best_epoch = epoch;
            best = head;
            since_best = 0;
        } else if (++since_best >= opts.probe_patience) {
            break;
        }
    }
    // fold the standardization into the head: (z - mu) / sigma * w + b
    const Matrix w = best[0].value.array().colwise() / sigma.transpose().array();
    const Matrix b = best[1].value - mu * w;
    model.params[model.head->weight].value = w;
    model.params[model.head->bias].value = b;
    return result;
}

void save_model(const Model& model, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    save_checkpoint(model.params, model.config.to_text() + "classes=" + std::to_string(model.classes) + "\n", path);
}

Model load_model(const std::filesystem::path& path) {
    Checkpoint ck = load_checkpoint(path);
    auto kv = parse_key_values(ck.metadata);
    int classes = 0;
    if (auto it = kv.find("classes"); it != kv.end()) classes = std::stoi(it->second);
    kv.erase("classes");
    Model model = Model::create(ModelConfig::from_keys(kv), classes, 0);
    const std::size_t copied = copy_matching(ck.params, model.params);
    if (copied != model.params.size()) {
        throw ConfigError("checkpoint " + path.string() + " covers " + std::to_string(copied) + " of " +
                          std::to_string(model.params.size()) + " parameters");
    }
    return model;
}

namespace {

std::string run_name(const std::string& kind, const ModelConfig& c, const TrainOptions& o) {
    std::ostringstream id;
    id << kind << '-' << to_string(c.size) << '-' << to_string(c.pooling) << "-s" << o.seed;
    if (kind == "probe" || kind == "supervised") id << "-f" << o.label_fraction;
    return id.str();
}

struct Splits {
    DatasetManifest manifest;
    std::vector<GraphSample> train, val, test;
};

Splits load_splits(const RunPaths& paths, double label_fraction, std::uint64_t seed) {
    Splits s;
    s.manifest = read_manifest(paths.manifest);
    DatasetManifest m = s.manifest;
    if (label_fraction < 1.0) m = make_label_subsets(m, {label_fraction}, seed).front().manifest;
    s.train = load_samples(m, m.select(Split::Train), paths.precompute_dir);
    s.val = load_samples(m, m.select(Split::Val), paths.precompute_dir);
    s.test = load_samples(m, m.select(Split::Test), paths.precompute_dir);
    return s;
}

MetricsRecord base_record(const std::string& kind, const ModelConfig& c, const TrainOptions& o) {
    MetricsRecord r;
    r.kind = kind;
    r.run_id = run_name(kind, c, o);
    r.config_hash = config_hash(c, o, kind);
    r.config_text = c.to_text() + o.to_text();
    r.label_fraction = o.label_fraction;
    return r;
}

void fill(MetricsRecord& r, const TrainResult& t) {
    r.epochs = t.epochs;
    r.best_epoch = t.best_epoch;
    r.best_val_loss = t.best_val_loss;
}

}  // namespace

MetricsRecord run_pretrain(const ModelConfig& config, const TrainOptions& opts, const RunPaths& paths) {
    const auto start = std::chrono::steady_clock::now();
    Splits s = load_splits(paths, 1.0, opts.seed);
    Model model = Model::create(config, 0, opts.seed);
    MetricsRecord r = base_record("pretrain", config, opts);
    r.label_fraction = 1.0;
    fill(r, train_autoencoder(model, s.train, s.val, opts));
    r.train_samples = s.train.size();
    r.test_loss = s.test.empty() ? r.test_loss : evaluate_reconstruction(model, s.test);
    save_model(model, paths.out_dir / (r.run_id + ".pspw"));
    r.wall_seconds = seconds_since(start);
    r.write(paths.out_dir);
    return r;
}

MetricsRecord run_probe(const std::filesystem::path& checkpoint, const TrainOptions& opts, const RunPaths& paths) {
    const auto start = std::chrono::steady_clock::now();
    Model encoder = load_model(checkpoint);
    Splits s = load_splits(paths, opts.label_fraction, opts.seed);
    Model model = Model::create(encoder.config, static_cast<int>(s.manifest.class_names.size()), opts.seed);
    copy_matching(encoder.params, model.params);
    const std::uint64_t frozen = [&] {
        ParameterSet enc;
        for (std::size_t i : model.parameter_indices("enc.")) enc.add(model.params[i].name, model.params[i].value);
        return enc.checksum();
    }();
    MetricsRecord r = base_record("probe", model.config, opts);
    fill(r, train_probe(model, s.train, s.val, opts));
    ParameterSet enc_after;
    for (std::size_t i : model.parameter_indices("enc.")) enc_after.add(model.params[i].name, model.params[i].value);
    if (enc_after.checksum() != frozen) throw Error("probe training modified encoder parameters");
    r.train_samples = s.train.size();
    if (!s.val.empty()) r.val_accuracy = evaluate_classifier(model, s.val).accuracy;
    if (!s.test.empty()) {
        ClassificationScore score = evaluate_classifier(model, s.test);
        r.test_loss = score.loss;
        r.test_accuracy = score.accuracy;
    }
    save_model(model, paths.out_dir / (r.run_id + ".pspw"));
    r.wall_seconds = seconds_since(start);
    r.write(paths.out_dir);
    return r;
}

MetricsRecord run_supervised(const ModelConfig& config, const TrainOptions& opts, const RunPaths& paths) {
    const auto start = std::chrono::steady_clock::now();
    Splits s = load_splits(paths, opts.label_fraction, opts.seed);
    Model model = Model::create(config, static_cast<int>(s.manifest.class_names.size()), opts.seed);
    MetricsRecord r = base_record("supervised", config, opts);
    fill(r, train_supervised(model, s.train, s.val, opts));
    r.train_samples = s.train.size();
    if (!s.val.empty()) r.val_accuracy = evaluate_classifier(model, s.val).accuracy;
    if (!s.test.empty()) {
        ClassificationScore score = evaluate_classifier(model, s.test);
        r.test_loss = score.loss;
        r.test_accuracy = score.accuracy;
    }
    save_model(model, paths.out_dir / (r.run_id + ".pspw"));
    r.wall_seconds = seconds_since(start);
    r.write(paths.out_dir);
    return r;
}

MetricsRecord run_eval(const std::filesystem::path& checkpoint, const RunPaths& paths, int jobs) {
    const auto start = std::chrono::steady_clock::now();
    Model model = load_model(checkpoint);
    Splits s = load_splits(paths, 1.0, 0);
    TrainOptions o;
    o.jobs = jobs;
    MetricsRecord r = base_record("eval", model.config, o);
    r.run_id = "eval-" + checkpoint.stem().string();
    if (model.head) {
        ClassificationScore score = evaluate_classifier(model, s.test);
        r.test_loss = score.loss;
        r.test_accuracy = score.accuracy;
    } else {
        r.test_loss = evaluate_reconstruction(model, s.test);
    }
    r.wall_seconds = seconds_since(start);
    r.write(paths.out_dir);
    return r;
}

std::size_t export_embeddings(const std::filesystem::path& checkpoint, const RunPaths& paths,
                              const std::filesystem::path& out, int jobs) {
    Model model = load_model(checkpoint);
    DatasetManifest m = read_manifest(paths.manifest);
    std::vector<GraphSample> samples = load_samples(m, m.entries, paths.precompute_dir);
    const Matrix z = embed_all(model, samples, jobs);
    if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
    std::ofstream f(out, std::ios::binary);
    if (!f) throw IoError("cannot write " + out.string());
    f << "id,label";
    for (Eigen::Index c = 0; c < z.cols(); ++c) f << ",z" << c;
    f << '\n' << std::setprecision(9);
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        f << m.entries[i].id << ',' << m.entries[i].label;
        for (Eigen::Index c = 0; c < z.cols(); ++c) f << ',' << z(static_cast<Eigen::Index>(i), c);
        f << '\n';
    }
    if (!f) throw IoError("write failed: " + out.string());
    return m.entries.size();
}

}  // namespace pspool
