#pragma once

#include "pspool/dataset.hpp"
#include "pspool/model.hpp"

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace pspool {

/// Artifact defaults; none of these values come from a published setup.
struct TrainOptions {
    double lr = 1e-3;
    int batch = 8;
    int max_epochs = 60;
    int patience = 10;
    std::uint64_t seed = 0;
    int jobs = 1;
    double label_fraction = 1.0;
    /// Probe head training (frozen latents).
    double probe_lr = 1e-2;
    int probe_epochs = 300;
    int probe_patience = 30;

    std::string to_text() const;
    /// Applies the training keys present in `kv`.
    static TrainOptions from_keys(const std::map<std::string, std::string>& kv);
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

/// Accuracy fields are NaN when not applicable.
struct MetricsRecord {
    std::string run_id;
    std::string kind;  // pretrain | probe | supervised | eval
    std::uint64_t config_hash = 0;
    std::string config_text;
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;
    double best_val_loss = std::numeric_limits<double>::quiet_NaN();
    double test_loss = std::numeric_limits<double>::quiet_NaN();
    double test_accuracy = std::numeric_limits<double>::quiet_NaN();
    double val_accuracy = std::numeric_limits<double>::quiet_NaN();
    double label_fraction = 1.0;
    double wall_seconds = 0.0;
    std::size_t train_samples = 0;

    std::string to_json() const;
    /// epoch,train_loss,val_loss rows.
    std::string to_csv() const;
    void write(const std::filesystem::path& dir) const;
};

/// Hash of the model config, training options and pooling/size selection.
std::uint64_t config_hash(const ModelConfig& config, const TrainOptions& opts, const std::string& kind);

/// Reads every container named by the entries. Throws MissingPrecompute.
std::vector<GraphSample> load_samples(const DatasetManifest& m, const std::vector<ManifestEntry>& entries,
                                      const std::filesystem::path& precompute_dir);

/// Mean reconstruction loss over samples.
double evaluate_reconstruction(const Model& model, const std::vector<GraphSample>& samples);

struct ClassificationScore {
    double loss = 0.0;
    double accuracy = 0.0;
};
ClassificationScore evaluate_classifier(const Model& model, const std::vector<GraphSample>& samples);

/// Latents stacked row-wise (samples x bottleneck).
Matrix embed_all(const Model& model, const std::vector<GraphSample>& samples, int jobs = 1);

struct TrainResult {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;
    double best_val_loss = std::numeric_limits<double>::infinity();
};

/// Autoencoder training with early stopping on validation reconstruction
/// loss; the best parameters are restored. Throws DivergedLoss on NaN/inf.
TrainResult train_autoencoder(Model& model, const std::vector<GraphSample>& train,
                              const std::vector<GraphSample>& val, const TrainOptions& opts);

/// End-to-end classifier training, early stopping on validation cross-entropy.
TrainResult train_supervised(Model& model, const std::vector<GraphSample>& train,
                             const std::vector<GraphSample>& val, const TrainOptions& opts);

/// Linear head on frozen, z-scored latents. The standardization is folded
/// into the head weights, so classify() applies it directly. Encoder
/// parameters are never written.
TrainResult train_probe(Model& model, const std::vector<GraphSample>& train, const std::vector<GraphSample>& val,
                        const TrainOptions& opts);

/// Checkpoint metadata carries the model config and class count.
void save_model(const Model& model, const std::filesystem::path& path);
/// Throws MissingCheckpoint when absent, ConfigError when incompatible.
Model load_model(const std::filesystem::path& path);

struct RunPaths {
    std::filesystem::path manifest;
    std::filesystem::path precompute_dir;
    std::filesystem::path out_dir;
};

MetricsRecord run_pretrain(const ModelConfig& config, const TrainOptions& opts, const RunPaths& paths);
/// Loads the pretrained encoder from `checkpoint` and trains a probe head.
MetricsRecord run_probe(const std::filesystem::path& checkpoint, const TrainOptions& opts, const RunPaths& paths);
MetricsRecord run_supervised(const ModelConfig& config, const TrainOptions& opts, const RunPaths& paths);
/// Test-split metrics for a checkpoint (accuracy needs a head; reconstruction loss always).
MetricsRecord run_eval(const std::filesystem::path& checkpoint, const RunPaths& paths, int jobs = 1);

/// CSV: id,label,z0..z{bottleneck-1}. Returns the row count.
std::size_t export_embeddings(const std::filesystem::path& checkpoint, const RunPaths& paths,
                              const std::filesystem::path& out, int jobs = 1);

}  // namespace pspool
