#pragma once

#include "pspool/baseline_pool.hpp"
#include "pspool/container.hpp"
#include "pspool/graph.hpp"
#include "pspool/nn.hpp"

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pspool {

enum class SizeTag { S, M, L };
enum class PoolingKind { PsMean, PsMax, Sag };

std::string to_string(SizeTag s);
std::string to_string(PoolingKind p);
SizeTag parse_size(const std::string& s);
/// Accepts "ps-mean"/"ps_mean", "ps-max"/"ps_max" and "sag".
PoolingKind parse_pooling(const std::string& s);

struct ModelConfig {
    SizeTag size = SizeTag::S;
    int pooling_depth = 2;
    int bottleneck = 256;
    PoolingKind pooling = PoolingKind::PsMean;
    int k_s = 8;
    int k_aug = 16;
    int aux_dim = 2;
    int input_dim = 6;
    /// Node feature width per hierarchy level, finest first (pooling_depth + 1 entries).
    std::vector<int> widths{32, 64, 128};
    int heads = 4;
    int initial_gat_layers = 2;
    int mlp_hidden = 32;
    double vertex_ratio = 0.25;

    /// Fixed (size, depth, bottleneck) triple with artifact-default widths.
    static ModelConfig for_size(SizeTag size, PoolingKind pooling = PoolingKind::PsMean);
    /// Throws ConfigError when an invariant is broken.
    void validate() const;

    /// key=value lines, one per field, in a fixed order.
    std::string to_text() const;
    /// Starts from for_size(size) and applies the keys present in `kv`.
    static ModelConfig from_keys(const std::map<std::string, std::string>& kv);
};

/// Parses key=value text; '#' starts a comment. Throws ConfigError on malformed lines.
std::map<std::string, std::string> parse_key_values(const std::string& text);

/// One mesh ready for the network: features, target coordinates, per-level graphs and operators.
struct GraphSample {
    Matrix features;  // |V0| x 6
    Matrix target;    // |V0| x 3, canonical coordinates
    std::vector<std::vector<Edge>> level_edges;
    std::vector<Adjacency> level_adjacency;
    std::vector<LevelOperators> operators;
    int label = -1;

    std::size_t level_count() const { return level_edges.size(); }
    std::size_t nodes(std::size_t level) const { return level_adjacency.at(level).node_count(); }
};

GraphSample make_sample(const Precomputed& pre, int label = -1);

struct EncoderLayers {
    std::vector<nn::GatLayer> initial;
    std::vector<nn::GatLayer> stages;  // stages[s] runs at level s + 1
    std::vector<SagScorer> scorers;    // SAG only; scorers[s] selects level s + 1
    nn::Linear aux;
    nn::Readout readout;
};

struct DecoderLayers {
    std::vector<nn::GatLayer> stages;  // stages[i] runs at level depth - i
    nn::Mlp coords;
};

/// Parameters are named "enc.*", "dec.*" and "head.*".
struct Model {
    ModelConfig config;
    ParameterSet params;
    EncoderLayers encoder;
    DecoderLayers decoder;
    std::optional<nn::Linear> head;
    int classes = 0;

    /// Glorot-uniform weights and zero biases from `seed`. classes = 0 builds no head.
    static Model create(const ModelConfig& config, int classes, std::uint64_t seed);

    std::vector<std::size_t> parameter_indices(const std::string& prefix) const;
};

/// Tape plus the per-forward state that must live as long as the tape.
struct Forward {
    nn::Tape tape;
    std::deque<Adjacency> owned_adjacency;
    /// Adjacency used at each level during encoding (level 0 first).
    std::vector<const Adjacency*> level_adjacency;
    std::vector<std::size_t> level_nodes;
    std::vector<SelectionPlan> plans;
    /// Node count consumed by each decoder stage, coarsest first.
    std::vector<std::size_t> decoder_nodes;
    nn::Var latent, aux, coords;
};

/// initial GAT stack -> [pool -> GAT] x depth -> aux projection + global attention readout.
/// Throws OperatorMismatch when the sample's operators disagree with its graphs.
void encode(const Model& model, const GraphSample& sample, Forward& fwd);

/// latent tiled over the coarsest nodes and joined with aux -> [GAT -> unpool] x depth -> coordinate MLP.
void decode(const Model& model, const GraphSample& sample, Forward& fwd);

/// Mean squared per-vertex Euclidean error.
double reconstruction_loss(const Matrix& pred, const Matrix& target);
nn::Var reconstruction_loss(nn::Tape& t, nn::Var pred, const Matrix& target);

/// Class logits from the head; `frozen` detaches the latent so only head parameters get gradients.
nn::Var classify(const Model& model, const GraphSample& sample, Forward& fwd, bool frozen);

/// Latent vector of one sample without recording gradients.
Eigen::RowVectorXd embed(const Model& model, const GraphSample& sample);

/// Fraction of vertices within `radius` of the densest single point among the predicted vertices.
double largest_cluster_fraction(const Matrix& coords, double radius);

}  // namespace pspool
