#include "pspool/model.hpp"

#include "pspool/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pspool {

std::string to_string(SizeTag s) {
    switch (s) {
        case SizeTag::S: return "S";
        case SizeTag::M: return "M";
        case SizeTag::L: return "L";
    }
    return "?";
}

std::string to_string(PoolingKind p) {
    switch (p) {
        case PoolingKind::PsMean: return "ps-mean";
        case PoolingKind::PsMax: return "ps-max";
        case PoolingKind::Sag: return "sag";
    }
    return "?";
}

SizeTag parse_size(const std::string& s) {
    if (s == "S" || s == "s") return SizeTag::S;
    if (s == "M" || s == "m") return SizeTag::M;
    if (s == "L" || s == "l") return SizeTag::L;
    throw ConfigError("unknown size '" + s + "' (expected S, M or L)");
}

PoolingKind parse_pooling(const std::string& s) {
    if (s == "ps-mean" || s == "ps_mean") return PoolingKind::PsMean;
    if (s == "ps-max" || s == "ps_max") return PoolingKind::PsMax;
    if (s == "sag") return PoolingKind::Sag;
    throw ConfigError("unknown pooling '" + s + "' (expected ps-mean, ps-max or sag)");
}

ModelConfig ModelConfig::for_size(SizeTag size, PoolingKind pooling) {
    ModelConfig c;
    c.size = size;
    c.pooling = pooling;
    switch (size) {
        case SizeTag::S:
            c.pooling_depth = 2;
            c.bottleneck = 256;
            c.widths = {32, 64, 128};
            break;
        case SizeTag::M:
            c.pooling_depth = 2;
            c.bottleneck = 512;
            c.widths = {64, 128, 256};
            break;
        case SizeTag::L:
            c.pooling_depth = 3;
            c.bottleneck = 1024;
            c.widths = {64, 128, 256, 512};
            break;
    }
    c.mlp_hidden = c.widths.front();
    return c;
}

void ModelConfig::validate() const {
    const ModelConfig ref = for_size(size);
    if (pooling_depth != ref.pooling_depth || bottleneck != ref.bottleneck) {
        throw ConfigError("size " + to_string(size) + " requires pooling depth " + std::to_string(ref.pooling_depth) +
                          " and bottleneck " + std::to_string(ref.bottleneck));
    }
    if (aux_dim != 2) throw ConfigError("aux_dim must be 2");
    if (input_dim != 6) throw ConfigError("input_dim must be 6");
    if (widths.size() != static_cast<std::size_t>(pooling_depth) + 1) {
        throw ConfigError("widths needs pooling_depth + 1 entries");
    }
    for (int w : widths) {
        if (w < 1 || w % heads != 0) throw ConfigError("every width must be a positive multiple of heads");
    }
    if (k_s < 1 || k_aug < k_s) throw ConfigError("need k_aug >= k_s >= 1");
    if (initial_gat_layers < 1) throw ConfigError("initial_gat_layers must be >= 1");
    if (mlp_hidden < 1) throw ConfigError("mlp_hidden must be >= 1");
    if (!(vertex_ratio > 0.0 && vertex_ratio < 1.0)) throw ConfigError("vertex_ratio must lie in (0, 1)");
}

std::string ModelConfig::to_text() const {
    std::ostringstream out;
    out << "size=" << to_string(size) << '\n'
        << "pooling=" << to_string(pooling) << '\n'
        << "pooling_depth=" << pooling_depth << '\n'
        << "bottleneck=" << bottleneck << '\n'
        << "k_s=" << k_s << '\n'
        << "k_aug=" << k_aug << '\n'
        << "aux_dim=" << aux_dim << '\n'
        << "input_dim=" << input_dim << '\n'
        << "widths=";
    for (std::size_t i = 0; i < widths.size(); ++i) out << (i ? "," : "") << widths[i];
    out << '\n'
        << "heads=" << heads << '\n'
        << "initial_gat_layers=" << initial_gat_layers << '\n'
        << "mlp_hidden=" << mlp_hidden << '\n'
        << "vertex_ratio=" << vertex_ratio << '\n';
    return out.str();
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    auto trim = [](std::string s) {
        auto b = s.find_first_not_of(" \t\r");
        auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

ModelConfig ModelConfig::from_keys(const std::map<std::string, std::string>& kv) {
    auto get = [&](const char* key) -> const std::string* {
        auto it = kv.find(key);
        return it == kv.end() ? nullptr : &it->second;
    };
    auto as_int = [](const std::string& v, const char* key) {
        try {
            return std::stoi(v);
        } catch (const std::exception&) {
            throw ConfigError(std::string("bad integer for ") + key + ": " + v);
        }
    };
    SizeTag size = SizeTag::S;
    if (auto v = get("size")) size = parse_size(*v);
    ModelConfig c = for_size(size);
    if (auto v = get("pooling")) c.pooling = parse_pooling(*v);
    if (auto v = get("pooling_depth")) c.pooling_depth = as_int(*v, "pooling_depth");
    if (auto v = get("bottleneck")) c.bottleneck = as_int(*v, "bottleneck");
    if (auto v = get("k_s")) c.k_s = as_int(*v, "k_s");
    if (auto v = get("k_aug")) c.k_aug = as_int(*v, "k_aug");
    if (auto v = get("aux_dim")) c.aux_dim = as_int(*v, "aux_dim");
    if (auto v = get("input_dim")) c.input_dim = as_int(*v, "input_dim");
    if (auto v = get("heads")) c.heads = as_int(*v, "heads");
    if (auto v = get("initial_gat_layers")) c.initial_gat_layers = as_int(*v, "initial_gat_layers");
    if (auto v = get("mlp_hidden")) c.mlp_hidden = as_int(*v, "mlp_hidden");
    if (auto v = get("vertex_ratio")) {
        try {
            c.vertex_ratio = std::stod(*v);
        } catch (const std::exception&) {
            throw ConfigError("bad vertex_ratio: " + *v);
        }
    }
    if (auto v = get("widths")) {
        c.widths.clear();
        std::istringstream in(*v);
        std::string tok;
        while (std::getline(in, tok, ',')) c.widths.push_back(as_int(tok, "widths"));
    }
    c.validate();
    return c;
}

GraphSample make_sample(const Precomputed& pre, int label) {
    const auto& levels = pre.hierarchy.levels;
    if (levels.empty()) throw OperatorMismatch("precomputed hierarchy has no levels");
    if (pre.operators.size() + 1 != levels.size()) throw OperatorMismatch("operator count != depth");
    GraphSample s;
    FeatureGraph g = mesh_to_graph(levels[0]);
    s.features = std::move(g.node_features);
    s.target = s.features.leftCols(3);
    for (const Mesh& m : levels) {
        s.level_edges.push_back(m.edges);
        s.level_adjacency.push_back(make_adjacency(m.vertices.size(), m.edges));
    }
    s.operators = pre.operators;
    s.label = label;
    return s;
}

Model Model::create(const ModelConfig& config, int classes, std::uint64_t seed) {
    config.validate();
    Model m;
    m.config = config;
    m.classes = classes;
    std::mt19937_64 rng(seed);
    ParameterSet& p = m.params;
    const int depth = config.pooling_depth;
    const auto& w = config.widths;

    Eigen::Index in = config.input_dim;
    for (int i = 0; i < config.initial_gat_layers; ++i) {
        m.encoder.initial.push_back(nn::make_gat_layer(p, "enc.init" + std::to_string(i), in, w[0], config.heads, rng));
        in = w[0];
    }
    for (int s = 0; s < depth; ++s) {
        if (config.pooling == PoolingKind::Sag) {
            m.encoder.scorers.push_back(make_sag_scorer(p, "enc.score" + std::to_string(s + 1), w[s], rng));
        }
        m.encoder.stages.push_back(
            nn::make_gat_layer(p, "enc.stage" + std::to_string(s + 1), w[s], w[s + 1], config.heads, rng));
    }
    m.encoder.aux = nn::make_linear(p, "enc.aux", w[depth], config.aux_dim, rng);
    m.encoder.readout = nn::make_readout(p, "enc.readout", w[depth], config.bottleneck, rng);

    for (int i = 0; i < depth; ++i) {
        const int level = depth - i;
        const Eigen::Index dec_in = i == 0 ? config.bottleneck + config.aux_dim : w[level];
        m.decoder.stages.push_back(
            nn::make_gat_layer(p, "dec.stage" + std::to_string(level), dec_in, w[level - 1], config.heads, rng));
    }
    const Eigen::Index h = config.mlp_hidden;
    m.decoder.coords = nn::make_mlp(p, "dec.coords", {w[0], h, h, h, 3}, rng);

    if (classes > 0) m.head = nn::make_linear(p, "head", config.bottleneck, classes, rng);
    return m;
}

std::vector<std::size_t> Model::parameter_indices(const std::string& prefix) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].name.rfind(prefix, 0) == 0) out.push_back(i);
    }
    return out;
}

namespace {

void check_sample(const Model& model, const GraphSample& s) {
    const auto depth = static_cast<std::size_t>(model.config.pooling_depth);
    if (s.level_count() != depth + 1 || s.operators.size() != depth) {
        throw OperatorMismatch("sample has " + std::to_string(s.level_count()) + " levels; model needs " +
                               std::to_string(depth + 1));
    }
    if (s.features.cols() != model.config.input_dim) throw OperatorMismatch("feature width != input_dim");
    if (static_cast<std::size_t>(s.features.rows()) != s.nodes(0)) throw OperatorMismatch("features vs level 0 size");
    for (std::size_t l = 0; l < depth; ++l) {
        const LevelOperators& ops = s.operators[l];
        if (ops.pool_normalized.cols != s.nodes(l) || ops.pool_normalized.rows != s.nodes(l + 1) ||
            ops.unpool.rows != s.nodes(l) || ops.unpool.cols != s.nodes(l + 1)) {
            throw OperatorMismatch("operators between levels " + std::to_string(l) + " and " + std::to_string(l + 1) +
                                   " do not match the level sizes");
        }
    }
}

}  // namespace

void encode(const Model& model, const GraphSample& sample, Forward& fwd) {
    check_sample(model, sample);
    nn::Tape& t = fwd.tape;
    const ParameterSet& p = model.params;
    const int depth = model.config.pooling_depth;

    fwd.level_adjacency = {&sample.level_adjacency[0]};
    fwd.level_nodes = {sample.nodes(0)};
    fwd.plans.clear();

    nn::Var x = t.constant(sample.features);
    for (const auto& layer : model.encoder.initial) x = nn::elu(t, nn::gat_forward(t, p, layer, x, sample.level_adjacency[0]));

    std::vector<Edge> sag_edges = sample.level_edges[0];
    for (int s = 0; s < depth; ++s) {
        const std::size_t level = static_cast<std::size_t>(s) + 1;
        const LevelOperators& ops = sample.operators[level - 1];
        const Adjacency* adj = &sample.level_adjacency[level];
        switch (model.config.pooling) {
            case PoolingKind::PsMean:
                x = nn::spmm(t, ops.pool_normalized, x);
                break;
            case PoolingKind::PsMax:
                x = nn::pool_max(t, ops.pool_normalized, x);
                break;
            case PoolingKind::Sag: {
                SagTapeResult r = sag_pool(t, p, model.encoder.scorers[s], x, sag_edges, *fwd.level_adjacency.back(),
                                           sample.nodes(level));
                x = r.kept;
                sag_edges = std::move(r.induced_edges);
                fwd.owned_adjacency.push_back(make_adjacency(sample.nodes(level), sag_edges));
                adj = &fwd.owned_adjacency.back();
                fwd.plans.push_back(std::move(r.plan));
                break;
            }
        }
        x = nn::elu(t, nn::gat_forward(t, p, model.encoder.stages[s], x, *adj));
        fwd.level_adjacency.push_back(adj);
        fwd.level_nodes.push_back(static_cast<std::size_t>(t.value(x).rows()));
    }
    fwd.aux = nn::linear_forward(t, p, model.encoder.aux, x);
    fwd.latent = nn::readout_forward(t, p, model.encoder.readout, x);
}

void decode(const Model& model, const GraphSample& sample, Forward& fwd) {
    nn::Tape& t = fwd.tape;
    const ParameterSet& p = model.params;
    const int depth = model.config.pooling_depth;
    if (!fwd.latent.valid() || !fwd.aux.valid() || fwd.level_adjacency.size() != static_cast<std::size_t>(depth) + 1) {
        throw OperatorMismatch("decode needs a completed encode pass");
    }
    const std::size_t coarse = fwd.level_nodes.back();
    if (static_cast<std::size_t>(t.value(fwd.aux).rows()) != coarse) throw OperatorMismatch("aux rows != coarsest level");

    fwd.decoder_nodes.clear();
    nn::Var z = nn::concat_cols(t, nn::broadcast_rows(t, fwd.latent, coarse), fwd.aux);
    for (int i = 0; i < depth; ++i) {
        const std::size_t level = static_cast<std::size_t>(depth - i);
        fwd.decoder_nodes.push_back(static_cast<std::size_t>(t.value(z).rows()));
        z = nn::elu(t, nn::gat_forward(t, p, model.decoder.stages[i], z, *fwd.level_adjacency[level]));
        if (model.config.pooling == PoolingKind::Sag) {
            z = sag_unpool(t, z, fwd.plans[level - 1]);
        } else {
            z = nn::spmm(t, sample.operators[level - 1].unpool, z);
        }
    }
    fwd.coords = nn::mlp_forward(t, p, model.decoder.coords, z);
}

double reconstruction_loss(const Matrix& pred, const Matrix& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw ShapeMismatch("reconstruction_loss shapes");
    if (pred.rows() == 0) throw ShapeMismatch("reconstruction_loss over zero rows");
    return (pred - target).squaredNorm() / static_cast<double>(pred.rows());
}

nn::Var reconstruction_loss(nn::Tape& t, nn::Var pred, const Matrix& target) { return nn::mse_loss(t, pred, target); }

nn::Var classify(const Model& model, const GraphSample& sample, Forward& fwd, bool frozen) {
    if (!model.head) throw ConfigError("model has no classification head");
    encode(model, sample, fwd);
    nn::Var latent = frozen ? fwd.tape.constant(fwd.tape.value(fwd.latent)) : fwd.latent;
    return nn::linear_forward(fwd.tape, model.params, *model.head, latent);
}

Eigen::RowVectorXd embed(const Model& model, const GraphSample& sample) {
    Forward fwd;
    encode(model, sample, fwd);
    return fwd.tape.value(fwd.latent).row(0);
}

double largest_cluster_fraction(const Matrix& coords, double radius) {
    const Eigen::Index n = coords.rows();
    if (n == 0) return 0.0;
    const double r2 = radius * radius;
    Eigen::Index best = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index count = 0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if ((coords.row(i) - coords.row(j)).squaredNorm() <= r2) ++count;
        }
        best = std::max(best, count);
    }
    return static_cast<double>(best) / static_cast<double>(n);
}

}  // namespace pspool
