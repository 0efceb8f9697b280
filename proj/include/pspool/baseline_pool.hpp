#pragma once

#include "pspool/graph.hpp"
#include "pspool/nn.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace pspool {

/// Top-k node selection. kept_indices are sorted ascending.
struct SelectionPlan {
    std::vector<double> scores;
    std::vector<std::uint32_t> kept_indices;
    double ratio = 0.0;
    std::size_t original_size = 0;
};

/// ceil(ratio * n); throws EmptySelection when ratio * n < 1.
std::size_t selection_size(std::size_t n, double ratio);

/// Keeps the `keep` highest scores, ties to the lower index.
SelectionPlan select_top_k(std::vector<double> scores, std::size_t keep);

/// Single-head GAT layer producing one score per node.
struct SagScorer {
    nn::GatLayer layer;
};

SagScorer make_sag_scorer(ParameterSet& params, const std::string& prefix, Eigen::Index in_dim,
                          std::mt19937_64& rng);

struct SagPoolResult {
    Matrix kept_features;           // x[kept] * tanh(score[kept])
    std::vector<Edge> induced_edges;  // relabeled to kept positions
    SelectionPlan plan;
};

SagPoolResult sag_pool(const ParameterSet& params, const SagScorer& scorer, const Matrix& x,
                       const std::vector<Edge>& edges, double ratio);

/// Kept rows go back to their original positions; every other row is zero.
Matrix sag_unpool(const Matrix& kept, const SelectionPlan& plan, std::size_t original_size);

/// Differentiable variant used inside models: gradients reach the scorer
/// through the tanh gate.
struct SagTapeResult {
    nn::Var kept;
    std::vector<Edge> induced_edges;
    SelectionPlan plan;
};

SagTapeResult sag_pool(nn::Tape& t, const ParameterSet& params, const SagScorer& scorer, nn::Var x,
                       const std::vector<Edge>& edges, const Adjacency& adj, std::size_t keep);

nn::Var sag_unpool(nn::Tape& t, nn::Var kept, const SelectionPlan& plan);

}  // namespace pspool
