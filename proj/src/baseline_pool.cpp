#include "pspool/baseline_pool.hpp"

#include "pspool/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pspool {

std::size_t selection_size(std::size_t n, double ratio) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw EmptySelection("ratio must lie in (0, 1]");
    if (ratio * static_cast<double>(n) < 1.0) {
        throw EmptySelection("ratio " + std::to_string(ratio) + " keeps no node out of " + std::to_string(n));
    }
    return static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n) - 1e-12));
}

SelectionPlan select_top_k(std::vector<double> scores, std::size_t keep) {
    if (keep == 0) throw EmptySelection("selection of zero nodes");
    if (keep > scores.size()) throw ShapeMismatch("cannot keep more nodes than exist");
    std::vector<std::uint32_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return scores[a] > scores[b]; });
    SelectionPlan plan;
    plan.kept_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
    std::sort(plan.kept_indices.begin(), plan.kept_indices.end());
    plan.original_size = scores.size();
    plan.ratio = static_cast<double>(keep) / static_cast<double>(scores.size());
    plan.scores = std::move(scores);
    return plan;
}

SagScorer make_sag_scorer(ParameterSet& params, const std::string& prefix, Eigen::Index in_dim,
                          std::mt19937_64& rng) {
    return {nn::make_gat_layer(params, prefix, in_dim, 1, 1, rng)};
}

SagPoolResult sag_pool(const ParameterSet& params, const SagScorer& scorer, const Matrix& x,
                       const std::vector<Edge>& edges, double ratio) {
    const std::size_t keep = selection_size(static_cast<std::size_t>(x.rows()), ratio);
    Adjacency adj = make_adjacency(static_cast<std::size_t>(x.rows()), edges);
    nn::Tape t;
    SagTapeResult r = sag_pool(t, params, scorer, t.constant(x), edges, adj, keep);
    r.plan.ratio = ratio;
    return {t.value(r.kept), std::move(r.induced_edges), std::move(r.plan)};
}

Matrix sag_unpool(const Matrix& kept, const SelectionPlan& plan, std::size_t original_size) {
    if (static_cast<std::size_t>(kept.rows()) != plan.kept_indices.size()) {
        throw ShapeMismatch("sag_unpool: " + std::to_string(kept.rows()) + " rows for " +
                            std::to_string(plan.kept_indices.size()) + " kept nodes");
    }
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(original_size), kept.cols());
    for (std::size_t k = 0; k < plan.kept_indices.size(); ++k) {
        if (plan.kept_indices[k] >= original_size) throw ShapeMismatch("sag_unpool: kept index out of range");
        out.row(plan.kept_indices[k]) = kept.row(static_cast<Eigen::Index>(k));
    }
    return out;
}

SagTapeResult sag_pool(nn::Tape& t, const ParameterSet& params, const SagScorer& scorer, nn::Var x,
                       const std::vector<Edge>& edges, const Adjacency& adj, std::size_t keep) {
    nn::Var scores = nn::gat_forward(t, params, scorer.layer, x, adj);
    const Matrix& sv = t.value(scores);
    std::vector<double> s(sv.data(), sv.data() + sv.size());
    SagTapeResult r;
    r.plan = select_top_k(std::move(s), keep);
    nn::Var gate = nn::tanh(t, nn::gather_rows(t, scores, r.plan.kept_indices));
    r.kept = nn::scale_rows(t, nn::gather_rows(t, x, r.plan.kept_indices), gate);
    r.induced_edges = induced_edges(edges, r.plan.kept_indices, adj.node_count());
    return r;
}

nn::Var sag_unpool(nn::Tape& t, nn::Var kept, const SelectionPlan& plan) {
    return nn::scatter_rows(t, kept, plan.kept_indices, plan.original_size);
}

}  // namespace pspool
