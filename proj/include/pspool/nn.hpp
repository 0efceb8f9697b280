#pragma once

#include "pspool/graph.hpp"
#include "pspool/params.hpp"
#include "pspool/sparse.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace pspool::nn {

struct Var {
    std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
    bool valid() const { return id != std::numeric_limits<std::uint32_t>::max(); }
};

/// Records a forward computation over a fixed set of differentiable ops
/// and replays it in reverse to obtain gradients.
class Tape {
public:
    Var constant(Matrix value);
    /// A leaf whose gradient is tracked (for input-gradient checks).
    Var input(Matrix value);
    /// Leaf bound to params[index]; recorded once per tape.
    Var parameter(const ParameterSet& params, std::size_t index);

    const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
    /// Gradient after backward(); zeros when the node was not reached.
    Matrix grad(Var v) const;
    bool needs_grad(Var v) const { return nodes_.at(v.id).needs_grad; }

    /// Appends an op node. `backward` runs once, after the node's gradient is final.
    Var record(Matrix value, bool needs_grad, std::function<void(const Matrix& grad)> backward);
    /// Adds `g` into the gradient of `v` (no-op for nodes without gradient).
    void accumulate(Var v, const Matrix& g);

    /// Seeds d(loss)/d(loss) = 1 for a 1x1 loss and runs reverse mode.
    void backward(Var loss);
    void backward(Var output, const Matrix& seed);

    /// Adds every parameter leaf gradient into `grads` (indexed like the ParameterSet).
    void collect(Gradients& grads) const;

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool needs_grad = false;
        std::function<void(const Matrix&)> backward;
    };
    std::vector<Node> nodes_;
    std::vector<std::pair<std::size_t, std::uint32_t>> param_leaves_;
    const ParameterSet* params_ = nullptr;
    bool consumed_ = false;
};

// ---- elementwise and dense ops -------------------------------------------

Var matmul(Tape& t, Var a, Var b);
/// x (n x d) + bias (1 x d) broadcast over rows.
Var add_bias(Tape& t, Var x, Var bias);
Var add(Tape& t, Var a, Var b);
Var elu(Tape& t, Var x);
Var tanh(Tape& t, Var x);
Var concat_cols(Tape& t, Var a, Var b);
/// Tiles a 1 x d row into n rows.
Var broadcast_rows(Tape& t, Var row, std::size_t n);
Var gather_rows(Tape& t, Var x, std::vector<std::uint32_t> rows);
/// Rows of x placed at `rows` of an n-row zero matrix.
Var scatter_rows(Tape& t, Var x, std::vector<std::uint32_t> rows, std::size_t n);
/// x (n x d) times s (n x 1) row-wise.
Var scale_rows(Tape& t, Var x, Var s);
Var sum_all(Tape& t, Var x);

// ---- graph and pooling ops -----------------------------------------------

/// a * x for a sparse operator; the operator must outlive the tape.
Var spmm(Tape& t, const SparseOperator& a, Var x);
/// Channel-wise max over the operator's sparsity pattern.
Var pool_max(Tape& t, const SparseOperator& pattern, Var x);

/// Softmax over rows of `gate` (n x 1) used to average `values` (n x d) into a 1 x d row.
Var attention_readout(Tape& t, Var gate, Var values);

// ---- losses ----------------------------------------------------------------

/// Mean over rows of the squared Euclidean row error.
Var mse_loss(Tape& t, Var pred, const Matrix& target);
/// Softmax cross-entropy of a 1 x C logit row.
Var cross_entropy(Tape& t, Var logits, int label);

// ---- graph attention ---------------------------------------------------------

inline constexpr double kDefaultLeakySlope = 0.2;

/// Parameter handles of one GAT layer: weight (d_in x d_out), attention
/// vectors a_src/a_dst (1 x d_out, one d_out/heads slice per head), bias.
struct GatLayer {
    std::size_t weight = 0, att_src = 0, att_dst = 0, bias = 0;
    int heads = 1;
    double slope = kDefaultLeakySlope;
    Eigen::Index in_dim = 0, out_dim = 0;
};

GatLayer make_gat_layer(ParameterSet& params, const std::string& prefix, Eigen::Index in_dim,
                        Eigen::Index out_dim, int heads, std::mt19937_64& rng);

/// Plain forward result of a GAT layer, also used as the dense reference in tests.
struct GatResult {
    Matrix projected;  // X W
    Matrix output;     // attention-weighted sum + bias
    /// Attention coefficient per (adjacency entry, head).
    Matrix alpha;
    /// LeakyReLU input per (adjacency entry, head).
    Matrix logits;
};

GatResult gat_compute(const Matrix& x, const Matrix& weight, const Matrix& att_src, const Matrix& att_dst,
                      const Matrix& bias, const Adjacency& adj, int heads, double slope);

/// out_i = sum_{j in N(i) + i} alpha_ij (W x_j) + b, alpha softmax-normalized per node and head.
Var gat_forward(Tape& t, const ParameterSet& params, const GatLayer& layer, Var x, const Adjacency& adj);

// ---- dense layers -------------------------------------------------------------

struct Linear {
    std::size_t weight = 0, bias = 0;
};

Linear make_linear(ParameterSet& params, const std::string& prefix, Eigen::Index in_dim, Eigen::Index out_dim,
                   std::mt19937_64& rng);
Var linear_forward(Tape& t, const ParameterSet& params, const Linear& layer, Var x);

/// Affine layers with ELU in between; the last layer is linear.
struct Mlp {
    std::vector<Linear> layers;
};

Mlp make_mlp(ParameterSet& params, const std::string& prefix, const std::vector<Eigen::Index>& dims,
             std::mt19937_64& rng);
Var mlp_forward(Tape& t, const ParameterSet& params, const Mlp& mlp, Var x);

struct Readout {
    Mlp gate;       // d -> 1
    Mlp transform;  // d -> bottleneck
};

Readout make_readout(ParameterSet& params, const std::string& prefix, Eigen::Index in_dim,
                     Eigen::Index out_dim, std::mt19937_64& rng);
/// g = sum_i softmax_i(gate(x_i)) transform(x_i). Throws EmptyGraph for zero rows.
Var readout_forward(Tape& t, const ParameterSet& params, const Readout& readout, Var x);

}  // namespace pspool::nn
