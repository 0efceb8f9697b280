#include "pspool/nn.hpp"

#include "pspool/errors.hpp"

#include <cmath>

namespace pspool::nn {

namespace {

std::string shape(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require(bool ok, const std::string& what) {
    if (!ok) throw ShapeMismatch(what);
}

}  // namespace

// ---- tape ---------------------------------------------------------------------

Var Tape::constant(Matrix value) { return record(std::move(value), false, nullptr); }

Var Tape::input(Matrix value) { return record(std::move(value), true, nullptr); }

Var Tape::parameter(const ParameterSet& params, std::size_t index) {
    if (params_ && params_ != &params) throw ShapeMismatch("tape already bound to another parameter set");
    params_ = &params;
    for (const auto& [idx, node] : param_leaves_) {
        if (idx == index) return Var{node};
    }
    Var v = record(params[index].value, true, nullptr);
    param_leaves_.emplace_back(index, v.id);
    return v;
}

Matrix Tape::grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

Var Tape::record(Matrix value, bool needs_grad, std::function<void(const Matrix&)> backward) {
    if (consumed_) throw TapeExhausted("cannot record after backward");
    nodes_.push_back({std::move(value), Matrix(), needs_grad, std::move(backward)});
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::accumulate(Var v, const Matrix& g) {
    Node& n = nodes_[v.id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
        n.grad = g;
    } else {
        n.grad += g;
    }
}

void Tape::backward(Var loss) {
    if (nodes_.empty()) throw TapeExhausted("empty tape");
    require(value(loss).size() == 1, "backward(loss) needs a 1x1 loss, got " + shape(value(loss)));
    backward(loss, Matrix::Ones(1, 1));
}

void Tape::backward(Var output, const Matrix& seed) {
    if (nodes_.empty()) throw TapeExhausted("empty tape");
    if (consumed_) throw TapeExhausted("backward already ran on this tape");
    require(seed.rows() == value(output).rows() && seed.cols() == value(output).cols(),
            "backward seed shape " + shape(seed) + " vs output " + shape(value(output)));
    consumed_ = true;
    accumulate(output, seed);
    for (std::size_t i = output.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.backward || n.grad.size() == 0) continue;
        n.backward(n.grad);
    }
}

void Tape::collect(Gradients& grads) const {
    for (const auto& [idx, node] : param_leaves_) {
        const Matrix& g = nodes_[node].grad;
        if (g.size() != 0) grads[idx] += g;
    }
}

// ---- elementwise and dense ops -----------------------------------------------

Var matmul(Tape& t, Var a, Var b) {
    const Matrix& av = t.value(a);
    const Matrix& bv = t.value(b);
    require(av.cols() == bv.rows(), "matmul " + shape(av) + " * " + shape(bv));
    bool ng = t.needs_grad(a) || t.needs_grad(b);
    return t.record(av * bv, ng, [&t, a, b](const Matrix& g) {
        if (t.needs_grad(a)) t.accumulate(a, g * t.value(b).transpose());
        if (t.needs_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
    });
}

Var add_bias(Tape& t, Var x, Var bias) {
    const Matrix& xv = t.value(x);
    const Matrix& bv = t.value(bias);
    require(bv.rows() == 1 && bv.cols() == xv.cols(), "add_bias " + shape(xv) + " + " + shape(bv));
    Matrix out = xv.rowwise() + bv.row(0);
    return t.record(std::move(out), t.needs_grad(x) || t.needs_grad(bias), [&t, x, bias](const Matrix& g) {
        t.accumulate(x, g);
        if (t.needs_grad(bias)) t.accumulate(bias, g.colwise().sum());
    });
}

Var add(Tape& t, Var a, Var b) {
    require(t.value(a).rows() == t.value(b).rows() && t.value(a).cols() == t.value(b).cols(),
            "add " + shape(t.value(a)) + " + " + shape(t.value(b)));
    return t.record(t.value(a) + t.value(b), t.needs_grad(a) || t.needs_grad(b), [&t, a, b](const Matrix& g) {
        t.accumulate(a, g);
        t.accumulate(b, g);
    });
}

Var elu(Tape& t, Var x) {
    const Matrix& in = t.value(x);
    Matrix out(in.rows(), in.cols());
    Matrix slope(in.rows(), in.cols());
    for (Eigen::Index i = 0; i < in.size(); ++i) {
        const double v = in.data()[i];
        out.data()[i] = v > 0.0 ? v : std::expm1(v);
        slope.data()[i] = v > 0.0 ? 1.0 : out.data()[i] + 1.0;
    }
    return t.record(std::move(out), t.needs_grad(x), [&t, x, slope = std::move(slope)](const Matrix& g) {
        t.accumulate(x, g.cwiseProduct(slope));
    });
}

Var tanh(Tape& t, Var x) {
    Matrix out = t.value(x).array().tanh().matrix();
    Matrix slope = (1.0 - out.array().square()).matrix();
    return t.record(std::move(out), t.needs_grad(x), [&t, x, slope = std::move(slope)](const Matrix& g) {
        t.accumulate(x, g.cwiseProduct(slope));
    });
}

Var concat_cols(Tape& t, Var a, Var b) {
    const Matrix& av = t.value(a);
    const Matrix& bv = t.value(b);
    require(av.rows() == bv.rows(), "concat_cols " + shape(av) + " | " + shape(bv));
    Matrix out(av.rows(), av.cols() + bv.cols());
    out << av, bv;
    const Eigen::Index ca = av.cols(), cb = bv.cols();
    return t.record(std::move(out), t.needs_grad(a) || t.needs_grad(b), [&t, a, b, ca, cb](const Matrix& g) {
        if (t.needs_grad(a)) t.accumulate(a, g.leftCols(ca));
        if (t.needs_grad(b)) t.accumulate(b, g.rightCols(cb));
    });
}

Var broadcast_rows(Tape& t, Var row, std::size_t n) {
    const Matrix& rv = t.value(row);
    require(rv.rows() == 1, "broadcast_rows needs a single row, got " + shape(rv));
    Matrix out = rv.replicate(static_cast<Eigen::Index>(n), 1);
    return t.record(std::move(out), t.needs_grad(row),
                    [&t, row](const Matrix& g) { t.accumulate(row, g.colwise().sum()); });
}

Var gather_rows(Tape& t, Var x, std::vector<std::uint32_t> rows) {
    const Matrix& xv = t.value(x);
    Matrix out(static_cast<Eigen::Index>(rows.size()), xv.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        require(rows[k] < xv.rows(), "gather_rows index out of range");
        out.row(static_cast<Eigen::Index>(k)) = xv.row(rows[k]);
    }
    const Eigen::Index n = xv.rows();
    return t.record(std::move(out), t.needs_grad(x), [&t, x, rows = std::move(rows), n](const Matrix& g) {
        Matrix d = Matrix::Zero(n, g.cols());
        for (std::size_t k = 0; k < rows.size(); ++k) d.row(rows[k]) += g.row(static_cast<Eigen::Index>(k));
        t.accumulate(x, d);
    });
}

Var scatter_rows(Tape& t, Var x, std::vector<std::uint32_t> rows, std::size_t n) {
    const Matrix& xv = t.value(x);
    require(static_cast<std::size_t>(xv.rows()) == rows.size(),
            "scatter_rows: " + std::to_string(rows.size()) + " positions for " + shape(xv));
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(n), xv.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        require(rows[k] < n, "scatter_rows index out of range");
        out.row(rows[k]) = xv.row(static_cast<Eigen::Index>(k));
    }
    return t.record(std::move(out), t.needs_grad(x), [&t, x, rows = std::move(rows)](const Matrix& g) {
        Matrix d(static_cast<Eigen::Index>(rows.size()), g.cols());
        for (std::size_t k = 0; k < rows.size(); ++k) d.row(static_cast<Eigen::Index>(k)) = g.row(rows[k]);
        t.accumulate(x, d);
    });
}

Var scale_rows(Tape& t, Var x, Var s) {
    const Matrix& xv = t.value(x);
    const Matrix& sv = t.value(s);
    require(sv.cols() == 1 && sv.rows() == xv.rows(), "scale_rows " + shape(xv) + " by " + shape(sv));
    Matrix out = xv.array().colwise() * sv.col(0).array();
    return t.record(std::move(out), t.needs_grad(x) || t.needs_grad(s), [&t, x, s](const Matrix& g) {
        if (t.needs_grad(x)) t.accumulate(x, (g.array().colwise() * t.value(s).col(0).array()).matrix());
        if (t.needs_grad(s)) t.accumulate(s, g.cwiseProduct(t.value(x)).rowwise().sum());
    });
}

Var sum_all(Tape& t, Var x) {
    Matrix out(1, 1);
    out(0, 0) = t.value(x).sum();
    const Eigen::Index r = t.value(x).rows(), c = t.value(x).cols();
    return t.record(std::move(out), t.needs_grad(x),
                    [&t, x, r, c](const Matrix& g) { t.accumulate(x, Matrix::Constant(r, c, g(0, 0))); });
}

// ---- graph and pooling ops -------------------------------------------------------

Var spmm(Tape& t, const SparseOperator& a, Var x) {
    Matrix out = pspool::spmm(a, t.value(x));
    return t.record(std::move(out), t.needs_grad(x),
                    [&t, &a, x](const Matrix& g) { t.accumulate(x, spmm_transposed(a, g)); });
}

Var pool_max(Tape& t, const SparseOperator& pattern, Var x) {
    MaxPoolResult res = pspool::pool_max(pattern, t.value(x));
    const Eigen::Index fine_rows = t.value(x).rows();
    return t.record(std::move(res.values), t.needs_grad(x),
                    [&t, x, fine_rows, arg = std::move(res.argmax)](const Matrix& g) {
                        Matrix d = Matrix::Zero(fine_rows, g.cols());
                        for (Eigen::Index r = 0; r < g.rows(); ++r) {
                            for (Eigen::Index c = 0; c < g.cols(); ++c) d(arg(r, c), c) += g(r, c);
                        }
                        t.accumulate(x, d);
                    });
}

Var attention_readout(Tape& t, Var gate, Var values) {
    const Matrix& gv = t.value(gate);
    const Matrix& vv = t.value(values);
    if (vv.rows() == 0) throw EmptyGraph("readout over zero nodes");
    require(gv.cols() == 1 && gv.rows() == vv.rows(), "attention_readout gate " + shape(gv) + " values " + shape(vv));
    Eigen::VectorXd alpha = (gv.col(0).array() - gv.col(0).maxCoeff()).exp().matrix();
    alpha /= alpha.sum();
    Matrix out = alpha.transpose() * vv;
    return t.record(std::move(out), t.needs_grad(gate) || t.needs_grad(values),
                    [&t, gate, values, alpha](const Matrix& g) {
                        const Matrix& v = t.value(values);
                        if (t.needs_grad(values)) t.accumulate(values, alpha * g);
                        if (t.needs_grad(gate)) {
                            Eigen::VectorXd ga = v * g.row(0).transpose();
                            double mean = alpha.dot(ga);
                            Matrix d = (alpha.array() * (ga.array() - mean)).matrix();
                            t.accumulate(gate, d);
                        }
                    });
}

// ---- losses ------------------------------------------------------------------------

Var mse_loss(Tape& t, Var pred, const Matrix& target) {
    const Matrix& p = t.value(pred);
    require(p.rows() == target.rows() && p.cols() == target.cols(), "mse_loss " + shape(p) + " vs " + shape(target));
    require(p.rows() > 0, "mse_loss over zero rows");
    const double n = static_cast<double>(p.rows());
    Matrix diff = p - target;
    Matrix out(1, 1);
    out(0, 0) = diff.squaredNorm() / n;
    return t.record(std::move(out), t.needs_grad(pred), [&t, pred, diff = std::move(diff), n](const Matrix& g) {
        t.accumulate(pred, (2.0 * g(0, 0) / n) * diff);
    });
}

Var cross_entropy(Tape& t, Var logits, int label) {
    const Matrix& z = t.value(logits);
    require(z.rows() == 1 && label >= 0 && label < z.cols(), "cross_entropy logits " + shape(z));
    const double m = z.maxCoeff();
    Matrix p = (z.array() - m).exp().matrix();
    const double sum = p.sum();
    p /= sum;
    Matrix out(1, 1);
    out(0, 0) = -(z(0, label) - m - std::log(sum));
    return t.record(std::move(out), t.needs_grad(logits), [&t, logits, p = std::move(p), label](const Matrix& g) {
        Matrix d = p;
        d(0, label) -= 1.0;
        t.accumulate(logits, g(0, 0) * d);
    });
}

// ---- graph attention ------------------------------------------------------------------

GatLayer make_gat_layer(ParameterSet& params, const std::string& prefix, Eigen::Index in_dim,
                        Eigen::Index out_dim, int heads, std::mt19937_64& rng) {
    if (heads < 1 || out_dim % heads != 0) {
        throw ConfigError(prefix + ": output width " + std::to_string(out_dim) + " not divisible by " +
                          std::to_string(heads) + " heads");
    }
    GatLayer layer;
    layer.heads = heads;
    layer.in_dim = in_dim;
    layer.out_dim = out_dim;
    const Eigen::Index head_dim = out_dim / heads;
    layer.weight = params.add(prefix + ".weight", glorot_uniform(in_dim, out_dim, rng));
    layer.att_src = params.add(prefix + ".att_src", glorot_uniform(1, head_dim, rng).replicate(1, heads));
    layer.att_dst = params.add(prefix + ".att_dst", glorot_uniform(1, head_dim, rng).replicate(1, heads));
    layer.bias = params.add(prefix + ".bias", Matrix::Zero(1, out_dim));
    return layer;
}

GatResult gat_compute(const Matrix& x, const Matrix& weight, const Matrix& att_src, const Matrix& att_dst,
                      const Matrix& bias, const Adjacency& adj, int heads, double slope) {
    require(x.cols() == weight.rows(), "gat input " + shape(x) + " vs weight " + shape(weight));
    require(adj.node_count() == static_cast<std::size_t>(x.rows()),
            "gat adjacency has " + std::to_string(adj.node_count()) + " nodes for " + shape(x));
    const Eigen::Index out_dim = weight.cols();
    require(heads >= 1 && out_dim % heads == 0, "gat heads do not divide output width");
    require(att_src.rows() == 1 && att_src.cols() == out_dim && att_dst.rows() == 1 && att_dst.cols() == out_dim &&
                bias.rows() == 1 && bias.cols() == out_dim,
            "gat attention/bias shapes");
    const Eigen::Index dh = out_dim / heads;
    const auto n = static_cast<Eigen::Index>(adj.node_count());

    GatResult r;
    r.projected = x * weight;
    Matrix s_src(n, heads), s_dst(n, heads);
    for (int h = 0; h < heads; ++h) {
        s_src.col(h) = r.projected.middleCols(h * dh, dh) * att_src.row(0).segment(h * dh, dh).transpose();
        s_dst.col(h) = r.projected.middleCols(h * dh, dh) * att_dst.row(0).segment(h * dh, dh).transpose();
    }
    const auto entries = static_cast<Eigen::Index>(adj.entry_count());
    r.logits.resize(entries, heads);
    r.alpha.resize(entries, heads);
    r.output = bias.replicate(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index begin = adj.offsets[i], end = adj.offsets[i + 1];
        for (int h = 0; h < heads; ++h) {
            double mx = -std::numeric_limits<double>::infinity();
            for (Eigen::Index e = begin; e < end; ++e) {
                double pre = s_dst(i, h) + s_src(adj.neighbors[e], h);
                r.logits(e, h) = pre;
                mx = std::max(mx, pre > 0.0 ? pre : slope * pre);
            }
            double sum = 0.0;
            for (Eigen::Index e = begin; e < end; ++e) {
                double pre = r.logits(e, h);
                double a = std::exp((pre > 0.0 ? pre : slope * pre) - mx);
                r.alpha(e, h) = a;
                sum += a;
            }
            auto out = r.output.row(i).segment(h * dh, dh);
            for (Eigen::Index e = begin; e < end; ++e) {
                r.alpha(e, h) /= sum;
                out.noalias() += r.alpha(e, h) * r.projected.row(adj.neighbors[e]).segment(h * dh, dh);
            }
        }
    }
    return r;
}

Var gat_forward(Tape& t, const ParameterSet& params, const GatLayer& layer, Var x, const Adjacency& adj) {
    Var w = t.parameter(params, layer.weight);
    Var a_src = t.parameter(params, layer.att_src);
    Var a_dst = t.parameter(params, layer.att_dst);
    Var b = t.parameter(params, layer.bias);
    GatResult r = gat_compute(t.value(x), t.value(w), t.value(a_src), t.value(a_dst), t.value(b), adj, layer.heads,
                              layer.slope);
    Matrix out = r.output;
    const int heads = layer.heads;
    const double slope = layer.slope;
    return t.record(std::move(out), true, [&t, &adj, x, w, a_src, a_dst, b, heads, slope,
                                           r = std::move(r)](const Matrix& g) {
        const Matrix& hp = r.projected;
        const Eigen::Index n = hp.rows();
        const Eigen::Index dh = hp.cols() / heads;
        const Matrix& asrc = t.value(a_src);
        const Matrix& adst = t.value(a_dst);

        t.accumulate(b, g.colwise().sum());
        Matrix g_proj = Matrix::Zero(n, hp.cols());
        Matrix gs_src = Matrix::Zero(n, heads), gs_dst = Matrix::Zero(n, heads);
        std::vector<double> g_alpha;
        for (Eigen::Index i = 0; i < n; ++i) {
            const Eigen::Index begin = adj.offsets[i], end = adj.offsets[i + 1];
            g_alpha.resize(static_cast<std::size_t>(end - begin));
            for (int h = 0; h < heads; ++h) {
                auto go = g.row(i).segment(h * dh, dh);
                double weighted = 0.0;
                for (Eigen::Index e = begin; e < end; ++e) {
                    const std::uint32_t j = adj.neighbors[e];
                    double ga = go.dot(hp.row(j).segment(h * dh, dh));
                    g_alpha[e - begin] = ga;
                    weighted += r.alpha(e, h) * ga;
                    g_proj.row(j).segment(h * dh, dh).noalias() += r.alpha(e, h) * go;
                }
                for (Eigen::Index e = begin; e < end; ++e) {
                    double ge = r.alpha(e, h) * (g_alpha[e - begin] - weighted);
                    double gpre = ge * (r.logits(e, h) > 0.0 ? 1.0 : slope);
                    gs_dst(i, h) += gpre;
                    gs_src(adj.neighbors[e], h) += gpre;
                }
            }
        }
        Matrix g_asrc(1, hp.cols()), g_adst(1, hp.cols());
        for (int h = 0; h < heads; ++h) {
            auto block = hp.middleCols(h * dh, dh);
            g_asrc.row(0).segment(h * dh, dh) = gs_src.col(h).transpose() * block;
            g_adst.row(0).segment(h * dh, dh) = gs_dst.col(h).transpose() * block;
            g_proj.middleCols(h * dh, dh).noalias() += gs_src.col(h) * asrc.row(0).segment(h * dh, dh);
            g_proj.middleCols(h * dh, dh).noalias() += gs_dst.col(h) * adst.row(0).segment(h * dh, dh);
        }
        t.accumulate(a_src, g_asrc);
        t.accumulate(a_dst, g_adst);
        t.accumulate(w, t.value(x).transpose() * g_proj);
        if (t.needs_grad(x)) t.accumulate(x, g_proj * t.value(w).transpose());
    });
}

// ---- dense layers ----------------------------------------------------------------------

Linear make_linear(ParameterSet& params, const std::string& prefix, Eigen::Index in_dim, Eigen::Index out_dim,
                   std::mt19937_64& rng) {
    Linear l;
    l.weight = params.add(prefix + ".weight", glorot_uniform(in_dim, out_dim, rng));
    l.bias = params.add(prefix + ".bias", Matrix::Zero(1, out_dim));
    return l;
}

Var linear_forward(Tape& t, const ParameterSet& params, const Linear& layer, Var x) {
    return add_bias(t, matmul(t, x, t.parameter(params, layer.weight)), t.parameter(params, layer.bias));
}

Mlp make_mlp(ParameterSet& params, const std::string& prefix, const std::vector<Eigen::Index>& dims,
             std::mt19937_64& rng) {
    if (dims.size() < 2) throw ConfigError(prefix + ": an MLP needs at least input and output widths");
    Mlp mlp;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        mlp.layers.push_back(make_linear(params, prefix + "." + std::to_string(i), dims[i], dims[i + 1], rng));
    }
    return mlp;
}

Var mlp_forward(Tape& t, const ParameterSet& params, const Mlp& mlp, Var x) {
    for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
        x = linear_forward(t, params, mlp.layers[i], x);
        if (i + 1 < mlp.layers.size()) x = elu(t, x);
    }
    return x;
}

Readout make_readout(ParameterSet& params, const std::string& prefix, Eigen::Index in_dim, Eigen::Index out_dim,
                     std::mt19937_64& rng) {
    Readout r;
    const Eigen::Index gate_hidden = std::max<Eigen::Index>(1, in_dim / 2);
    r.gate = make_mlp(params, prefix + ".gate", {in_dim, gate_hidden, 1}, rng);
    r.transform = make_mlp(params, prefix + ".transform", {in_dim, out_dim, out_dim}, rng);
    return r;
}

Var readout_forward(Tape& t, const ParameterSet& params, const Readout& readout, Var x) {
    if (t.value(x).rows() == 0) throw EmptyGraph("readout over zero nodes");
    Var gate = mlp_forward(t, params, readout.gate, x);
    Var values = mlp_forward(t, params, readout.transform, x);
    return attention_readout(t, gate, values);
}

}  // namespace pspool::nn
