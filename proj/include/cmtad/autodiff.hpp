#pragma once

#include "cmtad/common.hpp"

#include <cstdint>
#include <vector>

namespace cmtad {

// Reverse-mode autodiff on dense matrices. One Tape owns one computation;
// ops append nodes and backward() walks them in reverse. The op set is a
// closed enum (no type-erased closures) so a forward+backward pass allocates
// only matrix storage.
template <class S>
class Tape {
public:
    using M = Mat<S>;

    struct Var {
        int i = -1;
        bool valid() const { return i >= 0; }
    };

    Var leaf(M v, bool needs_grad = false) {
        Node n;
        n.op = Op::Leaf;
        n.val = std::move(v);
        n.needs = needs_grad;
        return push(std::move(n));
    }

    const M& val(Var v) const { return nodes_[check(v)].val; }
    const M& grad(Var v) const { return nodes_[check(v)].grad; }
    bool needs_grad(Var v) const { return nodes_[check(v)].needs; }

    Var add(Var a, Var b) {
        same_shape(a, b, "add");
        Node n = binary(Op::Add, a, b);
        n.val = val(a) + val(b);
        return push(std::move(n));
    }

    // a: n x m, row: 1 x m broadcast over rows
    Var add_row(Var a, Var row) {
        if (val(row).rows() != 1 || val(row).cols() != val(a).cols())
            throw ValidationError("add_row: shape mismatch");
        Node n = binary(Op::AddRow, a, row);
        n.val = val(a);
        n.val.rowwise() += val(row).row(0);
        return push(std::move(n));
    }

    Var add_scalar(Var a, S c) {
        Node n = unary(Op::AddScalar, a);
        n.val = val(a).array() + c;
        n.s0 = c;
        return push(std::move(n));
    }

    Var sub(Var a, Var b) {
        same_shape(a, b, "sub");
        Node n = binary(Op::Sub, a, b);
        n.val = val(a) - val(b);
        return push(std::move(n));
    }

    Var mul(Var a, Var b) {
        same_shape(a, b, "mul");
        Node n = binary(Op::Mul, a, b);
        n.val = val(a).cwiseProduct(val(b));
        return push(std::move(n));
    }

    Var scale(Var a, S k) {
        Node n = unary(Op::Scale, a);
        n.val = val(a) * k;
        n.s0 = k;
        return push(std::move(n));
    }

    Var matmul(Var a, Var b) {
        if (val(a).cols() != val(b).rows()) throw ValidationError("matmul: inner dim mismatch");
        Node n = binary(Op::MatMul, a, b);
        n.val = val(a) * val(b);
        return push(std::move(n));
    }

    Var transpose(Var a) {
        Node n = unary(Op::Transpose, a);
        n.val = val(a).transpose();
        return push(std::move(n));
    }

    Var sigmoid(Var a) {
        Node n = unary(Op::Sigmoid, a);
        n.val = ((-val(a).array()).exp() + S(1)).inverse();
        return push(std::move(n));
    }

    Var tanh(Var a) {
        Node n = unary(Op::Tanh, a);
        n.val = val(a).array().tanh();
        return push(std::move(n));
    }

    Var relu(Var a) {
        Node n = unary(Op::Relu, a);
        n.val = val(a).cwiseMax(S(0));
        return push(std::move(n));
    }

    Var leaky_relu(Var a, S slope) {
        Node n = unary(Op::LeakyRelu, a);
        n.val = val(a).array().max(val(a).array() * slope);
        n.s0 = slope;
        return push(std::move(n));
    }

    Var softmax_rows(Var a) {
        Node n = unary(Op::SoftmaxRows, a);
        n.val = val(a);
        for (Eigen::Index r = 0; r < n.val.rows(); ++r) {
            auto row = n.val.row(r).array();
            S mx = row.maxCoeff();
            n.val.row(r) = (row - mx).exp();
            n.val.row(r) /= n.val.row(r).sum();
        }
        return push(std::move(n));
    }

    Var concat_cols(Var a, Var b) {
        if (val(a).rows() != val(b).rows()) throw ValidationError("concat_cols: row mismatch");
        Node n = binary(Op::ConcatCols, a, b);
        n.val.resize(val(a).rows(), val(a).cols() + val(b).cols());
        n.val << val(a), val(b);
        return push(std::move(n));
    }

    Var concat_rows(Var a, Var b) {
        if (val(a).cols() != val(b).cols()) throw ValidationError("concat_rows: col mismatch");
        Node n = binary(Op::ConcatRows, a, b);
        n.val.resize(val(a).rows() + val(b).rows(), val(a).cols());
        n.val << val(a), val(b);
        return push(std::move(n));
    }

    Var slice_rows(Var a, int r0, int nr) {
        if (r0 < 0 || nr < 1 || r0 + nr > val(a).rows())
            throw ValidationError("slice_rows: out of range");
        Node n = unary(Op::SliceRows, a);
        n.val = val(a).middleRows(r0, nr);
        n.i0 = r0;
        n.i1 = nr;
        return push(std::move(n));
    }

    // x: W x C. Row t of the result is [x_{t-k+1}, ..., x_t] flattened with
    // zeros left of the series start (causal padding). Output W x (k*C).
    Var causal_im2col(Var x, int k) {
        if (k < 1) throw ValidationError("causal_im2col: k must be >= 1");
        const M& v = val(x);
        const Eigen::Index W = v.rows(), C = v.cols();
        Node n = unary(Op::CausalIm2col, x);
        n.val = M::Zero(W, k * C);
        for (int j = 0; j < k; ++j) {
            int off = k - 1 - j;  // tap j reads x_{t-off}
            for (Eigen::Index t = off; t < W; ++t) n.val.block(t, j * C, 1, C) = v.row(t - off);
        }
        n.i0 = k;
        return push(std::move(n));
    }

    // GATv2 scores over a complete graph with self-loops:
    //   e_ij = a^T LeakyReLU(l_i + r_j)   with l = U W_l, r = U W_r.
    // left, right: n x D. attn_vec: D x 1. Output n x n.
    Var gatv2_scores(Var left, Var right, Var attn_vec, S slope) {
        const M& L = val(left);
        const M& R = val(right);
        const M& av = val(attn_vec);
        if (L.rows() != R.rows() || L.cols() != R.cols() || av.cols() != 1 || av.rows() != L.cols())
            throw ValidationError("gatv2_scores: shape mismatch");
        const Eigen::Index N = L.rows();
        Node n;
        n.op = Op::Gatv2Scores;
        n.a = left.i;
        n.b = right.i;
        n.c = attn_vec.i;
        n.s0 = slope;
        n.needs = nodes_[left.i].needs || nodes_[right.i].needs || nodes_[attn_vec.i].needs;
        n.val.resize(N, N);
        M pre(N, L.cols());
        for (Eigen::Index i = 0; i < N; ++i) {
            pre = R;
            pre.rowwise() += L.row(i);
            pre = pre.array().max(pre.array() * slope);
            n.val.row(i) = (pre * av).transpose();
        }
        return push(std::move(n));
    }

    // table: card x dim, gathers rows by index. Output idx.size() x dim.
    Var embed_rows(Var table, std::vector<int> idx) {
        const M& t = val(table);
        for (int i : idx)
            if (i < 0 || i >= t.rows())
                throw ValidationError("embed_rows: index " + std::to_string(i) +
                                      " out of range for cardinality " + std::to_string(t.rows()));
        Node n = unary(Op::EmbedRows, table);
        n.val.resize(static_cast<Eigen::Index>(idx.size()), t.cols());
        for (std::size_t r = 0; r < idx.size(); ++r) n.val.row(static_cast<Eigen::Index>(r)) = t.row(idx[r]);
        n.idx = std::move(idx);
        return push(std::move(n));
    }

    Var replicate_rows(Var a, int count) {
        if (val(a).rows() != 1) throw ValidationError("replicate_rows: input must be 1 x m");
        Node n = unary(Op::ReplicateRows, a);
        n.val = val(a).replicate(count, 1);
        n.i0 = count;
        return push(std::move(n));
    }

    Var sum_all(Var a) {
        Node n = unary(Op::SumAll, a);
        n.val.resize(1, 1);
        n.val(0, 0) = val(a).sum();
        return push(std::move(n));
    }

    // 1 x (r*c) row vector to r x c, row-major element order.
    Var reshape_row(Var a, int r, int c) {
        const M& v = val(a);
        if (v.rows() != 1 || v.cols() != static_cast<Eigen::Index>(r) * c)
            throw ValidationError("reshape_row: size mismatch");
        Node n = unary(Op::ReshapeRow, a);
        n.val.resize(r, c);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) n.val(i, j) = v(0, i * c + j);
        n.i0 = r;
        n.i1 = c;
        return push(std::move(n));
    }

    void backward(Var root) {
        Node& r = nodes_[check(root)];
        if (r.val.rows() != 1 || r.val.cols() != 1)
            throw ValidationError("backward: root must be a 1x1 scalar");
        for (auto& n : nodes_)
            if (n.needs)
                n.grad = M::Zero(n.val.rows(), n.val.cols());
        if (!r.needs) return;
        r.grad(0, 0) = S(1);
        for (int i = root.i; i >= 0; --i) backprop(i);
    }

    std::size_t size() const { return nodes_.size(); }

    void clear() { nodes_.clear(); }

private:
    enum class Op : std::uint8_t {
        Leaf, Add, AddRow, AddScalar, Sub, Mul, Scale, MatMul, Transpose,
        Sigmoid, Tanh, Relu, LeakyRelu, SoftmaxRows, ConcatCols, ConcatRows,
        SliceRows, CausalIm2col, Gatv2Scores, EmbedRows, ReplicateRows, SumAll, ReshapeRow
    };

    struct Node {
        M val;
        M grad;
        Op op = Op::Leaf;
        int a = -1, b = -1, c = -1;
        S s0 = S(0);
        int i0 = 0, i1 = 0;
        std::vector<int> idx;
        bool needs = false;
    };

    std::vector<Node> nodes_;

    int check(Var v) const {
        if (!v.valid() || v.i >= static_cast<int>(nodes_.size()))
            throw ValidationError("invalid tape variable");
        return v.i;
    }

    Var push(Node&& n) {
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    Node unary(Op op, Var a) {
        Node n;
        n.op = op;
        n.a = check(a);
        n.needs = nodes_[n.a].needs;
        return n;
    }

    Node binary(Op op, Var a, Var b) {
        Node n;
        n.op = op;
        n.a = check(a);
        n.b = check(b);
        n.needs = nodes_[n.a].needs || nodes_[n.b].needs;
        return n;
    }

    void same_shape(Var a, Var b, const char* what) const {
        if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols())
            throw ValidationError(std::string(what) + ": shape mismatch");
    }

    bool wants(int i) const { return i >= 0 && nodes_[i].needs; }

    void backprop(int i) {
        Node& n = nodes_[i];
        if (!n.needs || n.grad.size() == 0) return;
        const M& g = n.grad;
        switch (n.op) {
            case Op::Leaf:
                break;
            case Op::Add:
                if (wants(n.a)) nodes_[n.a].grad += g;
                if (wants(n.b)) nodes_[n.b].grad += g;
                break;
            case Op::AddRow:
                if (wants(n.a)) nodes_[n.a].grad += g;
                if (wants(n.b)) nodes_[n.b].grad.row(0) += g.colwise().sum();
                break;
            case Op::AddScalar:
                if (wants(n.a)) nodes_[n.a].grad += g;
                break;
            case Op::Sub:
                if (wants(n.a)) nodes_[n.a].grad += g;
                if (wants(n.b)) nodes_[n.b].grad -= g;
                break;
            case Op::Mul:
                if (wants(n.a)) nodes_[n.a].grad += g.cwiseProduct(nodes_[n.b].val);
                if (wants(n.b)) nodes_[n.b].grad += g.cwiseProduct(nodes_[n.a].val);
                break;
            case Op::Scale:
                if (wants(n.a)) nodes_[n.a].grad += g * n.s0;
                break;
            case Op::MatMul:
                if (wants(n.a)) nodes_[n.a].grad.noalias() += g * nodes_[n.b].val.transpose();
                if (wants(n.b)) nodes_[n.b].grad.noalias() += nodes_[n.a].val.transpose() * g;
                break;
            case Op::Transpose:
                if (wants(n.a)) nodes_[n.a].grad += g.transpose();
                break;
            case Op::Sigmoid:
                if (wants(n.a))
                    nodes_[n.a].grad.array() += g.array() * n.val.array() * (S(1) - n.val.array());
                break;
            case Op::Tanh:
                if (wants(n.a))
                    nodes_[n.a].grad.array() += g.array() * (S(1) - n.val.array().square());
                break;
            case Op::Relu:
                if (wants(n.a))
                    nodes_[n.a].grad.array() +=
                        g.array() * (nodes_[n.a].val.array() > S(0)).template cast<S>();
                break;
            case Op::LeakyRelu:
                if (wants(n.a)) {
                    auto pos = (nodes_[n.a].val.array() > S(0)).template cast<S>();
                    nodes_[n.a].grad.array() += g.array() * (pos + (S(1) - pos) * n.s0);
                }
                break;
            case Op::SoftmaxRows:
                if (wants(n.a)) {
                    for (Eigen::Index r = 0; r < g.rows(); ++r) {
                        S dot = (g.row(r).array() * n.val.row(r).array()).sum();
                        nodes_[n.a].grad.row(r).array() +=
                            n.val.row(r).array() * (g.row(r).array() - dot);
                    }
                }
                break;
            case Op::ConcatCols: {
                Eigen::Index ca = nodes_[n.a].val.cols();
                if (wants(n.a)) nodes_[n.a].grad += g.leftCols(ca);
                if (wants(n.b)) nodes_[n.b].grad += g.rightCols(g.cols() - ca);
                break;
            }
            case Op::ConcatRows: {
                Eigen::Index ra = nodes_[n.a].val.rows();
                if (wants(n.a)) nodes_[n.a].grad += g.topRows(ra);
                if (wants(n.b)) nodes_[n.b].grad += g.bottomRows(g.rows() - ra);
                break;
            }
            case Op::SliceRows:
                if (wants(n.a)) nodes_[n.a].grad.middleRows(n.i0, n.i1) += g;
                break;
            case Op::CausalIm2col:
                if (wants(n.a)) {
                    const int k = n.i0;
                    const Eigen::Index C = nodes_[n.a].val.cols();
                    const Eigen::Index W = nodes_[n.a].val.rows();
                    M& ga = nodes_[n.a].grad;
                    for (int j = 0; j < k; ++j) {
                        int off = k - 1 - j;
                        for (Eigen::Index t = off; t < W; ++t)
                            ga.row(t - off) += g.block(t, j * C, 1, C);
                    }
                }
                break;
            case Op::Gatv2Scores: {
                const M& L = nodes_[n.a].val;
                const M& R = nodes_[n.b].val;
                const M& av = nodes_[n.c].val;
                const Eigen::Index N = L.rows(), D = L.cols();
                M pre(N, D), der(N, D), m(N, D);
                for (Eigen::Index i2 = 0; i2 < N; ++i2) {
                    pre = R;
                    pre.rowwise() += L.row(i2);
                    der = ((pre.array() > S(0)).template cast<S>() * (S(1) - n.s0)).matrix();
                    der.array() += n.s0;
                    // m_jd = g_ij * av_d * leaky'(pre_jd)
                    m = der.cwiseProduct(g.row(i2).transpose() * av.transpose());
                    if (wants(n.b)) nodes_[n.b].grad += m;
                    if (wants(n.a)) nodes_[n.a].grad.row(i2) += m.colwise().sum();
                    if (wants(n.c)) {
                        pre = pre.array().max(pre.array() * n.s0).matrix();  // leaky(pre)
                        nodes_[n.c].grad.noalias() += pre.transpose() * g.row(i2).transpose();
                    }
                }
                break;
            }
            case Op::EmbedRows:
                if (wants(n.a)) {
                    for (std::size_t r = 0; r < n.idx.size(); ++r)
                        nodes_[n.a].grad.row(n.idx[r]) += g.row(static_cast<Eigen::Index>(r));
                }
                break;
            case Op::ReplicateRows:
                if (wants(n.a)) nodes_[n.a].grad.row(0) += g.colwise().sum();
                break;
            case Op::SumAll:
                if (wants(n.a)) nodes_[n.a].grad.array() += g(0, 0);
                break;
            case Op::ReshapeRow:
                if (wants(n.a)) {
                    M& ga = nodes_[n.a].grad;
                    for (int r = 0; r < n.i0; ++r)
                        for (int c = 0; c < n.i1; ++c) ga(0, r * n.i1 + c) += g(r, c);
                }
                break;
        }
    }
};

}  // namespace cmtad
