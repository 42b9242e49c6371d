#pragma once

#include <vector>

#include "ecomoe/linalg.hpp"

namespace ecomoe {

/// Handle to a tape node.
struct Ref {
    int id = -1;
};

/// Reverse-mode tape over matrix-valued nodes. Rows are the batch
/// dimension. Nodes are created in topological order, so the backward
/// sweep is a single reverse pass. Frozen parameters never receive
/// gradient: grad() returns exact zeros for them.
class Tape {
public:
    Ref constant(Matrix v);
    Ref param(const Matrix& v, bool frozen = false);

    Ref matmul(Ref a, Ref b, bool transpose_b = false);
    Ref add(Ref a, Ref b);
    Ref sub(Ref a, Ref b);
    Ref mul(Ref a, Ref b);
    Ref add_rowvec(Ref x, Ref bias);  // bias is 1 x n, broadcast over rows
    Ref scale(Ref a, double s);
    Ref add_const(Ref a, double c);
    Ref tanh_op(Ref a);
    Ref exp_op(Ref a);
    Ref log_op(Ref a);
    Ref square(Ref a);
    Ref clamp_op(Ref a, double lo, double hi);
    Ref min_op(Ref a, Ref b);
    Ref mul_mask(Ref a, Matrix mask);  // elementwise by a constant matrix
    Ref slice_cols(Ref a, int c0, int c1);
    Ref concat_cols(const std::vector<Ref>& parts);
    Ref row_sum(Ref a);       // B x n -> B x 1
    Ref col_broadcast(Ref a, int cols);  // B x 1 -> B x n
    Ref sum(Ref a);           // -> 1 x 1
    Ref mean(Ref a);          // -> 1 x 1
    Ref log_softmax_rows(Ref a);
    Ref softmax_rows(Ref a);
    Ref row_logsumexp(Ref a); // B x K -> B x 1

    /// mean over unordered row pairs (i<j) of coeff(i,j) * ||x_i - x_j||_2.
    /// Zero-distance pairs contribute zero value and zero gradient.
    Ref pairdist_mean(Ref a, Matrix coeff);

    /// Reverse sweep from a scalar loss node.
    void backward(Ref loss);

    const Matrix& value(Ref r) const { return nodes_[r.id].val; }
    /// Gradient of the last backward() loss w.r.t. this node.
    const Matrix& grad(Ref r) const;
    bool requires_grad(Ref r) const { return nodes_[r.id].needs_grad; }

    size_t node_count() const { return nodes_.size(); }

private:
    enum class Op {
        Leaf, MatMul, Add, Sub, Mul, AddRowVec, Scale, AddConst, Tanh, Exp, Log,
        Square, Clamp, Min, MulMask, SliceCols, ConcatCols, RowSum, ColBroadcast,
        Sum, Mean, LogSoftmax, Softmax, RowLogSumExp, PairDist,
    };
    struct Node {
        Op op = Op::Leaf;
        int a = -1;
        int b = -1;
        std::vector<int> srcs;  // ConcatCols only
        Matrix val;
        Matrix grad;
        Matrix aux;     // masks / coefficient matrices
        double c0 = 0.0;
        double c1 = 0.0;
        bool needs_grad = false;
        bool frozen = false;
    };

    Ref push(Node n);
    Matrix& grad_buf(int id);

    std::vector<Node> nodes_;
    Matrix zero_;  // scratch for grad() of constant nodes
};

}  // namespace ecomoe
