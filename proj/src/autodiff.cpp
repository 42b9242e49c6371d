#include "ecomoe/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace ecomoe {

namespace {

// out += op_a(a) * op_b(b)
void gemm_acc(const Matrix& a, bool ta, const Matrix& b, bool tb, Matrix& out) {
    const int m = ta ? a.cols : a.rows;
    const int k = ta ? a.rows : a.cols;
    const int n = tb ? b.rows : b.cols;
    if (out.rows != m || out.cols != n) throw ConfigError("gemm_acc: output shape mismatch");

    if (!ta && !tb) {
        for (int i = 0; i < m; ++i)
            for (int p = 0; p < k; ++p) {
                const double av = a(i, p);
                if (av == 0.0) continue;
                const double* brow = &b.data[static_cast<size_t>(p) * n];
                double* orow = &out.data[static_cast<size_t>(i) * n];
                for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
            }
    } else if (!ta && tb) {
        for (int i = 0; i < m; ++i) {
            const double* arow = &a.data[static_cast<size_t>(i) * k];
            double* orow = &out.data[static_cast<size_t>(i) * n];
            for (int j = 0; j < n; ++j) {
                const double* brow = &b.data[static_cast<size_t>(j) * k];
                double acc = 0.0;
                for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
                orow[j] += acc;
            }
        }
    } else if (ta && !tb) {
        for (int p = 0; p < k; ++p) {
            const double* arow = &a.data[static_cast<size_t>(p) * m];
            const double* brow = &b.data[static_cast<size_t>(p) * n];
            for (int i = 0; i < m; ++i) {
                const double av = arow[i];
                if (av == 0.0) continue;
                double* orow = &out.data[static_cast<size_t>(i) * n];
                for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
            }
        }
    } else {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                double acc = 0.0;
                for (int p = 0; p < k; ++p) acc += a(p, i) * b(j, p);
                out(i, j) += acc;
            }
    }
}

}  // namespace

Ref Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return Ref{static_cast<int>(nodes_.size()) - 1};
}

Matrix& Tape::grad_buf(int id) {
    Node& n = nodes_[id];
    if (n.grad.rows != n.val.rows || n.grad.cols != n.val.cols) {
        n.grad = Matrix(n.val.rows, n.val.cols);
    }
    return n.grad;
}

const Matrix& Tape::grad(Ref r) const {
    const Node& n = nodes_[r.id];
    if (n.grad.rows == n.val.rows && n.grad.cols == n.val.cols) return n.grad;
    // never touched by backward (constant or frozen): exact zeros
    const_cast<Tape*>(this)->zero_ = Matrix(n.val.rows, n.val.cols);
    return zero_;
}

Ref Tape::constant(Matrix v) {
    Node n;
    n.val = std::move(v);
    return push(std::move(n));
}

Ref Tape::param(const Matrix& v, bool frozen) {
    Node n;
    n.val = v;
    n.frozen = frozen;
    n.needs_grad = !frozen;
    return push(std::move(n));
}

Ref Tape::matmul(Ref a, Ref b, bool transpose_b) {
    Node n;
    n.op = Op::MatMul;
    n.a = a.id;
    n.b = b.id;
    n.c0 = transpose_b ? 1.0 : 0.0;
    n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    const Matrix& av = nodes_[a.id].val;
    const Matrix& bv = nodes_[b.id].val;
    n.val = Matrix(av.rows, transpose_b ? bv.rows : bv.cols);
    gemm_acc(av, false, bv, transpose_b, n.val);
    return push(std::move(n));
}

Ref Tape::add(Ref a, Ref b) {
    const Matrix& av = nodes_[a.id].val;
    const Matrix& bv = nodes_[b.id].val;
    if (!av.same_shape(bv)) throw ConfigError("tape add: shape mismatch");
    Node n;
    n.op = Op::Add;
    n.a = a.id;
    n.b = b.id;
    n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    n.val = av;
    for (size_t i = 0; i < n.val.size(); ++i) n.val.data[i] += bv.data[i];
    return push(std::move(n));
}

Ref Tape::sub(Ref a, Ref b) {
    const Matrix& av = nodes_[a.id].val;
    const Matrix& bv = nodes_[b.id].val;
    if (!av.same_shape(bv)) throw ConfigError("tape sub: shape mismatch");
    Node n;
    n.op = Op::Sub;
    n.a = a.id;
    n.b = b.id;
    n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    n.val = av;
    for (size_t i = 0; i < n.val.size(); ++i) n.val.data[i] -= bv.data[i];
    return push(std::move(n));
}

Ref Tape::mul(Ref a, Ref b) {
    const Matrix& av = nodes_[a.id].val;
    const Matrix& bv = nodes_[b.id].val;
    if (!av.same_shape(bv)) throw ConfigError("tape mul: shape mismatch");
    Node n;
    n.op = Op::Mul;
    n.a = a.id;
    n.b = b.id;
    n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    n.val = av;
    for (size_t i = 0; i < n.val.size(); ++i) n.val.data[i] *= bv.data[i];
    return push(std::move(n));
}

Ref Tape::add_rowvec(Ref x, Ref bias) {
    const Matrix& xv = nodes_[x.id].val;
    const Matrix& bv = nodes_[bias.id].val;
    if (bv.rows != 1 || bv.cols != xv.cols) throw ConfigError("tape add_rowvec: bias shape");
    Node n;
    n.op = Op::AddRowVec;
    n.a = x.id;
    n.b = bias.id;
    n.needs_grad = nodes_[x.id].needs_grad || nodes_[bias.id].needs_grad;
    n.val = xv;
    for (int i = 0; i < xv.rows; ++i)
        for (int j = 0; j < xv.cols; ++j) n.val(i, j) += bv(0, j);
    return push(std::move(n));
}

Ref Tape::scale(Ref a, double s) {
    Node n;
    n.op = Op::Scale;
    n.a = a.id;
    n.c0 = s;
    n.needs_grad = nodes_[a.id].needs_grad;
    n.val = nodes_[a.id].val;
    for (double& v : n.val.data) v *= s;
    return push(std::move(n));
}

Ref Tape::add_const(Ref a, double c) {
    Node n;
    n.op = Op::AddConst;
    n.a = a.id;
    n.c0 = c;
    n.needs_grad = nodes_[a.id].needs_grad;
    n.val = nodes_[a.id].val;
    for (double& v : n.val.data) v += c;
    return push(std::move(n));
}

Ref Tape::tanh_op(Ref a) {
    Node n;
    n.op = Op::Tanh;
    n.a = a.id;
    n.needs_grad = nodes_[a.id].needs_grad;
    n.val = nodes_[a.id].val;
    for (double& v : n.val.data) v = std::tanh(v);
    return push(std::move(n));
}

Ref Tape::exp_op(Ref a) {
    Node n;
    n.op = Op::Exp;
    n.a = a.id;
    n.needs_grad = nodes_[a.id].needs_grad;
    n.val = nodes_[a.id].val;
    for (double& v : n.val.data) v = std::exp(v);
    return push(std::move(n));
}

Ref Tape::log_op(Ref a) {
    Node n;
    n.op = Op::Log;
    n.a = a.id;
    n.needs_grad = nodes_[a.id].needs_grad;
    n.val = nodes_[a.id].val;
    for (double& v : n.val.data) v = std::log(v);
    return push(std::move(n));
}

Ref Tape::square(Ref a) {
    Node n;
    n.op = Op::Square;
    n.a = a.id;
    n.needs_grad = nodes_[a.id].needs_grad;
    n.val = nodes_[a.id].val;
    for (double& v : n.val.data) v *= v;
    return push(std::move(n));
}

Ref Tape::clamp_op(Ref a, double lo, double hi) {
    Node n;
    n.op = Op::Clamp;
    n.a = a.id;
    n.c0 = lo;
    n.c1 = hi;
    n.needs_grad = nodes_[a.id].needs_grad;
    n.val = nodes_[a.id].val;
    for (double& v : n.val.data) v = std::clamp(v, lo, hi);
    return push(std::move(n));
}

Ref Tape::min_op(Ref a, Ref b) {
    const Matrix& av = nodes_[a.id].val;
    const Matrix& bv = nodes_[b.id].val;
    if (!av.same_shape(bv)) throw ConfigError("tape min: shape mismatch");
    Node n;
    n.op = Op::Min;
    n.a = a.id;
    n.b = b.id;
    n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    n.val = av;
    for (size_t i = 0; i < n.val.size(); ++i) n.val.data[i] = std::min(av.data[i], bv.data[i]);
    return push(std::move(n));
}

Ref Tape::mul_mask(Ref a, Matrix mask) {
    const Matrix& av = nodes_[a.id].val;
    if (!av.same_shape(mask)) throw ConfigError("tape mul_mask: shape mismatch");
    Node n;
    n.op = Op::MulMask;
    n.a = a.id;
    n.needs_grad = nodes_[a.id].needs_grad;
    n.val = av;
    for (size_t i = 0; i < n.val.size(); ++i) n.val.data[i] *= mask.data[i];
    n.aux = std::move(mask);
    return push(std::move(n));
}

Ref Tape::slice_cols(Ref a, int c0, int c1) {
    const Matrix& av = nodes_[a.id].val;
    if (c0 < 0 || c1 > av.cols || c0 >= c1) throw ConfigError("tape slice_cols: bad range");
    Node n;
    n.op = Op::SliceCols;
    n.a = a.id;
    n.c0 = c0;
    n.c1 = c1;
    n.needs_grad = nodes_[a.id].needs_grad;
    n.val = Matrix(av.rows, c1 - c0);
    for (int i = 0; i < av.rows; ++i)
        for (int j = c0; j < c1; ++j) n.val(i, j - c0) = av(i, j);
    return push(std::move(n));
}

Ref Tape::concat_cols(const std::vector<Ref>& parts) {
    if (parts.empty()) throw ConfigError("tape concat_cols: empty");
    int cols = 0;
    const int rows = nodes_[parts[0].id].val.rows;
    for (Ref p : parts) {
        if (nodes_[p.id].val.rows != rows) throw ConfigError("tape concat_cols: row mismatch");
        cols += nodes_[p.id].val.cols;
    }
    Node n;
    n.op = Op::ConcatCols;
    n.val = Matrix(rows, cols);
    int off = 0;
    for (Ref p : parts) {
        const Matrix& pv = nodes_[p.id].val;
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < pv.cols; ++j) n.val(i, off + j) = pv(i, j);
        off += pv.cols;
        n.srcs.push_back(p.id);
        n.needs_grad = n.needs_grad || nodes_[p.id].needs_grad;
    }
    return push(std::move(n));
}

Ref Tape::row_sum(Ref a) {
    const Matrix& av = nodes_[a.id].val;
    Node n;
    n.op = Op::RowSum;
    n.a = a.id;
    n.needs_grad = nodes_[a.id].needs_grad;
    n.val = Matrix(av.rows, 1);
    for (int i = 0; i < av.rows; ++i) {
        double acc = 0.0;
        for (int j = 0; j < av.cols; ++j) acc += av(i, j);
        n.val(i, 0) = acc;
    }
    return push(std::move(n));
}

Ref Tape::col_broadcast(Ref a, int cols) {
    const Matrix& av = nodes_[a.id].val;
    if (av.cols != 1) throw ConfigError("tape col_broadcast: input must be B x 1");
    Node n;
    n.op = Op::ColBroadcast;
    n.a = a.id;
    n.needs_grad = nodes_[a.id].needs_grad;
    n.val = Matrix(av.rows, cols);
    for (int i = 0; i < av.rows; ++i)
        for (int j = 0; j < cols; ++j) n.val(i, j) = av(i, 0);
    return push(std::move(n));
}

Ref Tape::sum(Ref a) {
    const Matrix& av = nodes_[a.id].val;
    Node n;
    n.op = Op::Sum;
    n.a = a.id;
    n.needs_grad = nodes_[a.id].needs_grad;
    n.val = Matrix(1, 1);
    double acc = 0.0;
    for (double v : av.data) acc += v;
    n.val(0, 0) = acc;
    return push(std::move(n));
}

Ref Tape::mean(Ref a) {
    const Matrix& av = nodes_[a.id].val;
    Node n;
    n.op = Op::Mean;
    n.a = a.id;
    n.needs_grad = nodes_[a.id].needs_grad;
    n.val = Matrix(1, 1);
    double acc = 0.0;
    for (double v : av.data) acc += v;
    n.val(0, 0) = acc / static_cast<double>(av.size());
    return push(std::move(n));
}

Ref Tape::log_softmax_rows(Ref a) {
    const Matrix& av = nodes_[a.id].val;
    Node n;
    n.op = Op::LogSoftmax;
    n.a = a.id;
    n.needs_grad = nodes_[a.id].needs_grad;
    n.val = Matrix(av.rows, av.cols);
    for (int i = 0; i < av.rows; ++i) {
        double mx = av(i, 0);
        for (int j = 1; j < av.cols; ++j) mx = std::max(mx, av(i, j));
        double lse = 0.0;
        for (int j = 0; j < av.cols; ++j) lse += std::exp(av(i, j) - mx);
        lse = mx + std::log(lse);
        for (int j = 0; j < av.cols; ++j) n.val(i, j) = av(i, j) - lse;
    }
    return push(std::move(n));
}

Ref Tape::softmax_rows(Ref a) {
    const Matrix& av = nodes_[a.id].val;
    Node n;
    n.op = Op::Softmax;
    n.a = a.id;
    n.needs_grad = nodes_[a.id].needs_grad;
    n.val = Matrix(av.rows, av.cols);
    for (int i = 0; i < av.rows; ++i) {
        double mx = av(i, 0);
        for (int j = 1; j < av.cols; ++j) mx = std::max(mx, av(i, j));
        double z = 0.0;
        for (int j = 0; j < av.cols; ++j) {
            n.val(i, j) = std::exp(av(i, j) - mx);
            z += n.val(i, j);
        }
        for (int j = 0; j < av.cols; ++j) n.val(i, j) /= z;
    }
    return push(std::move(n));
}

Ref Tape::row_logsumexp(Ref a) {
    const Matrix& av = nodes_[a.id].val;
    Node n;
    n.op = Op::RowLogSumExp;
    n.a = a.id;
    n.needs_grad = nodes_[a.id].needs_grad;
    n.val = Matrix(av.rows, 1);
    for (int i = 0; i < av.rows; ++i) {
        double mx = av(i, 0);
        for (int j = 1; j < av.cols; ++j) mx = std::max(mx, av(i, j));
        double acc = 0.0;
        for (int j = 0; j < av.cols; ++j) acc += std::exp(av(i, j) - mx);
        n.val(i, 0) = mx + std::log(acc);
    }
    return push(std::move(n));
}

Ref Tape::pairdist_mean(Ref a, Matrix coeff) {
    const Matrix& av = nodes_[a.id].val;
    if (coeff.rows != av.rows || coeff.cols != av.rows)
        throw ConfigError("tape pairdist_mean: coeff must be B x B");
    Node n;
    n.op = Op::PairDist;
    n.a = a.id;
    n.needs_grad = nodes_[a.id].needs_grad;
    n.aux = std::move(coeff);
    n.val = Matrix(1, 1);
    const int rows = av.rows;
    const long pairs = static_cast<long>(rows) * (rows - 1) / 2;
    double acc = 0.0;
    for (int i = 0; i < rows; ++i) {
        for (int j = i + 1; j < rows; ++j) {
            double d2 = 0.0;
            for (int c = 0; c < av.cols; ++c) {
                const double d = av(i, c) - av(j, c);
                d2 += d * d;
            }
            acc += n.aux(i, j) * std::sqrt(d2);
        }
    }
    n.val(0, 0) = pairs > 0 ? acc / static_cast<double>(pairs) : 0.0;
    return push(std::move(n));
}

void Tape::backward(Ref loss) {
    Node& top = nodes_[loss.id];
    if (top.val.rows != 1 || top.val.cols != 1)
        throw ConfigError("tape backward: loss must be a scalar node");
    for (auto& n : nodes_) {
        if (n.grad.rows == n.val.rows && n.grad.cols == n.val.cols) {
            std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
        }
    }
    grad_buf(loss.id)(0, 0) = 1.0;

    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[id];
        if (!n.needs_grad || n.op == Op::Leaf) continue;
        if (n.grad.rows != n.val.rows || n.grad.cols != n.val.cols) continue;  // unused node
        const Matrix& g = n.grad;

        auto want = [&](int src) { return src >= 0 && nodes_[src].needs_grad; };

        switch (n.op) {
            case Op::MatMul: {
                const bool tb = n.c0 != 0.0;
                const Matrix& av = nodes_[n.a].val;
                const Matrix& bv = nodes_[n.b].val;
                if (want(n.a)) gemm_acc(g, false, bv, !tb, grad_buf(n.a));
                if (want(n.b)) {
                    if (!tb) gemm_acc(av, true, g, false, grad_buf(n.b));
                    else gemm_acc(g, true, av, false, grad_buf(n.b));
                }
                break;
            }
            case Op::Add:
                if (want(n.a)) {
                    Matrix& ga = grad_buf(n.a);
                    for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
                }
                if (want(n.b)) {
                    Matrix& gb = grad_buf(n.b);
                    for (size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i];
                }
                break;
            case Op::Sub:
                if (want(n.a)) {
                    Matrix& ga = grad_buf(n.a);
                    for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
                }
                if (want(n.b)) {
                    Matrix& gb = grad_buf(n.b);
                    for (size_t i = 0; i < g.size(); ++i) gb.data[i] -= g.data[i];
                }
                break;
            case Op::Mul:
                if (want(n.a)) {
                    Matrix& ga = grad_buf(n.a);
                    const Matrix& bv = nodes_[n.b].val;
                    for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * bv.data[i];
                }
                if (want(n.b)) {
                    Matrix& gb = grad_buf(n.b);
                    const Matrix& av = nodes_[n.a].val;
                    for (size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i] * av.data[i];
                }
                break;
            case Op::AddRowVec:
                if (want(n.a)) {
                    Matrix& ga = grad_buf(n.a);
                    for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
                }
                if (want(n.b)) {
                    Matrix& gb = grad_buf(n.b);
                    for (int i = 0; i < g.rows; ++i)
                        for (int j = 0; j < g.cols; ++j) gb(0, j) += g(i, j);
                }
                break;
            case Op::Scale:
                if (want(n.a)) {
                    Matrix& ga = grad_buf(n.a);
                    for (size_t i = 0; i < g.size(); ++i) ga.data[i] += n.c0 * g.data[i];
                }
                break;
            case Op::AddConst:
                if (want(n.a)) {
                    Matrix& ga = grad_buf(n.a);
                    for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
                }
                break;
            case Op::Tanh:
                if (want(n.a)) {
                    Matrix& ga = grad_buf(n.a);
                    for (size_t i = 0; i < g.size(); ++i)
                        ga.data[i] += g.data[i] * (1.0 - n.val.data[i] * n.val.data[i]);
                }
                break;
            case Op::Exp:
                if (want(n.a)) {
                    Matrix& ga = grad_buf(n.a);
                    for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * n.val.data[i];
                }
                break;
            case Op::Log:
                if (want(n.a)) {
                    Matrix& ga = grad_buf(n.a);
                    const Matrix& av = nodes_[n.a].val;
                    for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] / av.data[i];
                }
                break;
            case Op::Square:
                if (want(n.a)) {
                    Matrix& ga = grad_buf(n.a);
                    const Matrix& av = nodes_[n.a].val;
                    for (size_t i = 0; i < g.size(); ++i)
                        ga.data[i] += 2.0 * g.data[i] * av.data[i];
                }
                break;
            case Op::Clamp:
                if (want(n.a)) {
                    Matrix& ga = grad_buf(n.a);
                    const Matrix& av = nodes_[n.a].val;
                    for (size_t i = 0; i < g.size(); ++i) {
                        if (av.data[i] > n.c0 && av.data[i] < n.c1) ga.data[i] += g.data[i];
                    }
                }
                break;
            case Op::Min: {
                const Matrix& av = nodes_[n.a].val;
                const Matrix& bv = nodes_[n.b].val;
                if (want(n.a)) {
                    Matrix& ga = grad_buf(n.a);
                    for (size_t i = 0; i < g.size(); ++i)
                        if (av.data[i] <= bv.data[i]) ga.data[i] += g.data[i];
                }
                if (want(n.b)) {
                    Matrix& gb = grad_buf(n.b);
                    for (size_t i = 0; i < g.size(); ++i)
                        if (bv.data[i] < av.data[i]) gb.data[i] += g.data[i];
                }
                break;
            }
            case Op::MulMask:
                if (want(n.a)) {
                    Matrix& ga = grad_buf(n.a);
                    for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * n.aux.data[i];
                }
                break;
            case Op::SliceCols:
                if (want(n.a)) {
                    Matrix& ga = grad_buf(n.a);
                    const int c0 = static_cast<int>(n.c0);
                    for (int i = 0; i < g.rows; ++i)
                        for (int j = 0; j < g.cols; ++j) ga(i, c0 + j) += g(i, j);
                }
                break;
            case Op::ConcatCols: {
                int off = 0;
                for (int src : n.srcs) {
                    const int w = nodes_[src].val.cols;
                    if (want(src)) {
                        Matrix& gs = grad_buf(src);
                        for (int i = 0; i < g.rows; ++i)
                            for (int j = 0; j < w; ++j) gs(i, j) += g(i, off + j);
                    }
                    off += w;
                }
                break;
            }
            case Op::RowSum:
                if (want(n.a)) {
                    Matrix& ga = grad_buf(n.a);
                    for (int i = 0; i < ga.rows; ++i)
                        for (int j = 0; j < ga.cols; ++j) ga(i, j) += g(i, 0);
                }
                break;
            case Op::ColBroadcast:
                if (want(n.a)) {
                    Matrix& ga = grad_buf(n.a);
                    for (int i = 0; i < g.rows; ++i) {
                        double acc = 0.0;
                        for (int j = 0; j < g.cols; ++j) acc += g(i, j);
                        ga(i, 0) += acc;
                    }
                }
                break;
            case Op::Sum:
                if (want(n.a)) {
                    Matrix& ga = grad_buf(n.a);
                    const double gv = g(0, 0);
                    for (double& v : ga.data) v += gv;
                }
                break;
            case Op::Mean:
                if (want(n.a)) {
                    Matrix& ga = grad_buf(n.a);
                    const double gv = g(0, 0) / static_cast<double>(ga.size());
                    for (double& v : ga.data) v += gv;
                }
                break;
            case Op::LogSoftmax:
                if (want(n.a)) {
                    Matrix& ga = grad_buf(n.a);
                    for (int i = 0; i < g.rows; ++i) {
                        double gsum = 0.0;
                        for (int j = 0; j < g.cols; ++j) gsum += g(i, j);
                        for (int j = 0; j < g.cols; ++j)
                            ga(i, j) += g(i, j) - std::exp(n.val(i, j)) * gsum;
                    }
                }
                break;
            case Op::Softmax:
                if (want(n.a)) {
                    Matrix& ga = grad_buf(n.a);
                    for (int i = 0; i < g.rows; ++i) {
                        double dot = 0.0;
                        for (int j = 0; j < g.cols; ++j) dot += g(i, j) * n.val(i, j);
                        for (int j = 0; j < g.cols; ++j)
                            ga(i, j) += n.val(i, j) * (g(i, j) - dot);
                    }
                }
                break;
            case Op::RowLogSumExp:
                if (want(n.a)) {
                    Matrix& ga = grad_buf(n.a);
                    const Matrix& av = nodes_[n.a].val;
                    for (int i = 0; i < av.rows; ++i) {
                        const double gv = g(i, 0);
                        for (int j = 0; j < av.cols; ++j)
                            ga(i, j) += gv * std::exp(av(i, j) - n.val(i, 0));
                    }
                }
                break;
            case Op::PairDist:
                if (want(n.a)) {
                    Matrix& ga = grad_buf(n.a);
                    const Matrix& av = nodes_[n.a].val;
                    const int rows = av.rows;
                    const long pairs = static_cast<long>(rows) * (rows - 1) / 2;
                    if (pairs == 0) break;
                    const double gv = g(0, 0) / static_cast<double>(pairs);
                    for (int i = 0; i < rows; ++i) {
                        for (int j = i + 1; j < rows; ++j) {
                            double d2 = 0.0;
                            for (int c = 0; c < av.cols; ++c) {
                                const double d = av(i, c) - av(j, c);
                                d2 += d * d;
                            }
                            if (d2 == 0.0) continue;
                            const double w = gv * n.aux(i, j) / std::sqrt(d2);
                            for (int c = 0; c < av.cols; ++c) {
                                const double d = av(i, c) - av(j, c);
                                ga(i, c) += w * d;
                                ga(j, c) -= w * d;
                            }
                        }
                    }
                }
                break;
            case Op::Leaf:
                break;
        }
    }
}

}  // namespace ecomoe
