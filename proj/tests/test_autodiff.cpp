#include <doctest.h>

#include <cmath>
#include <functional>

#include "ecomoe/autodiff.hpp"
#include "ecomoe/common.hpp"

using namespace ecomoe;

namespace {

using GraphBuilder = std::function<Ref(Tape&, const std::vector<Ref>&)>;

double eval(const GraphBuilder& build, const std::vector<Matrix>& params) {
    Tape tape;
    std::vector<Ref> refs;
    for (const auto& p : params) refs.push_back(tape.param(p));
    return tape.value(build(tape, refs))(0, 0);
}

/// Central finite differences against the tape gradients, relative error.
double max_grad_error(const GraphBuilder& build, std::vector<Matrix> params, double h = 1e-5) {
    Tape tape;
    std::vector<Ref> refs;
    for (const auto& p : params) refs.push_back(tape.param(p));
    const Ref loss = build(tape, refs);
    tape.backward(loss);

    double worst = 0.0;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        const Matrix& g = tape.grad(refs[pi]);
        for (size_t j = 0; j < params[pi].size(); ++j) {
            const double keep = params[pi].data[j];
            params[pi].data[j] = keep + h;
            const double up = eval(build, params);
            params[pi].data[j] = keep - h;
            const double dn = eval(build, params);
            params[pi].data[j] = keep;
            const double numeric = (up - dn) / (2.0 * h);
            const double denom = std::max({std::abs(numeric), std::abs(g.data[j]), 1e-8});
            worst = std::max(worst, std::abs(numeric - g.data[j]) / denom);
        }
    }
    return worst;
}

Matrix random_matrix(int r, int c, Rng& rng, double scale = 1.0) {
    Matrix m(r, c);
    for (double& v : m.data) v = scale * rng.normal();
    return m;
}

}  // namespace

TEST_CASE("gradients of the elementwise and reduction ops") {
    Rng rng(101);
    const Matrix a = random_matrix(3, 4, rng);
    const Matrix b = random_matrix(3, 4, rng);

    auto unary = [](auto op) {
        return [op](Tape& t, const std::vector<Ref>& p) { return t.mean(op(t, p[0])); };
    };
    CHECK(max_grad_error(unary([](Tape& t, Ref x) { return t.tanh_op(x); }), {a}) < 1e-6);
    CHECK(max_grad_error(unary([](Tape& t, Ref x) { return t.exp_op(x); }), {a}) < 1e-6);
    CHECK(max_grad_error(unary([](Tape& t, Ref x) { return t.square(x); }), {a}) < 1e-6);
    CHECK(max_grad_error(unary([](Tape& t, Ref x) { return t.scale(x, -2.5); }), {a}) < 1e-6);
    CHECK(max_grad_error(unary([](Tape& t, Ref x) { return t.add_const(x, 3.0); }), {a}) < 1e-6);

    Matrix pos = a;
    for (double& v : pos.data) v = std::abs(v) + 0.5;
    CHECK(max_grad_error(unary([](Tape& t, Ref x) { return t.log_op(x); }), {pos}) < 1e-6);

    auto binary = [](auto op) {
        return [op](Tape& t, const std::vector<Ref>& p) { return t.sum(op(t, p[0], p[1])); };
    };
    CHECK(max_grad_error(binary([](Tape& t, Ref x, Ref y) { return t.add(x, y); }), {a, b}) < 1e-6);
    CHECK(max_grad_error(binary([](Tape& t, Ref x, Ref y) { return t.sub(x, y); }), {a, b}) < 1e-6);
    CHECK(max_grad_error(binary([](Tape& t, Ref x, Ref y) { return t.mul(x, y); }), {a, b}) < 1e-6);
    CHECK(max_grad_error(binary([](Tape& t, Ref x, Ref y) { return t.min_op(x, y); }), {a, b}) <
          1e-6);
}

TEST_CASE("gradients of matmul in both transpositions and the bias broadcast") {
    Rng rng(33);
    const Matrix x = random_matrix(4, 3, rng);
    const Matrix w = random_matrix(3, 5, rng);
    const Matrix wt = random_matrix(5, 3, rng);
    const Matrix bias = random_matrix(1, 5, rng);

    auto plain = [](Tape& t, const std::vector<Ref>& p) {
        return t.sum(t.tanh_op(t.matmul(p[0], p[1])));
    };
    CHECK(max_grad_error(plain, {x, w}) < 1e-6);

    auto transposed = [](Tape& t, const std::vector<Ref>& p) {
        return t.sum(t.tanh_op(t.matmul(p[0], p[1], true)));
    };
    CHECK(max_grad_error(transposed, {x, wt}) < 1e-6);

    auto affine = [](Tape& t, const std::vector<Ref>& p) {
        return t.mean(t.square(t.add_rowvec(t.matmul(p[0], p[1]), p[2])));
    };
    CHECK(max_grad_error(affine, {x, w, bias}) < 1e-6);
}

TEST_CASE("gradients of clamp pass only in the interior") {
    Matrix a(2, 2);
    a.data = {-3.0, -0.5, 0.5, 3.0};
    Tape tape;
    Ref p = tape.param(a);
    Ref loss = tape.sum(tape.clamp_op(p, -1.0, 1.0));
    tape.backward(loss);
    const Matrix& g = tape.grad(p);
    CHECK(g.data[0] == 0.0);
    CHECK(g.data[1] == 1.0);
    CHECK(g.data[2] == 1.0);
    CHECK(g.data[3] == 0.0);
}

TEST_CASE("gradients of slicing, concatenation and broadcasts") {
    Rng rng(71);
    const Matrix a = random_matrix(3, 6, rng);
    const Matrix c = random_matrix(3, 1, rng);

    auto slice_concat = [](Tape& t, const std::vector<Ref>& p) {
        Ref left = t.slice_cols(p[0], 0, 2);
        Ref right = t.slice_cols(p[0], 2, 6);
        Ref glued = t.concat_cols({t.square(left), right});
        return t.sum(glued);
    };
    CHECK(max_grad_error(slice_concat, {a}) < 1e-6);

    auto broadcast = [](Tape& t, const std::vector<Ref>& p) {
        Ref wide = t.col_broadcast(p[1], 6);
        return t.mean(t.mul(p[0], wide));
    };
    CHECK(max_grad_error(broadcast, {a, c}) < 1e-6);

    auto rowsum = [](Tape& t, const std::vector<Ref>& p) {
        return t.sum(t.square(t.row_sum(p[0])));
    };
    CHECK(max_grad_error(rowsum, {a}) < 1e-6);
}

TEST_CASE("gradients of the softmax family") {
    Rng rng(13);
    const Matrix logits = random_matrix(4, 5, rng, 2.0);
    const Matrix mixer = random_matrix(4, 5, rng);

    auto log_softmax = [&](Tape& t, const std::vector<Ref>& p) {
        return t.sum(t.mul(t.log_softmax_rows(p[0]), t.constant(mixer)));
    };
    CHECK(max_grad_error(log_softmax, {logits}) < 1e-6);

    auto softmax = [&](Tape& t, const std::vector<Ref>& p) {
        return t.sum(t.mul(t.softmax_rows(p[0]), t.constant(mixer)));
    };
    CHECK(max_grad_error(softmax, {logits}) < 1e-6);

    auto lse = [](Tape& t, const std::vector<Ref>& p) {
        return t.sum(t.square(t.row_logsumexp(p[0])));
    };
    CHECK(max_grad_error(lse, {logits}) < 1e-6);
}

TEST_CASE("softmax bias gradient rows sum to zero under uniform upstream") {
    Rng rng(5);
    Matrix z = random_matrix(3, 4, rng);
    Matrix w = random_matrix(2, 4, rng);
    Matrix b = random_matrix(1, 2, rng);
    Tape tape;
    Ref wp = tape.param(w), bp = tape.param(b);
    Ref logits = tape.add_rowvec(tape.matmul(tape.constant(z), wp, true), bp);
    Ref loss = tape.sum(tape.log_softmax_rows(logits));
    tape.backward(loss);
    const Matrix& gb = tape.grad(bp);
    double row_total = 0.0;
    for (double v : gb.data) row_total += v;
    CHECK(std::abs(row_total) < 1e-12);
}

TEST_CASE("gradient of the pairwise-distance mean") {
    Rng rng(91);
    const Matrix x = random_matrix(5, 3, rng);
    Matrix coeff(5, 5);
    for (int i = 0; i < 5; ++i)
        for (int j = i + 1; j < 5; ++j) coeff(i, j) = 0.5 + 0.1 * (i + j);

    auto pair = [&](Tape& t, const std::vector<Ref>& p) {
        return t.pairdist_mean(p[0], coeff);
    };
    CHECK(max_grad_error(pair, {x}) < 1e-6);
}

TEST_CASE("identical rows contribute zero value and zero gradient pairs") {
    Matrix x(2, 3);
    x.data = {1.0, 2.0, 3.0, 1.0, 2.0, 3.0};
    Matrix coeff(2, 2);
    coeff(0, 1) = 4.0;
    Tape tape;
    Ref p = tape.param(x);
    Ref loss = tape.pairdist_mean(p, coeff);
    CHECK(tape.value(loss)(0, 0) == 0.0);
    tape.backward(loss);
    for (double g : tape.grad(p).data) CHECK(g == 0.0);
}

TEST_CASE("constant losses have zero gradients") {
    Rng rng(17);
    Matrix a = random_matrix(3, 3, rng);
    Tape tape;
    Ref p = tape.param(a);
    Ref loss = tape.mean(tape.constant(Matrix(2, 2, 5.0)));
    tape.backward(loss);
    for (double g : tape.grad(p).data) CHECK(g == 0.0);
    (void)p;
}

TEST_CASE("frozen parameters receive exactly zero gradient") {
    Rng rng(19);
    Matrix a = random_matrix(3, 3, rng);
    Matrix b = random_matrix(3, 3, rng);
    Tape tape;
    Ref pa = tape.param(a, /*frozen=*/true);
    Ref pb = tape.param(b);
    Ref loss = tape.sum(tape.mul(pa, pb));
    tape.backward(loss);
    for (double g : tape.grad(pa).data) CHECK(g == 0.0);
    bool any_nonzero = false;
    for (double g : tape.grad(pb).data) any_nonzero |= g != 0.0;
    CHECK(any_nonzero);
}

TEST_CASE("two backward sweeps on one tape do not leak adjoints") {
    Rng rng(23);
    Matrix a = random_matrix(2, 2, rng);
    Tape tape;
    Ref p = tape.param(a);
    Ref l1 = tape.sum(tape.square(p));
    Ref l2 = tape.sum(tape.scale(p, 3.0));
    tape.backward(l1);
    Matrix g1 = tape.grad(p);
    tape.backward(l2);
    const Matrix& g2 = tape.grad(p);
    for (double g : g2.data) CHECK(g == doctest::Approx(3.0).epsilon(1e-12));
    for (size_t i = 0; i < g1.size(); ++i) CHECK(g1.data[i] == 2.0 * a.data[i]);
}
