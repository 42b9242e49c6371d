#pragma once

#include <cstddef>
#include <vector>

#include "ecomoe/common.hpp"

namespace ecomoe {

/// Dense row-major matrix of doubles. Small and unclever on purpose: the
/// hot paths live in the autodiff kernels, everything else is D <= 64.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

    double& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
    size_t size() const { return data.size(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    static Matrix row(const std::vector<double>& v) {
        Matrix m(1, static_cast<int>(v.size()));
        m.data = v;
        return m;
    }
};

/// c = a * b, with optional transposition of b. ikj order for locality.
Matrix matmul(const Matrix& a, const Matrix& b, bool transpose_b = false);

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues (descending) and the matching eigenvectors as
/// matrix columns. Used by the full-covariance evolution path.
struct SymEig {
    std::vector<double> values;
    Matrix vectors;  // column i is the eigenvector for values[i]
};
SymEig jacobi_eigen_sym(const Matrix& a, int max_sweeps = 64);

}  // namespace ecomoe
