#include "ecomoe/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ecomoe {

Matrix matmul(const Matrix& a, const Matrix& b, bool transpose_b) {
    const int inner = a.cols;
    const int out_cols = transpose_b ? b.rows : b.cols;
    if ((transpose_b ? b.cols : b.rows) != inner) {
        throw ConfigError("matmul: inner dimensions do not match");
    }
    Matrix c(a.rows, out_cols);
    if (!transpose_b) {
        for (int i = 0; i < a.rows; ++i) {
            const double* arow = &a.data[static_cast<size_t>(i) * inner];
            double* crow = &c.data[static_cast<size_t>(i) * out_cols];
            for (int k = 0; k < inner; ++k) {
                const double aik = arow[k];
                if (aik == 0.0) continue;
                const double* brow = &b.data[static_cast<size_t>(k) * out_cols];
                for (int j = 0; j < out_cols; ++j) crow[j] += aik * brow[j];
            }
        }
    } else {
        for (int i = 0; i < a.rows; ++i) {
            const double* arow = &a.data[static_cast<size_t>(i) * inner];
            double* crow = &c.data[static_cast<size_t>(i) * out_cols];
            for (int j = 0; j < out_cols; ++j) {
                const double* brow = &b.data[static_cast<size_t>(j) * inner];
                double acc = 0.0;
                for (int k = 0; k < inner; ++k) acc += arow[k] * brow[k];
                crow[j] = acc;
            }
        }
    }
    return c;
}

SymEig jacobi_eigen_sym(const Matrix& a, int max_sweeps) {
    const int n = a.rows;
    if (a.cols != n) throw ConfigError("jacobi_eigen_sym: matrix not square");
    Matrix m = a;
    Matrix v(n, n);
    for (int i = 0; i < n; ++i) v(i, i) = 1.0;

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += m(p, q) * m(p, q);
        if (off < 1e-24) break;

        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = m(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (m(q, q) - m(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double mkp = m(k, p), mkq = m(k, q);
                    m(k, p) = c * mkp - s * mkq;
                    m(k, q) = s * mkp + c * mkq;
                }
                for (int k = 0; k < n; ++k) {
                    const double mpk = m(p, k), mqk = m(q, k);
                    m(p, k) = c * mpk - s * mqk;
                    m(q, k) = s * mpk + c * mqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int i, int j) { return m(i, i) > m(j, j); });

    SymEig out;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    for (int j = 0; j < n; ++j) {
        out.values[j] = m(order[j], order[j]);
        for (int i = 0; i < n; ++i) out.vectors(i, j) = v(i, order[j]);
    }
    return out;
}

}  // namespace ecomoe
