#include "fedmkg/matrix.hpp"

#include <string>

#include "fedmkg/kernels.hpp"

namespace fedmkg {

namespace {

std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows)
        throw DimensionError("matmul shape mismatch: " + shape_str(a) + " * " +
                             shape_str(b));
    Matrix c(a.rows, b.cols);
    gemm_nn_acc(a, b, c);
    return c;
}

void gemm_nn_acc(const Matrix& a, const Matrix& b, Matrix& c) {
    if (a.cols != b.rows || c.rows != a.rows || c.cols != b.cols)
        throw DimensionError("gemm_nn shape mismatch");
    // c[i,:] += a[i,k] * b[k,:]
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* crow = c.row(i);
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik != 0.0) kern::axpy(b.cols, aik, b.row(k), crow);
        }
    }
}

void gemm_nt_acc(const Matrix& a, const Matrix& b, Matrix& c) {
    if (a.cols != b.cols || c.rows != a.rows || c.cols != b.rows)
        throw DimensionError("gemm_nt shape mismatch");
    // c[i,j] += dot(a[i,:], b[j,:])
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* crow = c.row(i);
        for (std::size_t j = 0; j < b.rows; ++j) {
            crow[j] += kern::dot(a.cols, arow, b.row(j));
        }
    }
}

void gemm_tn_acc(const Matrix& a, const Matrix& b, Matrix& c) {
    if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols)
        throw DimensionError("gemm_tn shape mismatch");
    // c[i,:] += a[k,i] * b[k,:]
    for (std::size_t k = 0; k < a.rows; ++k) {
        const double* arow = a.row(k);
        const double* brow = b.row(k);
        for (std::size_t i = 0; i < a.cols; ++i) {
            const double aki = arow[i];
            if (aki != 0.0) kern::axpy(b.cols, aki, brow, c.row(i));
        }
    }
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) t.at(j, i) = a.at(i, j);
    return t;
}

}  // namespace fedmkg
