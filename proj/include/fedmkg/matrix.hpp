#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "fedmkg/errors.hpp"

namespace fedmkg {

// Dense row-major fp64 matrix. All model state (embeddings, projection
// weights, masks, hyper-modal blocks) lives in these.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // rows * cols, row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> d)
        : rows(r), cols(c), data(std::move(d)) {
        if (data.size() != rows * cols)
            throw DimensionError("matrix data size does not match shape");
    }

    static Matrix full(std::size_t r, std::size_t c, double v) {
        Matrix m(r, c);
        for (double& x : m.data) x = v;
        return m;
    }
    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }

    std::size_t count() const { return rows * cols; }
    bool empty() const { return count() == 0; }

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }

    bool same_shape(const Matrix& o) const {
        return rows == o.rows && cols == o.cols;
    }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) {
        for (double& x : data) x = v;
    }
};

// c = a * b; throws DimensionError on inner-dimension mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);

// Accumulating GEMM variants used by the backward pass. All throw
// DimensionError when shapes do not line up.
void gemm_nn_acc(const Matrix& a, const Matrix& b, Matrix& c);  // c += a b
void gemm_nt_acc(const Matrix& a, const Matrix& b, Matrix& c);  // c += a bT
void gemm_tn_acc(const Matrix& a, const Matrix& b, Matrix& c);  // c += aT b

Matrix transpose(const Matrix& a);

}  // namespace fedmkg
