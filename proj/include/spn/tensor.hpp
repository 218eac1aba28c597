#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "spn/error.hpp"

namespace spn {

using Vec = std::vector<double>;

// 2-D real map, row-major.
struct Grid {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec v;

    Grid() = default;
    Grid(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), v(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
    std::size_t size() const { return v.size(); }
};

// channels x height x width tensor, row-major within each channel.
struct Tensor3 {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    Vec v;

    Tensor3() = default;
    Tensor3(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
        : channels(c), height(h), width(w), v(c * h * w, fill) {}

    double& operator()(std::size_t c, std::size_t i, std::size_t j) {
        return v[(c * height + i) * width + j];
    }
    double operator()(std::size_t c, std::size_t i, std::size_t j) const {
        return v[(c * height + i) * width + j];
    }
    std::size_t size() const { return v.size(); }
    bool same_shape(const Tensor3& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
};

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec v;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), v(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
    std::size_t size() const { return v.size(); }
};

inline bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

// c = a * b, shapes (m x k) * (k x n). Accumulates in ikj order.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw InputError("matmul: inner dimensions do not match");
    Matrix c(a.rows, b.cols, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = &a.v[i * a.cols];
        double* crow = &c.v[i * b.cols];
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = &b.v[k * b.cols];
            for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

// c = a^T * b, shapes (k x m)^T * (k x n).
inline Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows) throw InputError("matmul_at_b: inner dimensions do not match");
    Matrix c(a.cols, b.cols, 0.0);
    for (std::size_t k = 0; k < a.rows; ++k) {
        const double* arow = &a.v[k * a.cols];
        const double* brow = &b.v[k * b.cols];
        for (std::size_t i = 0; i < a.cols; ++i) {
            const double aki = arow[i];
            if (aki == 0.0) continue;
            double* crow = &c.v[i * b.cols];
            for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aki * brow[j];
        }
    }
    return c;
}

// c = a * b^T, shapes (m x k) * (n x k)^T.
inline Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols) throw InputError("matmul_a_bt: inner dimensions do not match");
    Matrix c(a.rows, b.rows, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = &a.v[i * a.cols];
        for (std::size_t j = 0; j < b.rows; ++j) {
            const double* brow = &b.v[j * b.cols];
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) s += arow[k] * brow[k];
            c.v[i * b.rows + j] = s;
        }
    }
    return c;
}

} // namespace spn
