#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace tqbsde {

/// Dense row-major 2-d array of doubles.
class Array2 {
public:
    Array2() = default;
    Array2(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const {
        return {data_.data() + i * cols_, cols_};
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::size_t size() const { return data_.size(); }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

/// Dense row-major 3-d array (outermost index first).
class Array3 {
public:
    Array3() = default;
    Array3(std::size_t n0, std::size_t n1, std::size_t n2, double fill = 0.0)
        : n0_(n0), n1_(n1), n2_(n2), data_(n0 * n1 * n2, fill) {}

    double& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * n1_ + j) * n2_ + k];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * n1_ + j) * n2_ + k];
    }

    std::span<double> slice(std::size_t i, std::size_t j) {
        return {data_.data() + (i * n1_ + j) * n2_, n2_};
    }
    std::span<const double> slice(std::size_t i, std::size_t j) const {
        return {data_.data() + (i * n1_ + j) * n2_, n2_};
    }

    std::size_t dim0() const { return n0_; }
    std::size_t dim1() const { return n1_; }
    std::size_t dim2() const { return n2_; }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::size_t size() const { return data_.size(); }

private:
    std::size_t n0_ = 0, n1_ = 0, n2_ = 0;
    std::vector<double> data_;
};

/// Dense row-major 4-d array.
class Array4 {
public:
    Array4() = default;
    Array4(std::size_t n0, std::size_t n1, std::size_t n2, std::size_t n3,
           double fill = 0.0)
        : n0_(n0), n1_(n1), n2_(n2), n3_(n3), data_(n0 * n1 * n2 * n3, fill) {}

    double& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
        return data_[((i * n1_ + j) * n2_ + k) * n3_ + l];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
        return data_[((i * n1_ + j) * n2_ + k) * n3_ + l];
    }

    /// Contiguous (n2 x n3) block at (i, j); the natural matrix view.
    std::span<double> block(std::size_t i, std::size_t j) {
        return {data_.data() + (i * n1_ + j) * n2_ * n3_, n2_ * n3_};
    }
    std::span<const double> block(std::size_t i, std::size_t j) const {
        return {data_.data() + (i * n1_ + j) * n2_ * n3_, n2_ * n3_};
    }

    std::size_t dim0() const { return n0_; }
    std::size_t dim1() const { return n1_; }
    std::size_t dim2() const { return n2_; }
    std::size_t dim3() const { return n3_; }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::size_t size() const { return data_.size(); }

private:
    std::size_t n0_ = 0, n1_ = 0, n2_ = 0, n3_ = 0;
    std::vector<double> data_;
};

/// Non-owning row-major matrix view (rows x cols).
struct MatView {
    const double* data = nullptr;
    std::size_t rows = 0, cols = 0;

    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
    std::span<const double> row(std::size_t i) const { return {data + i * cols, cols}; }
};

}  // namespace tqbsde
