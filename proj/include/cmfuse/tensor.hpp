#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "cmfuse/rng.hpp"

namespace cmfuse {

// Dense row-major matrix of doubles. Row vectors are 1 x k, scalars 1 x 1.
// All model state (BOLD panels, connectivity matrices, weights, activations)
// lives in this one type.
class Tensor {
public:
    Tensor() = default;
    Tensor(int rows, int cols);

    static Tensor zeros(int rows, int cols) { return Tensor(rows, cols); }
    static Tensor full(int rows, int cols, double v);
    static Tensor identity(int n);
    static Tensor scalar(double v);
    static Tensor row(std::vector<double> values);
    // Entries i.i.d. uniform in (-bound, bound).
    static Tensor uniform(int rows, int cols, double bound, Rng& rng);
    static Tensor gaussian(int rows, int cols, double sigma, Rng& rng);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::array<int, 2> shape() const { return {rows_, cols_}; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    void fill(double v);
    bool all_finite() const;
    bool same_shape(const Tensor& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    Tensor transposed() const;
    double sum() const;
    double max_abs() const;
    double frobenius_distance(const Tensor& other) const;

    // this += scale * other; shapes must match.
    void axpy(double scale, const Tensor& other);

    bool operator==(const Tensor& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

// C (+)= op(A) * op(B) with optional transposes; the one matmul kernel
// shared by forward and backward passes.
void gemm(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b, Tensor& out,
          bool accumulate);

}  // namespace cmfuse
