#include "cmfuse/tensor.hpp"

#include <cmath>
#include <cstdlib>

#include "cmfuse/error.hpp"

namespace cmfuse {

Tensor::Tensor(int rows, int cols) : rows_(rows), cols_(cols) {
    if (rows < 0 || cols < 0 || (rows == 0) != (cols == 0)) {
        throw invariant_error("Tensor: bad shape " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    data_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), 0.0);
}

Tensor Tensor::full(int rows, int cols, double v) {
    Tensor t(rows, cols);
    t.fill(v);
    return t;
}

Tensor Tensor::identity(int n) {
    Tensor t(n, n);
    for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

Tensor Tensor::scalar(double v) {
    Tensor t(1, 1);
    t[0] = v;
    return t;
}

Tensor Tensor::row(std::vector<double> values) {
    Tensor t(1, static_cast<int>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) t[i] = values[i];
    return t;
}

Tensor Tensor::uniform(int rows, int cols, double bound, Rng& rng) {
    Tensor t(rows, cols);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

Tensor Tensor::gaussian(int rows, int cols, double sigma, Rng& rng) {
    Tensor t(rows, cols);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = sigma * rng.gaussian();
    return t;
}

void Tensor::fill(double v) {
    for (auto& x : data_) x = v;
}

bool Tensor::all_finite() const {
    for (double x : data_) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

Tensor Tensor::transposed() const {
    Tensor t(cols_, rows_);
    for (int i = 0; i < rows_; ++i) {
        for (int j = 0; j < cols_; ++j) t.at(j, i) = at(i, j);
    }
    return t;
}

double Tensor::sum() const {
    double s = 0.0;
    for (double x : data_) s += x;
    return s;
}

double Tensor::max_abs() const {
    double m = 0.0;
    for (double x : data_) m = std::max(m, std::fabs(x));
    return m;
}

double Tensor::frobenius_distance(const Tensor& other) const {
    double s = 0.0;
    for (std::size_t i = 0; i < data_.size(); ++i) {
        const double d = data_[i] - other.data_[i];
        s += d * d;
    }
    return std::sqrt(s);
}

void Tensor::axpy(double scale, const Tensor& other) {
    if (!same_shape(other)) throw invariant_error("Tensor::axpy: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += scale * other.data_[i];
}

void gemm(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b, Tensor& out,
          bool accumulate) {
    const int m = trans_a ? a.cols() : a.rows();
    const int k = trans_a ? a.rows() : a.cols();
    const int kb = trans_b ? b.cols() : b.rows();
    const int p = trans_b ? b.rows() : b.cols();
    if (k != kb) {
        throw invariant_error("matmul: inner dimensions disagree: " + std::to_string(a.rows()) + "x" +
                              std::to_string(a.cols()) + (trans_a ? "^T" : "") + " * " +
                              std::to_string(b.rows()) + "x" + std::to_string(b.cols()) +
                              (trans_b ? "^T" : ""));
    }
    if (out.rows() != m || out.cols() != p) out = Tensor(m, p);
    if (!accumulate) out.fill(0.0);

    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = out.data();

    if (!trans_a && !trans_b) {
        // C[i,j] += A[i,l] * B[l,j]; inner loop streams B and C rows.
        for (int i = 0; i < m; ++i) {
            double* crow = pc + static_cast<std::size_t>(i) * p;
            for (int l = 0; l < k; ++l) {
                const double av = pa[static_cast<std::size_t>(i) * k + l];
                if (av == 0.0) continue;
                const double* brow = pb + static_cast<std::size_t>(l) * p;
                for (int j = 0; j < p; ++j) crow[j] += av * brow[j];
            }
        }
    } else if (!trans_a && trans_b) {
        // C[i,j] += dot(A.row(i), B.row(j)).
        for (int i = 0; i < m; ++i) {
            const double* arow = pa + static_cast<std::size_t>(i) * k;
            double* crow = pc + static_cast<std::size_t>(i) * p;
            for (int j = 0; j < p; ++j) {
                const double* brow = pb + static_cast<std::size_t>(j) * k;
                double s = 0.0;
                for (int l = 0; l < k; ++l) s += arow[l] * brow[l];
                crow[j] += s;
            }
        }
    } else if (trans_a && !trans_b) {
        // C[i,j] += A[l,i] * B[l,j]; l outermost keeps rows contiguous.
        for (int l = 0; l < k; ++l) {
            const double* arow = pa + static_cast<std::size_t>(l) * m;
            const double* brow = pb + static_cast<std::size_t>(l) * p;
            for (int i = 0; i < m; ++i) {
                const double av = arow[i];
                if (av == 0.0) continue;
                double* crow = pc + static_cast<std::size_t>(i) * p;
                for (int j = 0; j < p; ++j) crow[j] += av * brow[j];
            }
        }
    } else {
        for (int i = 0; i < m; ++i) {
            double* crow = pc + static_cast<std::size_t>(i) * p;
            for (int j = 0; j < p; ++j) {
                double s = 0.0;
                for (int l = 0; l < k; ++l) s += pa[static_cast<std::size_t>(l) * m + i] * pb[static_cast<std::size_t>(j) * k + l];
                crow[j] += s;
            }
        }
    }
}

}  // namespace cmfuse
