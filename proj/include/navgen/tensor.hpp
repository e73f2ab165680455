#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "navgen/common.hpp"
#include "navgen/rng.hpp"

namespace navgen {

// Dense row-major tensor of doubles. Rank 1 or 2 in practice; higher-rank
// trajectory data is kept as vectors of matrices.
class Tensor {
public:
    Tensor() = default;

    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Tensor row(std::vector<double> values) {
        Tensor t(1, values.size());
        t.data_ = std::move(values);
        return t;
    }

    static Tensor from_rows(const std::vector<std::vector<double>>& rows) {
        if (rows.empty()) {
            return Tensor();
        }
        Tensor t(rows.size(), rows[0].size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != t.cols_) {
                throw std::invalid_argument("Tensor::from_rows: ragged input");
            }
            std::copy(rows[r].begin(), rows[r].end(), t.data_.begin() + static_cast<std::ptrdiff_t>(r * t.cols_));
        }
        return t;
    }

    static Tensor randn(std::size_t rows, std::size_t cols, Rng& rng, double stddev = 1.0) {
        Tensor t(rows, cols);
        for (double& v : t.data_) {
            v = rng.normal(0.0, stddev);
        }
        return t;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double* row_ptr(std::size_t r) { return data_.data() + r * cols_; }
    const double* row_ptr(std::size_t r) const { return data_.data() + r * cols_; }

    bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    void add_(const Tensor& o) {
        check_same(o, "add_");
        for (std::size_t i = 0; i < data_.size(); ++i) {
            data_[i] += o.data_[i];
        }
    }

    void axpy_(double a, const Tensor& o) {
        check_same(o, "axpy_");
        for (std::size_t i = 0; i < data_.size(); ++i) {
            data_[i] += a * o.data_[i];
        }
    }

    void scale_(double a) {
        for (double& v : data_) {
            v *= a;
        }
    }

    double dot(const Tensor& o) const {
        check_same(o, "dot");
        double s = 0.0;
        for (std::size_t i = 0; i < data_.size(); ++i) {
            s += data_[i] * o.data_[i];
        }
        return s;
    }

    double norm() const { return std::sqrt(dot(*this)); }

    double max_abs() const {
        double m = 0.0;
        for (double v : data_) {
            m = std::max(m, std::abs(v));
        }
        return m;
    }

    bool all_finite() const {
        for (double v : data_) {
            if (!std::isfinite(v)) {
                return false;
            }
        }
        return true;
    }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    void check_same(const Tensor& o, const char* op) const {
        if (!same_shape(o)) {
            throw std::invalid_argument(std::string("Tensor::") + op + ": shape mismatch " + shape_str() +
                                        " vs " + o.shape_str());
        }
    }

    std::string shape_str() const {
        return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// C = A * B
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dimensions disagree");
    }
    Tensor c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* ci = c.row_ptr(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) {
                continue;
            }
            const double* bk = b.row_ptr(k);
            for (std::size_t j = 0; j < b.cols(); ++j) {
                ci[j] += aik * bk[j];
            }
        }
    }
    return c;
}

// C = A * B^T
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols()) {
        throw std::invalid_argument("matmul_nt: inner dimensions disagree");
    }
    Tensor c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* ai = a.row_ptr(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double* bj = b.row_ptr(j);
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) {
                s += ai[k] * bj[k];
            }
            c(i, j) = s;
        }
    }
    return c;
}

// C = A^T * B
inline Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows()) {
        throw std::invalid_argument("matmul_tn: inner dimensions disagree");
    }
    Tensor c(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const double* ak = a.row_ptr(k);
        const double* bk = b.row_ptr(k);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = ak[i];
            if (aki == 0.0) {
                continue;
            }
            double* ci = c.row_ptr(i);
            for (std::size_t j = 0; j < b.cols(); ++j) {
                ci[j] += aki * bk[j];
            }
        }
    }
    return c;
}

inline double cosine_similarity(const Tensor& a, const Tensor& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) {
        throw NumericError("cosine_similarity: zero-norm operand");
    }
    return a.dot(b) / (na * nb);
}

}  // namespace navgen
