#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace attrec {

// Dense row-major matrix of doubles. Every array in the model is small
// (windows of a handful of items, embedding dims of O(100)), so there is
// one storage format and no sparse path.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    void fill(double v) { data_.assign(data_.size(), v); }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Standard matrix product. Throws std::invalid_argument naming both shapes
/// when the inner dimensions disagree.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);

/// Row-wise softmax with max-subtraction, so rows containing large negative
/// mask sentinels normalize without overflow. Every output row sums to 1.
Matrix row_softmax(const Matrix& a);

/// Entrywise max(x, 0). Maps -0.0 to +0.0.
Matrix relu(const Matrix& a);

/// Euclidean norm of each row.
std::vector<double> row_l2_norms(const Matrix& a);

// Seedable pseudo-random source. The engine is mt19937_64 (output sequence
// fixed by the standard); the int/real draws below are hand-rolled so that
// streams do not depend on implementation-defined <random> distributions.
// One instance per worker, never shared.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1), 53 random bits.
    double next_real() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, bound), unbiased via rejection.
    std::uint64_t below(std::uint64_t bound);

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_real(); }

    /// Fisher-Yates shuffle driven by below(), so permutations are
    /// reproducible across standard libraries.
    template <typename T>
    void shuffle(std::vector<T>& values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            std::swap(values[i - 1], values[below(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace attrec
