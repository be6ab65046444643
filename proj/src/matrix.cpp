#include "attrec/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace attrec {

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument(
            "matmul: inner dimensions differ, " + std::to_string(a.rows()) + "x" +
            std::to_string(a.cols()) + " * " + std::to_string(b.rows()) + "x" +
            std::to_string(b.cols()));
    }
    Matrix out(a.rows(), b.cols());
    // ikj order keeps the inner loop contiguous over b and out.
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* arow = a.data() + i * a.cols();
        double* orow = out.data() + i * out.cols();
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double av = arow[k];
            const double* brow = b.data() + k * b.cols();
            for (std::size_t j = 0; j < b.cols(); ++j) {
                orow[j] += av * brow[j];
            }
        }
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            out(j, i) = a(i, j);
        }
    }
    return out;
}

Matrix row_softmax(const Matrix& a) {
    if (a.cols() == 0) {
        throw std::invalid_argument("row_softmax: matrix has no columns");
    }
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto in = a.row(i);
        auto dst = out.row(i);
        double mx = in[0];
        for (double v : in) mx = std::max(mx, v);
        double sum = 0.0;
        for (std::size_t j = 0; j < in.size(); ++j) {
            dst[j] = std::exp(in[j] - mx);
            sum += dst[j];
        }
        for (std::size_t j = 0; j < in.size(); ++j) dst[j] /= sum;
    }
    return out;
}

Matrix relu(const Matrix& a) {
    Matrix out(a.rows(), a.cols());
    const double* src = a.data();
    double* dst = out.data();
    for (std::size_t n = 0; n < a.size(); ++n) {
        dst[n] = src[n] > 0.0 ? src[n] : 0.0;
    }
    return out;
}

std::vector<double> row_l2_norms(const Matrix& a) {
    std::vector<double> norms(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double sq = 0.0;
        for (double v : a.row(i)) sq += v * v;
        norms[i] = std::sqrt(sq);
    }
    return norms;
}

std::uint64_t Rng::below(std::uint64_t bound) {
    if (bound == 0) {
        throw std::invalid_argument("Rng::below: bound must be positive");
    }
    // Reject draws from the tail that would bias small residues.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t draw;
    do {
        draw = engine_();
    } while (draw >= limit);
    return draw % bound;
}

}  // namespace attrec
