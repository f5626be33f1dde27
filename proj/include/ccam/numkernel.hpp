#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>

#include "ccam/errors.hpp"

namespace ccam {

using Index = Eigen::Index;

/// Dense row-major matrix. Double precision is the default; float is an
/// opt-in instantiation.
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Matrix = Mat<double>;

template <typename Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using BoolGrid = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Derived>
std::string shape_of(const Eigen::DenseBase<Derived>& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
    return m.derived().array().isFinite().all();
}

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, const std::string& what) {
    if (!all_finite(m)) {
        throw NumericError(what + ": non-finite entry in " + shape_of(m) + " matrix");
    }
}

/// Builds a matrix from row-major data, rejecting non-finite entries.
template <typename Scalar = double>
Mat<Scalar> make_matrix(Index rows, Index cols, std::span<const Scalar> data) {
    if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size()) {
        throw std::invalid_argument("make_matrix: " + std::to_string(data.size()) +
                                    " values cannot fill " + std::to_string(rows) + "x" +
                                    std::to_string(cols));
    }
    Mat<Scalar> m = Eigen::Map<const Mat<Scalar>>(data.data(), rows, cols);
    require_finite(m, "make_matrix");
    return m;
}

/// Query-by-key visibility. Every query row sees at least one key.
class TokenMask {
public:
    explicit TokenMask(BoolGrid bits) : bits_(std::move(bits)) {
        for (Index i = 0; i < bits_.rows(); ++i) {
            if (!bits_.row(i).any()) {
                throw std::invalid_argument("token mask: query " + std::to_string(i) +
                                            " sees no tokens");
            }
        }
    }

    static TokenMask all(Index n_queries, Index n_keys) {
        return TokenMask(BoolGrid::Constant(n_queries, n_keys, true));
    }

    Index n_queries() const { return bits_.rows(); }
    Index n_keys() const { return bits_.cols(); }
    bool operator()(Index i, Index j) const { return bits_(i, j); }
    const BoolGrid& bits() const { return bits_; }

    friend bool operator==(const TokenMask& a, const TokenMask& b) {
        return a.bits_.rows() == b.bits_.rows() && a.bits_.cols() == b.bits_.cols() &&
               (a.bits_ == b.bits_).all();
    }

private:
    BoolGrid bits_;
};

template <typename Scalar>
Mat<Scalar> matmul(const Mat<Scalar>& a, const Mat<Scalar>& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: shape mismatch " + shape_of(a) + " x " +
                                    shape_of(b));
    }
    return a * b;
}

/// Softmax of each logits row restricted to the visible keys.
///
/// The shift uses the maximum over visible entries only and masked entries
/// are never exponentiated, so they come out as exact zeros.
template <typename Scalar>
Mat<Scalar> rowwise_weights(const Mat<Scalar>& logits, const TokenMask& mask) {
    if (logits.rows() != mask.n_queries() || logits.cols() != mask.n_keys()) {
        throw std::invalid_argument("rowwise_weights: logits " + shape_of(logits) +
                                    " vs mask " + shape_of(mask.bits()));
    }
    require_finite(logits, "rowwise_weights: logits");
    const auto& bits = mask.bits();
    Mat<Scalar> w = Mat<Scalar>::Zero(logits.rows(), logits.cols());
    for (Index i = 0; i < logits.rows(); ++i) {
        Scalar peak = -std::numeric_limits<Scalar>::infinity();
        for (Index j = 0; j < logits.cols(); ++j) {
            if (bits(i, j) && logits(i, j) > peak) peak = logits(i, j);
        }
        if (peak == -std::numeric_limits<Scalar>::infinity()) {
            throw std::invalid_argument("rowwise_weights: query " + std::to_string(i) +
                                        " sees no tokens");
        }
        Scalar total = 0;
        for (Index j = 0; j < logits.cols(); ++j) {
            if (bits(i, j)) {
                w(i, j) = std::exp(logits(i, j) - peak);
                total += w(i, j);
            }
        }
        w.row(i) /= total;
    }
    return w;
}

/// Row i is the softmax-weighted mean of the value rows visible to query i.
template <typename Scalar>
Mat<Scalar> masked_attend(const Mat<Scalar>& logits, const TokenMask& mask,
                          const Mat<Scalar>& values) {
    if (values.rows() != logits.cols()) {
        throw std::invalid_argument("masked_attend: logits " + shape_of(logits) +
                                    " vs values " + shape_of(values));
    }
    return rowwise_weights(logits, mask) * values;
}

}  // namespace ccam
