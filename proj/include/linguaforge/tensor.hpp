// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>

#include "linguaforge/common.hpp"

namespace lf {

// Row-major so that position-indexed activations are contiguous rows and
// checkpoint payloads serialize without transposition.
template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <typename S>
inline void fill_gaussian(Mat<S>& m, Rng& rng, double mean, double stddev) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            m(r, c) = static_cast<S>(rng.gaussian(mean, stddev));
        }
    }
}

// In-place softmax over each row, with max subtraction for stability.
template <typename S>
inline void softmax_rows(Mat<S>& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const S row_max = m.row(r).maxCoeff();
        m.row(r) = (m.row(r).array() - row_max).exp();
        m.row(r) /= m.row(r).sum();
    }
}

// log(softmax(row)[index]) for one row, computed without materializing the
// softmax vector.
template <typename S>
inline double log_softmax_at(const Eigen::Ref<const Eigen::Matrix<S, 1, Eigen::Dynamic>>& row,
                             Eigen::Index index) {
    const double row_max = static_cast<double>(row.maxCoeff());
    double sum = 0.0;
    for (Eigen::Index i = 0; i < row.size(); ++i) {
        sum += std::exp(static_cast<double>(row[i]) - row_max);
    }
    return static_cast<double>(row[index]) - row_max - std::log(sum);
}

template <typename S>
inline S gelu(S x) {
    return static_cast<S>(0.5) * x * (static_cast<S>(1) + std::erf(x * static_cast<S>(0.7071067811865475)));
}

template <typename S>
inline S gelu_derivative(S x) {
    const S cdf = static_cast<S>(0.5) * (static_cast<S>(1) + std::erf(x * static_cast<S>(0.7071067811865475)));
    const S pdf = std::exp(static_cast<S>(-0.5) * x * x) * static_cast<S>(0.3989422804014327);
    return cdf + x * pdf;
}

}  // namespace lf
