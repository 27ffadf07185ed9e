#pragma once

// Scalar-generic numeric kernels over Eigen vectors and matrices.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace gridlex::stats {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Quantile by linear interpolation between order statistics: position
/// h = (n - 1) p on the sorted sample (the "type 7" estimator).
template <typename Derived>
typename Derived::Scalar quantile_linear(const Eigen::DenseBase<Derived>& values, typename Derived::Scalar p) {
    using Scalar = typename Derived::Scalar;
    std::vector<Scalar> sorted;
    sorted.reserve(static_cast<std::size_t>(values.size()));
    for (Eigen::Index i = 0; i < values.size(); ++i) sorted.push_back(values.derived().coeff(i));
    std::sort(sorted.begin(), sorted.end());
    const auto n = static_cast<Scalar>(sorted.size() - 1);
    const Scalar h = n * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + (h - static_cast<Scalar>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

template <typename Derived>
typename Derived::Scalar median(const Eigen::DenseBase<Derived>& values) {
    return quantile_linear(values, typename Derived::Scalar(0.5));
}

/// Sample correlation; empty when either coordinate has zero variance.
template <typename DX, typename DY>
std::optional<typename DX::Scalar> pearson(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DY>& y) {
    using Scalar = typename DX::Scalar;
    if (x.size() != y.size() || x.size() < 2) return std::nullopt;
    const Vector<Scalar> dx = x.array() - x.mean();
    const Vector<Scalar> dy = y.array() - y.mean();
    const Scalar sxx = dx.squaredNorm();
    const Scalar syy = dy.squaredNorm();
    if (!(sxx > 0) || !(syy > 0)) return std::nullopt;
    const Scalar r = dx.dot(dy) / std::sqrt(sxx * syy);
    return std::clamp(r, Scalar(-1), Scalar(1));
}

template <typename Scalar>
struct LineFit {
    Scalar slope;
    Scalar intercept;
    Scalar r_squared;
};

/// Ordinary least squares of y on x with intercept.
template <typename DX, typename DY>
LineFit<typename DX::Scalar> fit_line(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DY>& y) {
    using Scalar = typename DX::Scalar;
    const Scalar mx = x.mean();
    const Scalar my = y.mean();
    const Vector<Scalar> dx = x.array() - mx;
    const Vector<Scalar> dy = y.array() - my;
    const Scalar sxx = dx.squaredNorm();
    const Scalar slope = dx.dot(dy) / sxx;
    const Scalar intercept = my - slope * mx;
    const Scalar syy = dy.squaredNorm();
    Scalar r2 = Scalar(1);
    if (x.size() > 2 && syy > 0) {
        const Scalar sxy = dx.dot(dy);
        r2 = std::clamp(sxy * sxy / (sxx * syy), Scalar(0), Scalar(1));
    }
    return {slope, intercept, r2};
}

template <typename Scalar>
struct LeastSquaresResult {
    Vector<Scalar> coefficients;
    Scalar rss;
    Eigen::Index rank;
};

/// Least squares via column-pivoting QR; reports numerical rank so callers can
/// reject aliased designs.
template <typename Scalar>
LeastSquaresResult<Scalar> least_squares(const Matrix<Scalar>& design, const Vector<Scalar>& y) {
    Eigen::ColPivHouseholderQR<Matrix<Scalar>> qr(design);
    qr.setThreshold(Scalar(1e-10));
    Vector<Scalar> beta = qr.solve(y);
    const Scalar rss = (y - design * beta).squaredNorm();
    return {std::move(beta), rss, qr.rank()};
}

}  // namespace gridlex::stats
