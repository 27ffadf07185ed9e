#pragma once

// Independent reference computations for the tests. These deliberately avoid
// the library's code paths: ANOVA by explicit loops over a dense array, least
// squares by the 2x2 normal equations, quantiles from a sorted copy.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include "gridlex/core.hpp"

namespace oracle {

inline bool close(double a, double b, double rel = 1e-9) {
    return std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)});
}

/// Dense 3-D array indexed [i][j][k], balanced.
struct Cube {
    std::size_t ni, nj, nk;
    std::vector<double> v;
    double operator()(std::size_t i, std::size_t j, std::size_t k) const { return v[(i * nj + j) * nk + k]; }
};

inline Cube cube_of(const gridlex::GridTable& g) {
    Cube c{g.factors()[0].levels.size(), g.factors()[1].levels.size(),
           g.rank() > 2 ? g.factors()[2].levels.size() : 1, {}};
    c.v.assign(c.ni * c.nj * c.nk, 0.0);
    for (const auto& [idx, val] : g.cells()) c.v[(idx[0] * c.nj + idx[1]) * c.nk + (g.rank() > 2 ? idx[2] : 0)] = val;
    return c;
}

/// Direct summation for a balanced three-way layout with pairwise terms:
/// {ss_a, ss_b, ss_c, ss_ab, ss_ac, ss_bc, ss_resid, ss_total}.
inline std::array<double, 8> anova3(const Cube& c) {
    const double n = static_cast<double>(c.ni * c.nj * c.nk);
    double gm = 0;
    for (double x : c.v) gm += x;
    gm /= n;
    std::vector<double> ma(c.ni, 0), mb(c.nj, 0), mc(c.nk, 0);
    std::vector<double> mab(c.ni * c.nj, 0), mac(c.ni * c.nk, 0), mbc(c.nj * c.nk, 0);
    for (std::size_t i = 0; i < c.ni; ++i)
        for (std::size_t j = 0; j < c.nj; ++j)
            for (std::size_t k = 0; k < c.nk; ++k) {
                const double x = c(i, j, k);
                ma[i] += x / static_cast<double>(c.nj * c.nk);
                mb[j] += x / static_cast<double>(c.ni * c.nk);
                mc[k] += x / static_cast<double>(c.ni * c.nj);
                mab[i * c.nj + j] += x / static_cast<double>(c.nk);
                mac[i * c.nk + k] += x / static_cast<double>(c.nj);
                mbc[j * c.nk + k] += x / static_cast<double>(c.ni);
            }
    std::array<double, 8> ss{};
    for (std::size_t i = 0; i < c.ni; ++i)
        for (std::size_t j = 0; j < c.nj; ++j)
            for (std::size_t k = 0; k < c.nk; ++k) {
                const double a = ma[i] - gm, b = mb[j] - gm, cc = mc[k] - gm;
                const double ab = mab[i * c.nj + j] - ma[i] - mb[j] + gm;
                const double ac = mac[i * c.nk + k] - ma[i] - mc[k] + gm;
                const double bc = mbc[j * c.nk + k] - mb[j] - mc[k] + gm;
                const double fitted = gm + a + b + cc + ab + ac + bc;
                const double x = c(i, j, k);
                ss[0] += a * a, ss[1] += b * b, ss[2] += cc * cc;
                ss[3] += ab * ab, ss[4] += ac * ac, ss[5] += bc * bc;
                ss[6] += (x - fitted) * (x - fitted);
                ss[7] += (x - gm) * (x - gm);
            }
    return ss;
}

/// Two-way direct summation on a balanced table: {ss_row, ss_col, ss_resid, ss_total}.
inline std::array<double, 4> anova2(const Cube& c) {
    const double n = static_cast<double>(c.ni * c.nj);
    double gm = std::accumulate(c.v.begin(), c.v.end(), 0.0) / n;
    std::vector<double> mr(c.ni, 0), mc(c.nj, 0);
    for (std::size_t i = 0; i < c.ni; ++i)
        for (std::size_t j = 0; j < c.nj; ++j) {
            mr[i] += c(i, j, 0) / static_cast<double>(c.nj);
            mc[j] += c(i, j, 0) / static_cast<double>(c.ni);
        }
    std::array<double, 4> ss{};
    for (std::size_t i = 0; i < c.ni; ++i)
        for (std::size_t j = 0; j < c.nj; ++j) {
            const double x = c(i, j, 0);
            ss[0] += (mr[i] - gm) * (mr[i] - gm);
            ss[1] += (mc[j] - gm) * (mc[j] - gm);
            ss[2] += (x - mr[i] - mc[j] + gm) * (x - mr[i] - mc[j] + gm);
            ss[3] += (x - gm) * (x - gm);
        }
    return ss;
}

struct Line {
    double a, b, r2;
};

/// y = a x + b from the closed-form normal equations.
inline Line ols(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i], sy += y[i], sxx += x[i] * x[i], sxy += x[i] * y[i], syy += y[i] * y[i];
    }
    const double a = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double b = (sy - a * sx) / n;
    double ss_res = 0, ss_tot = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        ss_res += (y[i] - a * x[i] - b) * (y[i] - a * x[i] - b);
        ss_tot += (y[i] - sy / n) * (y[i] - sy / n);
    }
    return {a, b, ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0};
}

/// Sorted-copy quantile with linear interpolation between order statistics.
inline double quantile(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1) * p;
    const auto lo = static_cast<std::size_t>(h);
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace oracle
