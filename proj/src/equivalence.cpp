#include "gridlex/equivalence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "gridlex/stats.hpp"
#include "gridlex/variance.hpp"

namespace gridlex {

namespace {

bool within(double m, double best, double tau, bool lower_is_better) {
    if (std::isinf(tau)) return true;
    const double slack = std::abs(best) * tau / 100.0;
    return lower_is_better ? m <= best + slack : m >= best - slack;
}

}  // namespace

std::size_t flatness_count(const GridTable& grid, const std::optional<std::string>& aggregate_axis, double tau,
                           bool lower_is_better) {
    if (!(tau >= 0.0)) throw ValidationError("tau", "threshold must be non-negative");
    const auto means = hp_cell_means(grid, aggregate_axis);
    if (means.empty()) return 0;
    double best = means.begin()->second;
    for (const auto& [_, m] : means) best = lower_is_better ? std::min(best, m) : std::max(best, m);
    return static_cast<std::size_t>(std::count_if(means.begin(), means.end(), [&](const auto& kv) {
        return within(kv.second, best, tau, lower_is_better);
    }));
}

double axis_range(const GridTable& grid, const std::string& axis) {
    const auto a = grid.factor_index(axis);
    std::map<std::size_t, std::pair<double, std::size_t>> acc;
    for (const auto& [idx, v] : grid.cells()) {
        auto& [s, n] = acc[idx[a]];
        s += v;
        ++n;
    }
    if (acc.size() < 2) throw AnalysisError("axis '" + axis + "' needs at least 2 populated levels");
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& [_, sn] : acc) {
        const double m = sn.first / static_cast<double>(sn.second);
        lo = std::min(lo, m);
        hi = std::max(hi, m);
    }
    if (!(lo > 0.0)) throw AnalysisError("axis range needs a positive minimum marginal");
    return 100.0 * (hi - lo) / lo;
}

double axis_share(double range_a, double range_b) {
    if (range_a < 0.0 || range_b < 0.0) throw AnalysisError("axis ranges must be non-negative");
    if (range_a + range_b == 0.0) throw AnalysisError("axis share undefined when both ranges are 0");
    return range_a / (range_a + range_b);
}

LogLinearFit fit_loglinear(const std::vector<TokenPoint>& points, MetricDirection direction) {
    std::set<TokenCount> distinct;
    for (const auto& [d, _] : points) {
        if (d <= 0) throw ValidationError("d_lr", "token counts must be positive");
        distinct.insert(d);
    }
    if (distinct.size() < 2) throw AnalysisError("log-linear fit needs at least 2 distinct token counts");
    const auto n = static_cast<Eigen::Index>(points.size());
    stats::Vector<double> x(n), y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        x[i] = std::log(static_cast<double>(points[static_cast<std::size_t>(i)].first));
        y[i] = points[static_cast<std::size_t>(i)].second;
    }
    const auto line = stats::fit_line(x, y);
    return LogLinearFit(line.slope, line.intercept, line.r_squared, *distinct.begin(), *distinct.rbegin(),
                        direction);
}

MultiplierResult invert_multiplier(const LogLinearFit& fit, double target, TokenCount reference_tokens) {
    if (!(std::abs(fit.slope()) > kSlopeEpsilon))
        throw AnalysisError("fit is flat (|a| <= " + std::to_string(kSlopeEpsilon) + "); cannot invert");
    if (reference_tokens <= 0) throw ValidationError("reference_tokens", "must be positive");
    const double d = std::exp((target - fit.intercept()) / fit.slope());
    const auto hi = static_cast<double>(fit.domain_max());
    const auto lo = static_cast<double>(fit.domain_min());
    double factor = 1.0;
    if (d > hi) factor = d / hi;
    else if (d < lo) factor = lo / d;
    return MultiplierResult(d, reference_tokens, d > hi || d < lo, factor, fit.direction_mismatch());
}

DominanceResult dominance_ratio(const std::map<TokenCount, double>& per_d_best, const GridTable& hp_sweep,
                                const std::optional<std::string>& data_axis,
                                const std::optional<std::string>& reference_level, double t_percent) {
    if (per_d_best.empty()) throw AnalysisError("dominance ratio needs at least one corpus size");
    if (hp_sweep.size() == 0) throw AnalysisError("HP sweep grid is empty");
    if (!(t_percent >= 0.0)) throw ValidationError("T", "threshold must be non-negative");

    double dlo = per_d_best.begin()->second, dhi = dlo;
    for (const auto& [_, v] : per_d_best) dlo = std::min(dlo, v), dhi = std::max(dhi, v);

    const auto means = hp_cell_means(hp_sweep, data_axis);
    double best = means.begin()->second;
    for (const auto& [_, m] : means) best = std::min(best, m);

    // Values at the reference slice, keyed like the HP means.
    std::map<CellIndex, double> at_ref;
    if (data_axis) {
        const auto a = hp_sweep.factor_index(*data_axis);
        const auto& levels = hp_sweep.factors()[a].levels;
        if (!reference_level) throw AnalysisError("reference level required with a data axis");
        const auto it = std::find(levels.begin(), levels.end(), *reference_level);
        if (it == levels.end()) throw AnalysisError("reference level '" + *reference_level + "' not on the data axis");
        const auto ref = static_cast<std::size_t>(it - levels.begin());
        for (const auto& [idx, v] : hp_sweep.cells()) {
            if (idx[a] != ref) continue;
            CellIndex key;
            for (std::size_t f = 0; f < idx.size(); ++f)
                if (f != a) key.push_back(idx[f]);
            at_ref.emplace(std::move(key), v);
        }
    } else {
        at_ref = hp_sweep.cells();
    }

    double hlo = std::numeric_limits<double>::infinity(), hhi = -hlo;
    std::size_t kept = 0;
    for (const auto& [k, m] : means) {
        if (!within(m, best, t_percent, true)) continue;
        auto it = at_ref.find(k);
        if (it == at_ref.end()) continue;
        ++kept;
        hlo = std::min(hlo, it->second);
        hhi = std::max(hhi, it->second);
    }
    if (kept == 0) throw AnalysisError("no HP cell survives the T filter at the reference size");

    const double range_d = dhi - dlo;
    const double range_hp = hhi - hlo;
    double rho = 0.0;
    if (range_hp > 0.0) rho = range_d / range_hp;
    else if (range_d > 0.0) rho = std::numeric_limits<double>::infinity();
    return {range_d, range_hp, rho, kept};
}

}  // namespace gridlex
