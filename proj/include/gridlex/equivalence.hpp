#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gridlex/core.hpp"

namespace gridlex {

/// Number of HP cells whose mean over `aggregate_axis` is within tau percent
/// of the best mean. An empty axis name treats every cell as an HP cell.
std::size_t flatness_count(const GridTable& grid, const std::optional<std::string>& aggregate_axis, double tau,
                           bool lower_is_better = true);

/// 100 (max - min) / min over the axis's marginal means, each averaged over
/// every other factor.
double axis_range(const GridTable& grid, const std::string& axis);

/// range_a / (range_a + range_b).
double axis_share(double range_a, double range_b);

using TokenPoint = std::pair<TokenCount, double>;

/// y = a ln(D) + b by ordinary least squares.
LogLinearFit fit_loglinear(const std::vector<TokenPoint>& points, MetricDirection direction);

/// Tokens at which the fit reaches `target`, expressed as a multiple of the
/// reference corpus. Out-of-domain answers are flagged, never rejected.
MultiplierResult invert_multiplier(const LogLinearFit& fit, double target,
                                   TokenCount reference_tokens = kReferenceTokens);

struct DominanceResult {
    double range_d;
    double range_hp;
    /// +inf when range_hp is 0 and range_d is not.
    double rho;
    std::size_t hp_cells_kept;
};

/// Spread of the best loss across corpus sizes against the spread across
/// surviving HP cells at the reference size. HP cells are filtered by their
/// mean over `data_axis` (T percent of the best); values are then read at
/// `reference_level`. Without a data axis the grid is taken to be the
/// reference slice already.
DominanceResult dominance_ratio(const std::map<TokenCount, double>& per_d_best, const GridTable& hp_sweep,
                                const std::optional<std::string>& data_axis,
                                const std::optional<std::string>& reference_level, double t_percent);

}  // namespace gridlex
