#pragma once

#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "gridlex/core.hpp"

namespace gridlex {

/// Two-way decomposition with weighted marginal means. Missing cells are
/// tolerated; the residual is obtained by subtraction and may go negative on
/// unbalanced grids, in which case a "non-orthogonal" note is attached.
VarianceDecomposition anova_two_way(const GridTable& grid, const std::string& row_factor,
                                    const std::string& col_factor);

/// Balanced three-way decomposition. Terms are the three main effects, the
/// pairwise interactions (when requested) and a residual that absorbs the
/// three-way interaction plus noise.
VarianceDecomposition anova_three_way(const GridTable& grid, const std::vector<std::string>& factors,
                                      bool include_pairwise = true);

/// A model term: one factor for a main effect, several for an interaction.
using ModelTerm = std::vector<std::string>;

/// "a" or "a:b".
std::string term_name(const ModelTerm& term);

/// Type III sums of squares by regression with sum-to-zero coding. Works on
/// partial grids; the reported total is the sum of term SS plus residual.
VarianceDecomposition anova_type3(const GridTable& grid, const std::vector<std::string>& factors,
                                  const std::vector<ModelTerm>& terms);

/// Main effects plus, optionally, every pairwise interaction of `factors`.
std::vector<ModelTerm> standard_terms(const std::vector<std::string>& factors, bool include_pairwise);

struct ThresholdMode {
    /// Percent above the best HP-cell mean.
    double tau;
};

struct BoxMode {
    /// Index into the HP sub-grid (every factor except the aggregate axis).
    CellIndex anchor;
    int radius;
};

struct RecenterSpec {
    std::variant<ThresholdMode, BoxMode> mode;
    /// Axis averaged over when ranking HP cells; empty means each cell is its
    /// own HP cell.
    std::optional<std::string> aggregate_axis;
    bool lower_is_better = true;
};

/// Mean over the aggregate axis for each HP cell, keyed by the HP sub-index.
std::map<CellIndex, double> hp_cell_means(const GridTable& grid, const std::optional<std::string>& aggregate_axis);

/// Restrict the grid to the kept HP cells. Levels with no remaining cells are
/// dropped, so the returned grid may have fewer levels than the input.
GridTable recenter(const GridTable& grid, const RecenterSpec& spec);

/// 100 (v - best) / best with best the minimum value.
std::map<CellIndex, double> percent_above_best(const std::map<CellIndex, double>& values);

struct FlaggedCell {
    CellIndex index;
    double value;
    /// "lower" or "upper".
    std::string fence;
};

struct OutlierReport {
    std::vector<FlaggedCell> flagged;
    double q1;
    double q3;
    double iqr;
    double lower_fence;
    double upper_fence;
};

/// Tukey fences at 1.5 IQR, quartiles by linear interpolation.
OutlierReport iqr_outliers(const std::map<CellIndex, double>& values);

struct DecompositionSpec {
    std::vector<std::string> factors;
    /// Pairwise interactions (three-way form only).
    bool include_pairwise = true;
};

struct SweepEntry {
    double tau;
    std::size_t kept_hp_cells;
    VarianceDecomposition decomposition;
};

inline constexpr double kUnboundedTau = std::numeric_limits<double>::infinity();

/// Threshold re-centering at each tau followed by a decomposition of the
/// surviving grid. Balanced survivors use the classical formulas, anything
/// else goes through Type III. Factors reduced to a single level are dropped
/// from the model and reported with zero SS.
std::vector<SweepEntry> recentering_sweep(const GridTable& grid, const std::vector<double>& thresholds,
                                          const std::string& aggregate_axis, const DecompositionSpec& spec,
                                          bool lower_is_better = true);

}  // namespace gridlex
