#include "gridlex/variance.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "gridlex/stats.hpp"

namespace gridlex {

namespace {

using stats::Matrix;
using stats::Vector;

double grand_mean(const GridTable& grid) {
    double s = 0.0;
    for (const auto& [_, v] : grid.cells()) s += v;
    return s / static_cast<double>(grid.size());
}

double corrected_total(const GridTable& grid) {
    const double m = grand_mean(grid);
    double ss = 0.0;
    for (const auto& [_, v] : grid.cells()) ss += (v - m) * (v - m);
    return ss;
}

CellIndex project(const CellIndex& idx, const std::vector<std::size_t>& axes) {
    CellIndex out;
    out.reserve(axes.size());
    for (auto a : axes) out.push_back(idx[a]);
    return out;
}

// Mean of the cells sharing each level combination on `axes`.
std::map<CellIndex, double> marginal_means(const GridTable& grid, const std::vector<std::size_t>& axes) {
    std::map<CellIndex, std::pair<double, std::size_t>> acc;
    for (const auto& [idx, v] : grid.cells()) {
        auto& [s, n] = acc[project(idx, axes)];
        s += v;
        ++n;
    }
    std::map<CellIndex, double> means;
    for (const auto& [k, sn] : acc) means.emplace(k, sn.first / static_cast<double>(sn.second));
    return means;
}

// Weighted main-effect SS: sum over cells of (level mean - grand mean)^2.
double main_effect_ss(const GridTable& grid, std::size_t axis, double mean) {
    const auto means = marginal_means(grid, {axis});
    double ss = 0.0;
    for (const auto& [idx, _] : grid.cells()) {
        const double d = means.at({idx[axis]}) - mean;
        ss += d * d;
    }
    return ss;
}

std::vector<std::size_t> resolve(const GridTable& grid, const std::vector<std::string>& names) {
    std::vector<std::size_t> axes;
    for (const auto& n : names) axes.push_back(grid.factor_index(n));
    std::set<std::size_t> unique(axes.begin(), axes.end());
    if (unique.size() != axes.size()) throw AnalysisError("factor named twice in decomposition");
    return axes;
}

void require_exact_factors(const GridTable& grid, const std::vector<std::string>& names) {
    resolve(grid, names);
    if (grid.rank() != names.size())
        throw AnalysisError("grid has " + std::to_string(grid.rank()) + " factors but the decomposition names " +
                            std::to_string(names.size()) + "; reduce the other factors first");
}

std::string non_orthogonal_note(double reported, double corrected) {
    return "non-orthogonal: term SS sum to " + std::to_string(reported) + " against corrected total " +
           std::to_string(corrected);
}

// Drop unused levels and return the grid restricted to `cells`.
GridTable compact(const GridTable& grid, const std::map<CellIndex, double>& cells) {
    const auto k = grid.rank();
    std::vector<std::set<std::size_t>> used(k);
    for (const auto& [idx, _] : cells)
        for (std::size_t f = 0; f < k; ++f) used[f].insert(idx[f]);
    std::vector<Factor> factors(k);
    std::vector<std::map<std::size_t, std::size_t>> remap(k);
    for (std::size_t f = 0; f < k; ++f) {
        factors[f].name = grid.factors()[f].name;
        for (auto l : used[f]) {
            remap[f].emplace(l, factors[f].levels.size());
            factors[f].levels.push_back(grid.factors()[f].levels[l]);
        }
    }
    std::map<CellIndex, double> out;
    for (const auto& [idx, v] : cells) {
        CellIndex n(k);
        for (std::size_t f = 0; f < k; ++f) n[f] = remap[f].at(idx[f]);
        out.emplace(std::move(n), v);
    }
    return GridTable(std::move(factors), std::move(out), grid.metric_name());
}

// Keep only the listed axes; the dropped axes must be single-level.
GridTable keep_axes(const GridTable& grid, const std::vector<std::size_t>& axes) {
    std::vector<Factor> factors;
    for (auto a : axes) factors.push_back(grid.factors()[a]);
    std::map<CellIndex, double> cells;
    for (const auto& [idx, v] : grid.cells()) cells.emplace(project(idx, axes), v);
    return GridTable(std::move(factors), std::move(cells), grid.metric_name());
}

std::vector<std::size_t> hp_axes(const GridTable& grid, const std::optional<std::string>& aggregate_axis) {
    std::vector<std::size_t> axes;
    const auto skip = aggregate_axis ? grid.factor_index(*aggregate_axis) : grid.rank();
    for (std::size_t f = 0; f < grid.rank(); ++f)
        if (f != skip) axes.push_back(f);
    return axes;
}

}  // namespace

VarianceDecomposition anova_two_way(const GridTable& grid, const std::string& row_factor,
                                    const std::string& col_factor) {
    require_exact_factors(grid, {row_factor, col_factor});
    if (grid.size() < 2) throw AnalysisError("two-way ANOVA needs at least 2 populated cells");
    const auto axes = resolve(grid, {row_factor, col_factor});
    const double mean = grand_mean(grid);
    const double total = corrected_total(grid);
    const double ss_row = main_effect_ss(grid, axes[0], mean);
    const double ss_col = main_effect_ss(grid, axes[1], mean);
    const double resid = total - ss_row - ss_col;
    std::vector<std::string> notes;
    if (resid < -1e-12 * std::max(total, 1.0))
        notes.push_back("non-orthogonal: missing cells make the residual negative");
    return VarianceDecomposition::from_sums({{row_factor, ss_row}, {col_factor, ss_col}, {"residual", resid}}, total,
                                            AnovaMethod::ClassicalBalanced, grid.size(), std::move(notes));
}

VarianceDecomposition anova_three_way(const GridTable& grid, const std::vector<std::string>& factors,
                                      bool include_pairwise) {
    if (factors.size() != 3) throw AnalysisError("three-way ANOVA needs exactly 3 factors");
    require_exact_factors(grid, factors);
    if (!grid.balanced())
        throw AnalysisError("three-way classical ANOVA needs a balanced grid; use the type3 method instead");
    const auto axes = resolve(grid, factors);
    const double mean = grand_mean(grid);
    const double total = corrected_total(grid);

    std::vector<std::pair<std::string, double>> ss;
    std::vector<std::map<CellIndex, double>> mains;
    for (std::size_t i = 0; i < 3; ++i) {
        mains.push_back(marginal_means(grid, {axes[i]}));
        ss.emplace_back(factors[i], main_effect_ss(grid, axes[i], mean));
    }
    if (include_pairwise) {
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = i + 1; j < 3; ++j) {
                const auto pair = marginal_means(grid, {axes[i], axes[j]});
                double s = 0.0;
                for (const auto& [idx, _] : grid.cells()) {
                    const double d = pair.at({idx[axes[i]], idx[axes[j]]}) - mains[i].at({idx[axes[i]]}) -
                                     mains[j].at({idx[axes[j]]}) + mean;
                    s += d * d;
                }
                ss.emplace_back(factors[i] + ":" + factors[j], s);
            }
    }
    double explained = 0.0;
    for (const auto& [_, v] : ss) explained += v;
    ss.emplace_back("residual", total - explained);
    return VarianceDecomposition::from_sums(ss, total, AnovaMethod::ClassicalBalanced, grid.size());
}

std::string term_name(const ModelTerm& term) {
    std::string out;
    for (const auto& f : term) out += (out.empty() ? "" : ":") + f;
    return out;
}

std::vector<ModelTerm> standard_terms(const std::vector<std::string>& factors, bool include_pairwise) {
    std::vector<ModelTerm> terms;
    for (const auto& f : factors) terms.push_back({f});
    if (include_pairwise)
        for (std::size_t i = 0; i < factors.size(); ++i)
            for (std::size_t j = i + 1; j < factors.size(); ++j) terms.push_back({factors[i], factors[j]});
    return terms;
}

VarianceDecomposition anova_type3(const GridTable& input, const std::vector<std::string>& factors,
                                  const std::vector<ModelTerm>& terms) {
    require_exact_factors(input, factors);
    if (terms.empty()) throw AnalysisError("type3 ANOVA needs at least one model term");
    const GridTable grid = compact(input, input.cells());
    for (const auto& f : grid.factors())
        if (f.levels.size() < 2) throw AnalysisError("factor '" + f.name + "' collapsed to a single level");

    const auto n = static_cast<Eigen::Index>(grid.size());
    // Sum-to-zero coding: level l < L-1 maps to unit column l, the last level to -1 everywhere.
    auto coding = [&](std::size_t axis) {
        const auto levels = static_cast<Eigen::Index>(grid.factors()[axis].levels.size());
        Matrix<double> m = Matrix<double>::Zero(n, levels - 1);
        Eigen::Index row = 0;
        for (const auto& [idx, _] : grid.cells()) {
            const auto l = static_cast<Eigen::Index>(idx[axis]);
            if (l == levels - 1)
                m.row(row).setConstant(-1.0);
            else
                m(row, l) = 1.0;
            ++row;
        }
        return m;
    };

    std::vector<Matrix<double>> blocks;
    for (const auto& term : terms) {
        if (term.empty()) throw AnalysisError("empty model term");
        Matrix<double> block = Matrix<double>::Ones(n, 1);
        for (const auto& f : term) {
            if (std::find(factors.begin(), factors.end(), f) == factors.end())
                throw AnalysisError("term '" + term_name(term) + "' uses unknown factor '" + f + "'");
            const Matrix<double> c = coding(grid.factor_index(f));
            // Row-wise Kronecker product of the running block with the factor coding.
            Matrix<double> next(n, block.cols() * c.cols());
            for (Eigen::Index a = 0; a < block.cols(); ++a)
                for (Eigen::Index b = 0; b < c.cols(); ++b)
                    next.col(a * c.cols() + b) = block.col(a).cwiseProduct(c.col(b));
            block = std::move(next);
        }
        blocks.push_back(std::move(block));
    }

    auto design = [&](std::optional<std::size_t> drop) {
        Eigen::Index cols = 1;
        for (std::size_t t = 0; t < blocks.size(); ++t)
            if (t != drop) cols += blocks[t].cols();
        Matrix<double> x(n, cols);
        x.col(0).setOnes();
        Eigen::Index at = 1;
        for (std::size_t t = 0; t < blocks.size(); ++t)
            if (t != drop) {
                x.middleCols(at, blocks[t].cols()) = blocks[t];
                at += blocks[t].cols();
            }
        return x;
    };

    Vector<double> y(n);
    {
        Eigen::Index row = 0;
        for (const auto& [_, v] : grid.cells()) y[row++] = v;
    }

    const Matrix<double> full_x = design(std::nullopt);
    const auto full = stats::least_squares(full_x, y);
    std::vector<stats::LeastSquaresResult<double>> reduced;
    for (std::size_t t = 0; t < blocks.size(); ++t) reduced.push_back(stats::least_squares(design(t), y));

    if (full.rank < full_x.cols()) {
        std::string aliased;
        for (std::size_t t = 0; t < blocks.size(); ++t)
            if (full.rank - reduced[t].rank < blocks[t].cols())
                aliased += (aliased.empty() ? "" : ", ") + term_name(terms[t]);
        throw AnalysisError("rank-deficient design (rank " + std::to_string(full.rank) + " of " +
                            std::to_string(full_x.cols()) + " columns); aliased terms: " +
                            (aliased.empty() ? "intercept" : aliased));
    }

    std::vector<std::pair<std::string, double>> ss;
    double reported = full.rss;
    for (std::size_t t = 0; t < blocks.size(); ++t) {
        const double s = std::max(0.0, reduced[t].rss - full.rss);
        ss.emplace_back(term_name(terms[t]), s);
        reported += s;
    }
    ss.emplace_back("residual", full.rss);

    const double corrected = corrected_total(grid);
    std::vector<std::string> notes;
    if (std::abs(reported - corrected) > 1e-9 * std::max(corrected, 1.0))
        notes.push_back(non_orthogonal_note(reported, corrected));
    // Round-off can leave a tiny positive total on constant data.
    if (corrected <= 1e-24) reported = 0.0;
    return VarianceDecomposition::from_sums(ss, reported, AnovaMethod::Type3Regression, grid.size(),
                                            std::move(notes));
}

std::map<CellIndex, double> hp_cell_means(const GridTable& grid, const std::optional<std::string>& aggregate_axis) {
    return marginal_means(grid, hp_axes(grid, aggregate_axis));
}

GridTable recenter(const GridTable& grid, const RecenterSpec& spec) {
    const auto axes = hp_axes(grid, spec.aggregate_axis);
    const auto means = hp_cell_means(grid, spec.aggregate_axis);
    if (means.empty()) throw AnalysisError("cannot recenter an empty grid");
    std::set<CellIndex> kept;

    if (const auto* t = std::get_if<ThresholdMode>(&spec.mode)) {
        if (!(t->tau >= 0.0)) throw ValidationError("tau", "threshold must be non-negative");
        double best = means.begin()->second;
        for (const auto& [_, m] : means) best = spec.lower_is_better ? std::min(best, m) : std::max(best, m);
        const double slack = std::isinf(t->tau) ? t->tau : std::abs(best) * t->tau / 100.0;
        for (const auto& [k, m] : means)
            if (std::isinf(slack) || (spec.lower_is_better ? m <= best + slack : m >= best - slack)) kept.insert(k);
    } else {
        const auto& box = std::get<BoxMode>(spec.mode);
        if (box.radius < 0) throw ValidationError("radius", "radius must be non-negative");
        if (box.anchor.size() != axes.size())
            throw ValidationError("anchor", "anchor must index the " + std::to_string(axes.size()) +
                                                "-factor HP sub-grid");
        if (!means.count(box.anchor)) throw AnalysisError("anchor cell is not populated");
        for (const auto& [k, _] : means) {
            bool inside = true;
            for (std::size_t i = 0; i < k.size() && inside; ++i) {
                const auto d = static_cast<long long>(k[i]) - static_cast<long long>(box.anchor[i]);
                inside = std::llabs(d) <= box.radius;
            }
            if (inside) kept.insert(k);
        }
    }

    std::map<CellIndex, double> cells;
    for (const auto& [idx, v] : grid.cells())
        if (kept.count(project(idx, axes))) cells.emplace(idx, v);
    return compact(grid, cells);
}

std::map<CellIndex, double> percent_above_best(const std::map<CellIndex, double>& values) {
    if (values.empty()) throw AnalysisError("no values to compare against a best");
    double best = values.begin()->second;
    for (const auto& [_, v] : values) best = std::min(best, v);
    if (!(best > 0.0)) throw AnalysisError("percent above best needs a positive best value");
    std::map<CellIndex, double> out;
    for (const auto& [k, v] : values) out.emplace(k, 100.0 * (v - best) / best);
    return out;
}

OutlierReport iqr_outliers(const std::map<CellIndex, double>& values) {
    if (values.size() < 4) throw AnalysisError("outlier detection needs at least 4 values");
    Vector<double> v(static_cast<Eigen::Index>(values.size()));
    Eigen::Index i = 0;
    for (const auto& [_, x] : values) v[i++] = x;
    OutlierReport r{};
    r.q1 = stats::quantile_linear(v, 0.25);
    r.q3 = stats::quantile_linear(v, 0.75);
    r.iqr = r.q3 - r.q1;
    r.lower_fence = r.q1 - 1.5 * r.iqr;
    r.upper_fence = r.q3 + 1.5 * r.iqr;
    for (const auto& [k, x] : values) {
        if (x < r.lower_fence) r.flagged.push_back({k, x, "lower"});
        if (x > r.upper_fence) r.flagged.push_back({k, x, "upper"});
    }
    return r;
}

std::vector<SweepEntry> recentering_sweep(const GridTable& grid, const std::vector<double>& thresholds,
                                          const std::string& aggregate_axis, const DecompositionSpec& spec,
                                          bool lower_is_better) {
    if (spec.factors.size() != 2 && spec.factors.size() != 3)
        throw AnalysisError("sweep decomposes over 2 or 3 factors");
    require_exact_factors(grid, spec.factors);
    if (!std::is_sorted(thresholds.begin(), thresholds.end()))
        throw ValidationError("thresholds", "thresholds must be sorted ascending");
    const bool pairwise = spec.factors.size() == 3 && spec.include_pairwise;
    std::vector<std::string> canonical;
    for (const auto& t : standard_terms(spec.factors, pairwise)) canonical.push_back(term_name(t));
    canonical.push_back("residual");

    std::vector<SweepEntry> out;
    for (const double tau : thresholds) {
        const auto kept = recenter(grid, {ThresholdMode{tau}, aggregate_axis, lower_is_better});
        const auto kept_hp = hp_cell_means(kept, aggregate_axis).size();

        std::vector<std::string> active;
        std::vector<std::size_t> active_axes;
        std::vector<std::string> notes;
        for (const auto& f : spec.factors) {
            const auto a = kept.factor_index(f);
            if (kept.factors()[a].levels.size() >= 2) {
                active.push_back(f);
                active_axes.push_back(a);
            } else {
                notes.push_back("collapsed factor: " + f);
            }
        }
        std::sort(active_axes.begin(), active_axes.end());
        std::vector<std::string> ordered;
        for (auto a : active_axes) ordered.push_back(kept.factors()[a].name);

        std::optional<VarianceDecomposition> dec;
        if (active.empty()) {
            dec = VarianceDecomposition::from_sums({{"residual", 0.0}}, 0.0, AnovaMethod::ClassicalBalanced,
                                                   kept.size());
        } else {
            const auto sub = keep_axes(kept, active_axes);
            if (sub.balanced() && active.size() == 2 && spec.factors.size() == 2) {
                dec = anova_two_way(sub, active[0], active[1]);
            } else if (sub.balanced() && active.size() == 3) {
                dec = anova_three_way(sub, active, pairwise);
            } else {
                const bool inter = pairwise && active.size() == 3;
                try {
                    dec = anova_type3(sub, ordered, standard_terms(active, inter));
                } catch (const AnalysisError&) {
                    if (!inter) throw;
                    // Keep each interaction that stays estimable alongside the mains.
                    auto terms = standard_terms(active, false);
                    for (const auto& t : standard_terms(active, true)) {
                        if (t.size() < 2) continue;
                        terms.push_back(t);
                        try {
                            anova_type3(sub, ordered, terms);
                        } catch (const AnalysisError&) {
                            terms.pop_back();
                            notes.push_back("aliased interaction dropped: " + term_name(t));
                        }
                    }
                    dec = anova_type3(sub, ordered, terms);
                }
            }
        }

        std::vector<VarianceTerm> terms;
        for (const auto& name : canonical) {
            const auto& have = dec->terms();
            auto it = std::find_if(have.begin(), have.end(), [&](const VarianceTerm& t) { return t.name == name; });
            terms.push_back(it != have.end() ? *it : VarianceTerm{name, 0.0, 0.0});
        }
        auto all_notes = dec->notes();
        all_notes.insert(all_notes.end(), notes.begin(), notes.end());
        out.push_back({tau, kept_hp,
                       VarianceDecomposition(std::move(terms), dec->ss_total(), dec->method(), dec->n_cells(),
                                             std::move(all_notes))});
    }
    return out;
}

}  // namespace gridlex
