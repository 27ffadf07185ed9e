#include <doctest.h>

#include <cmath>
#include <functional>

#include "gridlex/variance.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace gridlex;
using testing::grid2;

namespace {

GridTable cube(std::size_t a, std::size_t b, std::size_t c, const std::function<double(std::size_t, std::size_t, std::size_t)>& f) {
    std::map<CellIndex, double> cells;
    for (std::size_t i = 0; i < a; ++i)
        for (std::size_t j = 0; j < b; ++j)
            for (std::size_t k = 0; k < c; ++k) cells[{i, j, k}] = f(i, j, k);
    return {{{"a", testing::labels(a)}, {"b", testing::labels(b)}, {"c", testing::labels(c)}}, std::move(cells),
            "val_loss.ar"};
}

}  // namespace

TEST_CASE("two-way hand fixtures") {
    const auto d = anova_two_way(grid2({{0, 1}, {2, 3}}), "row", "col");
    CHECK(d.term("row").sum_of_squares == 4.0);
    CHECK(d.term("col").sum_of_squares == 1.0);
    CHECK(d.term("residual").sum_of_squares == 0.0);
    CHECK(d.fraction("row") == 0.8);

    const auto x = anova_two_way(grid2({{0, 1}, {1, 0}}), "row", "col");
    CHECK(x.fraction("residual") == 1.0);

    CHECK(anova_two_way(grid2({{1, 1}, {1, 1}}), "row", "col").degenerate());
    CHECK_THROWS_AS(anova_two_way(grid2({{1, 2}}), "row", "nope"), AnalysisError);
}

TEST_CASE("two-way on a staircase grid flags non-orthogonality") {
    GridTable g({{"row", {"0", "1", "2"}}, {"col", {"0", "1", "2"}}},
                {{{0, 0}, 0.0}, {{0, 1}, 5.0}, {{1, 0}, 5.0}, {{1, 1}, 0.0}, {{2, 2}, 9.0}}, "val_loss.ar");
    const auto d = anova_two_way(g, "row", "col");
    double sum = 0;
    for (const auto& t : d.terms()) sum += t.sum_of_squares;
    CHECK(sum == doctest::Approx(d.ss_total()));
    if (d.term("residual").sum_of_squares < 0) CHECK(d.has_note("non-orthogonal"));
}

TEST_CASE("three-way matches direct summation") {
    const auto g = cube(3, 4, 2, [](auto i, auto j, auto k) {
        return 0.3 * i + 0.1 * j * j - 0.2 * k + 0.05 * i * j + 0.01 * ((i * 7 + j * 3 + k * 5) % 4);
    });
    const auto d = anova_three_way(g, {"a", "b", "c"});
    const auto o = oracle::anova3(oracle::cube_of(g));
    const char* names[] = {"a", "b", "c", "a:b", "a:c", "b:c", "residual"};
    for (int i = 0; i < 7; ++i) CHECK(oracle::close(d.term(names[i]).sum_of_squares, o[i]));
    CHECK(oracle::close(d.ss_total(), o[7]));

    const auto mains = anova_three_way(g, {"a", "b", "c"}, false);
    CHECK(mains.terms().size() == 4);
    CHECK(oracle::close(mains.term("residual").sum_of_squares, o[3] + o[4] + o[5] + o[6]));
}

TEST_CASE("three-way refuses unbalanced grids") {
    auto g = cube(2, 2, 2, [](auto i, auto, auto) { return double(i); });
    auto cells = g.cells();
    cells.erase({1, 1, 1});
    CHECK_THROWS_AS(anova_three_way(GridTable(g.factors(), cells, "m"), {"a", "b", "c"}), AnalysisError);
}

TEST_CASE("type III equals classical on balanced data and survives missing cells") {
    const auto g = cube(4, 3, 3, [](auto i, auto j, auto k) {
        return std::sin(1.0 + i) + 0.5 * std::cos(2.0 * j) + 0.1 * k + 0.03 * i * k + 0.002 * ((i + 2 * j + k) % 3);
    });
    const std::vector<std::string> f{"a", "b", "c"};
    const auto cls = anova_three_way(g, f);
    const auto t3 = anova_type3(g, f, standard_terms(f, true));
    for (const auto& t : cls.terms()) CHECK(oracle::close(t3.term(t.name).sum_of_squares, t.sum_of_squares));
    CHECK(t3.method() == AnovaMethod::Type3Regression);

    auto cells = g.cells();
    cells.erase({0, 0, 0});
    cells.erase({3, 2, 1});
    const auto partial = anova_type3(GridTable(g.factors(), cells, "m"), f, standard_terms(f, false));
    CHECK(partial.n_cells() == 34);
    double frac = 0;
    for (const auto& t : partial.terms()) frac += t.fraction;
    CHECK(frac == doctest::Approx(1.0));
}

TEST_CASE("type III reports aliasing and collapsed factors") {
    GridTable diag({{"row", {"0", "1"}}, {"col", {"0", "1"}}}, {{{0, 0}, 1.0}, {{1, 1}, 2.0}, {{0, 1}, 1.5}}, "m");
    CHECK_THROWS_AS(anova_type3(diag, {"row", "col"}, {{"row"}, {"col"}, {"row", "col"}}), AnalysisError);
    GridTable one({{"row", {"0", "1"}}, {"col", {"0", "1"}}}, {{{0, 0}, 1.0}, {{0, 1}, 2.0}}, "m");
    CHECK_THROWS_AS(anova_type3(one, {"row", "col"}, {{"row"}, {"col"}}), AnalysisError);
}

TEST_CASE("threshold re-centering keeps cells near the best") {
    const auto g = grid2({{1.0, 1.05, 1.2}, {1.01, 1.5, 2.0}});
    CHECK(recenter(g, {ThresholdMode{0.0}}).size() == 1);
    CHECK(recenter(g, {ThresholdMode{5.0}}).size() == 3);
    CHECK(recenter(g, {ThresholdMode{kUnboundedTau}}).size() == 6);
    const auto hi = recenter(g, {ThresholdMode{10.0}, std::nullopt, false});
    CHECK(hi.size() == 1);
    CHECK_THROWS_AS(recenter(g, {ThresholdMode{-1.0}}), ValidationError);
}

TEST_CASE("box re-centering clips at the grid edge") {
    std::vector<std::vector<double>> v(5, std::vector<double>(5, 1.0));
    const auto g = grid2(v);
    CHECK(recenter(g, {BoxMode{{2, 2}, 1}}).size() == 9);
    CHECK(recenter(g, {BoxMode{{0, 2}, 1}}).size() == 6);
    CHECK(recenter(g, {BoxMode{{0, 0}, 1}}).size() == 4);
    CHECK(recenter(g, {BoxMode{{0, 0}, 0}}).size() == 1);
    const auto clipped = recenter(g, {BoxMode{{0, 0}, 1}});
    CHECK(clipped.factors()[0].levels == std::vector<std::string>{"0", "1"});
    CHECK_THROWS(recenter(g, {BoxMode{{7, 0}, 1}}));
    CHECK_THROWS(recenter(g, {BoxMode{{0, 0}, -1}}));
}

TEST_CASE("hp cell means average over the aggregate axis") {
    const auto g = cube(2, 2, 3, [](auto i, auto j, auto k) { return double(i + 10 * j + 100 * k); });
    const auto m = hp_cell_means(g, std::string("c"));
    CHECK(m.size() == 4);
    CHECK(m.at({1, 1}) == 111.0);
    CHECK(hp_cell_means(g, std::nullopt).size() == 12);
}

TEST_CASE("percent above best and IQR fences") {
    const std::map<CellIndex, double> v{{{0}, 2.0}, {{1}, 2.2}, {{2}, 3.0}};
    const auto p = percent_above_best(v);
    CHECK(p.at({0}) == 0.0);
    CHECK(p.at({1}) == doctest::Approx(10.0));
    CHECK_THROWS_AS(percent_above_best({{{0}, 0.0}}), AnalysisError);

    std::map<CellIndex, double> vals;
    const std::vector<double> xs{1, 2, 3, 4, 5, 6, 7, 8, 100};
    for (std::size_t i = 0; i < xs.size(); ++i) vals[{i}] = xs[i];
    const auto r = iqr_outliers(vals);
    CHECK(r.q1 == oracle::quantile(xs, 0.25));
    CHECK(r.q3 == oracle::quantile(xs, 0.75));
    REQUIRE(r.flagged.size() == 1);
    CHECK(r.flagged[0].value == 100.0);
    CHECK(r.flagged[0].fence == "upper");
    CHECK_THROWS_AS(iqr_outliers({{{0}, 1.0}, {{1}, 2.0}}), AnalysisError);
}

TEST_CASE("recentering sweep keeps canonical terms") {
    const auto g = cube(5, 5, 3, [](auto i, auto j, auto k) {
        return 3.0 + 0.02 * (double(i) - 2) * (double(i) - 2) + 0.03 * (double(j) - 1) * (double(j) - 1) + 0.1 * k +
               0.001 * ((i * 3 + j) % 5);
    });
    const auto sweep = recentering_sweep(g, {0.5, 2, 5, kUnboundedTau}, "c", {{"c", "a", "b"}, true});
    REQUIRE(sweep.size() == 4);
    for (const auto& e : sweep) {
        CHECK(e.decomposition.terms().size() == 7);
        CHECK(e.decomposition.terms().back().name == "residual");
    }
    CHECK(sweep.back().kept_hp_cells == 25);
    CHECK(sweep.back().decomposition.method() == AnovaMethod::ClassicalBalanced);
    for (std::size_t i = 1; i < sweep.size(); ++i) CHECK(sweep[i].kept_hp_cells >= sweep[i - 1].kept_hp_cells);
    CHECK_THROWS_AS(recentering_sweep(g, {5, 1}, "c", {{"c", "a", "b"}, true}), ValidationError);
}
