// Property checks over seeded synthetic inputs.

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "gridlex/equivalence.hpp"
#include "gridlex/report.hpp"
#include "gridlex/synth.hpp"
#include "gridlex/variance.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace gridlex;

namespace {

std::vector<double> centered(SynthRng& rng, std::size_t n, double sd) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal(0.0, sd);
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
    for (auto& x : v) x -= m;
    return v;
}

GridTable random_grid(std::uint64_t seed, std::size_t a, std::size_t b, std::size_t c, double noise = 0.02) {
    SynthRng rng(seed);
    SynthGridSpec spec;
    spec.factors = {{"a", centered(rng, a, 0.3), {}}, {"b", centered(rng, b, 0.2), {}}};
    if (c > 0) spec.factors.push_back({"c", centered(rng, c, 0.1), {}});
    spec.grand_mean = 3.0;
    spec.noise_sd = noise;
    spec.seed = seed;
    return gen_grid(spec).grid;
}

GridTable map_values(const GridTable& g, const std::function<double(double)>& f) {
    auto cells = g.cells();
    for (auto& [_, v] : cells) v = f(v);
    return {g.factors(), std::move(cells), g.metric_name()};
}

// Reverse the level order of factor 0.
GridTable reverse_first(const GridTable& g) {
    auto factors = g.factors();
    std::reverse(factors[0].levels.begin(), factors[0].levels.end());
    std::map<CellIndex, double> cells;
    const auto n = factors[0].levels.size();
    for (const auto& [idx, v] : g.cells()) {
        auto moved = idx;
        moved[0] = n - 1 - idx[0];
        cells[moved] = v;
    }
    return {std::move(factors), std::move(cells), g.metric_name()};
}

}  // namespace

TEST_CASE("fractions are invariant under positive affine maps") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto g = random_grid(seed, 4, 3, 3);
        const auto base = anova_three_way(g, {"a", "b", "c"});
        const auto moved = anova_three_way(map_values(g, [](double v) { return 7.5 * v - 2.0; }), {"a", "b", "c"});
        for (const auto& t : base.terms()) CHECK(oracle::close(moved.fraction(t.name), t.fraction));
        const auto t3 = anova_type3(map_values(g, [](double v) { return 0.1 * v + 100.0; }), {"a", "b", "c"},
                                    standard_terms({"a", "b", "c"}, true));
        for (const auto& t : base.terms()) CHECK(oracle::close(t3.fraction(t.name), t.fraction));
    }
}

TEST_CASE("fractions are invariant under level permutation") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto g = random_grid(seed + 100, 5, 4, 0);
        const auto a = anova_two_way(g, "a", "b");
        const auto b = anova_two_way(reverse_first(g), "a", "b");
        for (const auto& t : a.terms()) CHECK(oracle::close(b.fraction(t.name), t.fraction));
        CHECK(oracle::close(axis_range(g, "a"), axis_range(reverse_first(g), "a")));
    }
}

TEST_CASE("threshold monotonicity and nested boxes") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto g = random_grid(seed + 200, 5, 5, 3);
        std::size_t prev = 0;
        for (double tau : {0.0, 1.0, 3.0, 10.0, 30.0, kUnboundedTau}) {
            const auto n = hp_cell_means(recenter(g, {ThresholdMode{tau}, std::string("c")}), std::string("c")).size();
            CHECK(n >= prev);
            prev = n;
            CHECK(flatness_count(g, std::string("c"), tau) == n);
        }
        for (std::size_t i = 0; i < 5; ++i) {
            std::size_t last = 0;
            for (int r = 0; r <= 4; ++r) {
                const auto n = recenter(g, {BoxMode{{i, 4 - i}, r}, std::string("c")}).size();
                CHECK(n >= last);
                last = n;
            }
            CHECK(last == 75);
        }
    }
}

TEST_CASE("fit residuals are orthogonal to the regressors and inversion round-trips") {
    SynthRng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<TokenPoint> pts;
        const double a = -0.2 - 0.3 * rng.uniform(), b = 9.0 + rng.uniform();
        for (TokenCount d : {25'000'000LL, 50'000'000LL, 100'000'000LL, 200'000'000LL, 500'000'000LL,
                             1'000'000'000LL, 2'000'000'000LL})
            pts.emplace_back(d, a * std::log(double(d)) + b + rng.normal(0.0, 0.02));
        const auto f = fit_loglinear(pts, MetricDirection::Decreasing);
        double r_sum = 0, rx_sum = 0;
        for (const auto& [d, y] : pts) {
            const double r = y - f.evaluate(double(d));
            r_sum += r;
            rx_sum += r * std::log(double(d));
        }
        CHECK(std::abs(r_sum) < 1e-10);
        CHECK(std::abs(rx_sum) < 1e-8);
        for (double d : {1e8, 7e8, 5e9}) {
            const auto m = invert_multiplier(f, f.evaluate(d));
            CHECK(m.equivalent_tokens() == doctest::Approx(d).epsilon(1e-9));
        }
    }
}

TEST_CASE("flatness grows with tau") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto g = random_grid(seed + 300, 5, 5, 0, 0.05);
        std::size_t prev = 0;
        for (double tau = 0; tau <= 50; tau += 2.5) {
            const auto n = flatness_count(g, std::nullopt, tau);
            CHECK(n >= prev);
            prev = n;
        }
    }
}

TEST_CASE("dominance is invariant to a common shift") {
    const std::map<TokenCount, double> per_d{{1, 4.0}, {2, 3.3}, {3, 3.0}};
    const auto g = random_grid(9, 4, 3, 0);
    const auto base = dominance_ratio(per_d, g, std::nullopt, std::nullopt, kUnboundedTau);
    std::map<TokenCount, double> shifted;
    for (const auto& [d, v] : per_d) shifted[d] = v + 0.5;
    const auto s = dominance_ratio(shifted, g, std::nullopt, std::nullopt, kUnboundedTau);
    CHECK(std::isfinite(base.rho));
    CHECK(s.range_d == doctest::Approx(base.range_d));
    CHECK(s.rho == doctest::Approx(base.rho));
}

TEST_CASE("noise-free type III fractions match ground truth; tiny noise stays close") {
    for (double noise : {0.0, 1e-6}) {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            SynthRng rng(seed + 400);
            SynthGridSpec spec;
            spec.factors = {{"a", centered(rng, 4, 0.3), {}}, {"b", centered(rng, 3, 0.2), {}},
                            {"c", centered(rng, 2, 0.1), {}}};
            spec.noise_sd = noise;
            spec.seed = seed;
            const auto g = gen_grid(spec);
            const auto t3 = anova_type3(g.grid, {"a", "b", "c"}, standard_terms({"a", "b", "c"}, true));
            for (const char* n : {"a", "b", "c"})
                CHECK(t3.fraction(n) == doctest::Approx(g.ground_truth.fraction(n)).epsilon(noise == 0 ? 1e-9 : 1e-6));
        }
    }
}

TEST_CASE("same seed, same bytes") {
    const auto spec = synth_runs_spec_from_json(
        Json::parse(testing::slurp(testing::kDataDir / "configs" / "synth_runs.json")));
    const auto a = gen_runs(spec);
    const auto b = gen_runs(spec);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(to_json(a[i]).dump() == to_json(b[i]).dump());

    testing::TempDir o1("prop"), o2("prop");
    run_pipeline(testing::kDataDir / "configs" / "synth_report.json", o1.path());
    run_pipeline(testing::kDataDir / "configs" / "synth_report.json", o2.path());
    CHECK(testing::slurp(o1.path() / "manifest.json") == testing::slurp(o2.path() / "manifest.json"));
}
