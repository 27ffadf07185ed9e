#include <doctest.h>

#include <cmath>
#include <set>

#include "gridlex/synth.hpp"
#include "gridlex/variance.hpp"
#include "helpers.hpp"

using namespace gridlex;

TEST_CASE("the generator is a fixed algorithm") {
    SynthRng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) {
        const double u = a.uniform();
        CHECK(u == b.uniform());
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    CHECK(a.normal() == b.normal());
    CHECK(a.uniform() != c.uniform());

    // Sample moments of the normal stream.
    SynthRng n(7);
    double s = 0, s2 = 0;
    const int k = 20000;
    for (int i = 0; i < k; ++i) {
        const double x = n.normal(1.0, 2.0);
        s += x, s2 += x * x;
    }
    CHECK(s / k == doctest::Approx(1.0).epsilon(0.05));
    CHECK(std::sqrt(s2 / k - (s / k) * (s / k)) == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("zero effects give a constant grid") {
    SynthGridSpec spec;
    spec.factors = {{"a", {0.0, 0.0}, {}}, {"b", {0.0, 0.0, 0.0}, {}}};
    spec.grand_mean = 2.5;
    const auto g = gen_grid(spec);
    CHECK(g.grid.size() == 6);
    for (const auto& [_, v] : g.grid.cells()) CHECK(v == 2.5);
    CHECK(g.ground_truth.ss_total() == 0.0);
}

TEST_CASE("a single main effect on a 2x2x2 grid") {
    SynthGridSpec spec;
    spec.factors = {{"a", {-0.5, 0.5}, {}}, {"b", {0.0, 0.0}, {}}, {"c", {0.0, 0.0}, {}}};
    const auto g = gen_grid(spec);
    CHECK(g.ground_truth.term("a").sum_of_squares == 8 * 0.25);
    CHECK(g.ground_truth.fraction("a") == 1.0);
    CHECK(anova_three_way(g.grid, {"a", "b", "c"}).fraction("a") == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("a pure interaction is all interaction") {
    SynthGridSpec spec;
    spec.factors = {{"a", {0.0, 0.0}, {}}, {"b", {0.0, 0.0}, {}}};
    spec.interactions = {{"a", "b", {{1.0, -1.0}, {-1.0, 1.0}}}};
    const auto g = gen_grid(spec);
    CHECK(g.ground_truth.fraction("a:b") == 1.0);
    CHECK(anova_two_way(g.grid, "a", "b").fraction("residual") == 1.0);
}

TEST_CASE("effects must sum to zero") {
    SynthGridSpec spec;
    spec.factors = {{"a", {0.1, 0.0}, {}}};
    CHECK_THROWS_AS(gen_grid(spec), ValidationError);
    spec.factors = {{"a", {0.0, 0.0}, {}}, {"b", {0.0, 0.0}, {}}};
    spec.interactions = {{"a", "b", {{1.0, 0.0}, {-1.0, 0.0}}}};
    CHECK_THROWS_AS(gen_grid(spec), ValidationError);
    spec.interactions = {{"a", "zz", {{1.0, -1.0}, {-1.0, 1.0}}}};
    CHECK_THROWS_AS(gen_grid(spec), ValidationError);
}

TEST_CASE("loss curve shape and argmin") {
    SynthRunSpec s;
    s.floor = 2.0, s.amplitude = 1.0, s.tau_sat = 2.0, s.r_star = 1.0, s.overfit_slope = 0.1;
    CHECK(synth_loss(s, 0.0) == 3.0);
    CHECK(synth_loss(s, 10.0) == doctest::Approx(2.0 + std::exp(-5.0) + 0.9));
    // A/(B tau) = 5 puts the stationary point at 2 ln 5, past R*.
    CHECK(synth_loss_argmin(s) == doctest::Approx(2.0 * std::log(5.0)));
    s.r_star = 5.0;
    CHECK(synth_loss_argmin(s) == 5.0);
    s.overfit_slope = 2.0;
    CHECK(synth_loss_argmin(s) == 5.0);
    s.overfit_slope = 0.0;
    CHECK(std::isinf(synth_loss_argmin(s)));
}

TEST_CASE("generated runs carry the schedule and optional accuracy") {
    SynthRunSpec s;
    s.schedule = {1, 2, 4, 8};
    s.accuracy_metric = "arc";
    s.noise_sd = 0.01;
    s.seed = 3;
    const auto a = gen_run(s);
    const auto b = gen_run(s);
    CHECK(a == b);
    REQUIRE(a.checkpoints().size() == 4);
    CHECK(a.checkpoints()[2].repetition_count() == 4.0);
    CHECK(a.checkpoints()[0].accuracy().count("arc") == 1);
    s.schedule = {2, 1};
    CHECK_THROWS(gen_run(s));
    s.schedule = {1, 2};
    s.floor = -1.0;
    CHECK_THROWS_AS(gen_run(s), ValidationError);
}

TEST_CASE("run families span the HP and budget grid") {
    SynthRunsSpec s;
    s.weight_decays = {0.01, 0.1, 1.0};
    s.learning_rates = {0.001, 0.003};
    s.r_max_values = {10, 20};
    s.checkpoints = 5;
    const auto runs = gen_runs(s);
    CHECK(runs.size() == 12);
    std::set<std::string> ids;
    for (const auto& r : runs) ids.insert(r.run_id());
    CHECK(ids.size() == 12);
    CHECK(runs.front().checkpoints().back().repetition_count() == doctest::Approx(10.0));
}

TEST_CASE("specs decode from JSON") {
    const auto j = Json::parse(testing::slurp(testing::kDataDir / "configs" / "synth_grid.json"));
    const auto spec = synth_grid_spec_from_json(j);
    CHECK(spec.factors.size() == 3);
    CHECK(spec.factors[0].labels[4] == "100");
    CHECK(spec.seed == 42);
    const auto runs = synth_runs_spec_from_json(Json::parse(testing::slurp(testing::kDataDir / "configs" / "synth_runs.json")));
    CHECK(runs.weight_decays.size() == 5);
    CHECK(runs.base.accuracy_metric == "arc_easy_ar");
    CHECK_THROWS_AS(synth_grid_spec_from_json(Json::object()), ValidationError);
}
