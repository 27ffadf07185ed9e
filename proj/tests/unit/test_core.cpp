#include <doctest.h>

#include <cmath>
#include <limits>

#include "gridlex/core.hpp"
#include "gridlex/serialize.hpp"

using namespace gridlex;

TEST_CASE("scale spec validates widths and counts") {
    const ScaleSpec s("380M", 1024, 121'700'000);
    CHECK(s.width_multiplier() == 2.0);
    CHECK_THROWS_AS(ScaleSpec("", 512, 1), ValidationError);
    CHECK_THROWS_AS(ScaleSpec("x", 256, 1), ValidationError);
    CHECK_THROWS_AS(ScaleSpec("x", 512, 0), ValidationError);
    try {
        ScaleSpec("x", 512, -5);
        FAIL("expected a throw");
    } catch (const ValidationError& e) {
        CHECK(e.field() == "n_nonemb");
    }
}

TEST_CASE("hyperparameters reject non-physical values") {
    CHECK_NOTHROW(BaseHP(0.0, 1e-4));
    CHECK_THROWS_AS(BaseHP(-0.1, 0.01), ValidationError);
    CHECK_THROWS_AS(BaseHP(0.1, 0.0), ValidationError);
    CHECK_THROWS_AS(EffectiveHP(0.1, std::numeric_limits<double>::quiet_NaN()), ValidationError);
}

TEST_CASE("metric selectors parse both families") {
    const auto vl = MetricSelector::parse("val_loss.ar");
    CHECK(vl.kind == MetricSelector::Kind::ValLoss);
    CHECK(vl.lower_is_better());
    const auto acc = MetricSelector::parse("acc.arc_easy_ar");
    CHECK(acc.label == "arc_easy_ar");
    CHECK_FALSE(acc.lower_is_better());
    CHECK(acc.str() == "acc.arc_easy_ar");
    CHECK_THROWS_AS(MetricSelector::parse("loss"), ValidationError);
    CHECK_THROWS_AS(MetricSelector::parse("bleu.x"), ValidationError);
}

TEST_CASE("run records enforce paradigm rules and checkpoint order") {
    const CheckpointMetric c1(1, {{"ar", 3.0}}, {});
    const CheckpointMetric c2(2, {{"ar", 2.9}}, {});
    CHECK_NOTHROW(RunRecord("a", "150M", Paradigm::BilingualBasic, {0.1, 0.01}, 20, 200'000'000, {c1, c2}));
    CHECK_THROWS_AS(RunRecord("a", "150M", Paradigm::BilingualBasic, {0.1, 0.01}, std::nullopt, 1, {c1}),
                    ValidationError);
    CHECK_THROWS_AS(RunRecord("a", "150M", Paradigm::MonolingualBasic, {0.1, 0.01}, 20, 1, {c1}), ValidationError);
    CHECK_THROWS_AS(RunRecord("a", "150M", Paradigm::MonolingualBasic, {0.1, 0.01}, std::nullopt, 1, {c2, c1}),
                    ValidationError);
    CHECK_THROWS_AS(RunRecord("a", "150M", Paradigm::MonolingualBasic, {0.1, 0.01}, std::nullopt, 1, {}),
                    ValidationError);
}

TEST_CASE("paradigm names round-trip") {
    for (auto p : {Paradigm::MonolingualBasic, Paradigm::MonolingualTuned, Paradigm::BilingualBasic,
                   Paradigm::BilingualTuned, Paradigm::MonolingualSweep})
        CHECK(parse_paradigm(to_string(p)) == p);
    CHECK_THROWS_AS(parse_paradigm("trilingual"), ValidationError);
}

TEST_CASE("grid tables check indices and report balance") {
    GridTable g({{"a", {"x", "y"}}, {"b", {"p", "q"}}}, {{{0, 0}, 1.0}, {{1, 1}, 2.0}}, "val_loss.ar");
    CHECK_FALSE(g.balanced());
    CHECK(g.factor_index("b") == 1);
    CHECK_THROWS_AS(g.factor_index("c"), AnalysisError);
    CHECK(g.at({1, 1}) == 2.0);
    CHECK_FALSE(g.at({0, 1}).has_value());
    CHECK_THROWS_AS(GridTable({{"a", {"x"}}}, {{{3}, 1.0}}, "m"), ValidationError);
    CHECK_THROWS_AS(GridTable({{"a", {"x"}}, {"a", {"y"}}}, {}, "m"), ValidationError);
    CHECK_THROWS_AS(GridTable({{"a", {"x"}}}, {{{0}, std::nan("")}}, "m"), ValidationError);
}

TEST_CASE("variance decompositions must add up") {
    const auto d = VarianceDecomposition::from_sums({{"a", 3.0}, {"residual", 1.0}}, 4.0,
                                                    AnovaMethod::ClassicalBalanced, 4);
    CHECK(d.fraction("a") == 0.75);
    CHECK_FALSE(d.degenerate());
    const auto z = VarianceDecomposition::from_sums({{"a", 0.0}, {"residual", 0.0}}, 0.0,
                                                    AnovaMethod::ClassicalBalanced, 4);
    CHECK(z.degenerate());
    CHECK(z.has_note("degenerate"));
    CHECK_THROWS_AS(VarianceDecomposition({{"a", 1.0, 0.5}}, 3.0, AnovaMethod::ClassicalBalanced, 2),
                    ValidationError);
    CHECK_THROWS_AS(d.term("zzz"), AnalysisError);
}

TEST_CASE("log-linear fits evaluate and flag direction") {
    const LogLinearFit f(-0.4, 11.0, 0.95, 25'000'000, 2'000'000'000, MetricDirection::Decreasing);
    CHECK(f.evaluate(std::exp(10.0)) == doctest::Approx(7.0));
    CHECK_FALSE(f.direction_mismatch());
    const LogLinearFit up(0.4, 11.0, 0.95, 1, 2, MetricDirection::Decreasing);
    CHECK(up.direction_mismatch());
    CHECK_THROWS_AS(LogLinearFit(1, 1, 1.5, 1, 2, MetricDirection::Increasing), ValidationError);
    CHECK_THROWS_AS(LogLinearFit(1, 1, 0.5, 2, 2, MetricDirection::Increasing), ValidationError);
}

TEST_CASE("multiplier results derive the ratio and guard the factor") {
    const MultiplierResult m(400'000'000, 200'000'000, false, 1.0);
    CHECK(m.multiplier() == 2.0);
    CHECK_THROWS_AS(MultiplierResult(1e9, 200'000'000, false, 2.0), ValidationError);
    CHECK_THROWS_AS(MultiplierResult(1e9, 200'000'000, true, 0.5), ValidationError);
}

TEST_CASE("domain types round-trip through JSON") {
    const RunRecord r("run-1", "380M", Paradigm::BilingualTuned, {0.01, 0.003}, 50, 200'000'000,
                      {CheckpointMetric(10, {{"ar", 3.1}}, {{"arc", 0.3}}), CheckpointMetric(20, {{"ar", 3.0}}, {})});
    CHECK(run_from_json(to_json(r)) == r);
    const GridTable g({{"a", {"x", "y"}}}, {{{0}, 1.5}, {{1}, 2.5}}, "val_loss.ar");
    CHECK(grid_from_json(to_json(g)) == g);
    const auto d = VarianceDecomposition::from_sums({{"a", 1.0}, {"residual", 0.5}}, 1.5,
                                                    AnovaMethod::Type3Regression, 3, {"note"});
    CHECK(decomposition_from_json(to_json(d)) == d);
    const LogLinearFit f(-0.3, 10.0, 0.9, 25'000'000, 2'000'000'000, MetricDirection::Decreasing);
    CHECK(fit_from_json(to_json(f)) == f);
    const MultiplierResult m(5e9, 200'000'000, true, 2.5, false);
    CHECK(multiplier_from_json(to_json(m)) == m);
}

TEST_CASE("JSON decoding names the offending key") {
    Json j = to_json(ScaleSpec("150M", 512, 22'800'000));
    j.erase("d_model");
    try {
        scale_from_json(j);
        FAIL("expected a throw");
    } catch (const ValidationError& e) {
        CHECK(e.field() == "d_model");
    }
}
