#include <doctest.h>

#include "gridlex/ingest.hpp"
#include "helpers.hpp"

using namespace gridlex;
using testing::TempDir;

namespace {

std::string run_line(const std::string& id, const std::string& scale, const std::string& extra = "") {
    return "{\"schema_version\": 1, \"run_id\": \"" + id + "\", \"scale\": \"" + scale +
           "\", \"paradigm\": \"monolingual-basic\", \"lambda\": 0.1, \"eta\": 0.01, \"d_lr\": 200000000" + extra +
           ", \"checkpoints\": [{\"r\": 1, \"val_loss\": {\"ar\": 3.5}, \"accuracy\": {}}, "
           "{\"r\": 2, \"val_loss\": {\"ar\": 3.2}, \"accuracy\": {}}]}\n";
}

}  // namespace

TEST_CASE("the shipped fixtures load") {
    const auto d = load_dataset(testing::kDataDir / "fixtures" / "published_tables.jsonl");
    CHECK(d.runs().size() == 44);
    CHECK(d.scales().size() == 4);
    CHECK(d.scale("600M").d_model() == 1280);
    CHECK_THROWS_AS(d.run("missing"), AnalysisError);
}

TEST_CASE("strict loading stops at the first bad line") {
    TempDir dir("ingest");
    dir.write("scales.jsonl", testing::kScales);
    const auto runs = dir.write("runs.jsonl", run_line("a", "150M") + run_line("b", "999M"));
    try {
        load_dataset(runs);
        FAIL("expected a throw");
    } catch (const IngestError& e) {
        CHECK(e.line() == 2);
        CHECK(e.field() == "scale");
    }
}

TEST_CASE("lenient loading collects every bad record") {
    TempDir dir("ingest");
    dir.write("scales.jsonl", testing::kScales);
    const auto runs = dir.write("runs.jsonl", run_line("a", "150M") + "{not json\n" + run_line("a", "150M") +
                                                  run_line("c", "380M", ", \"r_max\": 5") + "\n" +
                                                  run_line("d", "380M"));
    const auto rep = load_dataset_report(runs, {.lenient = true});
    CHECK(rep.dataset.runs().size() == 2);
    REQUIRE(rep.errors.size() == 3);
    CHECK(rep.errors[0].line == 2);
    CHECK(rep.errors[1].field == "run_id");
    CHECK(rep.errors[2].field == "r_max");
}

TEST_CASE("schema version and missing files are reported") {
    TempDir dir("ingest");
    dir.write("scales.jsonl", testing::kScales);
    auto line = run_line("a", "150M");
    line.replace(line.find("\"schema_version\": 1"), 19, "\"schema_version\": 2");
    CHECK_THROWS_AS(load_dataset(dir.write("runs.jsonl", line)), IngestError);
    CHECK_THROWS_AS(load_dataset(dir.path() / "nope.jsonl"), IngestError);
    TempDir bare("ingest");
    CHECK_THROWS_AS(load_dataset(bare.write("runs.jsonl", run_line("a", "150M"))), IngestError);
}

TEST_CASE("datasets survive a save and reload") {
    const auto d = load_dataset(testing::kDataDir / "fixtures" / "published_tables.jsonl");
    TempDir dir("ingest");
    save_dataset(d, dir.path() / "runs.jsonl", dir.path() / "scales.jsonl");
    CHECK(load_dataset(dir.path() / "runs.jsonl") == d);
}

TEST_CASE("grid extraction sorts levels numerically") {
    const auto d = load_dataset(testing::kDataDir / "fixtures" / "published_tables.jsonl");
    GridRequest req{MetricSelector::parse("val_loss.ar"), {"scale", "d_lr"}};
    req.filter.paradigms = {Paradigm::MonolingualSweep};
    const auto g = extract_grid(d, req);
    CHECK(g.factors()[0].levels == std::vector<std::string>{"150M", "380M", "600M", "1.43B"});
    CHECK(g.factors()[1].levels.front() == "25M");
    CHECK(g.factors()[1].levels.back() == "2B");
    CHECK(g.balanced());
    CHECK(g.size() == 28);
    CHECK(*g.at({0, 0}) == 4.698);
}

TEST_CASE("grid extraction rejects collisions and unknown factors") {
    const auto d = load_dataset(testing::kDataDir / "fixtures" / "published_tables.jsonl");
    CHECK_THROWS(extract_grid(d, {MetricSelector::parse("val_loss.ar"), {"scale"}}));
    CHECK_THROWS(extract_grid(d, {MetricSelector::parse("val_loss.ar"), {"colour"}}));
}

TEST_CASE("reducers pick the documented checkpoint") {
    const RunRecord r("r", "150M", Paradigm::BilingualBasic, {0.1, 0.01}, 10, 1,
                      {CheckpointMetric(1, {{"ar", 3.0}}, {{"b", 0.30}}),
                       CheckpointMetric(2, {{"ar", 2.8}}, {{"b", 0.31}}),
                       CheckpointMetric(3, {{"ar", 2.9}}, {{"b", 0.35}})});
    const auto vl = MetricSelector::parse("val_loss.ar");
    const auto acc = MetricSelector::parse("acc.b");
    CHECK(reduce_run(r, vl, CellReducer::MinOverCheckpoints, vl) == 2.8);
    CHECK(reduce_run(r, acc, CellReducer::MaxOverCheckpoints, vl) == 0.35);
    CHECK(reduce_run(r, acc, CellReducer::AtMinValLoss, vl) == 0.31);
    CHECK(parse_reducer("at-min-vl") == CellReducer::AtMinValLoss);
    CHECK_THROWS_AS(parse_reducer("median"), ValidationError);
}

TEST_CASE("token and number formatting") {
    CHECK(format_tokens(25'000'000) == "25M");
    CHECK(format_tokens(2'000'000'000) == "2B");
    CHECK(format_tokens(123) == "123");
    CHECK(format_number(0.1) == "0.1");
    CHECK(std::stod(format_number(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("token counts parse with suffixes") {
    CHECK(parse_tokens("200M") == 200'000'000);
    CHECK(parse_tokens("12.17B") == 12'170'000'000);
    CHECK(parse_tokens("5k") == 5'000);
    CHECK(parse_tokens("123") == 123);
    for (const auto& t : std::vector<std::string>{format_tokens(25'000'000), format_tokens(2'000'000'000)})
        CHECK(format_tokens(parse_tokens(t)) == t);
    CHECK_THROWS_AS(parse_tokens("1.5"), ValidationError);
    CHECK_THROWS_AS(parse_tokens("-2M"), ValidationError);
    CHECK_THROWS_AS(parse_tokens("lots"), ValidationError);
    CHECK_THROWS_AS(parse_tokens(""), ValidationError);
}
