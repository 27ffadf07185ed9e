#include "gridlex/serialize.hpp"

#include <limits>

namespace gridlex {

namespace {

const Json& field(const Json& j, const char* key) {
    if (!j.is_object()) throw ValidationError(key, "expected a JSON object");
    auto it = j.find(key);
    if (it == j.end()) throw ValidationError(key, "missing required key");
    return *it;
}

double number(const Json& j, const char* key) {
    const auto& v = field(j, key);
    if (!v.is_number()) throw ValidationError(key, "expected a number");
    return v.get<double>();
}

TokenCount integer(const Json& j, const char* key) {
    const auto& v = field(j, key);
    if (v.is_number_integer()) return v.get<TokenCount>();
    // Token counts are often written as 2e9; accept floats that are exact integers.
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (d == static_cast<double>(static_cast<TokenCount>(d))) return static_cast<TokenCount>(d);
    }
    throw ValidationError(key, "expected an integer");
}

std::string text(const Json& j, const char* key) {
    const auto& v = field(j, key);
    if (!v.is_string()) throw ValidationError(key, "expected a string");
    return v.get<std::string>();
}

bool flag(const Json& j, const char* key) {
    const auto& v = field(j, key);
    if (!v.is_boolean()) throw ValidationError(key, "expected a boolean");
    return v.get<bool>();
}

std::map<std::string, double> number_map(const Json& j, const char* key) {
    std::map<std::string, double> out;
    auto it = j.find(key);
    if (it == j.end()) return out;
    if (!it->is_object()) throw ValidationError(key, "expected an object of numbers");
    for (const auto& [k, v] : it->items()) {
        if (!v.is_number()) throw ValidationError(key, "value for '" + k + "' is not a number");
        out.emplace(k, v.get<double>());
    }
    return out;
}

int as_int(TokenCount v, const char* key) {
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
        throw ValidationError(key, "out of range");
    return static_cast<int>(v);
}

}  // namespace

Json to_json(const ScaleSpec& s) {
    Json j{{"name", s.name()}, {"d_model", s.d_model()}, {"n_nonemb", s.n_nonemb()}};
    if (s.d_base() != kDefaultBaseWidth) j["d_base"] = s.d_base();
    return j;
}

Json to_json(const BaseHP& hp) { return {{"lambda", hp.weight_decay}, {"eta", hp.learning_rate}}; }

Json to_json(const EffectiveHP& hp) {
    return {{"lambda_mup", hp.weight_decay}, {"eta_mup", hp.learning_rate}};
}

Json to_json(const MixBudget& b) {
    return {{"d", b.total_tokens()},          {"d_lr", b.lr_corpus_tokens()}, {"r_max", b.repetition_budget()},
            {"alpha", b.lr_fraction()},      {"d_hr", b.hr_tokens()},        {"capped", b.capped()}};
}

Json to_json(const CheckpointMetric& c) {
    return {{"r", c.repetition_count()}, {"val_loss", c.val_loss()}, {"accuracy", c.accuracy()}};
}

Json to_json(const RunRecord& r) {
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["run_id"] = r.run_id();
    j["scale"] = r.scale();
    j["paradigm"] = std::string(to_string(r.paradigm()));
    j["lambda"] = r.base_hp().weight_decay;
    j["eta"] = r.base_hp().learning_rate;
    if (r.r_max()) j["r_max"] = *r.r_max();
    j["d_lr"] = r.d_lr();
    Json cps = Json::array();
    for (const auto& c : r.checkpoints()) cps.push_back(to_json(c));
    j["checkpoints"] = std::move(cps);
    return j;
}

Json to_json(const GridTable& g) {
    Json factors = Json::array();
    for (const auto& f : g.factors()) factors.push_back({{"name", f.name}, {"levels", f.levels}});
    Json cells = Json::array();
    for (const auto& [idx, v] : g.cells()) cells.push_back({{"index", idx}, {"value", v}});
    return {{"metric", g.metric_name()}, {"factors", std::move(factors)}, {"cells", std::move(cells)}};
}

Json to_json(const VarianceDecomposition& v) {
    Json terms = Json::array();
    for (const auto& t : v.terms())
        terms.push_back({{"term", t.name}, {"ss", t.sum_of_squares}, {"fraction", t.fraction}});
    return {{"method", std::string(to_string(v.method()))},
            {"n_cells", v.n_cells()},
            {"ss_total", v.ss_total()},
            {"degenerate", v.degenerate()},
            {"terms", std::move(terms)},
            {"notes", v.notes()}};
}

Json to_json(const LogLinearFit& f) {
    return {{"a", f.slope()},
            {"b", f.intercept()},
            {"r2", f.r_squared()},
            {"domain", {f.domain_min(), f.domain_max()}},
            {"direction", std::string(to_string(f.direction()))},
            {"direction_mismatch", f.direction_mismatch()}};
}

Json to_json(const MultiplierResult& m) {
    return {{"d_equiv", m.equivalent_tokens()},
            {"multiplier", m.multiplier()},
            {"reference_tokens", m.reference_tokens()},
            {"extrapolated", m.extrapolated()},
            {"extrapolation_factor", m.extrapolation_factor()},
            {"direction_mismatch", m.direction_mismatch()}};
}

ScaleSpec scale_from_json(const Json& j, int d_base) {
    if (j.contains("d_base")) d_base = as_int(integer(j, "d_base"), "d_base");
    return ScaleSpec(text(j, "name"), as_int(integer(j, "d_model"), "d_model"), integer(j, "n_nonemb"), d_base);
}

BaseHP base_hp_from_json(const Json& j) { return BaseHP(number(j, "lambda"), number(j, "eta")); }

EffectiveHP effective_hp_from_json(const Json& j) {
    return EffectiveHP(number(j, "lambda_mup"), number(j, "eta_mup"));
}

MixBudget mix_budget_from_json(const Json& j) {
    return MixBudget(integer(j, "d"), integer(j, "d_lr"), as_int(integer(j, "r_max"), "r_max"),
                     number(j, "alpha"), integer(j, "d_hr"), flag(j, "capped"));
}

CheckpointMetric checkpoint_from_json(const Json& j) {
    return CheckpointMetric(number(j, "r"), number_map(j, "val_loss"), number_map(j, "accuracy"));
}

RunRecord run_from_json(const Json& j) {
    const auto& cps = field(j, "checkpoints");
    if (!cps.is_array()) throw ValidationError("checkpoints", "expected an array");
    std::vector<CheckpointMetric> checkpoints;
    checkpoints.reserve(cps.size());
    for (const auto& c : cps) checkpoints.push_back(checkpoint_from_json(c));
    std::optional<int> r_max;
    if (auto it = j.find("r_max"); it != j.end() && !it->is_null()) r_max = as_int(integer(j, "r_max"), "r_max");
    return RunRecord(text(j, "run_id"), text(j, "scale"), parse_paradigm(text(j, "paradigm")),
                     base_hp_from_json(j), r_max, integer(j, "d_lr"), std::move(checkpoints));
}

GridTable grid_from_json(const Json& j) {
    std::vector<Factor> factors;
    for (const auto& f : field(j, "factors"))
        factors.push_back({text(f, "name"), field(f, "levels").get<std::vector<std::string>>()});
    std::map<CellIndex, double> cells;
    for (const auto& c : field(j, "cells")) {
        auto idx = field(c, "index").get<CellIndex>();
        if (!cells.emplace(idx, number(c, "value")).second)
            throw ValidationError("cells", "duplicate cell index");
    }
    return GridTable(std::move(factors), std::move(cells), text(j, "metric"));
}

VarianceDecomposition decomposition_from_json(const Json& j) {
    std::vector<VarianceTerm> terms;
    for (const auto& t : field(j, "terms")) terms.push_back({text(t, "term"), number(t, "ss"), number(t, "fraction")});
    return VarianceDecomposition(std::move(terms), number(j, "ss_total"), parse_anova_method(text(j, "method")),
                                 static_cast<std::size_t>(integer(j, "n_cells")),
                                 field(j, "notes").get<std::vector<std::string>>());
}

LogLinearFit fit_from_json(const Json& j) {
    const auto& dom = field(j, "domain");
    if (!dom.is_array() || dom.size() != 2) throw ValidationError("domain", "expected [min, max]");
    return LogLinearFit(number(j, "a"), number(j, "b"), number(j, "r2"), dom[0].get<TokenCount>(),
                        dom[1].get<TokenCount>(), parse_direction(text(j, "direction")));
}

MultiplierResult multiplier_from_json(const Json& j) {
    return MultiplierResult(number(j, "d_equiv"), integer(j, "reference_tokens"), flag(j, "extrapolated"),
                            number(j, "extrapolation_factor"),
                            j.contains("direction_mismatch") ? flag(j, "direction_mismatch") : false);
}

}  // namespace gridlex
