#include "gridlex/report.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "gridlex/equivalence.hpp"
#include "gridlex/mup.hpp"
#include "gridlex/selection.hpp"
#include "gridlex/synth.hpp"
#include "gridlex/variance.hpp"

#ifndef GRIDLEX_VERSION
#define GRIDLEX_VERSION "0.0.0"
#endif

namespace gridlex {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- tables

void Table::add(std::vector<Value> row) {
    if (row.size() != columns.size())
        throw std::logic_error("table row has " + std::to_string(row.size()) + " cells, expected " +
                               std::to_string(columns.size()));
    rows.push_back(std::move(row));
}

std::string format_value(const Value& v) {
    struct {
        std::string operator()(std::monostate) const { return ""; }
        std::string operator()(const std::string& s) const { return s; }
        std::string operator()(double d) const {
            if (std::isnan(d)) return "nan";
            if (std::isinf(d)) return d > 0 ? "inf" : "-inf";
            return format_number(d);
        }
        std::string operator()(std::int64_t i) const { return std::to_string(i); }
        std::string operator()(bool b) const { return b ? "true" : "false"; }
    } visit;
    return std::visit(visit, v);
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

void write_csv(std::ostream& out, const Table& t) {
    for (std::size_t i = 0; i < t.columns.size(); ++i) out << (i ? "," : "") << csv_field(t.columns[i]);
    out << '\n';
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << csv_field(format_value(row[i]));
        out << '\n';
    }
}

void write_text(std::ostream& out, const Table& t) {
    std::vector<std::size_t> width(t.columns.size());
    for (std::size_t i = 0; i < t.columns.size(); ++i) width[i] = t.columns[i].size();
    for (const auto& row : t.rows)
        for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], format_value(row[i]).size());
    auto line = [&](auto&& cell) {
        for (std::size_t i = 0; i < t.columns.size(); ++i) {
            const std::string s = cell(i);
            out << (i ? "  " : "") << s;
            if (i + 1 < t.columns.size()) out << std::string(width[i] - s.size(), ' ');
        }
        out << '\n';
    };
    line([&](std::size_t i) { return t.columns[i]; });
    line([&](std::size_t i) { return std::string(width[i], '-'); });
    for (const auto& row : t.rows) line([&](std::size_t i) { return format_value(row[i]); });
}

OrderedJson table_to_json(const Table& t) {
    OrderedJson rows = OrderedJson::array();
    for (const auto& row : t.rows) {
        OrderedJson obj = OrderedJson::object();
        for (std::size_t i = 0; i < row.size(); ++i) {
            const auto& v = row[i];
            if (std::holds_alternative<std::monostate>(v))
                obj[t.columns[i]] = nullptr;
            else if (const auto* s = std::get_if<std::string>(&v))
                obj[t.columns[i]] = *s;
            else if (const auto* d = std::get_if<double>(&v))
                obj[t.columns[i]] = std::isfinite(*d) ? OrderedJson(*d) : OrderedJson(format_value(*d));
            else if (const auto* n = std::get_if<std::int64_t>(&v))
                obj[t.columns[i]] = *n;
            else
                obj[t.columns[i]] = std::get<bool>(v);
        }
        rows.push_back(std::move(obj));
    }
    return rows;
}

// ---------------------------------------------------------------- params

namespace {

Value opt_value(const std::optional<double>& v) { return v ? Value(*v) : Value(std::monostate{}); }
Value int_value(std::size_t v) { return static_cast<std::int64_t>(v); }

const Json* find(const Json& p, const char* key) {
    if (!p.is_object()) return nullptr;
    auto it = p.find(key);
    return it == p.end() || it->is_null() ? nullptr : &*it;
}

std::string str_param(const Json& p, const char* key, std::optional<std::string> fallback = std::nullopt) {
    if (const auto* v = find(p, key)) {
        if (!v->is_string()) throw ValidationError(key, "expected a string");
        return v->get<std::string>();
    }
    if (!fallback) throw ValidationError(key, "missing required parameter");
    return *fallback;
}

double as_number(const Json& v, const char* key) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "inf" || s == "infinity" || s == "∞") return std::numeric_limits<double>::infinity();
    }
    throw ValidationError(key, "expected a number");
}

double num_param(const Json& p, const char* key, std::optional<double> fallback = std::nullopt) {
    if (const auto* v = find(p, key)) return as_number(*v, key);
    if (!fallback) throw ValidationError(key, "missing required parameter");
    return *fallback;
}

bool bool_param(const Json& p, const char* key, bool fallback) {
    if (const auto* v = find(p, key)) {
        if (!v->is_boolean()) throw ValidationError(key, "expected true or false");
        return v->get<bool>();
    }
    return fallback;
}

std::vector<std::string> str_list(const Json& p, const char* key) {
    std::vector<std::string> out;
    if (const auto* v = find(p, key)) {
        if (v->is_string()) return {v->get<std::string>()};
        if (!v->is_array()) throw ValidationError(key, "expected a list of strings");
        for (const auto& e : *v) {
            if (!e.is_string()) throw ValidationError(key, "expected a list of strings");
            out.push_back(e.get<std::string>());
        }
    }
    return out;
}

std::vector<double> num_list(const Json& p, const char* key) {
    std::vector<double> out;
    if (const auto* v = find(p, key)) {
        if (!v->is_array()) return {as_number(*v, key)};
        for (const auto& e : *v) out.push_back(as_number(e, key));
    }
    return out;
}

TokenCount parse_tokens(const Json& v, const char* key) {
    if (v.is_number()) {
        const double d = v.get<double>();
        if (d != std::floor(d) || d <= 0) throw ValidationError(key, "token counts must be positive integers");
        return static_cast<TokenCount>(d);
    }
    if (!v.is_string()) throw ValidationError(key, "expected a token count");
    return gridlex::parse_tokens(v.get<std::string>(), key);
}

TokenCount tokens_param(const Json& p, const char* key, TokenCount fallback) {
    if (const auto* v = find(p, key)) return parse_tokens(*v, key);
    return fallback;
}

RunFilter filter_from(const Json& p, std::vector<std::string> default_paradigms = {}) {
    RunFilter f;
    for (const auto& s : str_list(p, "scales")) f.scales.insert(s);
    auto paradigms = str_list(p, "paradigms");
    if (paradigms.empty()) paradigms = std::move(default_paradigms);
    for (const auto& s : paradigms) f.paradigms.insert(parse_paradigm(s));
    if (const auto* v = find(p, "d_lr")) {
        if (v->is_array())
            for (const auto& e : *v) f.d_lr.insert(parse_tokens(e, "d_lr"));
        else
            f.d_lr.insert(parse_tokens(*v, "d_lr"));
    }
    for (double r : num_list(p, "r_max")) f.r_max.insert(static_cast<int>(r));
    return f;
}

GridRequest grid_request(const Json& p, std::vector<std::string> factors) {
    GridRequest req{MetricSelector::parse(str_param(p, "metric", "val_loss.ar")), std::move(factors),
                    parse_reducer(str_param(p, "reducer", "min")),
                    MetricSelector::parse(str_param(p, "selection_loss", "val_loss.ar")), filter_from(p)};
    return req;
}

const Dataset& need(const Dataset* ds, const std::string& op) {
    if (!ds) throw ValidationError("dataset", "analysis '" + op + "' needs a dataset");
    return *ds;
}

// Scales in size order, restricted to those the filter allows and that have matching runs.
std::vector<std::string> scales_with_runs(const Dataset& ds, const RunFilter& filter) {
    std::vector<const ScaleSpec*> specs;
    for (const auto& [_, s] : ds.scales()) specs.push_back(&s);
    std::sort(specs.begin(), specs.end(), [](const ScaleSpec* a, const ScaleSpec* b) {
        return std::tuple(a->n_nonemb(), a->d_model(), a->name()) < std::tuple(b->n_nonemb(), b->d_model(), b->name());
    });
    std::vector<std::string> out;
    for (const auto* s : specs) {
        if (!filter.scales.empty() && !filter.scales.count(s->name())) continue;
        RunFilter one = filter;
        one.scales = {s->name()};
        if (std::any_of(ds.runs().begin(), ds.runs().end(), [&](const RunRecord& r) { return one.matches(r); }))
            out.push_back(s->name());
    }
    for (const auto& s : filter.scales)
        if (std::find(out.begin(), out.end(), s) == out.end())
            throw AnalysisError("no runs match the filter at scale '" + s + "'");
    return out;
}

// Either one unscoped group or one group per scale.
struct Group {
    std::optional<std::string> scale;
    GridRequest request;
};

std::vector<Group> groups(const Dataset& ds, const Json& p, const GridRequest& base) {
    if (!bool_param(p, "per_scale", false)) return {{std::nullopt, base}};
    std::vector<Group> out;
    for (const auto& s : scales_with_runs(ds, base.filter)) {
        GridRequest r = base;
        r.filter.scales = {s};
        out.push_back({s, std::move(r)});
    }
    return out;
}

std::vector<std::string> with_scale(bool per_scale, std::vector<std::string> cols) {
    if (per_scale) cols.insert(cols.begin(), "scale");
    return cols;
}

std::vector<Value> row_for(const Group& g, std::vector<Value> row) {
    if (g.scale) row.insert(row.begin(), *g.scale);
    return row;
}

std::vector<std::string> factors_param(const Json& p, std::size_t min, std::size_t max) {
    auto f = str_list(p, "factors");
    if (f.size() < min || f.size() > max)
        throw ValidationError("factors", "expected " + std::to_string(min) + (min == max ? "" : "-" + std::to_string(max)) +
                                             " factors");
    return f;
}

// HP-cell label over every factor except the aggregate axis.
std::string hp_label(const GridTable& g, const std::optional<std::string>& aggregate, const CellIndex& key) {
    const auto skip = aggregate ? g.factor_index(*aggregate) : g.rank();
    std::vector<std::size_t> axes;
    for (std::size_t f = 0; f < g.rank(); ++f)
        if (f != skip) axes.push_back(f);
    if (axes.size() == 1) return g.factors()[axes[0]].levels[key[0]];
    std::string out;
    for (std::size_t i = 0; i < axes.size(); ++i)
        out += (i ? ";" : "") + g.factors()[axes[i]].name + "=" + g.factors()[axes[i]].levels[key[i]];
    return out;
}

std::optional<std::string> aggregate_param(const Json& p) {
    if (find(p, "aggregate")) return str_param(p, "aggregate");
    return std::nullopt;
}

// ---------------------------------------------------------------- analyses

std::vector<Artifact> op_budget(const Json& p, const Dataset* ds) {
    const auto& d = need(ds, "budget");
    const auto mult = static_cast<TokenCount>(num_param(p, "tokens_per_param", 100));
    const auto d_lr = tokens_param(p, "d_lr", kReferenceTokens);
    auto r_max = num_list(p, "r_max");
    auto names = str_list(p, "scales");
    if (names.empty())
        for (const auto& [n, _] : d.scales()) names.push_back(n);
    std::sort(names.begin(), names.end(), [&](const auto& a, const auto& b) {
        return d.scale(a).n_nonemb() < d.scale(b).n_nonemb();
    });
    Table t{{"scale", "d_model", "width_multiplier", "n_nonemb", "total_tokens", "d_lr", "r_max", "alpha",
             "hr_tokens", "capped"},
            {}};
    for (const auto& n : names) {
        const auto& s = d.scale(n);
        const auto total = token_budget(s, mult);
        if (r_max.empty()) {
            t.add({n, std::int64_t{s.d_model()}, s.width_multiplier(), s.n_nonemb(), total, d_lr, {}, {}, {}, {}});
            continue;
        }
        for (double r : r_max) {
            const auto b = mix_budget(total, d_lr, static_cast<int>(r));
            t.add({n, std::int64_t{s.d_model()}, s.width_multiplier(), s.n_nonemb(), total, d_lr,
                   std::int64_t{b.repetition_budget()}, b.lr_fraction(), b.hr_tokens(), b.capped()});
        }
    }
    return {{"", "mix_budget", std::move(t)}};
}

std::vector<Artifact> op_mup(const Json& p, const Dataset* ds) {
    const auto& d = need(ds, "mup");
    const auto filter = filter_from(p, {"monolingual-basic", "monolingual-tuned", "bilingual-basic", "bilingual-tuned"});
    std::optional<MetricSelector> metric;
    if (find(p, "metric")) metric = MetricSelector::parse(str_param(p, "metric"));
    const auto reducer = parse_reducer(str_param(p, "reducer", metric && !metric->lower_is_better() ? "max" : "min"));
    const auto sel = MetricSelector::parse(str_param(p, "selection_loss", "val_loss.ar"));
    const auto mult = static_cast<TokenCount>(num_param(p, "tokens_per_param", 100));

    std::vector<const RunRecord*> runs;
    for (const auto& r : d.runs())
        if (filter.matches(r)) runs.push_back(&r);
    if (runs.empty()) throw AnalysisError("empty selection: no runs match the filter");
    std::sort(runs.begin(), runs.end(), [&](const RunRecord* a, const RunRecord* b) {
        const auto& sa = d.scale(a->scale());
        const auto& sb = d.scale(b->scale());
        return std::tuple(sa.n_nonemb(), a->paradigm(), a->run_id()) <
               std::tuple(sb.n_nonemb(), b->paradigm(), b->run_id());
    });
    Table t{{"run_id", "scale", "paradigm", "lambda", "eta", "width_multiplier", "lambda_mup", "eta_mup", "r_max",
             "d_lr", "alpha", "capped", metric ? metric->str() : "metric"},
            {}};
    for (const auto* r : runs) {
        const auto& s = d.scale(r->scale());
        const auto eff = rescale_hp(r->base_hp(), s);
        Value alpha, capped, rmax;
        if (r->r_max()) {
            const auto b = mix_budget(token_budget(s, mult), r->d_lr(), *r->r_max());
            alpha = b.lr_fraction();
            capped = b.capped();
            rmax = std::int64_t{*r->r_max()};
        }
        t.add({r->run_id(), r->scale(), std::string(to_string(r->paradigm())), r->base_hp().weight_decay,
               r->base_hp().learning_rate, s.width_multiplier(), eff.weight_decay, eff.learning_rate, rmax, r->d_lr(),
               alpha, capped, metric ? Value(reduce_run(*r, *metric, reducer, sel)) : Value(std::monostate{})});
    }
    return {{"", "rescale_hp", std::move(t)}};
}

std::vector<Artifact> op_select(const Json& p, const Dataset* ds) {
    const auto& d = need(ds, "select");
    const auto rule = SelectionRule::parse(str_param(p, "rule", "min-vl:ar"));
    const auto filter = filter_from(p);
    std::set<std::string> only;
    for (const auto& id : str_list(p, "runs")) only.insert(id);
    Table t{{"run_id", "scale", "paradigm", "rule", "checkpoint_index", "r", "value"}, {}};
    for (const auto& id : only) d.run(id);
    for (const auto& r : d.runs()) {
        if (!filter.matches(r) || (!only.empty() && !only.count(r.run_id()))) continue;
        const auto s = select_checkpoint(r, rule);
        t.add({r.run_id(), r.scale(), std::string(to_string(r.paradigm())), rule.str(), int_value(s.checkpoint_index),
               s.r_at_selection, s.value_at_selection});
    }
    if (t.rows.empty()) throw AnalysisError("empty selection: no runs match the filter");
    return {{"", "select_checkpoint", std::move(t)}};
}

std::vector<Artifact> op_proxy(const Json& p, const Dataset* ds) {
    const auto& d = need(ds, "proxy");
    const auto lang = str_param(p, "loss", "ar");
    const auto bench = str_param(p, "accuracy");
    const auto filter = filter_from(p);
    Table stats_t{{"group", "n", "pearson_r", "rmse_pct", "median_abs_gap_pct", "frac_peak_after_minvl"}, {}};
    Table gaps{{"scale", "run_id", "acc_at_min_vl", "peak_acc", "gap", "min_vl_index", "peak_index"}, {}};
    std::vector<AccuracyPair> all_pairs;
    std::vector<CheckpointPositions> all_pos;
    auto add_stats = [&](const std::string& group, const auto& pairs, const auto& pos) {
        const auto s = proxy_stats(pairs, pos);
        stats_t.add({group, int_value(s.n), opt_value(s.pearson_r), s.rmse_pct, s.median_abs_gap_pct,
                     s.frac_peak_after_minvl});
    };
    for (const auto& scale : scales_with_runs(d, filter)) {
        std::vector<AccuracyPair> pairs;
        std::vector<CheckpointPositions> pos;
        for (const auto& r : d.runs()) {
            if (r.scale() != scale || !filter.matches(r)) continue;
            const auto g = proxy_gap(r, lang, bench);
            pairs.push_back({g.acc_at_min_vl, g.peak_acc});
            pos.push_back({g.min_vl_index, g.peak_index});
            gaps.add({scale, r.run_id(), g.acc_at_min_vl, g.peak_acc, g.gap, int_value(g.min_vl_index),
                      int_value(g.peak_index)});
        }
        add_stats(scale, pairs, pos);
        all_pairs.insert(all_pairs.end(), pairs.begin(), pairs.end());
        all_pos.insert(all_pos.end(), pos.begin(), pos.end());
    }
    add_stats("pooled", all_pairs, all_pos);
    return {{"", "proxy_stats", std::move(stats_t)}, {"gaps", "proxy_gap", std::move(gaps)}};
}

struct Decomposed {
    VarianceDecomposition dec;
    std::string operation;
};

Decomposed decompose(const GridTable& grid, const std::vector<std::string>& factors, const std::string& method,
                     bool pairwise) {
    const bool classical_ok = method != "type3";
    if (classical_ok && factors.size() == 2 && (method == "classical" || grid.balanced()))
        return {anova_two_way(grid, factors[0], factors[1]), "anova_two_way"};
    if (classical_ok && factors.size() == 3 && (method == "classical" || grid.balanced()))
        return {anova_three_way(grid, factors, pairwise), "anova_three_way"};
    if (method == "classical") throw AnalysisError("classical ANOVA covers 2 or 3 factors");
    return {anova_type3(grid, factors, standard_terms(factors, pairwise && factors.size() > 2)), "anova_type3"};
}

std::string join_ops(const std::set<std::string>& ops) {
    std::string out;
    for (const auto& o : ops) out += (out.empty() ? "" : "+") + o;
    return out;
}

std::vector<Artifact> op_anova(const Json& p, const Dataset* ds) {
    const auto& d = need(ds, "anova");
    const auto factors = factors_param(p, 2, 6);
    const auto method = str_param(p, "method", "auto");
    if (method != "auto" && method != "classical" && method != "type3")
        throw ValidationError("method", "expected auto, classical or type3");
    const bool pairwise = bool_param(p, "include_pairwise", true);
    const bool per = bool_param(p, "per_scale", false);
    Table t{with_scale(per, {"term", "sum_of_squares", "fraction", "method", "n_cells"}), {}};
    Table notes{with_scale(per, {"note"}), {}};
    std::set<std::string> ops;
    for (const auto& g : groups(d, p, grid_request(p, factors))) {
        const auto grid = extract_grid(d, g.request);
        auto [dec, op] = decompose(grid, factors, method, pairwise);
        ops.insert(op);
        for (const auto& term : dec.terms())
            t.add(row_for(g, {term.name, term.sum_of_squares, term.fraction, std::string(to_string(dec.method())),
                              int_value(dec.n_cells())}));
        for (const auto& n : dec.notes()) notes.add(row_for(g, {n}));
    }
    return {{"", join_ops(ops), std::move(t)}, {"notes", join_ops(ops), std::move(notes)}};
}

std::vector<Artifact> op_recenter_sweep(const Json& p, const Dataset* ds) {
    const auto& d = need(ds, "recenter_sweep");
    const auto factors = factors_param(p, 2, 3);
    const auto aggregate = str_param(p, "aggregate");
    auto taus = num_list(p, "thresholds");
    if (taus.empty()) throw ValidationError("thresholds", "at least one threshold required");
    const bool pairwise = bool_param(p, "include_pairwise", true);
    const bool per = bool_param(p, "per_scale", false);
    const auto req = grid_request(p, factors);
    Table t{with_scale(per, {"tau", "kept_hp_cells", "term", "sum_of_squares", "fraction", "method", "notes"}), {}};
    for (const auto& g : groups(d, p, req)) {
        const auto grid = extract_grid(d, g.request);
        for (const auto& e :
             recentering_sweep(grid, taus, aggregate, {factors, pairwise}, req.metric.lower_is_better())) {
            std::string joined;
            for (const auto& n : e.decomposition.notes()) joined += (joined.empty() ? "" : "; ") + n;
            for (const auto& term : e.decomposition.terms())
                t.add(row_for(g, {e.tau, int_value(e.kept_hp_cells), term.name, term.sum_of_squares, term.fraction,
                                  std::string(to_string(e.decomposition.method())), joined}));
        }
    }
    return {{"", "recentering_sweep", std::move(t)}};
}

std::vector<Artifact> op_recenter_box(const Json& p, const Dataset* ds) {
    const auto& d = need(ds, "recenter_box");
    const auto factors = factors_param(p, 1, 4);
    const auto aggregate = aggregate_param(p);
    const auto anchor_labels = str_list(p, "anchor");
    const auto radius = static_cast<int>(num_param(p, "radius"));
    const auto grid = extract_grid(d, grid_request(p, factors));
    CellIndex anchor;
    std::size_t k = 0;
    for (std::size_t f = 0; f < grid.rank(); ++f) {
        if (aggregate && grid.factors()[f].name == *aggregate) continue;
        if (k >= anchor_labels.size()) throw ValidationError("anchor", "one label per HP factor required");
        const auto& lv = grid.factors()[f].levels;
        auto it = std::find(lv.begin(), lv.end(), anchor_labels[k]);
        if (it == lv.end()) throw ValidationError("anchor", "unknown level '" + anchor_labels[k] + "'");
        anchor.push_back(static_cast<std::size_t>(it - lv.begin()));
        ++k;
    }
    if (k != anchor_labels.size()) throw ValidationError("anchor", "one label per HP factor required");
    const auto kept = recenter(grid, {BoxMode{anchor, radius}, aggregate, true});
    Table t{{"hp_cell", "mean"}, {}};
    for (const auto& [key, m] : hp_cell_means(kept, aggregate)) t.add({hp_label(kept, aggregate, key), m});
    return {{"", "recenter", std::move(t)}};
}

std::vector<Artifact> op_flatness(const Json& p, const Dataset* ds) {
    const auto& d = need(ds, "flatness");
    const auto factors = factors_param(p, 1, 4);
    const auto aggregate = aggregate_param(p);
    const auto taus = num_list(p, "thresholds");
    if (taus.empty()) throw ValidationError("thresholds", "at least one threshold required");
    const bool per = bool_param(p, "per_scale", false);
    const auto req = grid_request(p, factors);
    Table t{with_scale(per, {"tau", "count", "hp_cells"}), {}};
    for (const auto& g : groups(d, p, req)) {
        const auto grid = extract_grid(d, g.request);
        const auto total = hp_cell_means(grid, aggregate).size();
        for (double tau : taus)
            t.add(row_for(g, {tau, int_value(flatness_count(grid, aggregate, tau, req.metric.lower_is_better())),
                              int_value(total)}));
    }
    return {{"", "flatness_count", std::move(t)}};
}

std::vector<Artifact> op_outliers(const Json& p, const Dataset* ds) {
    const auto& d = need(ds, "outliers");
    const auto factors = factors_param(p, 1, 4);
    const auto aggregate = aggregate_param(p);
    const bool per = bool_param(p, "per_scale", false);
    Table summary{with_scale(per, {"n", "q1", "q3", "iqr", "lower_fence", "upper_fence", "n_flagged"}), {}};
    Table cells{with_scale(per, {"hp_cell", "pct_above_best", "fence"}), {}};
    for (const auto& g : groups(d, p, grid_request(p, factors))) {
        const auto grid = extract_grid(d, g.request);
        const auto pct = percent_above_best(hp_cell_means(grid, aggregate));
        const auto rep = iqr_outliers(pct);
        summary.add(row_for(g, {int_value(pct.size()), rep.q1, rep.q3, rep.iqr, rep.lower_fence, rep.upper_fence,
                                int_value(rep.flagged.size())}));
        for (const auto& [key, v] : pct) {
            std::string fence;
            for (const auto& f : rep.flagged)
                if (f.index == key) fence = f.fence;
            cells.add(row_for(g, {hp_label(grid, aggregate, key), v, fence}));
        }
    }
    return {{"", "iqr_outliers", std::move(summary)}, {"cells", "percent_above_best", std::move(cells)}};
}

std::vector<Artifact> op_heatmap(const Json& p, const Dataset* ds) {
    const auto& d = need(ds, "heatmap");
    const auto factors = factors_param(p, 2, 3);
    const auto aggregate = aggregate_param(p);
    const double cap = num_param(p, "cap", 15.0);
    const auto anchor_labels = str_list(p, "anchor");
    const bool per = bool_param(p, "per_scale", false);
    Table cells{with_scale(per, {"row", "col", "value", "pct_above_best", "is_best", "is_anchor"}), {}};
    Table gap{with_scale(per, {"best_row", "best_col", "best_value", "anchor_row", "anchor_col", "anchor_value",
                               "gap_pct"}),
              {}};
    std::optional<Table> matrix;
    for (const auto& g : groups(d, p, grid_request(p, factors))) {
        auto grid = extract_grid(d, g.request);
        if (aggregate) {
            // Average over the aggregate axis first, leaving a 2-D grid.
            std::vector<Factor> kept;
            for (const auto& f : grid.factors())
                if (f.name != *aggregate) kept.push_back(f);
            auto means = hp_cell_means(grid, aggregate);
            grid = GridTable(std::move(kept), std::move(means), grid.metric_name());
        }
        if (grid.rank() != 2) throw AnalysisError("heatmap needs a 2-D grid after reduction");
        std::optional<CellIndex> anchor;
        if (!anchor_labels.empty()) {
            if (anchor_labels.size() != 2) throw ValidationError("anchor", "expected [row_label, col_label]");
            CellIndex a;
            for (std::size_t f = 0; f < 2; ++f) {
                const auto& lv = grid.factors()[f].levels;
                auto it = std::find(lv.begin(), lv.end(), anchor_labels[f]);
                if (it == lv.end()) throw AnalysisError("anchor level '" + anchor_labels[f] + "' not in grid");
                a.push_back(static_cast<std::size_t>(it - lv.begin()));
            }
            anchor = a;
        }
        const auto h = emit_heatmap_data(grid, cap, anchor);
        if (!matrix) {
            std::vector<std::string> cols{h.row_factor + "\\" + h.col_factor};
            cols.insert(cols.end(), h.col_levels.begin(), h.col_levels.end());
            matrix = Table{with_scale(per, cols), {}};
        }
        if (matrix->columns.size() != h.col_levels.size() + 1 + (per ? 1 : 0))
            throw AnalysisError("per-scale heatmaps must share column levels");
        for (std::size_t i = 0; i < h.row_levels.size(); ++i) {
            std::vector<Value> row{h.row_levels[i]};
            for (std::size_t j = 0; j < h.col_levels.size(); ++j) {
                row.push_back(opt_value(h.pct[i][j]));
                if (!h.raw[i][j]) continue;
                const CellIndex idx{i, j};
                cells.add(row_for(g, {h.row_levels[i], h.col_levels[j], *h.raw[i][j], *h.pct[i][j], idx == h.best,
                                      anchor && idx == *anchor}));
            }
            matrix->add(row_for(g, std::move(row)));
        }
        gap.add(row_for(g, {h.row_levels[h.best[0]], h.col_levels[h.best[1]], h.best_value,
                            anchor ? Value(h.row_levels[(*anchor)[0]]) : Value(),
                            anchor ? Value(h.col_levels[(*anchor)[1]]) : Value(), opt_value(h.anchor_value),
                            opt_value(h.anchor_gap_pct)}));
    }
    return {{"matrix", "emit_heatmap_data", std::move(*matrix)},
            {"cells", "emit_heatmap_data", std::move(cells)},
            {"gap", "emit_heatmap_data", std::move(gap)}};
}

std::vector<Artifact> op_axis_range(const Json& p, const Dataset* ds) {
    const auto& d = need(ds, "axis_range");
    const auto factors = factors_param(p, 2, 4);
    auto axes = str_list(p, "axes");
    if (axes.empty()) axes = {factors[0], factors[1]};
    if (axes.size() != 2) throw ValidationError("axes", "expected two axes");
    const bool per = bool_param(p, "per_scale", false);
    Table t{with_scale(per, {"axis_a", "range_a_pct", "axis_b", "range_b_pct", "share_a"}), {}};
    for (const auto& g : groups(d, p, grid_request(p, factors))) {
        const auto grid = extract_grid(d, g.request);
        const double ra = axis_range(grid, axes[0]);
        const double rb = axis_range(grid, axes[1]);
        t.add(row_for(g, {axes[0], ra, axes[1], rb, ra + rb > 0 ? Value(axis_share(ra, rb)) : Value()}));
    }
    return {{"", "axis_range", std::move(t)}};
}

// Best value at each corpus size for the runs of one scale.
std::vector<TokenPoint> corpus_curve(const Dataset& d, const std::string& scale, const RunFilter& filter,
                                     const MetricSelector& metric, CellReducer reducer,
                                     const MetricSelector& selection_loss) {
    std::map<TokenCount, double> best;
    for (const auto& r : d.runs()) {
        if (r.scale() != scale || !filter.matches(r)) continue;
        const double v = reduce_run(r, metric, reducer, selection_loss);
        auto [it, fresh] = best.emplace(r.d_lr(), v);
        if (!fresh) it->second = metric.lower_is_better() ? std::min(it->second, v) : std::max(it->second, v);
    }
    return {best.begin(), best.end()};
}

struct FitSetup {
    MetricSelector metric;
    CellReducer reducer;
    MetricSelector selection_loss;
    MetricDirection direction;
    RunFilter filter;
};

FitSetup fit_setup(const Json& p) {
    const auto metric = MetricSelector::parse(str_param(p, "metric", "val_loss.ar"));
    return {metric, parse_reducer(str_param(p, "reducer", metric.lower_is_better() ? "min" : "max")),
            MetricSelector::parse(str_param(p, "selection_loss", "val_loss.ar")),
            parse_direction(str_param(p, "direction", metric.lower_is_better() ? "decreasing" : "increasing")),
            filter_from(p, {"monolingual-sweep"})};
}

void add_fit_samples(Table& series, const std::string& scale, const LogLinearFit& fit) {
    constexpr int kSamples = 16;
    const double lo = std::log(static_cast<double>(fit.domain_min()));
    const double hi = std::log(static_cast<double>(fit.domain_max()));
    for (int i = 0; i < kSamples; ++i) {
        const auto x = static_cast<TokenCount>(std::llround(std::exp(lo + (hi - lo) * i / (kSamples - 1))));
        series.add({scale, std::string("fit"), x, fit.evaluate(static_cast<double>(x))});
    }
}

std::vector<Artifact> op_fit(const Json& p, const Dataset* ds) {
    const auto& d = need(ds, "fit");
    const auto s = fit_setup(p);
    Table t{{"scale", "metric", "a", "b", "r2", "d_min", "d_max", "n_points", "direction", "direction_mismatch"}, {}};
    Table series{{"scale", "kind", "d_lr", "value"}, {}};
    for (const auto& scale : scales_with_runs(d, s.filter)) {
        const auto pts = corpus_curve(d, scale, s.filter, s.metric, s.reducer, s.selection_loss);
        const auto fit = fit_loglinear(pts, s.direction);
        t.add({scale, s.metric.str(), fit.slope(), fit.intercept(), fit.r_squared(), fit.domain_min(),
               fit.domain_max(), int_value(pts.size()), std::string(to_string(fit.direction())),
               fit.direction_mismatch()});
        for (const auto& [x, y] : pts) series.add({scale, std::string("data"), x, y});
        add_fit_samples(series, scale, fit);
    }
    return {{"", "fit_loglinear", std::move(t)}, {"series", "fit_loglinear", std::move(series)}};
}

std::vector<Artifact> op_multiplier(const Json& p, const Dataset* ds) {
    const auto s = fit_setup(p);
    const auto reference = tokens_param(p, "reference", kReferenceTokens);
    const auto* targets = find(p, "targets");
    if (!targets || !targets->is_array() || targets->empty())
        throw ValidationError("targets", "expected a non-empty list of targets");

    // Fits given explicitly take precedence over fits to the dataset.
    std::map<std::string, LogLinearFit> fits;
    if (const auto* given = find(p, "fits")) {
        for (const auto& f : *given) {
            const auto scale = str_param(f, "scale");
            fits.emplace(scale, LogLinearFit(num_param(f, "a"), num_param(f, "b"), num_param(f, "r2", 1.0),
                                             tokens_param(f, "d_min", 25'000'000),
                                             tokens_param(f, "d_max", 2'000'000'000), s.direction));
        }
    }
    auto fit_for = [&](const std::string& scale) -> const LogLinearFit& {
        if (auto it = fits.find(scale); it != fits.end()) return it->second;
        const auto& d = need(ds, "multiplier");
        RunFilter f = s.filter;
        f.scales = {scale};
        auto pts = corpus_curve(d, scale, f, s.metric, s.reducer, s.selection_loss);
        return fits.emplace(scale, fit_loglinear(pts, s.direction)).first->second;
    };

    Table t{{"scale", "label", "target", "a", "b", "d_equiv", "multiplier", "extrapolated", "extrapolation_factor",
             "direction_mismatch"},
            {}};
    Table series{{"scale", "label", "kind", "d_lr", "value"}, {}};
    for (const auto& tg : *targets) {
        const auto scale = str_param(tg, "scale");
        const auto label = str_param(tg, "label", "target");
        double value;
        if (find(tg, "value")) {
            value = num_param(tg, "value");
        } else {
            const auto& d = need(ds, "multiplier");
            const auto& run = d.run(str_param(tg, "run"));
            const auto metric = MetricSelector::parse(str_param(tg, "metric", s.metric.str()));
            value = reduce_run(run, metric,
                               parse_reducer(str_param(tg, "reducer", metric.lower_is_better() ? "min" : "max")),
                               s.selection_loss);
        }
        const auto& fit = fit_for(scale);
        const auto m = invert_multiplier(fit, value, reference);
        t.add({scale, label, value, fit.slope(), fit.intercept(), m.equivalent_tokens(), m.multiplier(),
               m.extrapolated(), m.extrapolation_factor(), m.direction_mismatch()});
        series.add({scale, label, std::string("target"), reference, value});
        series.add({scale, label, std::string("equivalent"),
                    static_cast<TokenCount>(std::llround(m.equivalent_tokens())), value});
    }
    return {{"", "invert_multiplier", std::move(t)}, {"series", "invert_multiplier", std::move(series)}};
}

std::vector<Artifact> op_dominance(const Json& p, const Dataset* ds) {
    const auto& d = need(ds, "dominance");
    const auto s = fit_setup(p);
    const auto reference = tokens_param(p, "reference", kReferenceTokens);
    auto ts = num_list(p, "T");
    if (ts.empty()) ts = {std::numeric_limits<double>::infinity()};
    const auto* given = find(p, "range_hp");
    Table t{{"scale", "T", "range_d", "range_hp", "rho", "hp_cells_kept", "range_hp_source"}, {}};
    for (const auto& scale : scales_with_runs(d, s.filter)) {
        const auto pts = corpus_curve(d, scale, s.filter, s.metric, s.reducer, s.selection_loss);
        const std::map<TokenCount, double> per_d(pts.begin(), pts.end());
        if (given && find(*given, scale.c_str())) {
            const double rhp = num_param(*given, scale.c_str());
            // A two-cell sweep spanning the given range at the reference size.
            const GridTable hp({Factor{"hp", {"lo", "hi"}}}, {{{0}, 0.0}, {{1}, rhp}}, s.metric.str());
            const auto r = dominance_ratio(per_d, hp, std::nullopt, std::nullopt, kUnboundedTau);
            t.add({scale, kUnboundedTau, r.range_d, r.range_hp, r.rho, Value(), std::string("given")});
            continue;
        }
        GridRequest req{s.metric, {"hp", "d_lr"}, s.reducer, s.selection_loss, s.filter};
        req.filter.scales = {scale};
        const auto grid = extract_grid(d, req);
        for (double T : ts) {
            const auto r = dominance_ratio(per_d, grid, std::string("d_lr"), format_tokens(reference), T);
            t.add({scale, T, r.range_d, r.range_hp, r.rho, int_value(r.hp_cells_kept), std::string("computed")});
        }
    }
    return {{"", "dominance_ratio", std::move(t)}};
}

std::vector<Artifact> op_synth_anova(const Json& p, const Dataset*) {
    const auto* spec_json = find(p, "spec");
    if (!spec_json) throw ValidationError("spec", "missing synthetic grid spec");
    const auto spec = synth_grid_spec_from_json(*spec_json);
    const auto synth = gen_grid(spec);
    auto factors = str_list(p, "factors");
    if (factors.empty())
        for (const auto& f : synth.grid.factors()) factors.push_back(f.name);
    const auto method = str_param(p, "method", "auto");
    auto [dec, op] = decompose(synth.grid, factors, method, bool_param(p, "include_pairwise", true));
    Table t{{"term", "sum_of_squares", "fraction", "truth_fraction", "method"}, {}};
    for (const auto& term : dec.terms()) {
        Value truth;
        for (const auto& g : synth.ground_truth.terms())
            if (g.name == term.name) truth = g.fraction;
        t.add({term.name, term.sum_of_squares, term.fraction, truth, std::string(to_string(dec.method()))});
    }
    Table grid_t{{"cell", "value"}, {}};
    for (const auto& [idx, v] : synth.grid.cells()) grid_t.add({hp_label(synth.grid, std::nullopt, idx), v});
    return {{"", "gen_grid+" + op, std::move(t)}, {"grid", "gen_grid", std::move(grid_t)}};
}

using OpFn = std::function<std::vector<Artifact>(const Json&, const Dataset*)>;

const std::map<std::string, OpFn>& registry() {
    static const std::map<std::string, OpFn> ops{
        {"anova", op_anova},           {"axis_range", op_axis_range},
        {"budget", op_budget},         {"dominance", op_dominance},
        {"fit", op_fit},               {"flatness", op_flatness},
        {"heatmap", op_heatmap},       {"multiplier", op_multiplier},
        {"mup", op_mup},               {"outliers", op_outliers},
        {"proxy", op_proxy},           {"recenter_box", op_recenter_box},
        {"recenter_sweep", op_recenter_sweep}, {"select", op_select},
        {"synth_anova", op_synth_anova},
    };
    return ops;
}

}  // namespace

const std::vector<std::string>& analysis_kinds() {
    static const std::vector<std::string> kinds = [] {
        std::vector<std::string> k;
        for (const auto& [name, _] : registry()) k.push_back(name);
        return k;
    }();
    return kinds;
}

std::vector<Artifact> run_analysis(const std::string& op, const Json& params, const Dataset* dataset) {
    auto it = registry().find(op);
    if (it == registry().end()) throw ValidationError("op", "unknown analysis '" + op + "'");
    return it->second(params, dataset);
}

Heatmap emit_heatmap_data(const GridTable& grid, double cap, const std::optional<CellIndex>& anchor) {
    if (grid.rank() != 2) throw AnalysisError("heatmap needs a 2-D grid");
    if (grid.size() == 0) throw AnalysisError("heatmap of an empty grid");
    if (!(cap >= 0.0)) throw ValidationError("cap", "must be non-negative");
    Heatmap h;
    h.row_factor = grid.factors()[0].name;
    h.col_factor = grid.factors()[1].name;
    h.row_levels = grid.factors()[0].levels;
    h.col_levels = grid.factors()[1].levels;
    const auto pct = percent_above_best(grid.cells());
    h.best = grid.cells().begin()->first;
    h.best_value = grid.cells().begin()->second;
    for (const auto& [idx, v] : grid.cells())
        if (v < h.best_value) h.best = idx, h.best_value = v;
    h.pct.assign(h.row_levels.size(), std::vector<std::optional<double>>(h.col_levels.size()));
    h.raw = h.pct;
    for (const auto& [idx, v] : grid.cells()) {
        h.raw[idx[0]][idx[1]] = v;
        h.pct[idx[0]][idx[1]] = std::min(pct.at(idx), cap);
    }
    if (anchor) {
        auto v = grid.at(*anchor);
        if (!v) throw AnalysisError("anchor cell is not populated");
        h.anchor = anchor;
        h.anchor_value = *v;
        h.anchor_gap_pct = pct.at(*anchor);
    }
    return h;
}

// ---------------------------------------------------------------- pipeline

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 digest failed");
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
    return out.str();
}

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestError(0, "path", "cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IngestError(0, "path", "cannot write '" + path.string() + "'");
    out << bytes;
}

}  // namespace

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

PipelineResult run_pipeline(const fs::path& config_path, const fs::path& out_dir) {
    const auto config_bytes = read_file(config_path);
    Json config;
    try {
        config = Json::parse(config_bytes);
    } catch (const Json::parse_error& e) {
        throw ValidationError("config", std::string("malformed JSON: ") + e.what());
    }
    if (!config.is_object()) throw ValidationError("config", "expected a JSON object");
    if (num_param(config, "version", -1) != 1) throw ValidationError("version", "unsupported config version");
    const auto base = config_path.parent_path();

    OrderedJson inputs = OrderedJson::array();
    std::optional<Dataset> dataset;
    std::optional<std::map<std::string, ScaleSpec>> scales;
    if (find(config, "scales")) {
        const auto rel = str_param(config, "scales");
        scales = load_scales(base / rel);
        inputs.push_back({{"role", "scales"}, {"path", rel}, {"sha256", sha256_file(base / rel)}});
    }
    if (find(config, "dataset")) {
        const auto rel = str_param(config, "dataset");
        LoadOptions opts;
        if (find(config, "scales")) opts.scales_path = base / str_param(config, "scales");
        dataset = load_dataset(base / rel, opts);
        inputs.push_back({{"role", "dataset"}, {"path", rel}, {"sha256", sha256_file(base / rel)}});
    } else if (const auto* synth = find(config, "synth_runs")) {
        if (!scales) throw ValidationError("scales", "synthetic runs need a scale table");
        dataset = Dataset(gen_runs(synth_runs_spec_from_json(*synth)), *scales);
    }

    fs::create_directories(out_dir);
    OrderedJson files = OrderedJson::array();
    std::set<std::string> names;
    const auto* analyses = find(config, "analyses");
    if (analyses && !analyses->is_array()) throw ValidationError("analyses", "expected a list");
    for (const auto& a : analyses ? *analyses : Json::array()) {
        const auto name = str_param(a, "name");
        const auto op = str_param(a, "op");
        if (name.empty() || name.find_first_of("/\\.") != std::string::npos)
            throw ValidationError("name", "analysis names must be plain file stems");
        if (!names.insert(name).second) throw ValidationError("name", "duplicate analysis '" + name + "'");
        std::vector<Artifact> artifacts;
        try {
            artifacts = run_analysis(op, a, dataset ? &*dataset : nullptr);
        } catch (const ValidationError& e) {
            throw ValidationError(e.field(), "analysis '" + name + "': " + e.what());
        } catch (const AnalysisError& e) {
            throw AnalysisError("analysis '" + name + "': " + e.what());
        }
        for (const auto& art : artifacts) {
            const auto stem = art.stem.empty() ? name : name + "." + art.stem;
            std::ostringstream csv;
            write_csv(csv, art.table);
            OrderedJson doc{{"analysis", name},
                            {"operation", art.operation},
                            {"columns", art.table.columns},
                            {"rows", table_to_json(art.table)}};
            const std::pair<std::string, std::string> outputs[] = {{stem + ".csv", csv.str()},
                                                                   {stem + ".json", doc.dump(2) + "\n"}};
            for (const auto& [file, bytes] : outputs) {
                write_file(out_dir / file, bytes);
                files.push_back(
                    {{"file", file}, {"analysis", name}, {"operation", art.operation}, {"sha256", sha256_hex(bytes)}});
            }
        }
    }

    OrderedJson manifest{{"tool", "gridlex"},
                         {"version", GRIDLEX_VERSION},
                         {"config", {{"file", config_path.filename().string()}, {"sha256", sha256_hex(config_bytes)}}},
                         {"inputs", std::move(inputs)},
                         {"files", std::move(files)}};
    write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");

    PipelineResult result;
    for (const auto& f : manifest["files"]) result.files.push_back(f["file"].get<std::string>());
    result.files.push_back("manifest.json");
    return result;
}

}  // namespace gridlex
