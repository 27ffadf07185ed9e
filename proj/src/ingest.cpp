#include "gridlex/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <tuple>

#include "gridlex/serialize.hpp"

namespace gridlex {

namespace fs = std::filesystem;

Dataset::Dataset(std::vector<RunRecord> runs, std::map<std::string, ScaleSpec> scales, int schema_version)
    : runs_(std::move(runs)), scales_(std::move(scales)), schema_version_(schema_version) {
    if (schema_version_ != kSchemaVersion)
        throw ValidationError("schema_version", "unsupported schema version " + std::to_string(schema_version_));
    std::map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < runs_.size(); ++i) {
        const auto& r = runs_[i];
        if (!scales_.count(r.scale()))
            throw ValidationError("scale", "run '" + r.run_id() + "' references unknown scale '" + r.scale() + "'");
        if (!seen.emplace(r.run_id(), i).second)
            throw ValidationError("run_id", "duplicate run_id '" + r.run_id() + "'");
    }
}

const ScaleSpec& Dataset::scale(const std::string& name) const {
    if (auto it = scales_.find(name); it != scales_.end()) return it->second;
    throw AnalysisError("unknown scale '" + name + "'");
}

const RunRecord& Dataset::run(const std::string& run_id) const {
    for (const auto& r : runs_)
        if (r.run_id() == run_id) return r;
    throw AnalysisError("unknown run '" + run_id + "'");
}

namespace {

template <typename Fn>
void for_each_json_line(const fs::path& path, Fn&& fn) {
    std::ifstream in(path);
    if (!in) throw IngestError(0, "path", "cannot open '" + path.string() + "'");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        Json j;
        try {
            j = Json::parse(line);
        } catch (const Json::parse_error& e) {
            fn(lineno, std::optional<Json>{}, std::string("malformed JSON: ") + e.what());
            continue;
        }
        fn(lineno, std::optional<Json>{std::move(j)}, std::string{});
    }
}

void check_schema(const Json& j) {
    auto it = j.find("schema_version");
    if (it == j.end()) throw ValidationError("schema_version", "missing required key");
    if (!it->is_number_integer() || it->get<int>() != kSchemaVersion)
        throw ValidationError("schema_version", "unsupported schema version " + it->dump());
}

void write_lines(const fs::path& path, const std::vector<Json>& rows) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IngestError(0, "path", "cannot write '" + path.string() + "'");
    for (const auto& r : rows) out << r.dump() << '\n';
}

}  // namespace

std::map<std::string, ScaleSpec> load_scales(const fs::path& path, int d_base) {
    std::map<std::string, ScaleSpec> scales;
    for_each_json_line(path, [&](std::size_t line, std::optional<Json> j, const std::string& err) {
        if (!j) throw IngestError(line, "", err);
        try {
            auto s = scale_from_json(*j, d_base);
            const auto name = s.name();
            if (!scales.emplace(name, std::move(s)).second)
                throw ValidationError("name", "duplicate scale '" + name + "'");
        } catch (const ValidationError& e) {
            throw IngestError(line, e.field(), e.what());
        }
    });
    return scales;
}

LoadReport load_dataset_report(const fs::path& path, const LoadOptions& opts) {
    const auto scales_path = opts.scales_path.empty() ? path.parent_path() / "scales.jsonl" : opts.scales_path;
    if (!fs::exists(scales_path))
        throw IngestError(0, "scales", "scale table '" + scales_path.string() + "' not found");
    auto scales = load_scales(scales_path, opts.d_base);

    std::vector<RunRecord> runs;
    std::vector<RecordError> errors;
    std::map<std::string, std::size_t> first_line;

    auto fail = [&](std::size_t line, const std::string& field, const std::string& msg) {
        if (!opts.lenient) throw IngestError(line, field, msg);
        errors.push_back({line, field, msg});
    };

    for_each_json_line(path, [&](std::size_t line, std::optional<Json> j, const std::string& err) {
        if (!j) return fail(line, "", err);
        try {
            check_schema(*j);
            auto run = run_from_json(*j);
            if (!scales.count(run.scale()))
                return fail(line, "scale", "unresolved scale '" + run.scale() + "'");
            if (auto [it, fresh] = first_line.emplace(run.run_id(), line); !fresh)
                return fail(line, "run_id",
                            "duplicate run_id '" + run.run_id() + "' (lines " + std::to_string(it->second) +
                                " and " + std::to_string(line) + ")");
            runs.push_back(std::move(run));
        } catch (const ValidationError& e) {
            fail(line, e.field(), e.what());
        }
    });
    return {Dataset(std::move(runs), std::move(scales)), std::move(errors)};
}

Dataset load_dataset(const fs::path& path, const LoadOptions& opts) {
    return load_dataset_report(path, opts).dataset;
}

void save_scales(const std::map<std::string, ScaleSpec>& scales, const fs::path& path) {
    std::vector<Json> rows;
    for (const auto& [_, s] : scales) rows.push_back(to_json(s));
    write_lines(path, rows);
}

void save_dataset(const Dataset& dataset, const fs::path& runs_path, const fs::path& scales_path) {
    std::vector<Json> rows;
    rows.reserve(dataset.runs().size());
    for (const auto& r : dataset.runs()) rows.push_back(to_json(r));
    write_lines(runs_path, rows);
    save_scales(dataset.scales(), scales_path);
}

CellReducer parse_reducer(std::string_view text) {
    if (text == "min" || text == "min-over-checkpoints") return CellReducer::MinOverCheckpoints;
    if (text == "max" || text == "max-over-checkpoints") return CellReducer::MaxOverCheckpoints;
    if (text == "at-min-val-loss" || text == "at-min-vl") return CellReducer::AtMinValLoss;
    throw ValidationError("reducer", "unknown reducer '" + std::string(text) + "'");
}

bool RunFilter::matches(const RunRecord& r) const {
    if (!scales.empty() && !scales.count(r.scale())) return false;
    if (!paradigms.empty() && !paradigms.count(r.paradigm())) return false;
    if (!d_lr.empty() && !d_lr.count(r.d_lr())) return false;
    if (!r_max.empty() && (!r.r_max() || !r_max.count(*r.r_max()))) return false;
    return true;
}

std::string format_number(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) return std::to_string(v);
    return std::string(buf, end);
}

std::string format_tokens(TokenCount tokens) {
    if (tokens > 0 && tokens % 1'000'000'000 == 0) return std::to_string(tokens / 1'000'000'000) + "B";
    if (tokens > 0 && tokens % 1'000'000 == 0) return std::to_string(tokens / 1'000'000) + "M";
    return std::to_string(tokens);
}

TokenCount parse_tokens(std::string_view text, const std::string& field) {
    std::string s(text);
    double scale = 1.0;
    if (!s.empty()) {
        switch (s.back()) {
            case 'K': case 'k': scale = 1e3; break;
            case 'M': case 'm': scale = 1e6; break;
            case 'B': case 'b': case 'G': case 'g': scale = 1e9; break;
            default: break;
        }
        if (scale != 1.0) s.pop_back();
    }
    const auto bad = [&] { return ValidationError(field, "bad token count '" + std::string(text) + "'"); };
    double d = 0.0;
    try {
        std::size_t used = 0;
        d = std::stod(s, &used) * scale;
        if (used != s.size()) throw bad();
    } catch (const std::logic_error&) {
        throw bad();
    }
    if (!(d > 0) || std::abs(d - std::round(d)) > 1e-6 || d > 9e18) throw bad();
    return static_cast<TokenCount>(std::llround(d));
}

double reduce_run(const RunRecord& run, const MetricSelector& metric, CellReducer reducer,
                  const MetricSelector& selection_loss) {
    auto value_at = [&](std::size_t i, const MetricSelector& m) {
        auto v = run.checkpoints()[i].get(m);
        if (!v)
            throw AnalysisError("run '" + run.run_id() + "' lacks metric '" + m.str() + "' at checkpoint " +
                                std::to_string(i));
        return *v;
    };
    const auto n = run.checkpoints().size();
    switch (reducer) {
        case CellReducer::MinOverCheckpoints:
        case CellReducer::MaxOverCheckpoints: {
            const bool want_min = reducer == CellReducer::MinOverCheckpoints;
            double best = value_at(0, metric);
            for (std::size_t i = 1; i < n; ++i) {
                const double v = value_at(i, metric);
                if (want_min ? v < best : v > best) best = v;
            }
            return best;
        }
        case CellReducer::AtMinValLoss: {
            std::size_t arg = 0;
            double best = value_at(0, selection_loss);
            for (std::size_t i = 1; i < n; ++i) {
                const double v = value_at(i, selection_loss);
                if (v < best) best = v, arg = i;
            }
            return value_at(arg, metric);
        }
    }
    throw AnalysisError("unknown reducer");
}

namespace {

// Sort key and display label of a run's level on one factor.
struct LevelKey {
    std::vector<double> key;
    std::string label;

    bool operator<(const LevelKey& o) const { return std::tie(key, label) < std::tie(o.key, o.label); }
    bool operator==(const LevelKey& o) const { return key == o.key && label == o.label; }
};

LevelKey level_of(const Dataset& ds, const RunRecord& r, const std::string& factor) {
    if (factor == "scale") {
        const auto& s = ds.scale(r.scale());
        return {{static_cast<double>(s.n_nonemb()), static_cast<double>(s.d_model())}, s.name()};
    }
    if (factor == "paradigm") return {{static_cast<double>(r.paradigm())}, std::string(to_string(r.paradigm()))};
    if (factor == "lambda") return {{r.base_hp().weight_decay}, format_number(r.base_hp().weight_decay)};
    if (factor == "eta") return {{r.base_hp().learning_rate}, format_number(r.base_hp().learning_rate)};
    if (factor == "hp")
        return {{r.base_hp().weight_decay, r.base_hp().learning_rate},
                "lambda=" + format_number(r.base_hp().weight_decay) + ",eta=" +
                    format_number(r.base_hp().learning_rate)};
    if (factor == "rmax") {
        if (!r.r_max()) throw AnalysisError("run '" + r.run_id() + "' has no r_max for factor 'rmax'");
        return {{static_cast<double>(*r.r_max())}, std::to_string(*r.r_max())};
    }
    if (factor == "d_lr") return {{static_cast<double>(r.d_lr())}, format_tokens(r.d_lr())};
    throw AnalysisError("unknown grid factor '" + factor + "'");
}

}  // namespace

GridTable extract_grid(const Dataset& ds, const GridRequest& req) {
    if (req.factors.empty()) throw AnalysisError("extract_grid needs at least one factor");
    std::vector<const RunRecord*> selected;
    for (const auto& r : ds.runs())
        if (req.filter.matches(r)) selected.push_back(&r);
    if (selected.empty()) throw AnalysisError("empty selection: no runs match the filter");

    const auto k = req.factors.size();
    std::vector<std::vector<LevelKey>> run_levels(selected.size(), std::vector<LevelKey>(k));
    std::vector<std::vector<LevelKey>> levels(k);
    for (std::size_t i = 0; i < selected.size(); ++i)
        for (std::size_t f = 0; f < k; ++f) {
            run_levels[i][f] = level_of(ds, *selected[i], req.factors[f]);
            levels[f].push_back(run_levels[i][f]);
        }
    std::vector<Factor> factors(k);
    for (std::size_t f = 0; f < k; ++f) {
        std::sort(levels[f].begin(), levels[f].end());
        levels[f].erase(std::unique(levels[f].begin(), levels[f].end()), levels[f].end());
        factors[f].name = req.factors[f];
        for (const auto& l : levels[f]) factors[f].levels.push_back(l.label);
    }

    std::map<CellIndex, double> cells;
    std::map<CellIndex, const RunRecord*> owner;
    for (std::size_t i = 0; i < selected.size(); ++i) {
        CellIndex idx(k);
        for (std::size_t f = 0; f < k; ++f)
            idx[f] = static_cast<std::size_t>(
                std::lower_bound(levels[f].begin(), levels[f].end(), run_levels[i][f]) - levels[f].begin());
        if (auto it = owner.find(idx); it != owner.end()) {
            auto a = it->second->run_id(), b = selected[i]->run_id();
            if (b < a) std::swap(a, b);
            throw AnalysisError("runs '" + a + "' and '" + b + "' collide on one grid cell");
        }
        owner.emplace(idx, selected[i]);
        cells.emplace(idx, reduce_run(*selected[i], req.metric, req.reducer, req.selection_loss));
    }
    return GridTable(std::move(factors), std::move(cells), req.metric.str());
}

}  // namespace gridlex
