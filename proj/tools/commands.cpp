#include "commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>

#include "gridlex/ingest.hpp"
#include "gridlex/mup.hpp"
#include "gridlex/report.hpp"
#include "gridlex/serialize.hpp"
#include "gridlex/synth.hpp"

namespace gridlex::cli {

namespace {

enum class Format { Text, Csv, Json };

struct Common {
    std::string dataset;
    std::string scales;
    std::string format = "text";
    bool lenient = false;
};

struct GridOptions {
    std::string metric = "val_loss.ar";
    std::string reducer;
    std::vector<std::string> factors;
    std::vector<std::string> scale, paradigm, d_lr;
    std::vector<int> rmax;
    bool per_scale = false;
};

Format parse_format(const std::string& f) {
    if (f == "csv") return Format::Csv;
    if (f == "json") return Format::Json;
    return Format::Text;
}

void print(const std::vector<Artifact>& artifacts, Format fmt) {
    if (fmt == Format::Json) {
        OrderedJson out = OrderedJson::object();
        for (const auto& a : artifacts) out[a.stem.empty() ? "result" : a.stem] = table_to_json(a.table);
        std::cout << out.dump(2) << '\n';
        return;
    }
    for (std::size_t i = 0; i < artifacts.size(); ++i) {
        const auto& a = artifacts[i];
        if (artifacts.size() > 1) {
            if (i) std::cout << '\n';
            std::cout << (fmt == Format::Csv ? "# " : "== ") << (a.stem.empty() ? "result" : a.stem)
                      << (fmt == Format::Csv ? "" : " ==") << '\n';
        }
        if (fmt == Format::Csv)
            write_csv(std::cout, a.table);
        else
            write_text(std::cout, a.table);
    }
}

void add_common(CLI::App* sub, Common& c, bool dataset) {
    if (dataset)
        sub->add_option("dataset", c.dataset, "Run records (JSON lines)")->envname("GRIDLEX_DATASET");
    sub->add_option("--scales", c.scales, "Scale table (default: scales.jsonl beside the dataset)");
    sub->add_option("--format", c.format, "Output format")->check(CLI::IsMember({"text", "csv", "json"}));
}

void add_grid(CLI::App* sub, GridOptions& g, bool factors = true) {
    if (factors) sub->add_option("--factors", g.factors, "Grid factors")->delimiter(',')->required();
    sub->add_option("--metric", g.metric, "Metric, e.g. val_loss.ar or acc.bench");
    sub->add_option("--reducer", g.reducer, "Per-run reducer: min, max, at-min-vl");
    sub->add_option("--scale", g.scale, "Restrict to scales")->delimiter(',');
    sub->add_option("--paradigm", g.paradigm, "Restrict to paradigms")->delimiter(',');
    sub->add_option("--d-lr", g.d_lr, "Restrict to corpus sizes, e.g. 200M")->delimiter(',');
    sub->add_option("--rmax", g.rmax, "Restrict to repetition budgets")->delimiter(',');
    sub->add_flag("--per-scale", g.per_scale, "One result per scale");
}

Json grid_params(const GridOptions& g) {
    Json p{{"metric", g.metric}, {"per_scale", g.per_scale}};
    if (!g.factors.empty()) p["factors"] = g.factors;
    if (!g.reducer.empty()) p["reducer"] = g.reducer;
    if (!g.scale.empty()) p["scales"] = g.scale;
    if (!g.paradigm.empty()) p["paradigms"] = g.paradigm;
    if (!g.d_lr.empty()) p["d_lr"] = g.d_lr;
    if (!g.rmax.empty()) p["r_max"] = g.rmax;
    return p;
}

// Thresholds may include "inf".
Json threshold_list(const std::vector<std::string>& values) {
    Json out = Json::array();
    for (const auto& v : values) {
        if (v == "inf" || v == "infinity") {
            out.push_back("inf");
            continue;
        }
        try {
            std::size_t used = 0;
            const double d = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            out.push_back(d);
        } catch (const std::logic_error&) {
            throw ValidationError("tau", "bad threshold '" + v + "'");
        }
    }
    return out;
}

Dataset load(const Common& c) {
    if (c.dataset.empty()) throw ValidationError("dataset", "no dataset given (argument or GRIDLEX_DATASET)");
    LoadOptions opts;
    opts.scales_path = c.scales;
    return load_dataset(c.dataset, opts);
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"Analysis toolkit for data-constrained pretraining grids", "gridlex"};
    app.set_version_flag("--version", GRIDLEX_VERSION);
    app.require_subcommand(1);

    Common common;
    GridOptions grid;
    std::function<void()> action;
    auto on = [&](CLI::App* sub, std::function<void()> fn) { sub->callback([&action, fn] { action = fn; }); };
    auto analysis = [&](const std::string& op, std::function<Json()> params, bool needs_dataset = true) {
        return [&common, op, params, needs_dataset] {
            std::optional<Dataset> ds;
            if (needs_dataset) ds = load(common);
            print(run_analysis(op, params(), ds ? &*ds : nullptr), parse_format(common.format));
        };
    };

    // validate
    auto* validate = app.add_subcommand("validate", "Check a dataset and report per-record errors");
    add_common(validate, common, true);
    bool had_errors = false;
    on(validate, [&] {
        if (common.dataset.empty()) throw ValidationError("dataset", "no dataset given (argument or GRIDLEX_DATASET)");
        LoadOptions opts;
        opts.scales_path = common.scales;
        opts.lenient = true;
        const auto rep = load_dataset_report(common.dataset, opts);
        Table t{{"line", "field", "message"}, {}};
        for (const auto& e : rep.errors) t.add({static_cast<std::int64_t>(e.line), e.field, e.message});
        had_errors = !rep.errors.empty();
        if (had_errors)
            print({{"errors", "load_dataset", std::move(t)}}, parse_format(common.format));
        else
            std::cout << "ok: " << rep.dataset.runs().size() << " runs, " << rep.dataset.scales().size()
                      << " scales\n";
    });

    // info
    auto* info = app.add_subcommand("info", "Summarise runs per scale and paradigm");
    add_common(info, common, true);
    on(info, [&] {
        const auto ds = load(common);
        std::map<std::pair<std::string, std::string>, std::int64_t> counts;
        for (const auto& r : ds.runs()) ++counts[{r.scale(), std::string(to_string(r.paradigm()))}];
        Table t{{"scale", "paradigm", "runs"}, {}};
        for (const auto& [k, n] : counts) t.add({k.first, k.second, n});
        print({{"", "info", std::move(t)}}, parse_format(common.format));
    });

    // budget
    auto* budget = app.add_subcommand("budget", "Token budget and µP-rescaled hyperparameters");
    add_common(budget, common, false);
    int d_model = 0, d_base = kDefaultBaseWidth;
    double n_nonemb = 0, tokens_per_param = 100, lambda = 0, eta = 0;
    budget->add_option("--d-model", d_model, "Model width");
    budget->add_option("--n-nonemb", n_nonemb, "Non-embedding parameters");
    budget->add_option("--d-base", d_base, "Proxy width");
    budget->add_option("--tokens-per-param", tokens_per_param, "Tokens per non-embedding parameter");
    budget->add_option("--lambda", lambda, "Base weight decay");
    budget->add_option("--eta", eta, "Base learning rate");
    on(budget, [&] {
        std::vector<ScaleSpec> specs;
        if (d_model > 0) {
            specs.emplace_back("custom", d_model, static_cast<TokenCount>(n_nonemb), d_base);
        } else {
            if (common.scales.empty()) throw ValidationError("scales", "give --scales or --d-model/--n-nonemb");
            for (const auto& [_, s] : load_scales(common.scales, d_base)) specs.push_back(s);
            std::sort(specs.begin(), specs.end(),
                      [](const ScaleSpec& a, const ScaleSpec& b) { return a.n_nonemb() < b.n_nonemb(); });
        }
        Table t{{"scale", "d_model", "width_multiplier", "n_nonemb", "total_tokens", "lambda_mup", "eta_mup"}, {}};
        for (const auto& s : specs) {
            Value lm, em;
            if (lambda > 0 && eta > 0) {
                const auto e = rescale_hp(BaseHP(lambda, eta), s);
                lm = e.weight_decay;
                em = e.learning_rate;
            }
            t.add({s.name(), std::int64_t{s.d_model()}, s.width_multiplier(), s.n_nonemb(),
                   token_budget(s, static_cast<TokenCount>(tokens_per_param)), lm, em});
        }
        print({{"", "token_budget+rescale_hp", std::move(t)}}, parse_format(common.format));
    });

    // alpha
    auto* alpha = app.add_subcommand("alpha", "Mixing fraction for a budget, corpus and repetition budget");
    add_common(alpha, common, false);
    std::string total, d_lr = "200M";
    std::vector<int> rmax_list;
    alpha->add_option("--total", total, "Total training tokens D, e.g. 12.17B")->required();
    alpha->add_option("--d-lr", d_lr, "Unique low-resource tokens");
    alpha->add_option("--rmax", rmax_list, "Repetition budgets")->delimiter(',')->required();
    on(alpha, [&] {
        Table t{{"total_tokens", "d_lr", "r_max", "alpha", "hr_tokens", "capped"}, {}};
        for (int r : rmax_list) {
            const auto b = mix_budget(parse_tokens(total, "total"), parse_tokens(d_lr, "d_lr"), r);
            t.add({b.total_tokens(), b.lr_corpus_tokens(), std::int64_t{r}, b.lr_fraction(), b.hr_tokens(),
                   b.capped()});
        }
        print({{"", "mix_budget", std::move(t)}}, parse_format(common.format));
    });

    // select
    auto* select = app.add_subcommand("select", "Pick a checkpoint per run");
    add_common(select, common, true);
    add_grid(select, grid, false);
    std::string rule = "min-vl:ar";
    std::vector<std::string> run_ids;
    select->add_option("--rule", rule, "min-vl:<lang> or peak-acc:<bench>");
    select->add_option("--run", run_ids, "Only these runs")->delimiter(',');
    on(select, analysis("select", [&] {
        auto p = grid_params(grid);
        p["rule"] = rule;
        if (!run_ids.empty()) p["runs"] = run_ids;
        return p;
    }));

    // proxy-stats
    auto* proxy = app.add_subcommand("proxy-stats", "Agreement of min-loss selection with peak accuracy");
    add_common(proxy, common, true);
    add_grid(proxy, grid, false);
    std::string loss_lang = "ar", bench;
    proxy->add_option("--loss", loss_lang, "Validation-loss language");
    proxy->add_option("--accuracy", bench, "Accuracy benchmark")->required();
    on(proxy, analysis("proxy", [&] {
        auto p = grid_params(grid);
        p["loss"] = loss_lang;
        p["accuracy"] = bench;
        return p;
    }));

    // anova
    auto* anova = app.add_subcommand("anova", "Variance decomposition over grid factors");
    add_common(anova, common, true);
    add_grid(anova, grid);
    bool three_way = false, no_pairwise = false;
    std::string method = "auto";
    anova->add_flag("--three-way", three_way, "Require exactly three factors");
    anova->add_flag("--no-pairwise", no_pairwise, "Omit pairwise interactions");
    anova->add_option("--method", method, "auto, classical or type3")
        ->check(CLI::IsMember({"auto", "classical", "type3"}));
    on(anova, analysis("anova", [&] {
        if (three_way && grid.factors.size() != 3) throw ValidationError("factors", "--three-way needs 3 factors");
        auto p = grid_params(grid);
        p["method"] = method;
        p["include_pairwise"] = !no_pairwise;
        return p;
    }));

    // recenter
    auto* recenter = app.add_subcommand("recenter", "Threshold sweep or box restriction around an anchor");
    add_common(recenter, common, true);
    add_grid(recenter, grid);
    std::string aggregate;
    std::vector<std::string> taus, anchor;
    int radius = -1;
    recenter->add_option("--aggregate", aggregate, "Axis averaged over when ranking HP cells");
    recenter->add_option("--tau", taus, "Thresholds in percent")->delimiter(',');
    recenter->add_option("--anchor", anchor, "Anchor level labels, one per HP factor")->delimiter(',');
    recenter->add_option("--radius", radius, "Box radius");
    on(recenter, [&] {
        auto p = grid_params(grid);
        if (!aggregate.empty()) p["aggregate"] = aggregate;
        if (radius >= 0) {
            p["anchor"] = anchor;
            p["radius"] = radius;
            analysis("recenter_box", [p] { return p; })();
            return;
        }
        if (aggregate.empty()) throw ValidationError("aggregate", "threshold sweeps need --aggregate");
        p["thresholds"] = threshold_list(taus.empty() ? std::vector<std::string>{"0", "inf"} : taus);
        analysis("recenter_sweep", [p] { return p; })();
    });

    // outliers
    auto* outliers = app.add_subcommand("outliers", "IQR outliers of percent-above-best HP cells");
    add_common(outliers, common, true);
    add_grid(outliers, grid);
    outliers->add_option("--aggregate", aggregate, "Axis averaged over");
    on(outliers, analysis("outliers", [&] {
        auto p = grid_params(grid);
        if (!aggregate.empty()) p["aggregate"] = aggregate;
        return p;
    }));

    // flatness
    auto* flatness = app.add_subcommand("flatness", "Count HP cells within tau percent of the best");
    add_common(flatness, common, true);
    add_grid(flatness, grid);
    flatness->add_option("--aggregate", aggregate, "Axis averaged over");
    flatness->add_option("--tau", taus, "Thresholds in percent")->delimiter(',')->required();
    on(flatness, analysis("flatness", [&] {
        auto p = grid_params(grid);
        if (!aggregate.empty()) p["aggregate"] = aggregate;
        p["thresholds"] = threshold_list(taus);
        return p;
    }));

    // axis-range
    auto* axis = app.add_subcommand("axis-range", "Marginal spread along two HP axes and the first axis' share");
    add_common(axis, common, true);
    add_grid(axis, grid);
    std::vector<std::string> axes;
    axis->add_option("--axes", axes, "Two axes to compare (default: first two factors)")->delimiter(',');
    on(axis, analysis("axis_range", [&] {
        auto p = grid_params(grid);
        if (!axes.empty()) p["axes"] = axes;
        return p;
    }));

    // fit
    auto* fit = app.add_subcommand("fit", "Per-scale log-linear fit of a metric against corpus size");
    add_common(fit, common, true);
    add_grid(fit, grid, false);
    std::string direction;
    fit->add_option("--direction", direction, "decreasing or increasing (default from metric)");
    on(fit, analysis("fit", [&] {
        auto p = grid_params(grid);
        if (!direction.empty()) p["direction"] = direction;
        return p;
    }));

    // multiplier
    auto* mult = app.add_subcommand("multiplier", "Equivalent monolingual corpus size for a target value");
    add_common(mult, common, true);
    add_grid(mult, grid, false);
    std::string target_scale, target_run, reference = "200M";
    std::optional<double> target_value, fit_a, fit_b;
    mult->add_option("--target-scale", target_scale, "Scale whose fit is inverted")->required();
    mult->add_option("--target", target_value, "Target metric value");
    mult->add_option("--target-run", target_run, "Read the target from this run");
    mult->add_option("--reference", reference, "Reference corpus size");
    mult->add_option("--fit-a", fit_a, "Use this slope instead of fitting");
    mult->add_option("--fit-b", fit_b, "Use this intercept instead of fitting");
    mult->add_option("--direction", direction, "decreasing or increasing");
    on(mult, [&] {
        if (!target_value == target_run.empty())
            throw ValidationError("target", "give exactly one of --target and --target-run");
        auto p = grid_params(grid);
        p["reference"] = reference;
        if (!direction.empty()) p["direction"] = direction;
        Json t{{"scale", target_scale}, {"label", target_run.empty() ? "target" : target_run}};
        if (target_value) t["value"] = *target_value;
        else t["run"] = target_run;
        p["targets"] = Json::array({t});
        if (fit_a && fit_b) p["fits"] = Json::array({{{"scale", target_scale}, {"a", *fit_a}, {"b", *fit_b}}});
        const bool need = !target_run.empty() || !(fit_a && fit_b);
        analysis("multiplier", [p] { return p; }, need)();
    });

    // dominance
    auto* dom = app.add_subcommand("dominance", "Data-axis versus HP-axis loss range");
    add_common(dom, common, true);
    add_grid(dom, grid, false);
    std::vector<std::string> t_list;
    dom->add_option("--T", t_list, "HP filter thresholds in percent (inf allowed)")->delimiter(',');
    dom->add_option("--reference", reference, "Reference corpus size");
    on(dom, analysis("dominance", [&] {
        auto p = grid_params(grid);
        p["reference"] = reference;
        if (!t_list.empty()) p["T"] = threshold_list(t_list);
        return p;
    }));

    // synth
    auto* synth = app.add_subcommand("synth", "Synthetic grids and runs");
    synth->require_subcommand(1);
    std::string spec_path, out_path;
    auto* sgrid = synth->add_subcommand("grid", "Generate a grid with known variance structure");
    sgrid->add_option("--spec", spec_path, "Grid spec (JSON)")->required();
    sgrid->add_option("--out", out_path, "Output file (default stdout)");
    auto read_spec = [&] {
        std::ifstream in(spec_path);
        if (!in) throw ValidationError("spec", "cannot open '" + spec_path + "'");
        try {
            return Json::parse(in);
        } catch (const Json::parse_error& e) {
            throw ValidationError("spec", std::string("malformed JSON: ") + e.what());
        }
    };
    auto emit = [&](const std::string& text) {
        if (out_path.empty()) {
            std::cout << text;
            return;
        }
        std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
        if (!out) throw ValidationError("out", "cannot write '" + out_path + "'");
        out << text;
    };
    on(sgrid, [&] {
        const auto g = gen_grid(synth_grid_spec_from_json(read_spec()));
        emit(Json{{"grid", to_json(g.grid)}, {"ground_truth", to_json(g.ground_truth)}}.dump(2) + "\n");
    });
    auto* sruns = synth->add_subcommand("runs", "Generate run records in the ingest line format");
    sruns->add_option("--spec", spec_path, "Runs spec (JSON)")->required();
    sruns->add_option("--out", out_path, "Output file (default stdout)");
    on(sruns, [&] {
        std::string text;
        for (const auto& r : gen_runs(synth_runs_spec_from_json(read_spec()))) text += to_json(r).dump() + "\n";
        emit(text);
    });

    // report
    auto* report = app.add_subcommand("report", "Run an analysis config and write a report bundle");
    std::string config_path, out_dir = "report";
    report->add_option("--config", config_path, "Analysis config (JSON)")->required();
    report->add_option("--out", out_dir, "Output directory");
    on(report, [&] {
        const auto res = run_pipeline(config_path, out_dir);
        for (const auto& f : res.files) std::cout << out_dir << "/" << f << '\n';
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    try {
        if (action) action();
        return had_errors ? 1 : 0;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.field() << ": " << e.what() << '\n';
        return 1;
    } catch (const IngestError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const AnalysisError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}

}  // namespace gridlex::cli
