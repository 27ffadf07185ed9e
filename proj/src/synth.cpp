#include "gridlex/synth.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numbers>

namespace gridlex {

double SynthRng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double SynthRng::normal(double mean, double sd) {
    if (has_spare_) {
        has_spare_ = false;
        return mean + sd * spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return mean + sd * radius * std::cos(angle);
}

namespace {

constexpr double kZeroSumTol = 1e-12;

std::size_t factor_position(const SynthGridSpec& spec, const std::string& name) {
    for (std::size_t i = 0; i < spec.factors.size(); ++i)
        if (spec.factors[i].name == name) return i;
    throw ValidationError("interactions", "unknown factor '" + name + "'");
}

void validate(const SynthGridSpec& spec) {
    if (spec.factors.empty()) throw ValidationError("factors", "at least one factor required");
    if (!(spec.noise_sd >= 0.0)) throw ValidationError("noise_sd", "must be non-negative");
    for (const auto& f : spec.factors) {
        if (f.effects.empty()) throw ValidationError("effects", "factor '" + f.name + "' has no levels");
        if (!f.labels.empty() && f.labels.size() != f.effects.size())
            throw ValidationError("labels", "factor '" + f.name + "' label count differs from level count");
        double s = 0.0;
        for (double e : f.effects) s += e;
        if (std::abs(s) > kZeroSumTol)
            throw ValidationError("effects", "main effects of '" + f.name + "' do not sum to zero");
    }
    for (const auto& in : spec.interactions) {
        const auto& a = spec.factors[factor_position(spec, in.first)];
        const auto& b = spec.factors[factor_position(spec, in.second)];
        if (in.first == in.second) throw ValidationError("interactions", "interaction of a factor with itself");
        if (in.table.size() != a.effects.size())
            throw ValidationError("table", "interaction rows must match levels of '" + a.name + "'");
        std::vector<double> col(b.effects.size(), 0.0);
        for (const auto& row : in.table) {
            if (row.size() != b.effects.size())
                throw ValidationError("table", "interaction columns must match levels of '" + b.name + "'");
            double s = 0.0;
            for (std::size_t j = 0; j < row.size(); ++j) s += row[j], col[j] += row[j];
            if (std::abs(s) > kZeroSumTol) throw ValidationError("table", "interaction row does not sum to zero");
        }
        for (double c : col)
            if (std::abs(c) > kZeroSumTol) throw ValidationError("table", "interaction column does not sum to zero");
    }
}

}  // namespace

SynthGrid gen_grid(const SynthGridSpec& spec) {
    validate(spec);
    const auto k = spec.factors.size();
    std::vector<Factor> factors(k);
    std::size_t n = 1;
    for (std::size_t f = 0; f < k; ++f) {
        const auto& sf = spec.factors[f];
        factors[f].name = sf.name;
        for (std::size_t l = 0; l < sf.effects.size(); ++l)
            factors[f].levels.push_back(sf.labels.empty() ? std::to_string(l) : sf.labels[l]);
        n *= sf.effects.size();
    }
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (const auto& in : spec.interactions)
        pairs.emplace_back(factor_position(spec, in.first), factor_position(spec, in.second));

    SynthRng rng(spec.seed);
    std::map<CellIndex, double> cells;
    CellIndex idx(k, 0);
    for (std::size_t c = 0; c < n; ++c) {
        double v = spec.grand_mean;
        for (std::size_t f = 0; f < k; ++f) v += spec.factors[f].effects[idx[f]];
        for (std::size_t p = 0; p < pairs.size(); ++p)
            v += spec.interactions[p].table[idx[pairs[p].first]][idx[pairs[p].second]];
        if (spec.noise_sd > 0.0) v += rng.normal(0.0, spec.noise_sd);
        cells.emplace(idx, v);
        // Odometer increment, last factor fastest.
        for (std::size_t f = k; f-- > 0;) {
            if (++idx[f] < spec.factors[f].effects.size()) break;
            idx[f] = 0;
        }
    }

    // Balanced-design sums: each level of a factor with L levels covers N/L cells.
    const auto dn = static_cast<double>(n);
    std::vector<std::pair<std::string, double>> ss;
    double df_model = 0.0, total = 0.0;
    for (const auto& f : spec.factors) {
        double s = 0.0;
        for (double e : f.effects) s += e * e;
        const auto levels = static_cast<double>(f.effects.size());
        ss.emplace_back(f.name, dn / levels * s);
        df_model += levels - 1.0;
    }
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const auto la = static_cast<double>(spec.factors[pairs[p].first].effects.size());
        const auto lb = static_cast<double>(spec.factors[pairs[p].second].effects.size());
        double s = 0.0;
        for (const auto& row : spec.interactions[p].table)
            for (double v : row) s += v * v;
        ss.emplace_back(spec.interactions[p].first + ":" + spec.interactions[p].second, dn / (la * lb) * s);
        df_model += (la - 1.0) * (lb - 1.0);
    }
    const double df_resid = std::max(0.0, dn - 1.0 - df_model);
    ss.emplace_back("residual", spec.noise_sd * spec.noise_sd * df_resid);
    for (const auto& [_, v] : ss) total += v;

    GridTable grid(std::move(factors), std::move(cells), spec.metric);
    return {std::move(grid),
            VarianceDecomposition::from_sums(ss, total, AnovaMethod::ClassicalBalanced, n)};
}

double synth_loss(const SynthRunSpec& s, double r) {
    return s.floor + s.amplitude * std::exp(-r / s.tau_sat) + s.overfit_slope * std::max(0.0, r - s.r_star);
}

double synth_loss_argmin(const SynthRunSpec& s) {
    if (s.overfit_slope <= 0.0 || s.amplitude <= 0.0) return std::numeric_limits<double>::infinity();
    // Past R* the derivative is B - (A/tau) exp(-R/tau); before R* it is negative.
    const double stationary = s.tau_sat * std::log(s.amplitude / (s.overfit_slope * s.tau_sat));
    return std::max(stationary, s.r_star);
}

RunRecord gen_run(const SynthRunSpec& s) {
    if (!(s.floor >= 0.0)) throw ValidationError("floor", "must be non-negative");
    if (!(s.amplitude >= 0.0)) throw ValidationError("amplitude", "must be non-negative");
    if (!(s.floor > 0.0 || s.amplitude > 0.0)) throw ValidationError("floor", "curve must stay positive");
    if (!(s.tau_sat > 0.0)) throw ValidationError("tau_sat", "must be positive");
    if (!(s.overfit_slope >= 0.0)) throw ValidationError("overfit_slope", "must be non-negative");
    if (s.schedule.empty()) throw ValidationError("schedule", "at least one checkpoint required");
    if (!(s.noise_sd >= 0.0) || !(s.accuracy_noise_sd >= 0.0))
        throw ValidationError("noise_sd", "must be non-negative");

    SynthRng rng(s.seed);
    std::vector<CheckpointMetric> cps;
    for (double r : s.schedule) {
        double loss = synth_loss(s, r);
        if (s.noise_sd > 0.0) loss += rng.normal(0.0, s.noise_sd);
        std::map<std::string, double> acc;
        if (!s.accuracy_metric.empty()) {
            // Monotone in -loss, kept inside [0, 1].
            double a = 1.0 / (1.0 + loss);
            if (s.accuracy_noise_sd > 0.0) a += rng.normal(0.0, s.accuracy_noise_sd);
            acc.emplace(s.accuracy_metric, std::clamp(a, 0.0, 1.0));
        }
        cps.emplace_back(r, std::map<std::string, double>{{s.language, loss}}, std::move(acc));
    }
    return RunRecord(s.run_id, s.scale, s.paradigm, BaseHP(s.weight_decay, s.learning_rate),
                     is_bilingual(s.paradigm) ? s.r_max : std::nullopt, s.d_lr, std::move(cps));
}

std::vector<RunRecord> gen_runs(const SynthRunsSpec& spec) {
    if (spec.weight_decays.empty() || spec.learning_rates.empty())
        throw ValidationError("grid", "weight_decays and learning_rates must be non-empty");
    if (spec.checkpoints == 0) throw ValidationError("checkpoints", "must be positive");
    std::vector<int> rmaxes = spec.r_max_values;
    if (rmaxes.empty()) rmaxes.push_back(spec.base.r_max.value_or(20));
    std::vector<RunRecord> runs;
    std::uint64_t index = 0;
    for (int rmax : rmaxes)
        for (double wd : spec.weight_decays)
            for (double lr : spec.learning_rates) {
                if (rmax <= 0) throw ValidationError("r_max_values", "must be positive");
                SynthRunSpec s = spec.base;
                s.run_id = spec.base.run_id + "-r" + std::to_string(rmax) + "-" + std::to_string(index);
                s.weight_decay = wd;
                s.learning_rate = lr;
                s.r_max = rmax;
                const double dl = std::log(wd / spec.best_weight_decay);
                const double de = std::log(lr / spec.best_learning_rate);
                s.floor += spec.lambda_curvature * dl * dl + spec.eta_curvature * de * de;
                s.schedule.clear();
                for (std::size_t c = 1; c <= spec.checkpoints; ++c)
                    s.schedule.push_back(static_cast<double>(rmax) * static_cast<double>(c) /
                                         static_cast<double>(spec.checkpoints));
                s.seed = spec.base.seed + 0x9E3779B97F4A7C15ULL * (index + 1);
                runs.push_back(gen_run(s));
                ++index;
            }
    return runs;
}

namespace {

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
    auto it = j.find(key);
    if (it == j.end()) return fallback;
    try {
        return it->get<T>();
    } catch (const Json::exception&) {
        throw ValidationError(key, "wrong type");
    }
}

template <typename T>
T require(const Json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw ValidationError(key, "missing required key");
    try {
        return it->get<T>();
    } catch (const Json::exception&) {
        throw ValidationError(key, "wrong type");
    }
}

}  // namespace

SynthGridSpec synth_grid_spec_from_json(const Json& j) {
    if (!j.is_object()) throw ValidationError("spec", "expected a JSON object");
    SynthGridSpec s;
    for (const auto& f : require<Json>(j, "factors"))
        s.factors.push_back({require<std::string>(f, "name"), require<std::vector<double>>(f, "effects"),
                             get_or<std::vector<std::string>>(f, "labels", {})});
    for (const auto& in : get_or<Json>(j, "interactions", Json::array())) {
        const auto names = require<std::vector<std::string>>(in, "factors");
        if (names.size() != 2) throw ValidationError("factors", "interactions are pairwise");
        s.interactions.push_back({names[0], names[1], require<std::vector<std::vector<double>>>(in, "table")});
    }
    s.grand_mean = get_or(j, "grand_mean", 0.0);
    s.noise_sd = get_or(j, "noise_sd", 0.0);
    s.seed = get_or<std::uint64_t>(j, "seed", 0);
    s.metric = get_or<std::string>(j, "metric", "val_loss.ar");
    return s;
}

SynthRunsSpec synth_runs_spec_from_json(const Json& j) {
    if (!j.is_object()) throw ValidationError("spec", "expected a JSON object");
    SynthRunsSpec s;
    auto& b = s.base;
    b.run_id = get_or<std::string>(j, "run_prefix", "synth");
    b.scale = get_or<std::string>(j, "scale", b.scale);
    b.paradigm = parse_paradigm(get_or<std::string>(j, "paradigm", "bilingual-basic"));
    b.d_lr = get_or<TokenCount>(j, "d_lr", b.d_lr);
    b.floor = get_or(j, "floor", b.floor);
    b.amplitude = get_or(j, "amplitude", b.amplitude);
    b.tau_sat = get_or(j, "tau_sat", b.tau_sat);
    b.r_star = get_or(j, "r_star", b.r_star);
    b.overfit_slope = get_or(j, "overfit_slope", b.overfit_slope);
    b.noise_sd = get_or(j, "noise_sd", b.noise_sd);
    b.seed = get_or<std::uint64_t>(j, "seed", b.seed);
    b.language = get_or<std::string>(j, "language", b.language);
    b.accuracy_metric = get_or<std::string>(j, "accuracy_metric", "");
    b.accuracy_noise_sd = get_or(j, "accuracy_noise_sd", 0.0);
    s.weight_decays = require<std::vector<double>>(j, "weight_decays");
    s.learning_rates = require<std::vector<double>>(j, "learning_rates");
    s.r_max_values = get_or<std::vector<int>>(j, "r_max_values", {});
    s.best_weight_decay = get_or(j, "best_weight_decay", s.best_weight_decay);
    s.best_learning_rate = get_or(j, "best_learning_rate", s.best_learning_rate);
    s.lambda_curvature = get_or(j, "lambda_curvature", s.lambda_curvature);
    s.eta_curvature = get_or(j, "eta_curvature", s.eta_curvature);
    s.checkpoints = get_or<std::size_t>(j, "checkpoints", s.checkpoints);
    return s;
}

}  // namespace gridlex
