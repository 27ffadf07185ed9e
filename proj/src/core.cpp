#include "gridlex/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gridlex {

namespace {

void require(bool ok, const char* field, const std::string& what) {
    if (!ok) throw ValidationError(field, what);
}

bool finite(double x) { return std::isfinite(x); }

}  // namespace

ScaleSpec::ScaleSpec(std::string name, int d_model, TokenCount n_nonemb, int d_base)
    : name_(std::move(name)), d_model_(d_model), n_nonemb_(n_nonemb), d_base_(d_base) {
    require(!name_.empty(), "name", "scale name must not be empty");
    require(d_base_ > 0, "d_base", "base width must be positive");
    require(d_model_ > 0, "d_model", "hidden width must be positive");
    require(n_nonemb_ > 0, "n_nonemb", "non-embedding parameter count must be positive");
    require(d_model_ >= d_base_, "d_model",
            "width " + std::to_string(d_model_) + " is narrower than the proxy width " +
                std::to_string(d_base_));
}

BaseHP::BaseHP(double wd, double lr) : weight_decay(wd), learning_rate(lr) {
    require(finite(wd) && wd >= 0.0, "lambda", "weight decay must be non-negative");
    require(finite(lr) && lr > 0.0, "eta", "learning rate must be positive");
}

EffectiveHP::EffectiveHP(double wd, double lr) : weight_decay(wd), learning_rate(lr) {
    require(finite(wd) && wd >= 0.0, "lambda_mup", "weight decay must be non-negative");
    require(finite(lr) && lr > 0.0, "eta_mup", "learning rate must be positive");
}

MixBudget::MixBudget(TokenCount total, TokenCount lr_corpus, int r_max, double alpha, TokenCount hr,
                     bool capped)
    : total_(total), lr_corpus_(lr_corpus), r_max_(r_max), alpha_(alpha), hr_(hr), capped_(capped) {
    require(total_ > 0, "total_tokens", "must be positive");
    require(lr_corpus_ > 0, "lr_corpus_tokens", "must be positive");
    require(r_max_ > 0, "repetition_budget", "must be positive");
    require(finite(alpha_) && alpha_ > 0.0 && alpha_ <= 1.0, "arabic_fraction", "must lie in (0, 1]");
    require(hr_ >= 0, "hr_tokens", "must be non-negative");
    const double lr_share = static_cast<double>(r_max_) * static_cast<double>(lr_corpus_);
    if (capped_) {
        require(alpha_ == 1.0, "arabic_fraction", "a capped budget has fraction exactly 1");
        require(hr_ == 0, "hr_tokens", "a capped budget has no high-resource tokens");
        require(lr_share > static_cast<double>(total_), "capped",
                "budget is flagged capped but R_max * D_LR fits inside D");
    } else {
        const double expected = lr_share / static_cast<double>(total_);
        require(std::abs(alpha_ - expected) <= 1e-12 * std::max(1.0, expected), "arabic_fraction",
                "must equal R_max * D_LR / D");
        require(lr_share <= static_cast<double>(total_), "capped",
                "R_max * D_LR exceeds D but the budget is not flagged capped");
        require(hr_ == total_ - static_cast<TokenCount>(r_max_) * lr_corpus_, "hr_tokens",
                "must equal D - R_max * D_LR");
    }
}

MetricSelector MetricSelector::parse(std::string_view text) {
    const auto dot = text.find('.');
    if (dot == std::string_view::npos || dot + 1 >= text.size())
        throw ValidationError("metric", "expected 'val_loss.<lang>' or 'acc.<bench>', got '" +
                                            std::string(text) + "'");
    const auto head = text.substr(0, dot);
    std::string label(text.substr(dot + 1));
    if (head == "val_loss") return {Kind::ValLoss, std::move(label)};
    if (head == "acc" || head == "accuracy") return {Kind::Accuracy, std::move(label)};
    throw ValidationError("metric", "unknown metric family '" + std::string(head) + "'");
}

std::string MetricSelector::str() const {
    return (kind == Kind::ValLoss ? "val_loss." : "acc.") + label;
}

CheckpointMetric::CheckpointMetric(double r, std::map<std::string, double> val_loss,
                                   std::map<std::string, double> accuracy)
    : r_(r), val_loss_(std::move(val_loss)), accuracy_(std::move(accuracy)) {
    require(finite(r_) && r_ > 0.0, "r", "repetition count must be positive");
    for (const auto& [lang, v] : val_loss_)
        require(finite(v) && v >= 0.0, "val_loss", "loss for '" + lang + "' must be non-negative");
    for (const auto& [bench, v] : accuracy_)
        require(finite(v) && v >= 0.0 && v <= 1.0, "accuracy",
                "accuracy for '" + bench + "' must lie in [0, 1]");
}

std::optional<double> CheckpointMetric::get(const MetricSelector& metric) const {
    const auto& table = metric.kind == MetricSelector::Kind::ValLoss ? val_loss_ : accuracy_;
    if (auto it = table.find(metric.label); it != table.end()) return it->second;
    return std::nullopt;
}

std::string_view to_string(Paradigm p) noexcept {
    switch (p) {
        case Paradigm::MonolingualBasic: return "monolingual-basic";
        case Paradigm::MonolingualTuned: return "monolingual-tuned";
        case Paradigm::BilingualBasic: return "bilingual-basic";
        case Paradigm::BilingualTuned: return "bilingual-tuned";
        case Paradigm::MonolingualSweep: return "monolingual-sweep";
    }
    return "?";
}

Paradigm parse_paradigm(std::string_view text) {
    for (auto p : {Paradigm::MonolingualBasic, Paradigm::MonolingualTuned, Paradigm::BilingualBasic,
                   Paradigm::BilingualTuned, Paradigm::MonolingualSweep})
        if (to_string(p) == text) return p;
    throw ValidationError("paradigm", "unknown paradigm '" + std::string(text) + "'");
}

bool is_bilingual(Paradigm p) noexcept {
    return p == Paradigm::BilingualBasic || p == Paradigm::BilingualTuned;
}

RunRecord::RunRecord(std::string run_id, std::string scale, Paradigm paradigm, BaseHP base_hp,
                     std::optional<int> r_max, TokenCount d_lr, std::vector<CheckpointMetric> checkpoints)
    : run_id_(std::move(run_id)),
      scale_(std::move(scale)),
      paradigm_(paradigm),
      base_hp_(base_hp),
      r_max_(r_max),
      d_lr_(d_lr),
      checkpoints_(std::move(checkpoints)) {
    require(!run_id_.empty(), "run_id", "must not be empty");
    require(!scale_.empty(), "scale", "must not be empty");
    require(d_lr_ > 0, "d_lr", "unique corpus size must be positive");
    require(!checkpoints_.empty(), "checkpoints", "a run needs at least one checkpoint");
    if (is_bilingual(paradigm_)) {
        require(r_max_.has_value(), "r_max", "bilingual runs need a repetition budget");
        require(*r_max_ > 0, "r_max", "repetition budget must be positive");
    } else {
        require(!r_max_.has_value(), "r_max", "monolingual runs carry no repetition budget");
    }
    for (std::size_t i = 1; i < checkpoints_.size(); ++i)
        require(checkpoints_[i].repetition_count() > checkpoints_[i - 1].repetition_count(), "checkpoints",
                "non-increasing repetition_count at checkpoint " + std::to_string(i));
}

GridTable::GridTable(std::vector<Factor> factors, std::map<CellIndex, double> cells, std::string metric_name)
    : factors_(std::move(factors)), cells_(std::move(cells)), metric_(std::move(metric_name)) {
    require(!factors_.empty(), "factors", "a grid needs at least one factor");
    for (std::size_t i = 0; i < factors_.size(); ++i) {
        require(!factors_[i].name.empty(), "factors", "factor names must not be empty");
        require(!factors_[i].levels.empty(), "factors", "factor '" + factors_[i].name + "' has no levels");
        for (std::size_t j = 0; j < i; ++j)
            require(factors_[i].name != factors_[j].name, "factors",
                    "duplicate factor '" + factors_[i].name + "'");
    }
    for (const auto& [idx, v] : cells_) {
        require(idx.size() == factors_.size(), "cells", "cell index rank does not match factor count");
        for (std::size_t k = 0; k < idx.size(); ++k)
            require(idx[k] < factors_[k].levels.size(), "cells",
                    "level index out of range for factor '" + factors_[k].name + "'");
        require(finite(v), "cells", "cell values must be finite");
    }
}

std::size_t GridTable::factor_index(std::string_view name) const {
    for (std::size_t i = 0; i < factors_.size(); ++i)
        if (factors_[i].name == name) return i;
    throw AnalysisError("factor '" + std::string(name) + "' not in grid");
}

bool GridTable::has_factor(std::string_view name) const noexcept {
    return std::any_of(factors_.begin(), factors_.end(), [&](const Factor& f) { return f.name == name; });
}

std::optional<double> GridTable::at(const CellIndex& idx) const {
    if (auto it = cells_.find(idx); it != cells_.end()) return it->second;
    return std::nullopt;
}

bool GridTable::balanced() const noexcept {
    std::size_t full = 1;
    for (const auto& f : factors_) full *= f.levels.size();
    return cells_.size() == full;
}

std::string_view to_string(AnovaMethod m) noexcept {
    return m == AnovaMethod::ClassicalBalanced ? "classical-balanced" : "type3-regression";
}

AnovaMethod parse_anova_method(std::string_view text) {
    if (text == "classical-balanced") return AnovaMethod::ClassicalBalanced;
    if (text == "type3-regression") return AnovaMethod::Type3Regression;
    throw ValidationError("method", "unknown ANOVA method '" + std::string(text) + "'");
}

VarianceDecomposition::VarianceDecomposition(std::vector<VarianceTerm> terms, double ss_total,
                                             AnovaMethod method, std::size_t n_cells,
                                             std::vector<std::string> notes)
    : terms_(std::move(terms)), ss_total_(ss_total), method_(method), n_cells_(n_cells), notes_(std::move(notes)) {
    require(finite(ss_total_) && ss_total_ >= 0.0, "ss_total", "must be non-negative");
    const bool non_orthogonal = has_note("non-orthogonal");
    const double tol = 1e-9 * std::max(ss_total_, 1.0);
    double ss_sum = 0.0;
    double frac_sum = 0.0;
    for (const auto& t : terms_) {
        require(finite(t.sum_of_squares), "terms", "sum of squares for '" + t.name + "' is not finite");
        // Unbalanced grids may push the subtraction residual below zero; that
        // case is carried with a non-orthogonality note.
        require(non_orthogonal || t.sum_of_squares >= -tol, "terms",
                "negative sum of squares for '" + t.name + "'");
        ss_sum += t.sum_of_squares;
        frac_sum += t.fraction;
    }
    require(std::abs(ss_sum - ss_total_) <= tol, "ss_total", "terms do not add up to the total");
    if (ss_total_ > 0.0)
        require(std::abs(frac_sum - 1.0) <= 1e-9, "terms", "fractions must sum to 1");
}

VarianceDecomposition VarianceDecomposition::from_sums(const std::vector<std::pair<std::string, double>>& ss,
                                                       double ss_total, AnovaMethod method, std::size_t n_cells,
                                                       std::vector<std::string> notes) {
    std::vector<VarianceTerm> terms;
    terms.reserve(ss.size());
    const bool degenerate = !(ss_total > 0.0);
    const double tol = 1e-12 * std::max(ss_total, 1.0);
    for (const auto& [name, value] : ss) {
        // Snap round-off negatives to exact zero.
        const double v = (value < 0.0 && value > -tol) ? 0.0 : value;
        terms.push_back({name, degenerate ? 0.0 : v, degenerate ? 0.0 : v / ss_total});
    }
    if (degenerate) {
        ss_total = 0.0;
        notes.emplace_back("degenerate: zero total variance");
    }
    return VarianceDecomposition(std::move(terms), ss_total, method, n_cells, std::move(notes));
}

bool VarianceDecomposition::has_note(std::string_view prefix) const noexcept {
    return std::any_of(notes_.begin(), notes_.end(),
                       [&](const std::string& n) { return n.rfind(prefix, 0) == 0; });
}

const VarianceTerm& VarianceDecomposition::term(std::string_view name) const {
    for (const auto& t : terms_)
        if (t.name == name) return t;
    throw AnalysisError("no term '" + std::string(name) + "' in decomposition");
}

std::string_view to_string(MetricDirection d) noexcept {
    return d == MetricDirection::Decreasing ? "decreasing" : "increasing";
}

MetricDirection parse_direction(std::string_view text) {
    if (text == "decreasing") return MetricDirection::Decreasing;
    if (text == "increasing") return MetricDirection::Increasing;
    throw ValidationError("metric_direction", "unknown direction '" + std::string(text) + "'");
}

LogLinearFit::LogLinearFit(double slope, double intercept, double r2, TokenCount dmin, TokenCount dmax,
                           MetricDirection direction)
    : slope_(slope), intercept_(intercept), r2_(r2), dmin_(dmin), dmax_(dmax), direction_(direction) {
    require(finite(slope_), "slope", "must be finite");
    require(finite(intercept_), "intercept", "must be finite");
    require(finite(r2_) && r2_ >= 0.0 && r2_ <= 1.0, "r_squared", "must lie in [0, 1]");
    require(dmin_ > 0, "domain", "lower bound must be positive");
    require(dmin_ < dmax_, "domain", "lower bound must be below upper bound");
}

bool LogLinearFit::direction_mismatch() const noexcept {
    if (std::abs(slope_) <= kSlopeEpsilon) return false;
    return direction_ == MetricDirection::Decreasing ? slope_ > 0.0 : slope_ < 0.0;
}

double LogLinearFit::evaluate(double tokens) const {
    if (!(tokens > 0.0)) throw ValidationError("tokens", "must be positive");
    return slope_ * std::log(tokens) + intercept_;
}

MultiplierResult::MultiplierResult(double d_equiv, TokenCount reference, bool extrapolated, double factor,
                                   bool mismatch)
    : d_equiv_(d_equiv),
      multiplier_(0.0),
      reference_(reference),
      extrapolated_(extrapolated),
      factor_(factor),
      mismatch_(mismatch) {
    require(finite(d_equiv_) && d_equiv_ > 0.0, "equivalent_tokens", "must be positive and finite");
    require(reference_ > 0, "reference_tokens", "must be positive");
    require(finite(factor_) && factor_ >= 1.0, "extrapolation_factor", "must be at least 1");
    require(extrapolated_ || factor_ == 1.0, "extrapolation_factor", "must be 1 inside the fitted domain");
    multiplier_ = d_equiv_ / static_cast<double>(reference_);
}

}  // namespace gridlex
