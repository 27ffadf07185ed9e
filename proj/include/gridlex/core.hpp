#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gridlex/error.hpp"

namespace gridlex {

using TokenCount = std::int64_t;

inline constexpr int kDefaultBaseWidth = 512;

/// One model size. The width multiplier is d_model / d_base; the proxy scale
/// has multiplier 1 and no scale may be narrower than the proxy.
class ScaleSpec {
public:
    ScaleSpec(std::string name, int d_model, TokenCount n_nonemb, int d_base = kDefaultBaseWidth);

    const std::string& name() const noexcept { return name_; }
    int d_model() const noexcept { return d_model_; }
    int d_base() const noexcept { return d_base_; }
    TokenCount n_nonemb() const noexcept { return n_nonemb_; }
    double width_multiplier() const noexcept { return static_cast<double>(d_model_) / d_base_; }

    bool operator==(const ScaleSpec&) const = default;

private:
    std::string name_;
    int d_model_;
    TokenCount n_nonemb_;
    int d_base_;
};

/// Base (proxy-width) optimizer hyperparameters.
struct BaseHP {
    BaseHP(double weight_decay, double learning_rate);

    double weight_decay;
    double learning_rate;

    bool operator==(const BaseHP&) const = default;
};

/// Hyperparameters actually applied at a target width.
struct EffectiveHP {
    EffectiveHP(double weight_decay, double learning_rate);

    double weight_decay;
    double learning_rate;

    bool operator==(const EffectiveHP&) const = default;
};

/// Split of a fixed token budget between the repeated low-resource corpus and
/// fresh high-resource data. When R_max * D_LR exceeds D the fraction is
/// pinned to 1 and `capped` is set.
class MixBudget {
public:
    MixBudget(TokenCount total_tokens, TokenCount lr_corpus_tokens, int repetition_budget,
              double arabic_fraction, TokenCount hr_tokens, bool capped);

    TokenCount total_tokens() const noexcept { return total_; }
    TokenCount lr_corpus_tokens() const noexcept { return lr_corpus_; }
    int repetition_budget() const noexcept { return r_max_; }
    /// Per-sample probability of drawing from the low-resource corpus (alpha).
    double lr_fraction() const noexcept { return alpha_; }
    TokenCount hr_tokens() const noexcept { return hr_; }
    bool capped() const noexcept { return capped_; }

    bool operator==(const MixBudget&) const = default;

private:
    TokenCount total_;
    TokenCount lr_corpus_;
    int r_max_;
    double alpha_;
    TokenCount hr_;
    bool capped_;
};

/// Reference to one metric in a checkpoint: "val_loss.<lang>" or "acc.<bench>".
struct MetricSelector {
    enum class Kind { ValLoss, Accuracy };

    Kind kind;
    std::string label;

    static MetricSelector parse(std::string_view text);
    std::string str() const;
    /// Loss metrics improve downward, accuracies upward.
    bool lower_is_better() const noexcept { return kind == Kind::ValLoss; }

    bool operator==(const MetricSelector&) const = default;
};

class CheckpointMetric {
public:
    CheckpointMetric(double repetition_count, std::map<std::string, double> val_loss,
                     std::map<std::string, double> accuracy);

    double repetition_count() const noexcept { return r_; }
    const std::map<std::string, double>& val_loss() const noexcept { return val_loss_; }
    const std::map<std::string, double>& accuracy() const noexcept { return accuracy_; }

    std::optional<double> get(const MetricSelector& metric) const;

    bool operator==(const CheckpointMetric&) const = default;

private:
    double r_;
    std::map<std::string, double> val_loss_;
    std::map<std::string, double> accuracy_;
};

enum class Paradigm { MonolingualBasic, MonolingualTuned, BilingualBasic, BilingualTuned, MonolingualSweep };

std::string_view to_string(Paradigm p) noexcept;
Paradigm parse_paradigm(std::string_view text);
bool is_bilingual(Paradigm p) noexcept;

class RunRecord {
public:
    RunRecord(std::string run_id, std::string scale, Paradigm paradigm, BaseHP base_hp,
              std::optional<int> r_max, TokenCount d_lr, std::vector<CheckpointMetric> checkpoints);

    const std::string& run_id() const noexcept { return run_id_; }
    const std::string& scale() const noexcept { return scale_; }
    Paradigm paradigm() const noexcept { return paradigm_; }
    const BaseHP& base_hp() const noexcept { return base_hp_; }
    const std::optional<int>& r_max() const noexcept { return r_max_; }
    TokenCount d_lr() const noexcept { return d_lr_; }
    const std::vector<CheckpointMetric>& checkpoints() const noexcept { return checkpoints_; }

    bool operator==(const RunRecord&) const = default;

private:
    std::string run_id_;
    std::string scale_;
    Paradigm paradigm_;
    BaseHP base_hp_;
    std::optional<int> r_max_;
    TokenCount d_lr_;
    std::vector<CheckpointMetric> checkpoints_;
};

/// A named factor with ordered level labels.
struct Factor {
    std::string name;
    std::vector<std::string> levels;

    bool operator==(const Factor&) const = default;
};

using CellIndex = std::vector<std::size_t>;

/// Possibly partial factorial table: at most one value per level tuple.
class GridTable {
public:
    GridTable(std::vector<Factor> factors, std::map<CellIndex, double> cells, std::string metric_name);

    const std::vector<Factor>& factors() const noexcept { return factors_; }
    const std::map<CellIndex, double>& cells() const noexcept { return cells_; }
    const std::string& metric_name() const noexcept { return metric_; }

    std::size_t size() const noexcept { return cells_.size(); }
    std::size_t rank() const noexcept { return factors_.size(); }
    /// Throws AnalysisError when the factor does not exist.
    std::size_t factor_index(std::string_view name) const;
    bool has_factor(std::string_view name) const noexcept;
    std::optional<double> at(const CellIndex& idx) const;
    /// True when every level combination is populated.
    bool balanced() const noexcept;

    bool operator==(const GridTable&) const = default;

private:
    std::vector<Factor> factors_;
    std::map<CellIndex, double> cells_;
    std::string metric_;
};

struct VarianceTerm {
    std::string name;
    double sum_of_squares;
    double fraction;

    bool operator==(const VarianceTerm&) const = default;
};

enum class AnovaMethod { ClassicalBalanced, Type3Regression };

std::string_view to_string(AnovaMethod m) noexcept;
AnovaMethod parse_anova_method(std::string_view text);

/// Sums of squares per term. Fractions are relative to `ss_total`; the last
/// term is conventionally "residual". A degenerate decomposition has zero total
/// variance and reports every fraction as 0.
class VarianceDecomposition {
public:
    VarianceDecomposition(std::vector<VarianceTerm> terms, double ss_total, AnovaMethod method,
                          std::size_t n_cells, std::vector<std::string> notes = {});

    /// Builds terms from raw sums of squares, deriving fractions and the
    /// degenerate flag. `ss_total` must equal the sum of `ss`.
    static VarianceDecomposition from_sums(const std::vector<std::pair<std::string, double>>& ss,
                                           double ss_total, AnovaMethod method, std::size_t n_cells,
                                           std::vector<std::string> notes = {});

    const std::vector<VarianceTerm>& terms() const noexcept { return terms_; }
    double ss_total() const noexcept { return ss_total_; }
    AnovaMethod method() const noexcept { return method_; }
    std::size_t n_cells() const noexcept { return n_cells_; }
    const std::vector<std::string>& notes() const noexcept { return notes_; }
    bool degenerate() const noexcept { return ss_total_ == 0.0; }
    bool has_note(std::string_view prefix) const noexcept;

    /// Throws AnalysisError for an unknown term.
    const VarianceTerm& term(std::string_view name) const;
    double fraction(std::string_view name) const { return term(name).fraction; }

    bool operator==(const VarianceDecomposition&) const = default;

private:
    std::vector<VarianceTerm> terms_;
    double ss_total_;
    AnovaMethod method_;
    std::size_t n_cells_;
    std::vector<std::string> notes_;
};

enum class MetricDirection { Decreasing, Increasing };

std::string_view to_string(MetricDirection d) noexcept;
MetricDirection parse_direction(std::string_view text);

inline constexpr double kSlopeEpsilon = 1e-6;

/// y = slope * ln(D) + intercept over D in [domain_min, domain_max] tokens.
class LogLinearFit {
public:
    LogLinearFit(double slope, double intercept, double r_squared, TokenCount domain_min,
                 TokenCount domain_max, MetricDirection direction);

    double slope() const noexcept { return slope_; }
    double intercept() const noexcept { return intercept_; }
    double r_squared() const noexcept { return r2_; }
    TokenCount domain_min() const noexcept { return dmin_; }
    TokenCount domain_max() const noexcept { return dmax_; }
    MetricDirection direction() const noexcept { return direction_; }
    /// Slope sign disagrees with the declared direction (beyond kSlopeEpsilon).
    bool direction_mismatch() const noexcept;

    double evaluate(double tokens) const;

    bool operator==(const LogLinearFit&) const = default;

private:
    double slope_;
    double intercept_;
    double r2_;
    TokenCount dmin_;
    TokenCount dmax_;
    MetricDirection direction_;
};

inline constexpr TokenCount kReferenceTokens = 200'000'000;

class MultiplierResult {
public:
    MultiplierResult(double equivalent_tokens, TokenCount reference_tokens, bool extrapolated,
                     double extrapolation_factor, bool direction_mismatch = false);

    double equivalent_tokens() const noexcept { return d_equiv_; }
    /// equivalent_tokens / reference_tokens.
    double multiplier() const noexcept { return multiplier_; }
    TokenCount reference_tokens() const noexcept { return reference_; }
    bool extrapolated() const noexcept { return extrapolated_; }
    double extrapolation_factor() const noexcept { return factor_; }
    bool direction_mismatch() const noexcept { return mismatch_; }

    bool operator==(const MultiplierResult&) const = default;

private:
    double d_equiv_;
    double multiplier_;
    TokenCount reference_;
    bool extrapolated_;
    double factor_;
    bool mismatch_;
};

}  // namespace gridlex
