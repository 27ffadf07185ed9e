#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gridlex/core.hpp"

namespace gridlex {

/// Checkpoint-selection rule: lowest loss for a language, or highest accuracy
/// for a benchmark.
struct SelectionRule {
    enum class Kind { MinValLoss, PeakAccuracy };

    Kind kind;
    std::string label;

    /// "min-vl:<lang>" or "peak-acc:<bench>".
    static SelectionRule parse(std::string_view text);
    MetricSelector metric() const;
    std::string str() const;
};

struct SelectionResult {
    std::string run_id;
    SelectionRule rule;
    std::size_t checkpoint_index;
    double r_at_selection;
    double value_at_selection;
};

/// First checkpoint attaining the optimum; ties go to the smallest R.
SelectionResult select_checkpoint(const RunRecord& run, const SelectionRule& rule);

struct ProxyGap {
    double acc_at_min_vl;
    double peak_acc;
    /// peak_acc - acc_at_min_vl, never negative.
    double gap;
    std::size_t min_vl_index;
    std::size_t peak_index;
};

ProxyGap proxy_gap(const RunRecord& run, const std::string& loss_language, const std::string& accuracy_metric);

struct ProxyStats {
    /// Empty when either coordinate has zero variance.
    std::optional<double> pearson_r;
    double rmse_pct;
    double median_abs_gap_pct;
    std::size_t n;
    double frac_peak_after_minvl;
};

struct AccuracyPair {
    double acc_at_min_vl;
    double peak_acc;
};

struct CheckpointPositions {
    std::size_t min_vl_index;
    std::size_t peak_index;
};

/// Agreement between min-VL selection and oracle peak accuracy. Gaps are
/// reported in percentage points (accuracy x 100); "peak after min-VL" uses
/// strict index order.
ProxyStats proxy_stats(const std::vector<AccuracyPair>& pairs, const std::vector<CheckpointPositions>& positions);

}  // namespace gridlex
