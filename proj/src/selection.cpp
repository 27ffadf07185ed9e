#include "gridlex/selection.hpp"

#include <cmath>

#include "gridlex/stats.hpp"

namespace gridlex {

SelectionRule SelectionRule::parse(std::string_view text) {
    const auto colon = text.find(':');
    if (colon == std::string_view::npos || colon + 1 >= text.size())
        throw ValidationError("rule", "expected 'min-vl:<lang>' or 'peak-acc:<bench>'");
    const auto head = text.substr(0, colon);
    std::string label(text.substr(colon + 1));
    if (head == "min-vl" || head == "min-val-loss") return {Kind::MinValLoss, std::move(label)};
    if (head == "peak-acc" || head == "peak-accuracy") return {Kind::PeakAccuracy, std::move(label)};
    throw ValidationError("rule", "unknown selection rule '" + std::string(head) + "'");
}

MetricSelector SelectionRule::metric() const {
    return {kind == Kind::MinValLoss ? MetricSelector::Kind::ValLoss : MetricSelector::Kind::Accuracy, label};
}

std::string SelectionRule::str() const { return (kind == Kind::MinValLoss ? "min-vl:" : "peak-acc:") + label; }

SelectionResult select_checkpoint(const RunRecord& run, const SelectionRule& rule) {
    const auto metric = rule.metric();
    const bool minimize = rule.kind == SelectionRule::Kind::MinValLoss;
    const auto& cps = run.checkpoints();
    std::size_t best_i = 0;
    double best = 0.0;
    for (std::size_t i = 0; i < cps.size(); ++i) {
        auto v = cps[i].get(metric);
        if (!v)
            throw AnalysisError("run '" + run.run_id() + "' lacks metric '" + metric.str() + "' at checkpoint " +
                                std::to_string(i));
        // Strict comparison keeps the earliest checkpoint on ties.
        if (i == 0 || (minimize ? *v < best : *v > best)) best = *v, best_i = i;
    }
    return {run.run_id(), rule, best_i, cps[best_i].repetition_count(), best};
}

ProxyGap proxy_gap(const RunRecord& run, const std::string& loss_language, const std::string& accuracy_metric) {
    const auto at_vl = select_checkpoint(run, {SelectionRule::Kind::MinValLoss, loss_language});
    const auto peak = select_checkpoint(run, {SelectionRule::Kind::PeakAccuracy, accuracy_metric});
    const MetricSelector acc{MetricSelector::Kind::Accuracy, accuracy_metric};
    const double acc_at_vl = *run.checkpoints()[at_vl.checkpoint_index].get(acc);
    return {acc_at_vl, peak.value_at_selection, peak.value_at_selection - acc_at_vl, at_vl.checkpoint_index,
            peak.checkpoint_index};
}

ProxyStats proxy_stats(const std::vector<AccuracyPair>& pairs, const std::vector<CheckpointPositions>& positions) {
    if (pairs.empty()) throw AnalysisError("proxy_stats needs at least one pair");
    if (positions.size() != pairs.size())
        throw AnalysisError("proxy_stats: pairs and checkpoint positions differ in length");
    const auto n = static_cast<Eigen::Index>(pairs.size());
    stats::Vector<double> at_vl(n), peak(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        at_vl[i] = pairs[static_cast<std::size_t>(i)].acc_at_min_vl;
        peak[i] = pairs[static_cast<std::size_t>(i)].peak_acc;
    }
    const stats::Vector<double> gap_pct = 100.0 * (peak - at_vl);
    std::size_t after = 0;
    for (const auto& p : positions) after += p.peak_index > p.min_vl_index ? 1 : 0;
    return {stats::pearson(at_vl, peak), std::sqrt(gap_pct.squaredNorm() / static_cast<double>(n)),
            stats::median(gap_pct.cwiseAbs()), pairs.size(),
            static_cast<double>(after) / static_cast<double>(pairs.size())};
}

}  // namespace gridlex
