#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gridlex/core.hpp"

namespace gridlex {

/// Validated collection of runs plus the scale table they reference.
class Dataset {
public:
    Dataset(std::vector<RunRecord> runs, std::map<std::string, ScaleSpec> scales,
            int schema_version = 1);

    const std::vector<RunRecord>& runs() const noexcept { return runs_; }
    const std::map<std::string, ScaleSpec>& scales() const noexcept { return scales_; }
    int schema_version() const noexcept { return schema_version_; }

    /// Throws AnalysisError for unknown names.
    const ScaleSpec& scale(const std::string& name) const;
    const RunRecord& run(const std::string& run_id) const;

    bool operator==(const Dataset&) const = default;

private:
    std::vector<RunRecord> runs_;
    std::map<std::string, ScaleSpec> scales_;
    int schema_version_;
};

struct LoadOptions {
    /// Scale table; empty means "scales.jsonl" next to the run file.
    std::filesystem::path scales_path;
    /// Collect per-record errors instead of failing on the first one.
    bool lenient = false;
    int d_base = kDefaultBaseWidth;
};

struct RecordError {
    std::size_t line;
    std::string field;
    std::string message;
};

struct LoadReport {
    Dataset dataset;
    std::vector<RecordError> errors;
};

std::map<std::string, ScaleSpec> load_scales(const std::filesystem::path& path, int d_base = kDefaultBaseWidth);

/// Strict mode throws IngestError on the first bad record.
Dataset load_dataset(const std::filesystem::path& path, const LoadOptions& opts = {});
/// Lenient-aware variant that always returns the per-record error list.
LoadReport load_dataset_report(const std::filesystem::path& path, const LoadOptions& opts = {});

void save_dataset(const Dataset& dataset, const std::filesystem::path& runs_path,
                  const std::filesystem::path& scales_path);
void save_scales(const std::map<std::string, ScaleSpec>& scales, const std::filesystem::path& path);

enum class CellReducer { MinOverCheckpoints, MaxOverCheckpoints, AtMinValLoss };

CellReducer parse_reducer(std::string_view text);

/// Restricts which runs feed a grid. Empty members match everything.
struct RunFilter {
    std::set<std::string> scales;
    std::set<Paradigm> paradigms;
    std::set<TokenCount> d_lr;
    std::set<int> r_max;

    bool matches(const RunRecord& r) const;
};

/// Factor names understood by extract_grid.
inline const std::vector<std::string> kGridFactors = {"scale", "paradigm", "lambda", "eta", "hp", "rmax", "d_lr"};

struct GridRequest {
    MetricSelector metric;
    std::vector<std::string> factors;
    CellReducer reducer = CellReducer::MinOverCheckpoints;
    /// Loss used by AtMinValLoss to pick the checkpoint.
    MetricSelector selection_loss{MetricSelector::Kind::ValLoss, "ar"};
    RunFilter filter;
};

/// Reduce every selected run to one value and place it in a factor grid.
/// Levels are sorted numerically (scales by size), so the result does not
/// depend on the order runs appear in the file.
GridTable extract_grid(const Dataset& dataset, const GridRequest& request);

/// Formats token counts as 25M / 2B when exact, digits otherwise.
std::string format_tokens(TokenCount tokens);
/// Inverse of format_tokens; also takes K and decimal prefixes such as 12.17B.
/// `field` names the input in the ValidationError raised on bad text.
TokenCount parse_tokens(std::string_view text, const std::string& field = "tokens");
/// Shortest decimal form that round-trips through strtod.
std::string format_number(double v);

/// Reduce a single run's series; used by extract_grid and the selection module.
double reduce_run(const RunRecord& run, const MetricSelector& metric, CellReducer reducer,
                  const MetricSelector& selection_loss);

}  // namespace gridlex
