#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "gridlex/core.hpp"
#include "gridlex/ingest.hpp"
#include "gridlex/serialize.hpp"

namespace gridlex {

using OrderedJson = nlohmann::ordered_json;

/// One table cell. Doubles are written in shortest round-trip form.
using Value = std::variant<std::monostate, std::string, double, std::int64_t, bool>;

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<Value>> rows;

    void add(std::vector<Value> row);
};

std::string format_value(const Value& v);
void write_csv(std::ostream& out, const Table& t);
void write_text(std::ostream& out, const Table& t);
/// Array of row objects, keys in column order.
OrderedJson table_to_json(const Table& t);

/// A named output table together with the operation that produced it.
struct Artifact {
    std::string stem;
    std::string operation;
    Table table;
};

/// Runs one analysis on the dataset. `op` names the analysis kind and
/// `params` its settings; both the CLI verbs and the report pipeline go
/// through here. `dataset` may be null for analyses that need no runs.
std::vector<Artifact> run_analysis(const std::string& op, const Json& params, const Dataset* dataset);

/// Analysis kinds understood by run_analysis.
const std::vector<std::string>& analysis_kinds();

struct Heatmap {
    std::string row_factor;
    std::string col_factor;
    std::vector<std::string> row_levels;
    std::vector<std::string> col_levels;
    /// Percent above the best cell, capped; empty for missing cells.
    std::vector<std::vector<std::optional<double>>> pct;
    std::vector<std::vector<std::optional<double>>> raw;
    CellIndex best;
    double best_value;
    std::optional<CellIndex> anchor;
    std::optional<double> anchor_value;
    /// 100 (anchor - best) / best, uncapped.
    std::optional<double> anchor_gap_pct;
};

/// 2-D grid normalised to percent above its best (lowest) cell.
Heatmap emit_heatmap_data(const GridTable& grid, double cap, const std::optional<CellIndex>& anchor = std::nullopt);

struct PipelineResult {
    std::vector<std::string> files;
};

/// Reads a config, runs its analyses, and writes `<out>/<stem>.csv`,
/// `<out>/<stem>.json` per artifact plus `manifest.json`. The output depends
/// only on the inputs, so reruns are byte-identical.
PipelineResult run_pipeline(const std::filesystem::path& config_path, const std::filesystem::path& out_dir);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace gridlex
