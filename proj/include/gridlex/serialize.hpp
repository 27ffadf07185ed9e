#pragma once

// JSON encodings for the domain types. Decoding goes through the validating
// constructors, so a malformed document surfaces as ValidationError naming the
// offending key.

#include <json.hpp>

#include "gridlex/core.hpp"

namespace gridlex {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

Json to_json(const ScaleSpec& s);
Json to_json(const BaseHP& hp);
Json to_json(const EffectiveHP& hp);
Json to_json(const MixBudget& b);
Json to_json(const CheckpointMetric& c);
Json to_json(const RunRecord& r);
Json to_json(const GridTable& g);
Json to_json(const VarianceDecomposition& v);
Json to_json(const LogLinearFit& f);
Json to_json(const MultiplierResult& m);

ScaleSpec scale_from_json(const Json& j, int d_base = kDefaultBaseWidth);
BaseHP base_hp_from_json(const Json& j);
EffectiveHP effective_hp_from_json(const Json& j);
MixBudget mix_budget_from_json(const Json& j);
CheckpointMetric checkpoint_from_json(const Json& j);
RunRecord run_from_json(const Json& j);
GridTable grid_from_json(const Json& j);
VarianceDecomposition decomposition_from_json(const Json& j);
LogLinearFit fit_from_json(const Json& j);
MultiplierResult multiplier_from_json(const Json& j);

}  // namespace gridlex
