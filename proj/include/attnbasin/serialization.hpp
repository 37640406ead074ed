#pragma once

// JSON documents exchanged by the CLI: profiles (.profile.json), regime
// reports (.regime.json), orderings, experiment reports, and the JSON-lines
// document list consumed by rerank.

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "attnbasin/dump_io.hpp"
#include "attnbasin/harness.hpp"
#include "attnbasin/layer_scope.hpp"
#include "attnbasin/profiler.hpp"
#include "attnbasin/reranker.hpp"
#include "attnbasin/theory_lab.hpp"

namespace attnbasin {

inline constexpr int kProfileFormatVersion = 1;

nlohmann::json profile_to_json(const AttentionProfile& profile);
AttentionProfile profile_from_json(const nlohmann::json& j);

nlohmann::json basin_to_json(const BasinReport& basin);
nlohmann::json regime_to_json(const LayerRegimeReport& report);
nlohmann::json ordering_to_json(const Ordering& ordering);
nlohmann::json validation_to_json(const ValidationReport& report);
nlohmann::json monotonicity_to_json(const MonotonicityReport& report);
nlohmann::json gradient_check_to_json(const GradientCheckReport& report);
nlohmann::json permutation_report_to_json(const PermutationReport& report);
nlohmann::json layerwise_to_json(const LayerwiseReport& report);
nlohmann::json strategy_attention_to_json(const std::vector<StrategyAttention>& rows);
nlohmann::json params_to_json(const SyntheticBasinParams& params);

nlohmann::json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);

// One {"id", "score", "text"?} object per non-blank line.
std::vector<ScoredDoc> read_docs_jsonl(std::istream& in);

// Plain-text table mirroring the permutation study.
std::string permutation_table(const PermutationReport& report);

}  // namespace attnbasin
