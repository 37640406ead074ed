#include "attnbasin/serialization.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <sstream>

#include "attnbasin/error.hpp"

namespace attnbasin {

using nlohmann::json;

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json vector_to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

Eigen::VectorXd vector_from_json(const json& j) {
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json basin_to_json(const BasinReport& b) {
    return {{"is_basin", b.is_basin},
            {"edge_min", b.edge_min},
            {"middle_mean", b.middle_mean},
            {"depth", b.depth},
            {"argmin_slot", b.argmin_slot + 1}};
}

json profile_to_json(const AttentionProfile& p) {
    json history = json::array();
    for (const auto& c : p.convergence_history) history.push_back({{"n", c.n}, {"delta", c.delta}});
    json j = {
        {"format_version", kProfileFormatVersion},
        {"model_id", p.model_id},
        {"k", p.k()},
        {"n_samples", p.n_samples},
        {"aggregation", aggregation_name(p.mode)},
        {"scores", vector_to_json(p.scores)},
        {"convergence_history", std::move(history)},
    };
    j["layer_selection"] = p.layer_selection.cross_layer_mean ? json("cross-layer-mean") : json(p.layer_selection.layer);
    j["basin"] = p.k() >= 3 && p.scores.mean() > 0.0 ? basin_to_json(detect_basin(p)) : json(nullptr);
    return j;
}

AttentionProfile profile_from_json(const json& j) {
    try {
        if (j.at("format_version").get<int>() != kProfileFormatVersion) {
            throw FormatError("unsupported profile format_version");
        }
        AttentionProfile p;
        p.model_id = j.at("model_id").get<std::string>();
        p.n_samples = j.at("n_samples").get<std::size_t>();
        p.mode = parse_aggregation(j.at("aggregation").get<std::string>());
        p.scores = vector_from_json(j.at("scores"));
        const json& sel = j.at("layer_selection");
        if (sel.is_string()) {
            if (sel.get<std::string>() != "cross-layer-mean") throw FormatError("unknown layer_selection");
            p.layer_selection = LayerSelection::all_layers();
        } else {
            p.layer_selection = LayerSelection::single(sel.get<Eigen::Index>());
        }
        for (const json& c : j.at("convergence_history")) {
            p.convergence_history.push_back({c.at("n").get<std::size_t>(), c.at("delta").get<double>()});
        }
        if (j.at("k").get<Eigen::Index>() != p.scores.size()) throw FormatError("profile k disagrees with scores");
        for (Eigen::Index i = 0; i < p.scores.size(); ++i) {
            if (!(p.scores(i) >= 0.0)) throw FormatError("profile scores must be non-negative");
        }
        return p;
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad profile JSON: ") + e.what());
    }
}

json regime_to_json(const LayerRegimeReport& r) {
    return {{"f_hat", vector_to_json(r.f_hat)},
            {"positional_variance", r.positional_variance},
            {"content_variance", vector_to_json(r.content_variance)},
            {"rho", vector_to_json(r.rho)},
            {"L_star", r.l_star ? json(*r.l_star) : json(nullptr)},
            {"variance_convention", "population"}};
}

json ordering_to_json(const Ordering& o) {
    json positions = json::object();
    for (std::size_t i = 0; i < o.ids.size(); ++i) positions[o.ids[i]] = i + 1;
    json j = {{"strategy", strategy_name(o.strategy)}, {"order", o.ids}, {"positions", std::move(positions)}};
    if (o.seed) j["seed"] = *o.seed;
    return j;
}

json validation_to_json(const ValidationReport& r) {
    return {{"pass", r.pass},
            {"tolerance", r.tolerance},
            {"max_row_residual", r.max_row_residual},
            {"out_of_range_values", r.out_of_range_values},
            {"causal_violations", r.causal_violations},
            {"shape_ok", r.shape_ok},
            {"spans_in_range", r.spans_in_range},
            {"spans_disjoint", r.spans_disjoint},
            {"docs_ordered", r.docs_ordered},
            {"rows_in_query", r.rows_in_query},
            {"permutation_ok", r.permutation_ok},
            {"messages", r.messages}};
}

json monotonicity_to_json(const MonotonicityReport& r) {
    return {{"trials", r.trials},
            {"in_hypothesis", r.in_hypothesis},
            {"out_of_hypothesis", r.out_of_hypothesis},
            {"violations",
             {{"positive_target_gradient", r.violations_positive},
              {"nonpositive_other_gradient", r.violations_nonpositive},
              {"target_dominance", r.violations_dominance},
              {"total", r.violations()}}},
            {"min_dominance_ratio", std::isfinite(r.min_dominance_ratio) ? json(r.min_dominance_ratio) : json(nullptr)}};
}

json gradient_check_to_json(const GradientCheckReport& r) {
    return {{"configs", r.configs}, {"step", r.step}, {"max_relative_error", r.max_relative_error}};
}

json permutation_report_to_json(const PermutationReport& r) {
    json trials = json::array();
    for (const auto& t : r.trials) {
        trials.push_back({{"permutation", t.permutation},
                          {"alpha_bar", vector_to_json(t.alpha_bar)},
                          {"group", group_name(t.group)},
                          {"outcome", t.outcome}});
    }
    return {{"rule", group_rule_name(r.rule)},
            {"relevant", r.relevant},
            {"trials", std::move(trials)},
            {"relevant_top_count", r.relevant_top_count},
            {"noise_top_count", r.noise_top_count},
            {"relevant_top_mean", optional_number(r.relevant_top_mean)},
            {"noise_top_mean", optional_number(r.noise_top_mean)},
            {"warnings", r.warnings}};
}

json layerwise_to_json(const LayerwiseReport& r) {
    json profiles = json::array();
    for (Eigen::Index l = 0; l < r.profiles.rows(); ++l) profiles.push_back(vector_to_json(r.profiles.row(l).transpose()));
    return {{"profiles", std::move(profiles)}, {"outcome", vector_to_json(r.outcome)}};
}

json strategy_attention_to_json(const std::vector<StrategyAttention>& rows) {
    json out = json::array();
    for (const auto& r : rows) {
        out.push_back({{"strategy", strategy_name(r.strategy)},
                       {"relevant_mean", r.relevant_mean},
                       {"noise_mean", r.noise_mean}});
    }
    return out;
}

json params_to_json(const SyntheticBasinParams& p) {
    return {{"k", p.k},
            {"layers", p.num_layers},
            {"f_base", p.f_base},
            {"f_curvature", p.f_curvature},
            {"noise_scale", p.noise_scale},
            {"layer_noise_growth", p.layer_noise_growth},
            {"tokens_per_block", p.tokens_per_block},
            {"template_tokens", p.template_tokens},
            {"query_tokens", p.query_tokens},
            {"query_mass", p.query_mass},
            {"heads", p.num_heads},
            {"head_mode", p.head_mode == HeadMode::mean ? "mean" : "per_head"},
            {"seed", p.seed},
            {"model_id", p.model_id}};
}

std::vector<ScoredDoc> read_docs_jsonl(std::istream& in) {
    std::vector<ScoredDoc> docs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            ScoredDoc d;
            d.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
            d.relevance = j.at("score").get<double>();
            if (j.contains("text") && !j.at("text").is_null()) d.payload = j.at("text").get<std::string>();
            docs.push_back(std::move(d));
        } catch (const json::exception& e) {
            throw FormatError("docs line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return docs;
}

std::string permutation_table(const PermutationReport& r) {
    std::ostringstream os;
    os << "permutation      group          outcome\n";
    char buf[96];
    for (const auto& t : r.trials) {
        std::string perm;
        for (std::size_t i = 0; i < t.permutation.size(); ++i) perm += (i ? " " : "") + std::to_string(t.permutation[i]);
        std::snprintf(buf, sizeof(buf), "%-16s %-14s %.6f\n", perm.c_str(), group_name(t.group), t.outcome);
        os << buf;
    }
    auto mean_line = [&](const char* name, const std::optional<double>& v) {
        if (v) {
            std::snprintf(buf, sizeof(buf), "mean %-26s %.6f\n", name, *v);
        } else {
            std::snprintf(buf, sizeof(buf), "mean %-26s -\n", name);
        }
        os << buf;
    };
    mean_line("relevant_top", r.relevant_top_mean);
    mean_line("noise_top", r.noise_top_mean);
    os << "rule: " << group_rule_name(r.rule) << "\n";
    return os.str();
}

}  // namespace attnbasin
