#pragma once

// Desk-scale mechanism experiments: the exhaustive permutation study, the
// layer-wise reranking study, and a per-strategy attention comparison. The
// outcome proxy everywhere is the theory model's answer probability.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "attnbasin/block_stats.hpp"
#include "attnbasin/dump_io.hpp"
#include "attnbasin/reranker.hpp"
#include "attnbasin/theory.hpp"
#include "attnbasin/theory_lab.hpp"

namespace attnbasin {

// relevant_top when the relevant documents out-attend the noise documents:
//   max: max over relevant abar > max over noise abar
//   sum: sum over relevant abar > sum over noise abar
enum class GroupRule { max, sum };
enum class Group { relevant_top, noise_top };

const char* group_rule_name(GroupRule rule);
GroupRule parse_group_rule(const std::string& name);
const char* group_name(Group group);

Group assign_group(const Eigen::VectorXd& doc_alpha, const std::vector<bool>& relevant, GroupRule rule);

struct PermutationTrial {
    std::vector<std::size_t> permutation;  // permutation[slot] = document
    Eigen::VectorXd alpha_bar;             // cross-layer attention per document
    Group group = Group::relevant_top;
    double outcome = 0.0;                  // mean P(answer tied to a relevant document)
};

struct PermutationReport {
    GroupRule rule = GroupRule::max;
    std::vector<bool> relevant;
    std::vector<PermutationTrial> trials;
    std::optional<double> relevant_top_mean;
    std::optional<double> noise_top_mean;
    std::size_t relevant_top_count = 0;
    std::size_t noise_top_count = 0;
    std::vector<std::string> warnings;
};

struct PermutationOptions {
    GroupRule rule = GroupRule::max;
    std::size_t samples_per_permutation = 1;  // generator draws averaged per order
    AggregationMode mode = AggregationMode::token_sum;  // for dump input
};

// Document-order attention draws for a given presentation order.
using AttentionSource = std::function<std::vector<Eigen::VectorXd>(const std::vector<std::size_t>&)>;

PermutationReport permutation_experiment(const AttentionSource& source, const std::vector<bool>& relevant,
                                         const TheoryModeld& model, const PermutationOptions& options = {});
PermutationReport permutation_experiment(const SyntheticBasinParams& generator, const std::vector<bool>& relevant,
                                         const TheoryModeld& model, const PermutationOptions& options = {});
// Every one of the k! orders must be covered by at least one dump.
PermutationReport permutation_experiment(const std::vector<AttentionDump>& dumps, const std::vector<bool>& relevant,
                                         const TheoryModeld& model, const PermutationOptions& options = {});

std::vector<std::vector<std::size_t>> all_permutations(std::size_t k);

struct LayerwiseOptions {
    std::uint64_t seed = 0;  // relevance draws for the evaluation queries
};

struct LayerwiseReport {
    Eigen::MatrixXd profiles;  // [L, k] per-layer slot profile
    Eigen::VectorXd outcome;   // [L] mean P(answer of the top-relevance doc)
};

// For each layer, builds a profile from that layer of `profiling`, reranks
// every evaluation query with AttnRank, and scores it on that evaluation
// sample's own cross-layer attention. Both inputs are slot-ordered.
LayerwiseReport layerwise_rerank_experiment(const PositionStats& profiling, const PositionStats& evaluation,
                                            const TheoryModeld& model, const LayerwiseOptions& options = {});
LayerwiseReport layerwise_rerank_experiment(const std::vector<AttentionDump>& profiling,
                                            const std::vector<AttentionDump>& evaluation, const TheoryModeld& model,
                                            const LayerwiseOptions& options = {},
                                            AggregationMode mode = AggregationMode::token_sum);

struct StrategyAttention {
    Strategy strategy = Strategy::attnrank;
    double relevant_mean = 0.0;  // mean attention on relevant documents
    double noise_mean = 0.0;     // mean attention on noise documents
};

// Mean per-document attention on relevant vs noise documents under each
// ordering strategy. Relevant documents get higher retriever scores.
std::vector<StrategyAttention> strategy_attention_comparison(const PositionStats& evaluation,
                                                             const Eigen::VectorXd& profile,
                                                             std::size_t relevant_count, std::uint64_t seed);

struct Interval {
    double lower = 0.0;
    double upper = 0.0;
    bool overlaps(const Interval& other) const { return lower <= other.upper && other.lower <= upper; }
};

// Percentile bootstrap interval for the mean.
Interval bootstrap_mean_interval(const std::vector<double>& values, std::size_t resamples, double level,
                                 std::uint64_t seed);

}  // namespace attnbasin
