#include "attnbasin/harness.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "attnbasin/error.hpp"
#include "attnbasin/rng.hpp"

namespace attnbasin {

const char* group_rule_name(GroupRule rule) { return rule == GroupRule::max ? "max" : "sum"; }

GroupRule parse_group_rule(const std::string& name) {
    if (name == "max") return GroupRule::max;
    if (name == "sum") return GroupRule::sum;
    throw InvalidArgument("unknown grouping rule '" + name + "'");
}

const char* group_name(Group group) { return group == Group::relevant_top ? "relevant_top" : "noise_top"; }

Group assign_group(const Eigen::VectorXd& doc_alpha, const std::vector<bool>& relevant, GroupRule rule) {
    double rel = rule == GroupRule::max ? -INFINITY : 0.0;
    double noise = rule == GroupRule::max ? -INFINITY : 0.0;
    bool any_noise = false;
    for (Eigen::Index j = 0; j < doc_alpha.size(); ++j) {
        const double a = doc_alpha(j);
        double& acc = relevant[static_cast<std::size_t>(j)] ? rel : noise;
        if (!relevant[static_cast<std::size_t>(j)]) any_noise = true;
        acc = rule == GroupRule::max ? std::max(acc, a) : acc + a;
    }
    if (!any_noise) return Group::relevant_top;
    return rel > noise ? Group::relevant_top : Group::noise_top;
}

std::vector<std::vector<std::size_t>> all_permutations(std::size_t k) {
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::vector<std::vector<std::size_t>> out;
    do {
        out.push_back(perm);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return out;
}

namespace {

std::string format_permutation(const std::vector<std::size_t>& perm) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < perm.size(); ++i) os << (i ? "," : "") << perm[i];
    os << ']';
    return os.str();
}

}  // namespace

PermutationReport permutation_experiment(const AttentionSource& source, const std::vector<bool>& relevant,
                                         const TheoryModeld& model, const PermutationOptions& options) {
    const std::size_t k = relevant.size();
    if (k < 1 || k > 8) throw InvalidArgument("permutation experiment supports 1 <= k <= 8");
    if (model.k() != static_cast<Eigen::Index>(k)) throw InvalidArgument("theory model and labels disagree on k");

    PermutationReport report;
    report.rule = options.rule;
    report.relevant = relevant;
    const auto n_relevant = static_cast<std::size_t>(std::count(relevant.begin(), relevant.end(), true));
    if (n_relevant == 0 || n_relevant == k) {
        report.warnings.push_back(n_relevant == k ? "all documents labeled relevant: single group"
                                                  : "no document labeled relevant: single group");
    }

    double sums[2] = {0.0, 0.0};
    for (const auto& perm : all_permutations(k)) {
        const auto draws = source(perm);
        if (draws.empty()) throw InvalidArgument("no attention available for permutation " + format_permutation(perm));
        PermutationTrial trial;
        trial.permutation = perm;
        trial.alpha_bar = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
        for (const Eigen::VectorXd& alpha : draws) {
            trial.alpha_bar += alpha;
            const Eigen::VectorXd p = answer_distribution(model, alpha);
            for (std::size_t j = 0; j < k; ++j) {
                if (relevant[j]) trial.outcome += p(static_cast<Eigen::Index>(j));
            }
        }
        trial.alpha_bar /= static_cast<double>(draws.size());
        trial.outcome /= static_cast<double>(draws.size());
        trial.group = n_relevant == 0 ? Group::noise_top : assign_group(trial.alpha_bar, relevant, options.rule);
        if (trial.group == Group::relevant_top) {
            ++report.relevant_top_count;
            sums[0] += trial.outcome;
        } else {
            ++report.noise_top_count;
            sums[1] += trial.outcome;
        }
        report.trials.push_back(std::move(trial));
    }
    if (report.relevant_top_count) report.relevant_top_mean = sums[0] / static_cast<double>(report.relevant_top_count);
    if (report.noise_top_count) report.noise_top_mean = sums[1] / static_cast<double>(report.noise_top_count);
    if (!report.relevant_top_count || !report.noise_top_count) {
        if (report.warnings.empty()) report.warnings.push_back("one group is empty under the chosen rule");
    }
    return report;
}

PermutationReport permutation_experiment(const SyntheticBasinParams& generator, const std::vector<bool>& relevant,
                                         const TheoryModeld& model, const PermutationOptions& options) {
    validate_params(generator);
    if (generator.k != static_cast<Eigen::Index>(relevant.size())) {
        throw InvalidArgument("generator and labels disagree on k");
    }
    if (options.samples_per_permutation < 1) throw InvalidArgument("need at least one sample per permutation");
    // The same draws serve every order.
    std::vector<Eigen::VectorXd> slot_draws;
    const PositionStats stats = generate_slot_samples(generator, options.samples_per_permutation);
    for (const Eigen::MatrixXd& s : stats.samples) slot_draws.push_back(s.colwise().mean().transpose());

    auto source = [&slot_draws](const std::vector<std::size_t>& perm) {
        std::vector<Eigen::VectorXd> out;
        for (const Eigen::VectorXd& slot_alpha : slot_draws) out.push_back(place_documents(slot_alpha, perm));
        return out;
    };
    return permutation_experiment(source, relevant, model, options);
}

PermutationReport permutation_experiment(const std::vector<AttentionDump>& dumps, const std::vector<bool>& relevant,
                                         const TheoryModeld& model, const PermutationOptions& options) {
    std::map<std::vector<std::size_t>, std::vector<Eigen::VectorXd>> by_perm;
    for (const AttentionDump& d : dumps) {
        const BlockAttention ba = block_attention(d, options.mode);
        if (ba.num_docs() != static_cast<Eigen::Index>(relevant.size())) {
            throw InvalidArgument("dump '" + d.header.sample_id + "' has a different number of documents");
        }
        by_perm[d.header.permutation].push_back(cross_layer_mean(ba));
    }
    std::vector<std::string> gaps;
    for (const auto& perm : all_permutations(relevant.size())) {
        if (!by_perm.count(perm)) gaps.push_back(format_permutation(perm));
    }
    if (!gaps.empty()) {
        std::string msg = "missing dumps for permutations:";
        for (const auto& g : gaps) msg += " " + g;
        throw InvalidArgument(msg);
    }
    auto source = [&by_perm](const std::vector<std::size_t>& perm) { return by_perm.at(perm); };
    return permutation_experiment(source, relevant, model, options);
}

LayerwiseReport layerwise_rerank_experiment(const PositionStats& profiling, const PositionStats& evaluation,
                                            const TheoryModeld& model, const LayerwiseOptions& options) {
    if (profiling.num_samples() == 0 || evaluation.num_samples() == 0) {
        throw InvalidArgument("layer-wise experiment needs profiling and evaluation samples");
    }
    const Eigen::Index L = profiling.num_layers();
    const Eigen::Index k = profiling.num_slots();
    if (L < 2) throw InvalidArgument("layer-wise experiment requires dumps with at least 2 layers");
    if (evaluation.num_slots() != k || model.k() != k) throw InvalidArgument("inconsistent number of documents");

    LayerwiseReport report;
    report.profiles = Eigen::MatrixXd::Zero(L, k);
    for (const Eigen::MatrixXd& s : profiling.samples) report.profiles += s;
    report.profiles /= static_cast<double>(profiling.num_samples());
    report.outcome = Eigen::VectorXd::Zero(L);

    std::vector<ScoredDoc> docs(static_cast<std::size_t>(k));
    for (std::size_t q = 0; q < evaluation.num_samples(); ++q) {
        Rng rng(Rng::derive(options.seed, q));
        for (Eigen::Index j = 0; j < k; ++j) {
            docs[static_cast<std::size_t>(j)] = {std::to_string(j), rng.uniform(), std::nullopt};
        }
        const std::size_t best = relevance_ranking(docs).front();
        const Eigen::VectorXd slot_alpha = evaluation.samples[q].colwise().mean().transpose();
        for (Eigen::Index l = 0; l < L; ++l) {
            RerankOptions ro;
            ro.profile = report.profiles.row(l).transpose();
            const Ordering ord = rerank(docs, Strategy::attnrank, ro);
            std::vector<std::size_t> perm;
            for (const std::string& id : ord.ids) perm.push_back(std::stoul(id));
            const Eigen::VectorXd alpha = place_documents(slot_alpha, perm);
            report.outcome(l) += answer_distribution(model, alpha)(static_cast<Eigen::Index>(best));
        }
    }
    report.outcome /= static_cast<double>(evaluation.num_samples());
    return report;
}

LayerwiseReport layerwise_rerank_experiment(const std::vector<AttentionDump>& profiling,
                                            const std::vector<AttentionDump>& evaluation, const TheoryModeld& model,
                                            const LayerwiseOptions& options, AggregationMode mode) {
    auto to_stats = [mode](const std::vector<AttentionDump>& dumps) {
        std::vector<BlockAttention> blocks;
        blocks.reserve(dumps.size());
        for (const AttentionDump& d : dumps) blocks.push_back(block_attention(d, mode));
        return collect_position_stats(blocks);
    };
    return layerwise_rerank_experiment(to_stats(profiling), to_stats(evaluation), model, options);
}

std::vector<StrategyAttention> strategy_attention_comparison(const PositionStats& evaluation,
                                                             const Eigen::VectorXd& profile,
                                                             std::size_t relevant_count, std::uint64_t seed) {
    const Eigen::Index k = evaluation.num_slots();
    if (profile.size() != k) throw InvalidArgument("profile length must equal the number of slots");
    if (relevant_count < 1 || static_cast<Eigen::Index>(relevant_count) >= k) {
        throw InvalidArgument("need at least one relevant and one noise document");
    }
    const std::vector<Strategy> strategies = {Strategy::random, Strategy::descending, Strategy::ascending,
                                              Strategy::lim, Strategy::attnrank};
    std::vector<StrategyAttention> rows;
    for (Strategy s : strategies) rows.push_back({s, 0.0, 0.0});

    std::vector<ScoredDoc> docs(static_cast<std::size_t>(k));
    for (std::size_t q = 0; q < evaluation.num_samples(); ++q) {
        Rng rng(Rng::derive(seed, q));
        // Retriever order is random; the first relevant_count ids are relevant.
        for (Eigen::Index j = 0; j < k; ++j) {
            const bool rel = static_cast<std::size_t>(j) < relevant_count;
            docs[static_cast<std::size_t>(j)] = {std::to_string(j), rel ? rng.uniform(0.5, 1.0) : rng.uniform(0.0, 0.5),
                                                 std::nullopt};
        }
        rng.shuffle(std::span<ScoredDoc>(docs));
        const Eigen::VectorXd slot_alpha = evaluation.samples[q].colwise().mean().transpose();
        for (std::size_t si = 0; si < strategies.size(); ++si) {
            RerankOptions ro;
            ro.profile = profile;
            ro.seed = Rng::derive(seed, q);
            const Ordering ord = rerank(docs, strategies[si], ro);
            for (std::size_t slot = 0; slot < ord.ids.size(); ++slot) {
                const bool rel = std::stoul(ord.ids[slot]) < relevant_count;
                const double a = slot_alpha(static_cast<Eigen::Index>(slot));
                (rel ? rows[si].relevant_mean : rows[si].noise_mean) += a;
            }
        }
    }
    const double n = static_cast<double>(evaluation.num_samples());
    for (auto& r : rows) {
        r.relevant_mean /= n * static_cast<double>(relevant_count);
        r.noise_mean /= n * static_cast<double>(static_cast<std::size_t>(k) - relevant_count);
    }
    return rows;
}

Interval bootstrap_mean_interval(const std::vector<double>& values, std::size_t resamples, double level,
                                 std::uint64_t seed) {
    if (values.empty() || resamples < 1) throw InvalidArgument("bootstrap needs values and resamples");
    if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("confidence level must lie in (0, 1)");
    Rng rng(seed);
    std::vector<double> means(resamples);
    for (std::size_t b = 0; b < resamples; ++b) {
        double acc = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) acc += values[rng.below(values.size())];
        means[b] = acc / static_cast<double>(values.size());
    }
    std::sort(means.begin(), means.end());
    const double tail = (1.0 - level) / 2.0;
    auto pick = [&](double q) {
        const auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(resamples - 1) + 0.5));
        return means[std::min(idx, resamples - 1)];
    };
    return {pick(tail), pick(1.0 - tail)};
}

}  // namespace attnbasin
