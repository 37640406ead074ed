#pragma once

// Relevance-to-position mapping (AttnRank) and the baseline orderings.
// The reranker is a pure permutation engine: it never looks at payload text.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace attnbasin {

struct ScoredDoc {
    std::string id;
    double relevance = 0.0;
    std::optional<std::string> payload;
};

enum class Strategy { attnrank, random, descending, ascending, lim };

const char* strategy_name(Strategy s);
Strategy parse_strategy(const std::string& name);

struct Ordering {
    std::vector<std::string> ids;  // presentation order, position 1 first
    Strategy strategy = Strategy::descending;
    std::optional<std::uint64_t> seed;
};

struct RerankOptions {
    std::optional<Eigen::VectorXd> profile;  // required for attnrank
    std::optional<std::uint64_t> seed;       // required for random
    // When |docs| != profile length, linearly resample the profile instead of
    // failing. Off by default.
    bool resample_profile = false;
};

Ordering rerank(std::span<const ScoredDoc> docs, Strategy strategy, const RerankOptions& options = {});

// Indices of docs by decreasing relevance; ties keep input order.
std::vector<std::size_t> relevance_ranking(std::span<const ScoredDoc> docs);

// Slots by decreasing profile score; ties favour the earlier slot.
std::vector<std::size_t> position_ranking(const Eigen::Ref<const Eigen::VectorXd>& profile);

// order[rank] = slot receiving the rank-th most relevant doc, sides-in.
std::vector<std::size_t> lim_slots(std::size_t k);

// Linear interpolation of a profile onto a different number of positions.
Eigen::VectorXd resample_profile(const Eigen::Ref<const Eigen::VectorXd>& profile, Eigen::Index k);

}  // namespace attnbasin
