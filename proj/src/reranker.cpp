#include "attnbasin/reranker.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "attnbasin/error.hpp"
#include "attnbasin/rng.hpp"

namespace attnbasin {

const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::attnrank: return "attnrank";
        case Strategy::random: return "random";
        case Strategy::descending: return "descending";
        case Strategy::ascending: return "ascending";
        case Strategy::lim: return "lim";
    }
    return "unknown";
}

Strategy parse_strategy(const std::string& name) {
    for (Strategy s : {Strategy::attnrank, Strategy::random, Strategy::descending, Strategy::ascending, Strategy::lim}) {
        if (name == strategy_name(s)) return s;
    }
    throw InvalidArgument("unknown strategy '" + name + "'");
}

std::vector<std::size_t> relevance_ranking(std::span<const ScoredDoc> docs) {
    std::vector<std::size_t> idx(docs.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return docs[a].relevance > docs[b].relevance; });
    return idx;
}

std::vector<std::size_t> position_ranking(const Eigen::Ref<const Eigen::VectorXd>& profile) {
    std::vector<std::size_t> idx(static_cast<std::size_t>(profile.size()));
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return profile(static_cast<Eigen::Index>(a)) > profile(static_cast<Eigen::Index>(b));
    });
    return idx;
}

std::vector<std::size_t> lim_slots(std::size_t k) {
    std::vector<std::size_t> slots(k);
    for (std::size_t rank = 0; rank < k; ++rank) {
        slots[rank] = rank % 2 == 0 ? rank / 2 : k - 1 - rank / 2;
    }
    return slots;
}

Eigen::VectorXd resample_profile(const Eigen::Ref<const Eigen::VectorXd>& profile, Eigen::Index k) {
    if (profile.size() == 0 || k <= 0) throw InvalidArgument("cannot resample an empty profile");
    Eigen::VectorXd out(k);
    if (k == 1 || profile.size() == 1) {
        out.setConstant(profile(0));
        return out;
    }
    const double scale = static_cast<double>(profile.size() - 1) / static_cast<double>(k - 1);
    for (Eigen::Index i = 0; i < k; ++i) {
        const double x = static_cast<double>(i) * scale;
        const auto lo = std::min(static_cast<Eigen::Index>(std::floor(x)), profile.size() - 2);
        const double t = x - static_cast<double>(lo);
        out(i) = (1.0 - t) * profile(lo) + t * profile(lo + 1);
    }
    return out;
}

Ordering rerank(std::span<const ScoredDoc> docs, Strategy strategy, const RerankOptions& options) {
    std::unordered_set<std::string> seen;
    for (const ScoredDoc& d : docs) {
        if (!std::isfinite(d.relevance)) throw InvalidArgument("doc '" + d.id + "' has a non-finite relevance");
        if (!seen.insert(d.id).second) throw InvalidArgument("duplicate doc id '" + d.id + "'");
    }

    const std::size_t k = docs.size();
    Ordering out;
    out.strategy = strategy;
    std::vector<std::size_t> order;  // order[slot] = input index

    switch (strategy) {
        case Strategy::descending:
            order = relevance_ranking(docs);
            break;
        case Strategy::ascending: {
            order.resize(k);
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t a, std::size_t b) { return docs[a].relevance < docs[b].relevance; });
            break;
        }
        case Strategy::lim: {
            const auto ranked = relevance_ranking(docs);
            const auto slots = lim_slots(k);
            order.resize(k);
            for (std::size_t rank = 0; rank < k; ++rank) order[slots[rank]] = ranked[rank];
            break;
        }
        case Strategy::random: {
            if (!options.seed) throw InvalidArgument("random strategy requires a seed");
            out.seed = options.seed;
            order.resize(k);
            std::iota(order.begin(), order.end(), std::size_t{0});
            Rng rng(*options.seed);
            rng.shuffle(std::span<std::size_t>(order));
            break;
        }
        case Strategy::attnrank: {
            if (!options.profile) throw InvalidArgument("attnrank requires an attention profile");
            Eigen::VectorXd profile = *options.profile;
            if (profile.size() != static_cast<Eigen::Index>(k)) {
                if (!options.resample_profile) {
                    throw InvalidArgument("profile has " + std::to_string(profile.size()) + " positions but " +
                                          std::to_string(k) + " documents were given");
                }
                profile = resample_profile(profile, static_cast<Eigen::Index>(k));
            }
            const auto ranked = relevance_ranking(docs);
            const auto slots = position_ranking(profile);
            order.resize(k);
            for (std::size_t rank = 0; rank < k; ++rank) order[slots[rank]] = ranked[rank];
            break;
        }
    }

    out.ids.reserve(k);
    for (std::size_t i : order) out.ids.push_back(docs[i].id);
    return out;
}

}  // namespace attnbasin
