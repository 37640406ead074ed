#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "attnbasin/error.hpp"
#include "attnbasin/rng.hpp"
#include "attnbasin/theory_lab.hpp"

namespace attnbasin {

double SyntheticBasinParams::growth(Eigen::Index layer) const {
    if (layer_noise_growth.empty()) return 1.0;
    return layer_noise_growth[static_cast<std::size_t>(layer)];
}

Eigen::VectorXd positional_bias(const SyntheticBasinParams& params) {
    Eigen::VectorXd f(params.k);
    for (Eigen::Index p = 1; p <= params.k; ++p) {
        const double x = params.k > 1 ? static_cast<double>(2 * p - 1 - params.k) / static_cast<double>(params.k - 1)
                                      : 0.0;
        f(p - 1) = params.f_base + params.f_curvature * x * x;
    }
    return f;
}

void validate_params(const SyntheticBasinParams& params) {
    if (params.k < 1) throw InvalidArgument("generator needs k >= 1");
    if (params.num_layers < 1) throw InvalidArgument("generator needs at least one layer");
    if (!(params.f_base >= 0.0) || !(params.f_curvature >= 0.0)) {
        throw InvalidArgument("f_base and f_curvature must be non-negative");
    }
    if (!(params.noise_scale >= 0.0)) throw InvalidArgument("noise_scale must be non-negative");
    if (!params.layer_noise_growth.empty()) {
        if (static_cast<Eigen::Index>(params.layer_noise_growth.size()) != params.num_layers) {
            throw InvalidArgument("layer_noise_growth needs one entry per layer");
        }
        for (std::size_t l = 0; l < params.layer_noise_growth.size(); ++l) {
            if (!(params.layer_noise_growth[l] > 0.0)) throw InvalidArgument("layer_noise_growth must be positive");
            if (l > 0 && params.layer_noise_growth[l] < params.layer_noise_growth[l - 1]) {
                throw InvalidArgument("layer_noise_growth must be non-decreasing");
            }
        }
    }
    if (params.tokens_per_block < 1 || params.template_tokens < 1 || params.query_tokens < 1) {
        throw InvalidArgument("every block needs at least one token");
    }
    if (!(params.query_mass >= 0.0 && params.query_mass < 1.0)) throw InvalidArgument("query_mass must lie in [0, 1)");
    if (params.num_heads < 1) throw InvalidArgument("num_heads must be positive");
    if (!(positional_bias(params).minCoeff() > 0.0)) throw InvalidArgument("f(p) must be positive at every slot");
}

std::vector<HeadMasses> draw_sample(const SyntheticBasinParams& params, std::size_t index) {
    const Eigen::VectorXd f = positional_bias(params);
    const Eigen::Index L = params.num_layers;
    const Eigen::Index k = params.k;
    Rng rng(Rng::derive(params.seed, index));

    std::vector<HeadMasses> heads(params.num_heads);
    for (auto& h : heads) {
        h.docs.resize(L, k);
        h.query.resize(L);
        h.template_sink.resize(L);
    }
    for (Eigen::Index l = 0; l < L; ++l) {
        const double scale = params.growth(l) * params.noise_scale;
        for (auto& h : heads) {
            for (Eigen::Index p = 0; p < k; ++p) {
                const double eta = params.noise_scale > 0.0 ? rng.normal() : 0.0;
                h.docs(l, p) = std::max(0.0, f(p) + scale * eta);
            }
            const double used = h.docs.row(l).sum() + params.query_mass;
            if (used <= 1.0) {
                h.query(l) = params.query_mass;
                h.template_sink(l) = 1.0 - used;
            } else {
                h.docs.row(l) /= used;
                h.query(l) = params.query_mass / used;
                h.template_sink(l) = 0.0;
            }
        }
    }
    return heads;
}

PositionStats generate_slot_samples(const SyntheticBasinParams& params, std::size_t n_samples) {
    validate_params(params);
    PositionStats stats;
    stats.mode = AggregationMode::token_sum;
    stats.samples.reserve(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        const auto heads = draw_sample(params, i);
        Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(params.num_layers, params.k);
        for (const auto& h : heads) avg += h.docs;
        stats.samples.push_back(avg / static_cast<double>(heads.size()));
    }
    return stats;
}

AttentionDump make_synthetic_dump(const SyntheticBasinParams& params, std::size_t index,
                                  const std::vector<std::size_t>& permutation) {
    const auto k = static_cast<std::size_t>(params.k);
    const std::size_t tt = params.template_tokens;
    const std::size_t tpb = params.tokens_per_block;
    const std::size_t q0 = tt + k * tpb;
    const std::size_t T = q0 + params.query_tokens;

    AttentionDump dump;
    DumpHeader& h = dump.header;
    h.model_id = params.model_id;
    h.num_layers = static_cast<std::size_t>(params.num_layers);
    h.num_heads = params.num_heads;
    h.num_tokens = T;
    h.head_mode = params.head_mode;
    char id[32];
    std::snprintf(id, sizeof(id), "sample-%06zu", index);
    h.sample_id = id;
    h.permutation = permutation;
    h.spans.push_back({"template", 0, static_cast<std::int64_t>(tt)});
    for (std::size_t s = 0; s < k; ++s) {
        h.spans.push_back({"doc:" + std::to_string(permutation[s]), static_cast<std::int64_t>(tt + s * tpb),
                           static_cast<std::int64_t>(tt + (s + 1) * tpb)});
    }
    h.spans.push_back({"query", static_cast<std::int64_t>(q0), static_cast<std::int64_t>(T)});
    for (std::size_t r = 0; r < params.query_tokens; ++r) h.stored_rows.push_back(static_cast<std::int64_t>(q0 + r));

    const auto heads = draw_sample(params, index);
    const std::size_t R = params.query_tokens;
    const std::size_t H = h.stored_heads();
    dump.tensor.assign(h.tensor_size(), 0.0f);

    Eigen::VectorXd row(static_cast<Eigen::Index>(T));
    for (Eigen::Index l = 0; l < params.num_layers; ++l) {
        for (std::size_t r = 0; r < R; ++r) {
            // Row in double for every head; mean mode stores the head average.
            Eigen::MatrixXd per_head(static_cast<Eigen::Index>(params.num_heads), static_cast<Eigen::Index>(T));
            for (std::size_t hd = 0; hd < params.num_heads; ++hd) {
                const HeadMasses& m = heads[hd];
                row.setZero();
                row.head(static_cast<Eigen::Index>(tt)).setConstant(m.template_sink(l) / static_cast<double>(tt));
                for (std::size_t s = 0; s < k; ++s) {
                    row.segment(static_cast<Eigen::Index>(tt + s * tpb), static_cast<Eigen::Index>(tpb))
                        .setConstant(m.docs(l, static_cast<Eigen::Index>(s)) / static_cast<double>(tpb));
                }
                row.segment(static_cast<Eigen::Index>(q0), static_cast<Eigen::Index>(r + 1))
                    .setConstant(m.query(l) / static_cast<double>(r + 1));
                per_head.row(static_cast<Eigen::Index>(hd)) = row.transpose();
            }
            for (std::size_t hd = 0; hd < H; ++hd) {
                Eigen::RowVectorXd out = params.head_mode == HeadMode::mean
                                             ? Eigen::RowVectorXd(per_head.colwise().mean())
                                             : Eigen::RowVectorXd(per_head.row(static_cast<Eigen::Index>(hd)));
                dump.rows(static_cast<std::size_t>(l), hd).row(static_cast<Eigen::Index>(r)) = out.cast<float>();
            }
        }
    }
    return dump;
}

std::vector<AttentionDump> generate_synthetic_dumps(const SyntheticBasinParams& params, std::size_t n_samples,
                                                    const std::vector<std::vector<std::size_t>>& permutations) {
    validate_params(params);
    std::vector<std::size_t> identity(static_cast<std::size_t>(params.k));
    std::iota(identity.begin(), identity.end(), std::size_t{0});
    for (const auto& perm : permutations) {
        if (static_cast<Eigen::Index>(perm.size()) != params.k ||
            !std::is_permutation(perm.begin(), perm.end(), identity.begin())) {
            throw InvalidArgument("generator permutation is not a permutation of 0..k-1");
        }
    }
    std::vector<AttentionDump> out;
    out.reserve(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        const auto& perm = permutations.empty() ? identity : permutations[i % permutations.size()];
        out.push_back(make_synthetic_dump(params, i, perm));
    }
    return out;
}

}  // namespace attnbasin
