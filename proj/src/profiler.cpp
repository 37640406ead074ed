#include "attnbasin/profiler.hpp"

#include <cmath>

#include "attnbasin/error.hpp"

namespace attnbasin {

std::string layer_selection_name(const LayerSelection& sel) {
    return sel.cross_layer_mean ? "cross-layer-mean" : std::to_string(sel.layer);
}

Eigen::VectorXd slot_scores(const BlockAttention& ba, const LayerSelection& sel) {
    Eigen::VectorXd by_doc;
    if (sel.cross_layer_mean) {
        by_doc = cross_layer_mean(ba);
    } else {
        by_doc = cross_layer_mean(ba, {sel.layer});
    }
    return to_slot_order(by_doc.transpose(), ba.permutation).transpose();
}

ProfileAccumulator::ProfileAccumulator(ProfileConfig config) : config_(std::move(config)) {
    if (config_.k <= 0) throw InvalidArgument("profile needs k >= 1");
    if (config_.checkpoint_every == 0) throw InvalidArgument("checkpoint interval must be positive");
    sum_ = Eigen::VectorXd::Zero(config_.k);
}

void ProfileAccumulator::accumulate(const Eigen::Ref<const Eigen::VectorXd>& doc_scores) {
    if (doc_scores.size() != config_.k) {
        throw InvalidArgument("score vector has " + std::to_string(doc_scores.size()) + " slots, profile expects " +
                              std::to_string(config_.k));
    }
    sum_ += doc_scores;
    ++n_;
    if (n_ % config_.checkpoint_every == 0) {
        checkpoints_.push_back({n_, sum_ / static_cast<double>(n_)});
    }
}

void ProfileAccumulator::merge(const ProfileAccumulator& other) {
    if (other.config_.k != config_.k || !(other.config_.layer_selection == config_.layer_selection) ||
        other.config_.mode != config_.mode || other.config_.checkpoint_every != config_.checkpoint_every) {
        throw InvalidArgument("cannot merge profile accumulators with different configurations");
    }
    if (other.n_ == 0) return;
    if (n_ == 0) {
        checkpoints_ = other.checkpoints_;
        if (config_.model_id.empty()) config_.model_id = other.config_.model_id;
    }
    sum_ += other.sum_;
    n_ += other.n_;
}

ProfileAccumulator merge(ProfileAccumulator a, const ProfileAccumulator& b) {
    a.merge(b);
    return a;
}

ConvergenceResult check_convergence(const ProfileAccumulator& acc, double tau, std::size_t patience) {
    const auto& cps = acc.checkpoints();
    ConvergenceResult result;
    if (cps.size() < 2) return result;
    std::size_t run = 0;
    for (std::size_t i = 1; i < cps.size(); ++i) {
        const double delta = (cps[i].running_mean - cps[i - 1].running_mean).cwiseAbs().maxCoeff();
        run = delta < tau ? run + 1 : 0;
        if (run >= patience) {
            result.converged = true;
            result.n_star = cps[i].n;
            return result;
        }
    }
    return result;
}

AttentionProfile finalize(const ProfileAccumulator& acc) {
    if (acc.count() == 0) throw InvalidArgument("empty profile");
    AttentionProfile p;
    p.scores = acc.sum() / static_cast<double>(acc.count());
    p.n_samples = acc.count();
    p.layer_selection = acc.config().layer_selection;
    p.mode = acc.config().mode;
    p.model_id = acc.config().model_id;
    const auto& cps = acc.checkpoints();
    for (std::size_t i = 1; i < cps.size(); ++i) {
        p.convergence_history.push_back(
            {cps[i].n, (cps[i].running_mean - cps[i - 1].running_mean).cwiseAbs().maxCoeff()});
    }
    return p;
}

BasinReport detect_basin(const Eigen::Ref<const Eigen::VectorXd>& scores) {
    const Eigen::Index k = scores.size();
    if (k < 3) throw InvalidArgument("basin undefined for k < 3");
    const double mean = scores.mean();
    if (!(mean > 0.0)) throw InvalidArgument("basin undefined for a profile with non-positive mean");

    BasinReport r;
    r.edge_min = std::min(scores(0), scores(k - 1));
    r.middle_mean = scores.segment(1, k - 2).mean();
    r.depth = (r.edge_min - r.middle_mean) / mean;
    scores.minCoeff(&r.argmin_slot);
    r.is_basin = r.edge_min > r.middle_mean && r.argmin_slot != 0 && r.argmin_slot != k - 1;
    return r;
}

}  // namespace attnbasin
