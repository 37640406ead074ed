#pragma once

// Layer regimes: positional bias f(p) versus content variance per layer.
//
// All variances are population variances (divide by the count, not count-1).

#include <optional>

#include <Eigen/Core>

#include "attnbasin/block_stats.hpp"

namespace attnbasin {

struct LayerRegimeReport {
    Eigen::VectorXd f_hat;             // [k] positional bias per slot
    double positional_variance = 0.0;  // variance of f_hat across slots
    Eigen::VectorXd content_variance;  // [L] mean over slots of across-sample variance
    Eigen::VectorXd rho;               // [L] content_variance / positional_variance
    std::optional<Eigen::Index> l_star;
};

// Mean over samples and layers of each slot's attention.
Eigen::VectorXd estimate_positional_bias(const PositionStats& stats);

// [L, k] per-layer variant (diagnostics only).
Eigen::MatrixXd estimate_positional_bias_per_layer(const PositionStats& stats);

// Across-sample population variance, [L, k].
Eigen::MatrixXd sample_variance(const PositionStats& stats);

LayerRegimeReport variance_ratio(const PositionStats& stats);

// Smallest layer with rho >= 1; none when every layer is position-dominated.
std::optional<Eigen::Index> find_regime_threshold(const Eigen::Ref<const Eigen::VectorXd>& rho);
inline std::optional<Eigen::Index> find_regime_threshold(const LayerRegimeReport& report) {
    return find_regime_threshold(report.rho);
}

}  // namespace attnbasin
