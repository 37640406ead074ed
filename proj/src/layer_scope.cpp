#include "attnbasin/layer_scope.hpp"

#include "attnbasin/error.hpp"

namespace attnbasin {

namespace {

void require_samples(const PositionStats& stats) {
    if (stats.num_samples() < 2) throw InvalidArgument("variance estimates need at least 2 samples");
}

}  // namespace

Eigen::MatrixXd estimate_positional_bias_per_layer(const PositionStats& stats) {
    require_samples(stats);
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(stats.num_layers(), stats.num_slots());
    for (const Eigen::MatrixXd& s : stats.samples) acc += s;
    return acc / static_cast<double>(stats.num_samples());
}

Eigen::VectorXd estimate_positional_bias(const PositionStats& stats) {
    return estimate_positional_bias_per_layer(stats).colwise().mean().transpose();
}

Eigen::MatrixXd sample_variance(const PositionStats& stats) {
    const Eigen::MatrixXd mean = estimate_positional_bias_per_layer(stats);
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(mean.rows(), mean.cols());
    for (const Eigen::MatrixXd& s : stats.samples) acc += (s - mean).array().square().matrix();
    return acc / static_cast<double>(stats.num_samples());
}

LayerRegimeReport variance_ratio(const PositionStats& stats) {
    require_samples(stats);
    if (stats.num_slots() < 2) throw InvalidArgument("variance ratio needs k >= 2");

    LayerRegimeReport r;
    r.f_hat = estimate_positional_bias(stats);
    const double f_mean = r.f_hat.mean();
    r.positional_variance = (r.f_hat.array() - f_mean).square().mean();
    // Relative floor: a spread below 1e-10 of the mean level is rounding noise.
    if (!(r.positional_variance > 1e-20 * f_mean * f_mean) || r.positional_variance <= 0.0) {
        throw InvalidArgument("degenerate positional field: f_hat is constant across slots");
    }
    r.content_variance = sample_variance(stats).rowwise().mean();
    r.rho = r.content_variance / r.positional_variance;
    r.l_star = find_regime_threshold(r.rho);
    return r;
}

std::optional<Eigen::Index> find_regime_threshold(const Eigen::Ref<const Eigen::VectorXd>& rho) {
    for (Eigen::Index l = 0; l < rho.size(); ++l) {
        if (rho(l) >= 1.0) return l;
    }
    return std::nullopt;
}

}  // namespace attnbasin
