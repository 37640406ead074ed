#include <algorithm>
#include <cmath>
#include <limits>

#include "attnbasin/error.hpp"
#include "attnbasin/rng.hpp"
#include "attnbasin/theory_lab.hpp"

namespace attnbasin {

const char* kappa_family_name(KappaFamily family) {
    switch (family) {
        case KappaFamily::equal: return "equal";
        case KappaFamily::dominant: return "dominant";
        case KappaFamily::unconstrained: return "unconstrained";
    }
    return "unknown";
}

MonotonicityTrial monotonicity_trial(const MonotonicityOptions& options, std::size_t index) {
    if (options.min_k < 2 || options.max_k < options.min_k) throw InvalidArgument("invalid k range");
    if (options.max_layers < 1) throw InvalidArgument("max_layers must be positive");
    Rng rng(Rng::derive(options.seed, index));

    const auto span_k = static_cast<std::uint64_t>(options.max_k - options.min_k + 1);
    const Eigen::Index k = options.min_k + static_cast<Eigen::Index>(rng.below(span_k));
    const Eigen::Index layers = 1 + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(options.max_layers)));
    const auto target = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(k)));

    Eigen::VectorXd alpha(k);
    for (Eigen::Index j = 0; j < k; ++j) alpha(j) = rng.uniform(0.0, 1.0);
    alpha(target) = 0.0;
    alpha(target) = alpha.maxCoeff() + rng.uniform(0.01, 0.5);

    Eigen::VectorXd kappa(k);
    switch (options.family) {
        case KappaFamily::equal:
            kappa.setConstant(rng.uniform(0.5, 2.0));
            break;
        case KappaFamily::dominant:
            for (Eigen::Index j = 0; j < k; ++j) kappa(j) = rng.uniform(0.25, 2.0);
            kappa(target) = 0.0;
            kappa(target) = kappa.maxCoeff() + rng.uniform(0.0, 1.0);
            break;
        case KappaFamily::unconstrained:
            for (Eigen::Index j = 0; j < k; ++j) kappa(j) = rng.uniform(0.25, 2.0);
            break;
    }

    Eigen::VectorXd biases(k);
    for (Eigen::Index j = 0; j < k; ++j) biases(j) = rng.uniform(-1.0, 1.0);
    const double h_scale = rng.uniform(-1.0, 1.0);

    MonotonicityTrial trial{TheoryModeld::standard(k, layers, kappa, biases, h_scale), alpha, target};
    if (options.hidden_noise > 0.0) {
        for (Eigen::Index i = 0; i < trial.model.dim(); ++i) trial.model.noise(i) = options.hidden_noise * rng.normal();
    }
    return trial;
}

MonotonicityReport verify_monotonicity(const MonotonicityOptions& options) {
    if (options.trials < 1) throw InvalidArgument("need at least one trial");
    MonotonicityReport report;
    report.min_dominance_ratio = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < options.trials; ++t) {
        const MonotonicityTrial trial = monotonicity_trial(options, t);
        const Eigen::VectorXd grad = attention_gradient(trial.model, trial.alpha_bar, trial.target);
        const Eigen::Index target = trial.target;
        ++report.trials;

        if (!(grad(target) > 0.0)) ++report.violations_positive;
        double max_other = 0.0;
        bool nonpositive = true;
        for (Eigen::Index j = 0; j < grad.size(); ++j) {
            if (j == target) continue;
            if (grad(j) > 0.0) nonpositive = false;
            max_other = std::max(max_other, std::abs(grad(j)));
        }
        if (!nonpositive) ++report.violations_nonpositive;

        const Eigen::VectorXd& kappa = trial.model.value_gains;
        bool in_hypothesis = true;
        for (Eigen::Index j = 0; j < kappa.size(); ++j) {
            if (j == target) continue;
            if (kappa(target) < kappa(j) || !(trial.alpha_bar(target) > trial.alpha_bar(j))) in_hypothesis = false;
        }
        if (!in_hypothesis) {
            ++report.out_of_hypothesis;
            continue;
        }
        ++report.in_hypothesis;
        // grad(target) - |grad(j)| = L P_t ((kappa_t - kappa_j) P_j + kappa_t sum_{i != t, j} P_i),
        // evaluated term by term: when P_t is near 1 the direct difference
        // rounds to zero although both terms are positive.
        const Eigen::VectorXd p = answer_distribution(trial.model, trial.alpha_bar);
        Eigen::Index strongest = target == 0 ? 1 : 0;
        for (Eigen::Index j = 0; j < grad.size(); ++j) {
            if (j != target && std::abs(grad(j)) > std::abs(grad(strongest))) strongest = j;
        }
        double others = 0.0;
        for (Eigen::Index i = 0; i < p.size(); ++i) {
            if (i != target && i != strongest) others += p(i);
        }
        const double margin = static_cast<double>(trial.model.n_layers) * p(target) *
                              ((kappa(target) - kappa(strongest)) * p(strongest) + kappa(target) * others);
        if (!(margin > 0.0)) ++report.violations_dominance;
        if (max_other > 0.0) report.min_dominance_ratio = std::min(report.min_dominance_ratio, grad(target) / max_other);
    }
    return report;
}

Eigen::VectorXd finite_difference_gradient(const TheoryModeld& model, const Eigen::VectorXd& alpha_bar,
                                           Eigen::Index target, double step) {
    // Near saturation P_target rounds to 1, so difference the mass on the
    // other answers instead; it carries the same change with full precision.
    const bool saturated = answer_distribution(model, alpha_bar)(target) > 0.5;
    auto value = [&](const Eigen::VectorXd& a) {
        const Eigen::VectorXd p = answer_distribution(model, a);
        if (!saturated) return p(target);
        double rest = 0.0;
        for (Eigen::Index j = 0; j < p.size(); ++j) {
            if (j != target) rest -= p(j);
        }
        return rest;
    };
    Eigen::VectorXd fd(alpha_bar.size());
    for (Eigen::Index j = 0; j < alpha_bar.size(); ++j) {
        Eigen::VectorXd up = alpha_bar;
        Eigen::VectorXd down = alpha_bar;
        up(j) += step;
        down(j) -= step;
        fd(j) = (value(up) - value(down)) / (2.0 * step);
    }
    return fd;
}

GradientCheckReport check_gradients(std::size_t configs, std::uint64_t seed, double step) {
    MonotonicityOptions options;
    options.seed = seed;
    options.family = KappaFamily::unconstrained;
    options.min_k = 2;
    GradientCheckReport report;
    report.step = step;
    for (std::size_t c = 0; c < configs; ++c) {
        const MonotonicityTrial trial = monotonicity_trial(options, c);
        Eigen::VectorXd alpha = trial.alpha_bar.cwiseMax(2.0 * step);
        const Eigen::VectorXd analytic = attention_gradient(trial.model, alpha, trial.target);
        const Eigen::VectorXd fd = finite_difference_gradient(trial.model, alpha, trial.target, step);
        const double scale = analytic.cwiseAbs().maxCoeff();
        const double err = (analytic - fd).cwiseAbs().maxCoeff() / scale;
        report.max_relative_error = std::max(report.max_relative_error, err);
        ++report.configs;
    }
    return report;
}

Eigen::VectorXd place_documents(const Eigen::VectorXd& slot_alpha, const std::vector<std::size_t>& permutation) {
    Eigen::VectorXd by_doc(slot_alpha.size());
    for (std::size_t slot = 0; slot < permutation.size(); ++slot) {
        by_doc(static_cast<Eigen::Index>(permutation[slot])) = slot_alpha(static_cast<Eigen::Index>(slot));
    }
    return by_doc;
}

Eigen::VectorXd placement_sweep(const TheoryModeld& model, const SyntheticBasinParams& params, Eigen::Index target,
                                std::size_t trials) {
    validate_params(params);
    const Eigen::Index k = params.k;
    if (k < 3) throw InvalidArgument("placement sweep needs k >= 3");
    if (model.k() != k) throw InvalidArgument("theory model and generator disagree on k");
    if (target < 0 || target >= k) throw InvalidArgument("target document out of range");
    if (trials < 1) throw InvalidArgument("need at least one trial");

    // placements[p][slot] = document at slot when the target sits at p.
    std::vector<std::vector<std::size_t>> placements(static_cast<std::size_t>(k));
    for (Eigen::Index p = 0; p < k; ++p) {
        auto& perm = placements[static_cast<std::size_t>(p)];
        std::size_t next = 0;
        for (Eigen::Index slot = 0; slot < k; ++slot) {
            if (slot == p) {
                perm.push_back(static_cast<std::size_t>(target));
                continue;
            }
            if (next == static_cast<std::size_t>(target)) ++next;
            perm.push_back(next++);
        }
    }

    Eigen::VectorXd curve = Eigen::VectorXd::Zero(k);
    for (std::size_t t = 0; t < trials; ++t) {
        const auto heads = draw_sample(params, t);
        Eigen::MatrixXd slots = Eigen::MatrixXd::Zero(params.num_layers, k);
        for (const auto& h : heads) slots += h.docs;
        slots /= static_cast<double>(heads.size());
        const Eigen::VectorXd slot_alpha = slots.colwise().mean().transpose();
        for (Eigen::Index p = 0; p < k; ++p) {
            const Eigen::VectorXd alpha = place_documents(slot_alpha, placements[static_cast<std::size_t>(p)]);
            curve(p) += answer_distribution(model, alpha)(target);
        }
    }
    return curve / static_cast<double>(trials);
}

}  // namespace attnbasin
