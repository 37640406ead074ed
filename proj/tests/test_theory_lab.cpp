#include <doctest.h>

#include "attnbasin/error.hpp"
#include "attnbasin/theory_lab.hpp"
#include "oracles.hpp"

using namespace attnbasin;

namespace {

double rel_inf(const Eigen::VectorXd& got, const Eigen::VectorXd& want) {
    return (got - want).cwiseAbs().maxCoeff() / want.cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("standard model is orthonormal and validated") {
    const auto m = TheoryModeld::standard(4, 3);
    CHECK(m.dim() == 9);
    CHECK(m.k() == 4);
    CHECK(m.h_init(8) == 1.0);
    Eigen::MatrixXd all(9, 8);
    all << m.doc_embeddings, m.token_embeddings;
    CHECK((all.transpose() * all - Eigen::MatrixXd::Identity(8, 8)).cwiseAbs().maxCoeff() == 0.0);

    auto bad = m;
    bad.token_embeddings(0, 0) = 1e-6;
    CHECK_THROWS_AS(TheoryModeld::validate(bad), InvalidArgument);
    CHECK_THROWS_AS(TheoryModeld::standard(3, 2, Eigen::Vector3d(1, 0, 1), Eigen::Vector3d::Zero()), InvalidArgument);
    CHECK_THROWS_AS(TheoryModeld::standard(3, 0), InvalidArgument);
    CHECK_THROWS_AS(answer_distribution(m, Eigen::Vector3d(0.1, 0.2, 0.3)), InvalidArgument);
    CHECK_THROWS_AS(answer_distribution(m, Eigen::Vector4d(0.1, -0.2, 0.3, 0.1)), InvalidArgument);
}

TEST_CASE("hidden state and logits follow the model definition") {
    const auto m = TheoryModeld::standard(3, 2, Eigen::Vector3d(1.0, 2.0, 0.5), Eigen::Vector3d(0.1, -0.2, 0.0), 0.7);
    const Eigen::Vector3d a(0.2, 0.1, 0.4);
    const auto h = hidden_state(m, a);
    CHECK(h(0) == doctest::Approx(2 * 0.2 * 1.0));
    CHECK(h(1) == doctest::Approx(2 * 0.1 * 2.0));
    CHECK(h(2) == doctest::Approx(2 * 0.4 * 0.5));
    CHECK(h(6) == doctest::Approx(0.7));
    const auto z = answer_logits(m, a);
    CHECK(z(0) == doctest::Approx(0.4 + 0.1));
    CHECK(z(1) == doctest::Approx(0.4 - 0.2));
    CHECK(z(2) == doctest::Approx(0.4));
}

TEST_CASE("answer distribution agrees with 50-digit evaluation") {
    MonotonicityOptions o;
    o.family = KappaFamily::unconstrained;
    o.min_k = 2;
    o.seed = 321;
    for (std::size_t t = 0; t < 200; ++t) {
        const auto trial = monotonicity_trial(o, t);
        const Eigen::VectorXd p = answer_distribution(trial.model, trial.alpha_bar);
        const auto ref = oracle::precise_distribution(trial.model, trial.alpha_bar);
        for (Eigen::Index j = 0; j < p.size(); ++j) {
            const double r = static_cast<double>(ref[static_cast<std::size_t>(j)]);
            CHECK(std::abs(p(j) - r) <= 1e-14 + 1e-12 * r);
        }
        CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-14));
    }
}

TEST_CASE("analytic gradient agrees with high-precision central differences") {
    MonotonicityOptions o;
    o.family = KappaFamily::unconstrained;
    o.min_k = 2;
    o.seed = 99;
    o.max_layers = 8;
    for (std::size_t t = 0; t < 100; ++t) {
        const auto trial = monotonicity_trial(o, t);
        const Eigen::VectorXd g = attention_gradient(trial.model, trial.alpha_bar, trial.target);
        const Eigen::VectorXd fd = oracle::precise_fd_gradient(trial.model, trial.alpha_bar, trial.target, 1e-6);
        CHECK(rel_inf(g, fd) <= 1e-8);
    }
}

TEST_CASE("gradient check report stays within tolerance") {
    const auto r = check_gradients(100, 2024);
    CHECK(r.configs == 100);
    CHECK(r.max_relative_error <= 1e-5);
}

TEST_CASE("library finite differences match high-precision ones") {
    MonotonicityOptions o;
    o.family = KappaFamily::unconstrained;
    o.min_k = 2;
    o.seed = 5;
    for (std::size_t t = 0; t < 40; ++t) {
        const auto trial = monotonicity_trial(o, t);
        const auto a = finite_difference_gradient(trial.model, trial.alpha_bar, trial.target, 1e-5);
        const auto b = oracle::precise_fd_gradient(trial.model, trial.alpha_bar, trial.target, 1e-5);
        CHECK(rel_inf(a, b) <= 1e-5);
    }
}

TEST_CASE("monotonicity holds on the hypothesis families") {
    for (KappaFamily family : {KappaFamily::equal, KappaFamily::dominant}) {
        MonotonicityOptions o;
        o.family = family;
        o.seed = 17;
        const auto r = verify_monotonicity(o);
        CHECK(r.trials == 1000);
        CHECK(r.in_hypothesis == 1000);
        CHECK(r.violations() == 0);
        CHECK(r.min_dominance_ratio >= 1.0);
    }
}

TEST_CASE("sign conditions hold everywhere, dominance only where assumed") {
    MonotonicityOptions o;
    o.family = KappaFamily::unconstrained;
    o.seed = 3;
    const auto r = verify_monotonicity(o);
    CHECK(r.violations_positive == 0);
    CHECK(r.violations_nonpositive == 0);
    CHECK(r.out_of_hypothesis > 0);
    CHECK(r.in_hypothesis + r.out_of_hypothesis == r.trials);
    CHECK(r.violations_dominance == 0);

    o.hidden_noise = 0.5;
    const auto noisy = verify_monotonicity(o);
    CHECK(noisy.violations_positive == 0);
    CHECK(noisy.violations_nonpositive == 0);
}

TEST_CASE("dominance margin is positive in 50-digit arithmetic") {
    MonotonicityOptions o;
    o.family = KappaFamily::equal;
    o.seed = 41;
    for (std::size_t t = 0; t < 100; ++t) {
        const auto trial = monotonicity_trial(o, t);
        const auto p = oracle::precise_distribution(trial.model, trial.alpha_bar);
        const auto tgt = static_cast<std::size_t>(trial.target);
        const oracle::Big kappa(trial.model.value_gains(0));
        oracle::Big rest = 0, max_other = 0;
        for (std::size_t j = 0; j < p.size(); ++j) {
            if (j == tgt) continue;
            rest += p[j];
            max_other = std::max(max_other, p[j]);
        }
        // Equal gains: dP*/da* - |dP*/da_j| = L kappa P* (rest - P_j).
        CHECK(kappa * p[tgt] * (rest - max_other) > 0);
    }
}

TEST_CASE("placement sweep matches direct evaluation when noiseless") {
    SyntheticBasinParams p;
    const auto model = TheoryModeld::standard(p.k, p.num_layers);
    const Eigen::VectorXd f = positional_bias(p);
    for (Eigen::Index target = 0; target < p.k; ++target) {
        const Eigen::VectorXd sweep = placement_sweep(model, p, target, 3);
        for (Eigen::Index slot = 0; slot < p.k; ++slot) {
            Eigen::VectorXd alpha(p.k);
            alpha(target) = f(slot);
            Eigen::Index next = 0;
            for (Eigen::Index j = 0; j < p.k; ++j) {
                if (j == target) continue;
                if (next == slot) ++next;
                alpha(j) = f(next++);
            }
            const double want =
                static_cast<double>(oracle::precise_distribution(model, alpha)[static_cast<std::size_t>(target)]);
            CHECK(std::abs(sweep(slot) - want) <= 1e-12);
        }
    }
}

TEST_CASE("noiseless sweep peaks at an edge for every curved bowl") {
    Rng rng(8);
    for (int c = 0; c < 200; ++c) {
        SyntheticBasinParams p;
        p.k = 3 + static_cast<Eigen::Index>(rng.below(6));
        p.num_layers = 1 + static_cast<Eigen::Index>(rng.below(8));
        p.f_base = rng.uniform(0.01, 0.1);
        p.f_curvature = rng.uniform(0.001, 0.2);
        p.query_mass = 0.05;
        const auto model = TheoryModeld::standard(p.k, p.num_layers);
        const auto target = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(p.k)));
        const Eigen::VectorXd s = placement_sweep(model, p, target, 1);
        Eigen::Index best = 0;
        s.maxCoeff(&best);
        CHECK((best == 0 || best == p.k - 1));
    }
}

TEST_CASE("flat bias gives a flat sweep") {
    SyntheticBasinParams p;
    p.f_curvature = 0.0;
    p.f_base = 0.1;
    const auto s = placement_sweep(TheoryModeld::standard(p.k, p.num_layers), p, 2, 4);
    CHECK(s.maxCoeff() - s.minCoeff() <= 1e-12);
}

TEST_CASE("place_documents inverts the presentation order") {
    const Eigen::Vector3d slots(0.5, 0.2, 0.3);
    CHECK(place_documents(slots, {2, 0, 1}) == Eigen::Vector3d(0.2, 0.3, 0.5));
}

TEST_CASE("casting the model to long double preserves the distribution") {
    const auto m = TheoryModeld::standard(4, 5, Eigen::Vector4d(1, 2, 0.5, 1.5), Eigen::Vector4d(0.3, 0, -0.3, 0.1));
    const Eigen::Vector4d a(0.1, 0.4, 0.2, 0.3);
    const auto ml = m.cast<long double>();
    const auto pl = answer_distribution(ml, a.cast<long double>());
    CHECK((pl.cast<double>() - answer_distribution(m, a)).cwiseAbs().maxCoeff() <= 1e-14);
}
