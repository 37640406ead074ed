#include <doctest.h>

#include "attnbasin/error.hpp"
#include "attnbasin/layer_scope.hpp"
#include "attnbasin/theory_lab.hpp"
#include "oracles.hpp"

using namespace attnbasin;

namespace {

PositionStats random_stats(Rng& rng, std::size_t n, Eigen::Index L, Eigen::Index k) {
    PositionStats s;
    for (std::size_t i = 0; i < n; ++i) {
        Eigen::MatrixXd m(L, k);
        for (Eigen::Index l = 0; l < L; ++l)
            for (Eigen::Index j = 0; j < k; ++j) m(l, j) = 0.1 * static_cast<double>(j % 3) + 0.05 * rng.uniform();
        s.samples.push_back(m);
    }
    return s;
}

// Population variance of a list of numbers, two-pass.
double pop_var(const std::vector<double>& x) {
    double m = 0.0;
    for (double v : x) m += v;
    m /= static_cast<double>(x.size());
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size());
}

}  // namespace

TEST_CASE("constant field gives a constant bias estimate") {
    PositionStats s;
    for (int i = 0; i < 3; ++i) s.samples.push_back(Eigen::MatrixXd::Constant(2, 4, 0.2));
    CHECK(estimate_positional_bias(s).isApprox(Eigen::VectorXd::Constant(4, 0.2)));
    try {
        variance_ratio(s);
        FAIL("expected an error");
    } catch (const InvalidArgument& e) {
        CHECK(std::string(e.what()).rfind("degenerate positional field", 0) == 0);
    }
}

TEST_CASE("two-sample mean") {
    PositionStats s;
    Eigen::MatrixXd a(1, 3), b(1, 3);
    a << 0.5, 0.1, 0.4;
    b << 0.3, 0.1, 0.6;
    s.samples = {a, b};
    CHECK((estimate_positional_bias(s) - Eigen::Vector3d(0.4, 0.1, 0.5)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("bias and variances match explicit loops") {
    Rng rng(31);
    const auto s = random_stats(rng, 100, 4, 5);
    const auto f = estimate_positional_bias(s);
    const auto report = variance_ratio(s);
    for (Eigen::Index j = 0; j < 5; ++j) {
        double acc = 0.0;
        for (const auto& m : s.samples)
            for (Eigen::Index l = 0; l < 4; ++l) acc += m(l, j);
        CHECK(std::abs(f(j) - acc / 400.0) <= 1e-9);
    }
    CHECK(std::abs(report.positional_variance - pop_var(std::vector<double>(f.data(), f.data() + 5))) <= 1e-12);
    for (Eigen::Index l = 0; l < 4; ++l) {
        double cv = 0.0;
        for (Eigen::Index j = 0; j < 5; ++j) {
            std::vector<double> xs;
            for (const auto& m : s.samples) xs.push_back(m(l, j));
            cv += pop_var(xs);
        }
        cv /= 5.0;
        CHECK(std::abs(report.content_variance(l) - cv) <= 1e-12);
        CHECK(report.rho(l) == doctest::Approx(cv / report.positional_variance).epsilon(1e-12));
        CHECK(report.rho(l) >= 0.0);
    }
    const auto per_layer = estimate_positional_bias_per_layer(s);
    CHECK((per_layer.colwise().mean().transpose() - f).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("identical samples give zero content variance") {
    PositionStats s;
    Eigen::MatrixXd m(3, 4);
    m << 0.3, 0.1, 0.1, 0.3,  //
        0.3, 0.1, 0.1, 0.3,   //
        0.2, 0.2, 0.1, 0.3;
    s.samples = {m, m, m};
    const auto r = variance_ratio(s);
    CHECK(r.rho.cwiseAbs().maxCoeff() <= 1e-20);
    CHECK_FALSE(r.l_star.has_value());
}

TEST_CASE("rho is invariant to relabeling samples") {
    Rng rng(4);
    auto s = random_stats(rng, 60, 3, 4);
    const auto before = variance_ratio(s);
    rng.shuffle(std::span<Eigen::MatrixXd>(s.samples));
    const auto after = variance_ratio(s);
    CHECK((before.rho - after.rho).cwiseAbs().maxCoeff() <= 1e-12 * before.rho.cwiseAbs().maxCoeff());
    CHECK(before.l_star == after.l_star);
}

TEST_CASE("threshold lookup") {
    CHECK(find_regime_threshold(Eigen::Vector4d(0.2, 0.6, 1.3, 4.0)) == std::optional<Eigen::Index>{2});
    CHECK_FALSE(find_regime_threshold(Eigen::Vector2d(0.1, 0.2)).has_value());
    CHECK(find_regime_threshold(Eigen::Vector2d(1.0, 0.2)) == std::optional<Eigen::Index>{0});
}

TEST_CASE("preconditions") {
    PositionStats one;
    one.samples.push_back(Eigen::MatrixXd::Constant(1, 3, 0.1));
    CHECK_THROWS_AS(estimate_positional_bias(one), InvalidArgument);
    PositionStats narrow;
    narrow.samples = {Eigen::MatrixXd::Constant(1, 1, 0.1), Eigen::MatrixXd::Constant(1, 1, 0.2)};
    CHECK_THROWS_AS(variance_ratio(narrow), InvalidArgument);
}

TEST_CASE("estimated ratio tracks the generator's analytic ratio") {
    // V[f] = beta^2 * 0.175 for k = 5; sigma puts rho at 0.1 when g = 1.
    SyntheticBasinParams p;
    p.f_base = 0.1;
    p.f_curvature = 0.05;
    p.query_mass = 0.05;
    p.num_layers = 3;
    p.layer_noise_growth = {1.0, 2.0, 4.0};
    const double vf = p.f_curvature * p.f_curvature * 0.175;
    p.noise_scale = std::sqrt(0.1 * vf);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        p.seed = seed;
        const auto r = variance_ratio(generate_slot_samples(p, 500));
        for (Eigen::Index l = 0; l < 3; ++l) {
            const double g = p.layer_noise_growth[static_cast<std::size_t>(l)];
            const double analytic = g * g * p.noise_scale * p.noise_scale / vf;
            CHECK(std::abs(r.rho(l) / analytic - 1.0) < 0.15);
        }
        CHECK(r.l_star == std::optional<Eigen::Index>{2});
    }
}
