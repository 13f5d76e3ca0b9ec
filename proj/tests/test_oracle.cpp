#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "gibbslab/oracle.hpp"

using namespace gibbslab;

namespace {

DisorderSample zero_field_sample(int N) {
    DisorderSample d;
    d.family = "random_field";
    d.N = N;
    d.params = {{"field_std", 0.0}};
    d.model = std::make_shared<RandomFieldModel>(std::vector<double>(N, 0.0));
    return d;
}

DisorderSample const_field_sample(int N, double h) {
    DisorderSample d;
    d.family = "random_field";
    d.N = N;
    d.model = std::make_shared<RandomFieldModel>(std::vector<double>(N, h));
    return d;
}

} // namespace

TEST_CASE("1D quadrature moments of simple potentials", "[oracle]") {
    auto flat = [](double) { return 0.0; };
    CHECK(quadrature_moment_1d(flat, 1).value == Catch::Approx(0.0).margin(1e-13));
    CHECK(quadrature_moment_1d(flat, 2).value == Catch::Approx(1.0 / 3).epsilon(1e-12));

    auto linear = [](double x) { return x; };
    const auto m = quadrature_moment_1d(linear, 1);
    // closed form: the Langevin function coth(1) - 1
    CHECK(m.value == Catch::Approx(1.0 / std::tanh(1.0) - 1.0).margin(1e-10));
    CHECK(m.error_estimate <= 1e-10);

    CHECK_THROWS_AS(quadrature_moment_1d(flat, 1, 32), std::invalid_argument);
    auto bad = [](double x) { return x > 0 ? INFINITY : 0.0; };
    CHECK_THROWS_AS(quadrature_moment_1d(bad, 1), std::domain_error);
}

TEST_CASE("doubling the resolution stays within the reported error", "[oracle]") {
    auto phi = [](double x) { return 1.3 * x - 0.4 * x * x; };
    for (int k : {1, 2, 3}) {
        const auto coarse = quadrature_moment_1d(phi, k, 64);
        const auto fine = quadrature_moment_1d(phi, k, 128);
        CHECK(std::fabs(coarse.value - fine.value) <= coarse.error_estimate + 1e-14);
    }
}

TEST_CASE("separable Gibbs moments", "[oracle]") {
    SECTION("uniform measure at zero parameters") {
        const auto d = zero_field_sample(3);
        const std::vector<int> powers{1, 2, 3, 4};
        const auto m = separable_gibbs_moments(d, 0.0, 1, powers);
        CHECK(m[0] == Catch::Approx(0.0).margin(1e-12));
        CHECK(m[1] == Catch::Approx(1.0 / 3).epsilon(1e-10));
        CHECK(m[2] == Catch::Approx(0.0).margin(1e-12));
        CHECK(m[3] == Catch::Approx(1.0 / 5).epsilon(1e-10));
    }
    SECTION("unit field reproduces the Langevin value") {
        const auto d = const_field_sample(2, 1.0);
        const std::vector<int> powers{1};
        const auto m = separable_gibbs_moments(d, 0.0, 0, powers);
        CHECK(m[0] == Catch::Approx(1.0 / std::tanh(1.0) - 1.0).margin(1e-9));
    }
    SECTION("second moment strictly decreasing in the regularization") {
        const auto d = zero_field_sample(1);
        const std::vector<int> powers{2};
        const double m0 = separable_gibbs_moments(d, 0.0, 0, powers)[0];
        const double m1 = separable_gibbs_moments(d, 1.0, 0, powers)[0];
        const double m10 = separable_gibbs_moments(d, 10.0, 0, powers)[0];
        CHECK(m0 > m1);
        CHECK(m1 > m10);
    }
    SECTION("rejects non-separable models") {
        const auto d = make_quadratic(2, 4, 1.0, 5);
        const std::vector<int> powers{1};
        CHECK_THROWS_AS(separable_gibbs_moments(d, 0.0, 0, powers), std::invalid_argument);
    }
}

TEST_CASE("grid oracle basics", "[oracle]") {
    SECTION("normalization") {
        const auto d = make_quadratic(2, 4, 1.0, 17);
        const double one = grid_gibbs_expectation(
            d, 0.3, 1, [](std::span<const double>) { return 1.0; });
        CHECK(one == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("independent replicas of a symmetric target decorrelate exactly") {
        const auto d = zero_field_sample(1);
        const double v = grid_gibbs_expectation(
            d, 0.0, 2, [](std::span<const double> flat) { return flat[0] * flat[1]; });
        CHECK(v == Catch::Approx(0.0).margin(1e-12));
    }
    SECTION("grid matches the separable formula when the coupling vanishes") {
        Rng rng(33);
        std::vector<double> h{0.7, -0.4};
        DisorderSample dq;
        dq.family = "quadratic";
        dq.N = 2;
        Eigen::VectorXd hv(2);
        hv << h[0], h[1];
        dq.model = std::make_shared<QuadraticModel>(Eigen::MatrixXd::Zero(2, 2), hv);
        DisorderSample drf;
        drf.family = "random_field";
        drf.N = 2;
        drf.model = std::make_shared<RandomFieldModel>(h);

        const std::vector<int> k{1, 1};
        GridOracle grid(dq, 0.25);
        SeparableOracle sep(drf, 0.25);
        CHECK(grid.multioverlap_mean(k) ==
              Catch::Approx(sep.multioverlap_mean(k)).margin(1e-8));
        CHECK(grid.thermal_variance(k) ==
              Catch::Approx(sep.thermal_variance(k)).margin(1e-8));
    }
    SECTION("dimension guards") {
        const auto d = make_quadratic(4, 8, 1.0, 3);
        CHECK_THROWS_AS(GridOracle(d, 0.1), std::invalid_argument); // N > 3
        const auto d3 = make_quadratic(3, 6, 1.0, 4);
        GridOracle g(d3, 0.1);
        CHECK_THROWS_AS(
            g.replicated_expectation(4, [](std::span<const double>) { return 1.0; }),
            std::invalid_argument); // 12 grid dimensions
        CHECK_THROWS_AS(GridOracle(d3, 0.1, 40), std::invalid_argument);
    }
}

TEST_CASE("oracle self-consistency on a perturbed separable model", "[oracle]") {
    auto d = make_random_field(2, 0.8, 4711);
    attach_perturbation(d, 1.0, 1.0, TruncationPolicy{2, 4}, 4712);
    const double eps = 0.4;
    SeparableOracle sep(d, eps);
    GridOracle grid(d, eps);
    const std::vector<int> k1{1}, k21{2, 1};
    CHECK(grid.multioverlap_mean(k1) == Catch::Approx(sep.multioverlap_mean(k1)).margin(1e-6));
    CHECK(grid.multioverlap_mean(k21) == Catch::Approx(sep.multioverlap_mean(k21)).margin(1e-6));
    CHECK(grid.thermal_variance(k21) == Catch::Approx(sep.thermal_variance(k21)).margin(1e-6));
    for (int i = 0; i < 2; ++i)
        for (int p : {1, 2, 3}) {
            std::vector<int> a(2, 0);
            a[i] = p;
            CHECK(grid.joint_moment(a) == Catch::Approx(sep.site_moment(i, p)).margin(1e-6));
        }
}

TEST_CASE("free entropy", "[oracle]") {
    SECTION("zero Hamiltonian gives the box volume") {
        const auto d = zero_field_sample(5);
        CHECK(free_entropy(d, 0.0) == Catch::Approx(5.0 * std::log(2.0)).margin(1e-9));
    }
    SECTION("unit field in 1D: ln(e - 1/e)") {
        const auto d = const_field_sample(1, 1.0);
        CHECK(free_entropy(d, 0.0) ==
              Catch::Approx(std::log(2.0 * std::sinh(1.0))).margin(1e-9));
    }
    SECTION("separable free entropy is additive over sites") {
        auto d2 = make_random_field(2, 1.0, 909);
        const auto* m = dynamic_cast<const RandomFieldModel*>(d2.model.get());
        DisorderSample s0 = const_field_sample(1, m->fields()[0]);
        DisorderSample s1 = const_field_sample(1, m->fields()[1]);
        CHECK(free_entropy(d2, 0.3) ==
              Catch::Approx(free_entropy(s0, 0.3) + free_entropy(s1, 0.3)).margin(1e-10));
    }
    SECTION("grid route agrees with the separable route") {
        auto d = make_random_field(2, 1.0, 910);
        attach_perturbation(d, 1.0, 1.0, TruncationPolicy{2, 4}, 911);
        DisorderSample coupled = d;
        Eigen::VectorXd hv(2);
        const auto* m = dynamic_cast<const RandomFieldModel*>(d.model.get());
        hv << m->fields()[0], m->fields()[1];
        coupled.family = "quadratic";
        coupled.model = std::make_shared<QuadraticModel>(Eigen::MatrixXd::Zero(2, 2), hv);
        CHECK(free_entropy(coupled, 0.2) == Catch::Approx(free_entropy(d, 0.2)).margin(1e-8));
    }
}

TEST_CASE("truncated Poisson averages", "[oracle]") {
    const auto total = truncated_poisson_average([](long) { return 1.0; }, 2.0, 1.0, 1e-10);
    CHECK(total.value == Catch::Approx(1.0).margin(1e-9));
    CHECK(total.cutoff > 0);

    const auto mean_f = truncated_poisson_average_linear(
        [](long r) { return static_cast<double>(r); }, 2.0, 1.0, 1e-10);
    CHECK(mean_f.value == Catch::Approx(2.0).margin(1e-9));

    // E r^2 = s + s^2 = 6 at s = 2
    const auto second = truncated_poisson_average(
        [](long r) { return static_cast<double>(r) * r; }, 2.0, 1e4, 1e-8);
    CHECK(second.value == Catch::Approx(6.0).margin(1e-7));

    CHECK_THROWS_AS(truncated_poisson_average([](long) { return 1.0; }, 2.0, INFINITY, 1e-8),
                    std::invalid_argument);
}

TEST_CASE("site cdf is a proper distribution function", "[oracle]") {
    const auto d = zero_field_sample(2);
    SeparableOracle sep(d, 0.0);
    const auto cdf = sep.site_cdf(0);
    CHECK(cdf(-1.0) == 0.0);
    CHECK(cdf(1.0) == 1.0);
    for (double x : {-0.8, -0.3, 0.0, 0.4, 0.9})
        CHECK(cdf(x) == Catch::Approx((x + 1) / 2).margin(1e-6)); // uniform on the box
}
