#include <doctest.h>

#include <cmath>
#include <random>

#include "cfbound/hsic.hpp"
#include "cfbound/mathutil.hpp"
#include "cfbound/rng.hpp"
#include "cfbound/simgen.hpp"

using namespace cfbound;

TEST_CASE("gen_bounds_dgp: seed determinism") {
    const auto a = gen_bounds_dgp({BoundsVariant::LinearSCM, 5, 777});
    const auto b = gen_bounds_dgp({BoundsVariant::LinearSCM, 5, 777});
    CHECK(a.data.y() == b.data.y());
    CHECK(a.data.a() == b.data.a());
    CHECK(a.data.x() == b.data.x());
    CHECK(a.y0 == b.y0);
    CHECK(a.y1 == b.y1);
}

TEST_CASE("gen_bounds_dgp: linear variant has unit effect row-wise, exactly") {
    const auto s = gen_bounds_dgp({BoundsVariant::LinearSCM, 200, 5});
    for (std::size_t i = 0; i < 200; ++i) {
        CHECK(s.y1[i] - s.y0[i] == 1.0);
    }
}

TEST_CASE("gen_bounds_dgp: observed outcome equals the selected potential outcome") {
    for (auto variant : {BoundsVariant::LinearSCM, BoundsVariant::Nonlinear}) {
        const auto s = gen_bounds_dgp({variant, 500, 9});
        for (std::size_t i = 0; i < 500; ++i) {
            const double expect = s.data.a()[i] == 1.0 ? s.y1[i] : s.y0[i];
            CHECK(s.data.y()[i] == expect);
        }
    }
}

TEST_CASE("gen_bounds_dgp: CLT-scale moments at one million rows") {
    const auto s = gen_bounds_dgp({BoundsVariant::LinearSCM, 1000000, 101});
    double mean_x1 = 0.0, frac_a = 0.0;
    for (std::size_t i = 0; i < s.data.n(); ++i) {
        mean_x1 += s.data.x_row(i)[0];
        frac_a += s.data.a()[i];
    }
    mean_x1 /= 1e6;
    frac_a /= 1e6;
    CHECK(std::abs(mean_x1) <= 0.004);
    CHECK(std::abs(frac_a - 0.5) <= 0.002);
}

TEST_CASE("gen_iv_dgp: determinism and instrument independence") {
    const auto a = gen_iv_dgp({IvOutcome::NonlinearOutcome, IvTreatment::ContinuousTreatment,
                               100, 31});
    const auto b = gen_iv_dgp({IvOutcome::NonlinearOutcome, IvTreatment::ContinuousTreatment,
                               100, 31});
    CHECK(a.data.y() == b.data.y());
    CHECK(a.z_c == b.z_c);

    const auto big = gen_iv_dgp({IvOutcome::LinearOutcome, IvTreatment::BinaryTreatment,
                                 1000000, 207});
    CHECK(std::abs(pearson_corr(big.data.s(), big.z_c)) <= 0.004);
}

TEST_CASE("gen_iv_dgp: linear binary oracle ATE is the treatment coefficient") {
    CHECK(oracle_ate(IvOutcome::LinearOutcome).value == doctest::Approx(2.0));
    CHECK(oracle_ate(IvOutcome::LinearOutcome).mc_se == 0.0);
}

TEST_CASE("oracle marginal cdf: Gaussian convolution identity for the linear SCM") {
    const auto truth = oracle_marginal_cdf(BoundsVariant::LinearSCM, 1, 1.0, 0, 0);
    CHECK(truth.value == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(truth.analytic);
    // Monte Carlo agrees for the nonlinear variant against brute force draws
    const auto mc = oracle_marginal_cdf(BoundsVariant::Nonlinear, 0, 0.5, 500000, 12);
    auto eng = make_engine(13);
    std::normal_distribution<double> gauss(0.0, 1.0);
    double hits = 0.0;
    const int n = 500000;
    for (int i = 0; i < n; ++i) {
        const double x1 = gauss(eng), x2 = gauss(eng), ey = gauss(eng);
        if (std::sin(2.0 * x1) + x2 * x2 + ey <= 0.5) hits += 1.0;
    }
    CHECK(std::abs(mc.value - hits / n) <= 3.0 * (mc.mc_se + 0.001));
}

TEST_CASE("oracle bounds: U at huge y1 collapses to the marginal CDF of Y(0)") {
    const double y0 = 0.3;
    const auto grid = oracle_bounds_grid(BoundsVariant::LinearSCM, {{1e6, y0}}, 50.0,
                                         200000, 15);
    const auto f0 = oracle_marginal_cdf(BoundsVariant::LinearSCM, 0, y0, 0, 0);
    CHECK(std::abs(grid[0].u.value - f0.value) <= 3.0 * grid[0].u.mc_se + 1e-9);
}

TEST_CASE("oracle bounds: ordering L_marg <= L <= U <= U_marg on both DGPs") {
    const std::vector<std::pair<double, double>> pairs{
        {0.0, -1.0}, {1.0, 0.0}, {2.0, 1.0}, {1.0, -1.0}, {2.0, 0.0}};
    for (auto variant : {BoundsVariant::LinearSCM, BoundsVariant::Nonlinear}) {
        const auto grid = oracle_bounds_grid(variant, pairs, 50.0, 1000000, 21);
        for (const auto& po : grid) {
            const double tol = 3.0 * (po.l.mc_se + po.u.mc_se + po.l_marg.mc_se +
                                      po.u_marg.mc_se);
            CHECK(po.l_marg.value <= po.l.value + tol);
            CHECK(po.l.value <= po.u.value + tol);
            CHECK(po.u.value <= po.u_marg.value + tol);
            // smoothed truths respect the log-sum-exp sandwich
            CHECK(po.smooth_u.value <= po.u.value + tol);
            CHECK(po.smooth_u.value >= po.u.value - std::log(2.0) / 50.0 - tol);
        }
    }
}

TEST_CASE("oracle bounds: determinism across calls") {
    const auto a = oracle_bounds_grid(BoundsVariant::Nonlinear, {{0.5, 0.5}}, 50.0, 100000, 33);
    const auto b = oracle_bounds_grid(BoundsVariant::Nonlinear, {{0.5, 0.5}}, 50.0, 100000, 33);
    CHECK(a[0].u.value == b[0].u.value);
    CHECK(a[0].l.value == b[0].l.value);
}

TEST_CASE("oracle dose response: analytic values") {
    CHECK(oracle_dose_response(IvOutcome::LinearOutcome, 0.5).value == doctest::Approx(2.0));
    // nonlinear: 2 + 0.3 a + 0.2 sin(2a + 0.5)
    const double a = 0.7;
    CHECK(oracle_dose_response(IvOutcome::NonlinearOutcome, a).value ==
          doctest::Approx(2.0 + 0.3 * a + 0.2 * std::sin(2.0 * a + 0.5)).epsilon(1e-12));
}

TEST_CASE("iv_oracle_propensity: quadrature matches Monte Carlo") {
    auto eng = make_engine(99);
    std::uniform_real_distribution<double> us(-2.0, 2.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (double z : {-1.0, 0.0, 1.5}) {
        double mc = 0.0;
        const int n = 400000;
        for (int i = 0; i < n; ++i) {
            const double s = us(eng);
            const double zs = 0.5 * s + 0.1 * std::tanh(s) + 0.3 * sigmoid(2.0 * s) +
                              0.2 * z + 0.2 * gauss(eng);
            mc += sigmoid(zs);
        }
        mc /= n;
        CHECK(std::abs(iv_oracle_propensity(z) - mc) <= 0.005);
    }
}

TEST_CASE("iv_theta: conditional CDF of the observed outcome") {
    // linear: Y | A=a, Z=z ~ N(1 + 2a + 3z, 0.2^2)
    const double got = iv_theta(IvOutcome::LinearOutcome, 1, 3.1, 0.0);
    CHECK(got == doctest::Approx(norm_cdf((3.1 - 3.0) / 0.2)).epsilon(1e-12));
}

TEST_CASE("instrument exogeneity: HSIC permutation test accepts on generated data") {
    int accepted = 0;
    const int seeds = 100;
    for (int s = 0; s < seeds; ++s) {
        const auto sample = gen_iv_dgp({IvOutcome::LinearOutcome,
                                        IvTreatment::ContinuousTreatment, 200,
                                        static_cast<std::uint64_t>(9000 + s)});
        const double bz = median_bandwidth(scalars(sample.z_c));
        const double bs = median_bandwidth(scalars(sample.data.s()));
        const auto res = permutation_test(scalars(sample.z_c), scalars(sample.data.s()),
                                          {bz}, {bs}, 99, 71 + s);
        if (res.p_value > 0.05) ++accepted;
    }
    CHECK(accepted >= 90);
}

TEST_CASE("oracle margin mass: total tie mass when thresholds align symmetrically") {
    // linear SCM at (y1, y0) = (1, 0): theta1 == theta0 pointwise, so the gap
    // is identically zero and the mass at any positive margin is 1
    const auto truth = oracle_margin_mass(BoundsVariant::LinearSCM, 1.0, 0.0, 1e-12, 50000, 3);
    CHECK(truth.value == doctest::Approx(1.0));
}

TEST_CASE("oracle quantiles: linear SCM medians") {
    CHECK(oracle_marginal_quantile(BoundsVariant::LinearSCM, 1, 0.5, 0, 0) ==
          doctest::Approx(1.0).epsilon(1e-9));
    CHECK(oracle_marginal_quantile(BoundsVariant::LinearSCM, 0, 0.5, 0, 0) ==
          doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("oracle_truth umbrella: routing and unsupported targets") {
    const auto u = oracle_truth_bounds(BoundsVariant::LinearSCM, "u", 1.0, 0.0, 50.0, 10000, 1);
    CHECK(u.target == "u");
    CHECK_THROWS_AS(oracle_truth_bounds(BoundsVariant::LinearSCM, "zzz", 1, 0, 50, 100, 1),
                    Error);
    CHECK(oracle_truth_iv(IvOutcome::LinearOutcome, "ate", 1.0, 0.0).value ==
          doctest::Approx(2.0));
    CHECK_THROWS_AS(oracle_truth_iv(IvOutcome::LinearOutcome, "zzz", 1.0, 0.0), Error);
}
