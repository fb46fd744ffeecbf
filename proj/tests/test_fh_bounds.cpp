#include <doctest.h>

#include <cmath>
#include <random>

#include "cfbound/fh_bounds.hpp"
#include "cfbound/mathutil.hpp"
#include "cfbound/rng.hpp"
#include "cfbound/simgen.hpp"

using namespace cfbound;

namespace {

PerPointNuisance row(double th0, double th1, int a, bool le0, bool le1, double pi1) {
    PerPointNuisance r;
    r.theta0 = th0;
    r.theta1 = th1;
    r.a = a;
    r.y_le_y0 = le0;
    r.y_le_y1 = le1;
    r.pi1 = pi1;
    return r;
}

// Oracle-sampled rows from the linear SCM for property checks: exact theta and
// pi, observed (A, Y) drawn from the model.
std::vector<PerPointNuisance> oracle_rows(std::size_t n, double y1, double y0,
                                          std::uint64_t seed) {
    const auto sample = gen_bounds_dgp({BoundsVariant::LinearSCM, n, seed});
    std::vector<PerPointNuisance> rows(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x1 = sample.data.x_row(i)[0], x2 = sample.data.x_row(i)[1];
        rows[i].theta1 = bounds_theta(BoundsVariant::LinearSCM, 1, y1, x1, x2);
        rows[i].theta0 = bounds_theta(BoundsVariant::LinearSCM, 0, y0, x1, x2);
        rows[i].pi1 = std::clamp(bounds_propensity(x1, x2), 0.01, 0.99);
        rows[i].a = static_cast<int>(sample.data.a()[i]);
        rows[i].y_le_y0 = sample.data.y()[i] <= y0;
        rows[i].y_le_y1 = sample.data.y()[i] <= y1;
    }
    return rows;
}

}  // namespace

TEST_CASE("fh_pointwise: direct formula") {
    CHECK(fh_pointwise(0.3, 0.5) == std::pair<double, double>{0.0, 0.3});
    CHECK(fh_pointwise(1.0, 1.0) == std::pair<double, double>{1.0, 1.0});
    const auto [l, u] = fh_pointwise(0.7, 0.8);
    CHECK(l == doctest::Approx(0.5));
    CHECK(u == doctest::Approx(0.7));
    CHECK_THROWS_AS(fh_pointwise(1.2, 0.5), Error);
}

TEST_CASE("logsumexp_min: closed forms") {
    CHECK(logsumexp_min(0.5, 0.5, 10.0) ==
          doctest::Approx(0.5 - std::log(2.0) / 10.0).epsilon(1e-14));
    CHECK(logsumexp_min(0.0, 1.0, 1.0) ==
          doctest::Approx(-std::log(1.0 + std::exp(-1.0))).epsilon(1e-14));
    CHECK(std::abs(logsumexp_min(0.2, 0.8, 50.0) - 0.2) < 1e-13);
}

TEST_CASE("logsumexp_min: sandwich min - ln2/t <= g_t <= min") {
    auto eng = make_engine(17);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::uniform_real_distribution<double> tdist(1e-3, 1e6);
    for (int i = 0; i < 10000; ++i) {
        const double u = unif(eng), v = unif(eng), t = tdist(eng);
        const double g = logsumexp_min(u, v, t);
        const double m = std::min(u, v);
        CHECK(g <= m + 1e-12);
        CHECK(g >= m - std::log(2.0) / t - 1e-12);
    }
}

TEST_CASE("softplus_max: sandwich max(s,0) <= g <= max(s,0) + ln2/t") {
    auto eng = make_engine(18);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::uniform_real_distribution<double> tdist(1e-3, 1e5);
    for (int i = 0; i < 1000; ++i) {
        const double u = unif(eng), v = unif(eng), t = tdist(eng);
        const double g = softplus_max(u, v, t);
        const double m = std::max(u + v - 1.0, 0.0);
        CHECK(g >= m - 1e-12);
        CHECK(g <= m + std::log(2.0) / t + 1e-12);
    }
}

TEST_CASE("smooth weights live on the simplex") {
    auto eng = make_engine(19);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::uniform_real_distribution<double> tdist(1e-3, 1e6);
    for (int i = 0; i < 1000; ++i) {
        const double th0 = unif(eng), th1 = unif(eng), t = tdist(eng);
        const double w0 = smooth_weight(th0, th1, t);
        const double w1 = smooth_weight(th1, th0, t);
        CHECK(w0 >= 0.0);
        CHECK(w1 >= 0.0);
        CHECK(w0 + w1 == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(smooth_weight(0.4, 0.4, 123.0) == doctest::Approx(0.5));
}

TEST_CASE("plugin_bounds: constant nuisances") {
    std::vector<PerPointNuisance> rows(5, row(0.4, 0.4, 0, false, false, 0.5));
    const auto pair = plugin_bounds(rows, 1.0, 0.0);
    CHECK(pair.lower.value == doctest::Approx(0.0));
    CHECK(pair.upper.value == doctest::Approx(0.4));
    // theta constant in x: plugin equals fh_pointwise of the means
    const auto [l, u] = fh_pointwise(0.4, 0.4);
    CHECK(pair.lower.value == doctest::Approx(l));
    CHECK(pair.upper.value == doctest::Approx(u));
    CHECK_THROWS_AS(plugin_bounds({}, 1.0, 0.0), Error);
}

TEST_CASE("dr_direct_upper: saturated CDF gives 1 with zero se") {
    std::vector<PerPointNuisance> rows(8, row(1.0, 1.0, 0, true, true, 0.5));
    const auto est = dr_direct_upper(rows, 1.0, 0.0);
    CHECK(est.raw == doctest::Approx(1.0));
    CHECK(est.se == doctest::Approx(0.0));
}

TEST_CASE("dr_direct_upper: single-row summand") {
    // theta0=0.2 < theta1=0.6 so the selector picks arm 0; A=0 matches,
    // pi_0 = 0.5, Y <= y0: summand = 0.2 + (1/0.5)(1 - 0.2) = 1.8
    std::vector<PerPointNuisance> rows{row(0.2, 0.6, 0, true, false, 0.5)};
    const auto est = dr_direct_upper(rows, 1.0, 0.0);
    CHECK(est.raw == doctest::Approx(1.8));
    CHECK(est.value == 1.0);  // truncated for reporting
}

TEST_CASE("dr_direct_upper: four-row hand enumeration") {
    // Hand enumeration of the four summands (selector, matched arm, residual):
    //  (0.2,0.6,A=0,le0=1,pi0=0.5): d=0, 0.2 + 2(1-0.2)      = 1.8
    //  (0.2,0.6,A=1,.. ,pi0=0.5):   d=0, A!=d                = 0.2
    //  (0.7,0.3,A=1,le1=0,pi1=0.4): d=1, 0.3 + 2.5(0-0.3)    = -0.45
    //  (0.7,0.3,A=0,.. ,pi1=0.6):   d=1, A!=d                = 0.3
    std::vector<PerPointNuisance> rows{
        row(0.2, 0.6, 0, true, true, 0.5),   // pi1 irrelevant; pi0 = 1-0.5
        row(0.2, 0.6, 1, true, true, 0.5),
        row(0.7, 0.3, 1, false, false, 0.4),
        row(0.7, 0.3, 0, false, false, 0.6),
    };
    const std::vector<double> summands{1.8, 0.2, -0.45, 0.3};
    double m = 0.0;
    for (double s : summands) m += s;
    m /= 4.0;
    double var = 0.0;
    for (double s : summands) var += (s - m) * (s - m);
    var /= 4.0;
    const auto est = dr_direct_upper(rows, 1.0, 0.0);
    CHECK(est.raw == doctest::Approx(m).epsilon(1e-12));
    CHECK(est.se == doctest::Approx(std::sqrt(var / 4.0)).epsilon(1e-12));
}

TEST_CASE("dr_smooth_upper: saturates to the direct estimator at large t") {
    const auto rows = oracle_rows(500, 2.0117, -1.0117, 99);
    const auto direct = dr_direct_upper(rows, 2.0117, -1.0117);
    const auto smooth = dr_smooth_upper(rows, 1e4, 2.0117, -1.0117);
    // min per-row gap in this draw comfortably exceeds 0.01
    double min_gap = 1.0;
    for (const auto& r : rows) min_gap = std::min(min_gap, std::abs(r.theta1 - r.theta0));
    if (min_gap >= 0.01) {
        CHECK(std::abs(smooth.raw - direct.raw) < 1e-3);
    }
    const auto smooth6 = dr_smooth_upper(rows, 1e6, 2.0117, -1.0117);
    if (min_gap > 1e-4) {
        CHECK(std::abs(smooth6.raw - direct.raw) < 1e-6);
    }
}

TEST_CASE("dr_smooth_upper: matches the Monte-Carlo truth with oracle nuisances") {
    const double y1 = 2.0117, y0 = -1.0117;
    const auto oracle = oracle_bounds_grid(BoundsVariant::LinearSCM, {{y1, y0}}, 50.0, 400000,
                                           20240707)[0];
    const int reps = 25;
    std::vector<double> estimates;
    for (int r = 0; r < reps; ++r) {
        const auto rows = oracle_rows(2000, y1, y0, mix_seed(555, r));
        estimates.push_back(dr_smooth_upper(rows, 50.0, y1, y0).raw);
    }
    const double m = mean(estimates);
    const double tol = 3.0 * std::sqrt(oracle.smooth_u.mc_se * oracle.smooth_u.mc_se +
                                       variance_pop(estimates) / reps);
    CHECK(std::abs(m - oracle.smooth_u.value) < tol);
}

TEST_CASE("dr_smooth_lower: boundary symmetry and saturation") {
    {
        // theta0 + theta1 = 1: weight 0.5, g = ln2/t; no matched residual
        std::vector<PerPointNuisance> rows{row(0.3, 0.7, 0, false, false, 0.5)};
        const double t = 8.0;
        const auto est = dr_smooth_lower(rows, t, 1.0, 0.0);
        // residual term: w * (1/pi0) * (0 - 0.3) with w = 0.5
        const double expect = 0.5 * (0.0 - 0.3) / 0.5 + std::log(2.0) / t;
        CHECK(est.raw == doctest::Approx(expect).epsilon(1e-12));
    }
    {
        std::vector<PerPointNuisance> rows(4, row(1.0, 1.0, 0, true, true, 0.5));
        const auto est = dr_smooth_lower(rows, 1e4, 1.0, 0.0);
        CHECK(std::abs(est.raw - 1.0) < 1e-3);
    }
}

TEST_CASE("doubly robust insensitivity: O(delta^2) under joint nuisance perturbation") {
    // Perturb theta by +delta and pi by +delta: the first-order pieces cancel
    // in expectation, so E[psi_hat] moves by O(delta^2). The (A, Y)-average is
    // taken by enumerating the four outcome configurations per covariate draw
    // (weights from the oracle), which removes sampling noise that would mask
    // the quadratic scaling. Small t keeps higher-order terms negligible. The
    // pair is asymmetric: at (1, 0) the linear SCM has theta1 = theta0, which
    // kills the quadratic coefficient by symmetry.
    const double y1 = 1.5, y0 = -0.5, t = 5.0;
    auto base_rows = oracle_rows(20000, y1, y0, 4242);
    std::vector<PerPointNuisance> kept;
    for (const auto& r : base_rows) {
        if (r.theta0 > 0.05 && r.theta0 < 0.9 && r.theta1 > 0.05 && r.theta1 < 0.9) {
            kept.push_back(r);  // keep +delta <= 0.04 interior
        }
    }
    auto expected_value = [&](double delta) {
        double total = 0.0;
        for (const auto& r : kept) {
            const double pi1 = r.pi1;          // true propensity
            const double th[2] = {r.theta0, r.theta1};
            double row_mean = 0.0;
            for (int a = 0; a < 2; ++a) {
                for (int ind = 0; ind < 2; ++ind) {
                    const double p_cfg = (a == 1 ? pi1 : 1.0 - pi1) *
                                         (ind == 1 ? th[a] : 1.0 - th[a]);
                    PerPointNuisance cfg = r;
                    cfg.a = a;
                    cfg.y_le_y0 = a == 0 ? ind == 1 : false;
                    cfg.y_le_y1 = a == 1 ? ind == 1 : false;
                    cfg.theta0 = r.theta0 + delta;
                    cfg.theta1 = r.theta1 + delta;
                    cfg.pi1 = r.pi1 + delta;
                    row_mean += p_cfg * dr_smooth_upper({cfg}, t, y1, y0).raw;
                }
            }
            total += row_mean;
        }
        return total / static_cast<double>(kept.size());
    };
    const double base = expected_value(0.0);
    const double d1 = std::abs(expected_value(0.01) - base);
    const double d2 = std::abs(expected_value(0.02) - base);
    const double d4 = std::abs(expected_value(0.04) - base);
    CHECK(d2 / d1 == doctest::Approx(4.0).epsilon(0.2));
    CHECK(d4 / d2 == doctest::Approx(4.0).epsilon(0.2));
}

TEST_CASE("margin_profile: hand curves") {
    {
        std::vector<PerPointNuisance> rows(10, row(0.1, 0.6, 0, false, false, 0.5));
        const auto prof = margin_profile(rows, {0.1, 0.6});
        CHECK(prof.tie_mass[0] == 0.0);
        CHECK(prof.tie_mass[1] == 1.0);
    }
    {
        std::vector<PerPointNuisance> rows(10, row(0.4, 0.4, 0, false, false, 0.5));
        const auto prof = margin_profile(rows, {0.0, 0.1});
        CHECK(prof.tie_mass[0] == 1.0);
        CHECK(prof.tie_mass[1] == 1.0);
        CHECK(prof.flip_fraction == 1.0);
    }
}

TEST_CASE("margin_profile: matches the simulation oracle on the nonlinear SCM") {
    const double y1 = 0.6, y0 = 0.4, tval = 0.05;
    const auto truth = oracle_margin_mass(BoundsVariant::Nonlinear, y1, y0, tval, 200000, 321);
    // Direct-simulation rows with oracle theta at a large n.
    const auto sample = gen_bounds_dgp({BoundsVariant::Nonlinear, 100000, 777});
    std::vector<PerPointNuisance> rows(sample.data.n());
    for (std::size_t i = 0; i < sample.data.n(); ++i) {
        const double x1 = sample.data.x_row(i)[0], x2 = sample.data.x_row(i)[1];
        rows[i].theta1 = bounds_theta(BoundsVariant::Nonlinear, 1, y1, x1, x2);
        rows[i].theta0 = bounds_theta(BoundsVariant::Nonlinear, 0, y0, x1, x2);
    }
    const auto prof = margin_profile(rows, {tval});
    CHECK(std::abs(prof.tie_mass[0] - truth.value) < 0.01);
}

TEST_CASE("width_reduction: arithmetic and equality case") {
    CHECK(width_reduction({0.1, 0.6}, {0.1, 0.6}) == doctest::Approx(0.0));
    CHECK(width_reduction({0.0, 0.7}, {0.1, 0.6}) == doctest::Approx(0.2));
}

TEST_CASE("width_reduction: positive on the linear SCM oracle") {
    const auto oracle =
        oracle_bounds_grid(BoundsVariant::LinearSCM, {{1.0, 0.0}}, 50.0, 1000000, 11)[0];
    const double reduction = width_reduction({oracle.l_marg.value, oracle.u_marg.value},
                                             {oracle.l.value, oracle.u.value});
    CHECK(reduction > 0.0);
    // brute-force replication with fresh draws agrees within 3 MC ses
    const auto oracle2 =
        oracle_bounds_grid(BoundsVariant::LinearSCM, {{1.0, 0.0}}, 50.0, 1000000, 12)[0];
    const double reduction2 = width_reduction({oracle2.l_marg.value, oracle2.u_marg.value},
                                              {oracle2.l.value, oracle2.u.value});
    const double se = 3.0 * std::sqrt(oracle.l.mc_se * oracle.l.mc_se +
                                      oracle.u.mc_se * oracle.u.mc_se +
                                      oracle.l_marg.mc_se * oracle.l_marg.mc_se +
                                      oracle.u_marg.mc_se * oracle.u_marg.mc_se);
    CHECK(std::abs(reduction - reduction2) < 2.0 * se);
}

TEST_CASE("truncation: raw kept, reported value and CI clamped to [0,1]") {
    std::vector<PerPointNuisance> rows{row(0.9, 0.95, 0, true, true, 0.9)};
    // summand: 0.9 + (1/0.1)(1-0.9) = 1.9
    const auto est = dr_direct_upper(rows, 1.0, 0.0);
    CHECK(est.raw == doctest::Approx(1.9));
    CHECK(est.value == 1.0);
    CHECK(est.ci_lo >= 0.0);
    CHECK(est.ci_hi <= 1.0);
    CHECK(est.ci_lo <= est.value);
    CHECK(est.value <= est.ci_hi);
}
