#include <doctest.h>

#include <cmath>
#include <random>

#include "cfbound/mathutil.hpp"
#include "cfbound/nuisance.hpp"
#include "cfbound/rng.hpp"
#include "cfbound/simgen.hpp"

using namespace cfbound;

namespace {

NuisanceConfig cfg_default() { return NuisanceConfig{}; }

}  // namespace

TEST_CASE("conditional cdf: degenerate indicator predicts exactly 1") {
    // every Y below the smallest threshold
    Eigen::MatrixXd x(8, 1);
    x.setRandom();
    std::vector<double> y(8, -5.0), a{0, 1, 0, 1, 0, 1, 0, 1};
    const auto model = ConditionalCdfModel::fit(x, y, a, {0.0, 1.0}, cfg_default());
    const Eigen::MatrixXd pred = model.predict(1, x);
    CHECK(pred.minCoeff() == 1.0);
    CHECK(pred.maxCoeff() == 1.0);
}

TEST_CASE("conditional cdf: intercept-only fit reproduces the arm-wise empirical CDF") {
    auto eng = make_engine(41);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int n = 400;
    Eigen::MatrixXd x(n, 0);  // constant-only feature map
    std::vector<double> y(n), a(n);
    for (int i = 0; i < n; ++i) {
        a[i] = i % 2;
        y[i] = gauss(eng);
    }
    const std::vector<double> grid{-0.5, 0.3};
    const auto model = ConditionalCdfModel::fit(x, y, a, grid, cfg_default());
    for (int arm = 0; arm < 2; ++arm) {
        for (std::size_t g = 0; g < grid.size(); ++g) {
            double count = 0.0, total = 0.0;
            for (int i = 0; i < n; ++i) {
                if (a[i] == arm) {
                    total += 1.0;
                    if (y[i] <= grid[g]) count += 1.0;
                }
            }
            const double empirical = count / total;
            const double fitted = model.predict(arm, Eigen::MatrixXd(1, 0))(0, g);
            CHECK(fitted == doctest::Approx(empirical).epsilon(1e-8));
        }
    }
}

TEST_CASE("conditional cdf: linear SCM fit approximates the analytic Gaussian CDF") {
    const auto sample = gen_bounds_dgp({BoundsVariant::LinearSCM, 20000, 314});
    const Eigen::MatrixXd x = covariate_matrix(sample.data);
    const auto model =
        ConditionalCdfModel::fit(x, sample.data.y(), sample.data.a(), {1.0}, cfg_default());
    Eigen::MatrixXd probe(1, 2);
    probe << 0.0, 0.0;
    // analytic: theta_1(1 | x=(0,0)) = Phi(1 - 1 - 0) = 0.5
    CHECK(std::abs(model.predict(1, probe)(0, 0) - 0.5) <= 0.05);
}

TEST_CASE("conditional cdf: predictions are monotone across the grid after projection") {
    auto eng = make_engine(43);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int n = 300;
    Eigen::MatrixXd x(n, 2);
    std::vector<double> y(n), a(n);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = gauss(eng);
        x(i, 1) = gauss(eng);
        a[i] = i % 2;
        y[i] = x(i, 0) + gauss(eng);
    }
    std::vector<double> grid;
    for (int g = 0; g < 9; ++g) grid.push_back(-2.0 + 0.5 * g);
    const auto model = ConditionalCdfModel::fit(x, y, a, grid, cfg_default());
    for (int arm = 0; arm < 2; ++arm) {
        const Eigen::MatrixXd pred = model.predict(arm, x);
        for (int i = 0; i < n; ++i) {
            for (int g = 1; g < pred.cols(); ++g) {
                CHECK(pred(i, g) >= pred(i, g - 1));  // exact, post-PAVA
            }
            CHECK(pred(i, 0) >= 0.0);
            CHECK(pred(i, pred.cols() - 1) <= 1.0);
        }
    }
}

TEST_CASE("conditional cdf: arm missing raises") {
    Eigen::MatrixXd x(4, 1);
    x.setRandom();
    std::vector<double> y{1, 2, 3, 4}, a{1, 1, 1, 1};
    CHECK_THROWS_AS(ConditionalCdfModel::fit(x, y, a, {0.5}, cfg_default()), Error);
}

TEST_CASE("propensity: balanced arms with constant-only features give 0.5") {
    Eigen::MatrixXd x(10, 0);
    std::vector<double> a{0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
    const auto model = PropensityModel::fit(x, a, cfg_default());
    CHECK(model.converged());
    const Eigen::VectorXd p = model.predict_p1(Eigen::MatrixXd(3, 0));
    for (int i = 0; i < 3; ++i) CHECK(p(i) == doctest::Approx(0.5).epsilon(1e-8));
}

TEST_CASE("propensity: perfect separation clips without error") {
    Eigen::MatrixXd x(20, 1);
    std::vector<double> a(20);
    for (int i = 0; i < 20; ++i) {
        x(i, 0) = i < 10 ? -1.0 - 0.1 * i : 1.0 + 0.1 * i;
        a[i] = i < 10 ? 0.0 : 1.0;
    }
    const auto model = PropensityModel::fit(x, a, cfg_default());
    const Eigen::VectorXd p = model.predict_p1(x);
    CHECK(p.minCoeff() == doctest::Approx(0.01));
    CHECK(p.maxCoeff() == doctest::Approx(0.99));
}

TEST_CASE("propensity: range always inside the clip box") {
    auto eng = make_engine(47);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int n = 200;
    Eigen::MatrixXd x(n, 2);
    std::vector<double> a(n);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = gauss(eng);
        x(i, 1) = gauss(eng);
        a[i] = unif(eng) < sigmoid(2.0 * x(i, 0)) ? 1.0 : 0.0;
    }
    const auto model = PropensityModel::fit(x, a, cfg_default());
    const Eigen::VectorXd p = model.predict_p1(x);
    CHECK(p.minCoeff() >= 0.01);
    CHECK(p.maxCoeff() <= 0.99);
}

TEST_CASE("propensity: linear SCM fit near the smoothed-logistic oracle at the origin") {
    const auto sample = gen_bounds_dgp({BoundsVariant::LinearSCM, 20000, 2718});
    const auto model =
        PropensityModel::fit(covariate_matrix(sample.data), sample.data.a(), cfg_default());
    Eigen::MatrixXd probe(1, 2);
    probe << 0.0, 0.0;
    CHECK(std::abs(model.predict_p1(probe)(0) - 0.5) <= 0.03);
    // quadrature oracle agrees with the symmetric value at the origin
    CHECK(bounds_propensity(0.0, 0.0) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("outcome mean: constant outcome predicts the constant exactly") {
    auto eng = make_engine(51);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int n = 60;
    Eigen::MatrixXd z(n, 1);
    std::vector<double> y(n, 3.25), a(n);
    for (int i = 0; i < n; ++i) {
        z(i, 0) = gauss(eng);
        a[i] = i % 2;
    }
    const auto model = OutcomeMeanModel::fit_binary(z, y, a, cfg_default());
    const Eigen::VectorXd p0 = model.predict_at_dose(0.0, z);
    const Eigen::VectorXd p1 = model.predict_at_dose(1.0, z);
    for (int i = 0; i < n; ++i) {
        CHECK(p0(i) == doctest::Approx(3.25).epsilon(1e-9));
        CHECK(p1(i) == doctest::Approx(3.25).epsilon(1e-9));
    }
}

TEST_CASE("outcome mean: near-zero ridge recovers exact linear structure") {
    auto eng = make_engine(53);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int n = 200;
    Eigen::MatrixXd z(n, 1);
    std::vector<double> y(n), a(n);
    for (int i = 0; i < n; ++i) {
        z(i, 0) = gauss(eng);
        a[i] = 0.5 * gauss(eng);
        y[i] = 1.0 + 2.0 * a[i] + 3.0 * z(i, 0);
    }
    NuisanceConfig cfg;
    cfg.ridge_abs = 1e-8;
    const auto model = OutcomeMeanModel::fit_continuous(z, y, a, cfg);
    // recover intercept and slopes through prediction probes
    Eigen::MatrixXd z0(1, 1);
    z0 << 0.0;
    const double at00 = model.predict_at_dose(0.0, z0)(0);
    const double at10 = model.predict_at_dose(1.0, z0)(0);
    Eigen::MatrixXd z1(1, 1);
    z1 << 1.0;
    const double at01 = model.predict_at_dose(0.0, z1)(0);
    CHECK(at00 == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(at10 - at00 == doctest::Approx(2.0).epsilon(1e-4));
    CHECK(at01 - at00 == doctest::Approx(3.0).epsilon(1e-4));
}

TEST_CASE("outcome mean: linear IV DGP with the true score recovers the ATE surface") {
    const auto sample = gen_iv_dgp({IvOutcome::LinearOutcome, IvTreatment::BinaryTreatment,
                                    6000, 112});
    Eigen::MatrixXd z(sample.data.n(), 1);
    for (std::size_t i = 0; i < sample.data.n(); ++i) z(i, 0) = sample.z_c[i];
    const auto model =
        OutcomeMeanModel::fit_binary(z, sample.data.y(), sample.data.a(), cfg_default());
    Eigen::MatrixXd z0(1, 1);
    z0 << 0.0;
    const double diff = model.predict_at_dose(1.0, z0)(0) - model.predict_at_dose(0.0, z0)(0);
    CHECK(std::abs(diff - 2.0) <= 0.1);
}

TEST_CASE("outcome mean: degenerate design raises") {
    Eigen::MatrixXd z(3, 1);
    z.setRandom();
    std::vector<double> y{1, 2, 3}, a{0, 1, 0};
    CHECK_THROWS_AS(OutcomeMeanModel::fit_binary(z, y, a, cfg_default()), Error);
}

TEST_CASE("gps: Silverman bandwidth formula") {
    // A sample with sd exactly 1: 50 points at -c, 50 at +c, c = sqrt(99/100)
    const double c = std::sqrt(99.0 / 100.0);
    const int n = 100;
    Eigen::MatrixXd z(n, 1);
    std::vector<double> a(n);
    auto eng = make_engine(55);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
        z(i, 0) = gauss(eng);
        a[i] = i < 50 ? -c : c;
    }
    const auto model = GpsModel::fit(z, a, cfg_default());
    CHECK(model.bandwidth() ==
          doctest::Approx(1.06 * std::pow(100.0, -0.2)).epsilon(1e-9));
}

TEST_CASE("gps: kernel at zero when all residuals coincide") {
    // A = z exactly and a zero ridge penalty: the dose-mean regression
    // interpolates, so every residual is 0.
    auto eng = make_engine(57);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int n = 120;
    Eigen::MatrixXd z(n, 1);
    std::vector<double> a(n);
    for (int i = 0; i < n; ++i) {
        z(i, 0) = gauss(eng);
        a[i] = z(i, 0);
    }
    NuisanceConfig cfg;
    cfg.ridge_abs = 0.0;
    const auto model = GpsModel::fit(z, a, cfg);
    const Eigen::VectorXd mu = model.predict_mu(z);
    const Eigen::VectorXd dens = model.density(std::vector<double>(mu.data(), mu.data() + n), z);
    const double expect = 1.0 / (model.bandwidth() * std::sqrt(2.0 * M_PI));
    for (int i = 0; i < n; ++i) CHECK(dens(i) == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("gps: KDE consistency at the peak of standard-normal residuals") {
    auto eng = make_engine(59);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int n = 50000;
    Eigen::MatrixXd z(n, 1);
    std::vector<double> a(n);
    for (int i = 0; i < n; ++i) {
        z(i, 0) = gauss(eng);
        a[i] = gauss(eng);  // independent of z: residuals ~ N(0,1)
    }
    const auto model = GpsModel::fit(z, a, cfg_default());
    Eigen::MatrixXd probe(1, 1);
    probe << 0.0;
    const double mu0 = model.predict_mu(probe)(0);
    const double dens = model.density_at_dose(mu0, probe)(0);
    CHECK(std::abs(dens - norm_pdf(0.0)) <= 0.02);
}

TEST_CASE("gps: density integrates to about one") {
    auto eng = make_engine(61);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int n = 2000;
    Eigen::MatrixXd z(n, 1);
    std::vector<double> a(n);
    for (int i = 0; i < n; ++i) {
        z(i, 0) = gauss(eng);
        a[i] = 0.7 * z(i, 0) + 0.5 * gauss(eng);
    }
    const auto model = GpsModel::fit(z, a, cfg_default());
    Eigen::MatrixXd probe(1, 1);
    probe << 0.3;
    const double mu = model.predict_mu(probe)(0);
    const double h = model.bandwidth();
    // residual spread is about 0.5; integrate far past the widened support
    const double lo = mu - 6.0 * (0.5 + h) - 3.0, hi = mu + 6.0 * (0.5 + h) + 3.0;
    const int steps = 4000;
    double integral = 0.0;
    for (int i = 0; i < steps; ++i) {
        const double u = lo + (hi - lo) * (i + 0.5) / steps;
        integral += model.density_at_dose(u, probe)(0);
    }
    integral *= (hi - lo) / steps;
    CHECK(integral >= 0.98);
    CHECK(integral <= 1.02);
}

TEST_CASE("gps: trimming floors the density and zero variance raises") {
    auto eng = make_engine(63);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int n = 500;
    Eigen::MatrixXd z(n, 1);
    std::vector<double> a(n);
    for (int i = 0; i < n; ++i) {
        z(i, 0) = gauss(eng);
        a[i] = gauss(eng);
    }
    const auto model = GpsModel::fit(z, a, cfg_default());
    CHECK(model.trim_floor() > 0.0);
    Eigen::MatrixXd probe(1, 1);
    probe << 0.0;
    // far in the tail the raw KDE underflows; the trimmed value hits the floor
    CHECK(model.density_at_dose(1e6, probe)(0) == doctest::Approx(model.trim_floor()));

    std::vector<double> constant(n, 2.0);
    CHECK_THROWS_AS(GpsModel::fit(z, constant, cfg_default()), Error);
}

TEST_CASE("fit determinism: identical data gives identical predictions") {
    const auto sample = gen_bounds_dgp({BoundsVariant::Nonlinear, 500, 99});
    const Eigen::MatrixXd x = covariate_matrix(sample.data);
    const auto m1 =
        ConditionalCdfModel::fit(x, sample.data.y(), sample.data.a(), {0.0, 1.0}, cfg_default());
    const auto m2 =
        ConditionalCdfModel::fit(x, sample.data.y(), sample.data.a(), {0.0, 1.0}, cfg_default());
    const Eigen::MatrixXd p1 = m1.predict(1, x), p2 = m2.predict(1, x);
    CHECK((p1 - p2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("dataset wrappers enforce treatment kinds") {
    const auto binary = gen_bounds_dgp({BoundsVariant::LinearSCM, 50, 1});
    CHECK_THROWS_AS(fit_gps(binary.data, cfg_default()), Error);
    const auto cont = gen_iv_dgp({IvOutcome::LinearOutcome, IvTreatment::ContinuousTreatment,
                                  50, 1});
    CHECK_THROWS_AS(fit_propensity(cont.data, cfg_default()), Error);
    CHECK_NOTHROW(fit_outcome_mean(cont.data, cfg_default()));
}
