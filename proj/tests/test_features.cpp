#include <doctest.h>

#include <random>

#include "cfbound/features.hpp"
#include "cfbound/rng.hpp"

using namespace cfbound;

TEST_CASE("FeatureMap: dimensions and standardization") {
    Eigen::MatrixXd x(4, 2);
    x << 1, 10, 2, 20, 3, 30, 4, 40;
    const FeatureMap map = FeatureMap::fit(x);
    CHECK(map.out_dim() == 5);  // z1 z2 z1^2 z2^2 z1*z2
    const Eigen::MatrixXd f = map.transform(x);
    CHECK(f.col(0).mean() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(f.col(0).squaredNorm() / 4.0 == doctest::Approx(1.0).epsilon(1e-12));
    // squares and product columns are consistent with the standardized inputs
    for (int i = 0; i < 4; ++i) {
        CHECK(f(i, 2) == doctest::Approx(f(i, 0) * f(i, 0)));
        CHECK(f(i, 4) == doctest::Approx(f(i, 0) * f(i, 1)));
    }
}

TEST_CASE("FeatureMap: zero-dimensional input gives empty map") {
    Eigen::MatrixXd x(3, 0);
    const FeatureMap map = FeatureMap::fit(x);
    CHECK(map.out_dim() == 0);
    CHECK(map.transform(x).cols() == 0);
}

TEST_CASE("pava: hand cases") {
    {
        std::vector<double> v{3, 1, 2};
        pava_non_decreasing(v.data(), 3);
        CHECK(v == std::vector<double>{2, 2, 2});
    }
    {
        std::vector<double> v{1, 3, 2};
        pava_non_decreasing(v.data(), 3);
        CHECK(v[0] == 1.0);
        CHECK(v[1] == doctest::Approx(2.5));
        CHECK(v[2] == doctest::Approx(2.5));
    }
    {
        std::vector<double> v{1, 2, 3};
        pava_non_decreasing(v.data(), 3);
        CHECK(v == std::vector<double>{1, 2, 3});
    }
}

TEST_CASE("pava: monotone, mean-preserving, idempotent on random input") {
    auto eng = make_engine(5);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 1 + static_cast<int>(eng() % 40);
        std::vector<double> v(n);
        double sum = 0.0;
        for (double& x : v) {
            x = gauss(eng);
            sum += x;
        }
        std::vector<double> w = v;
        pava_non_decreasing(w.data(), n);
        double sum_w = 0.0;
        for (int i = 0; i < n; ++i) {
            sum_w += w[i];
            if (i) CHECK(w[i] >= w[i - 1]);
        }
        CHECK(sum_w == doctest::Approx(sum).epsilon(1e-10));
        std::vector<double> w2 = w;
        pava_non_decreasing(w2.data(), n);
        for (int i = 0; i < n; ++i) CHECK(w2[i] == w[i]);
    }
}

TEST_CASE("fit_logistic: intercept-only balanced data gives p = 0.5") {
    Eigen::MatrixXd design(4, 1);
    design.setOnes();
    Eigen::VectorXd labels(4);
    labels << 0, 1, 0, 1;
    const auto fit = fit_logistic(design, labels, 500, 1e-10);
    CHECK(fit.converged);
    CHECK(fit.beta(0) == doctest::Approx(0.0).epsilon(1e-8));
}

TEST_CASE("fit_ridge: near-zero penalty interpolates exactly linear data") {
    Eigen::MatrixXd design(6, 3);
    Eigen::VectorXd y(6);
    auto eng = make_engine(11);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < 6; ++i) {
        design(i, 0) = 1.0;
        design(i, 1) = gauss(eng);
        design(i, 2) = gauss(eng);
        y(i) = 1.0 + 2.0 * design(i, 1) + 3.0 * design(i, 2);
    }
    const Eigen::VectorXd beta = fit_ridge(design, y, 1e-8);
    CHECK(beta(0) == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(beta(1) == doctest::Approx(2.0).epsilon(1e-4));
    CHECK(beta(2) == doctest::Approx(3.0).epsilon(1e-4));
}
