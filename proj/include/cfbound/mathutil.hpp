#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

namespace cfbound {

constexpr double kZ975 = 1.959963984540054;  // 97.5% standard-normal quantile

inline double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// log(1 + e^x) without overflow.
inline double log1pexp(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

inline double norm_pdf(double x) {
    static const double inv_sqrt_2pi = 0.3989422804014327;
    return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

inline double norm_cdf(double x) {
    return 0.5 * std::erfc(-x * M_SQRT1_2);
}

/// Inverse standard-normal CDF (bisection start, Newton polish).
double norm_quantile(double p);

double mean(const std::vector<double>& v);

/// Population variance (divides by n); pairs with the mse = bias^2 + se^2
/// reporting identity.
double variance_pop(const std::vector<double>& v);

double sd_pop(const std::vector<double>& v);

/// Sample standard deviation (divides by n-1).
double sd_sample(const std::vector<double>& v);

double pearson_corr(const std::vector<double>& a, const std::vector<double>& b);

/// Empirical quantile with linear interpolation (type 7); p in [0,1].
double quantile(std::vector<double> v, double p);

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Gauss-Hermite rule for integrals of f against the N(0,1) density:
/// E[f(Z)] ~= sum_i w_i f(x_i).
QuadratureRule gauss_hermite_normal(int n);

/// Gauss-Legendre rule on [a, b]: integral ~= sum_i w_i f(x_i).
QuadratureRule gauss_legendre(int n, double a, double b);

}  // namespace cfbound
