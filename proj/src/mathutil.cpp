#include "cfbound/mathutil.hpp"

#include <Eigen/Dense>
#include <algorithm>

#include "cfbound/error.hpp"

namespace cfbound {

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double variance_pop(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size());
}

double sd_pop(const std::vector<double>& v) { return std::sqrt(variance_pop(v)); }

double sd_sample(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double pearson_corr(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) {
        throw Error(ErrorCode::LengthMismatch, "pearson_corr: length mismatch");
    }
    const double ma = mean(a), mb = mean(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa <= 0.0 || sbb <= 0.0) {
        throw Error(ErrorCode::ZeroVariance, "pearson_corr: constant input");
    }
    return sab / std::sqrt(saa * sbb);
}

double quantile(std::vector<double> v, double p) {
    if (v.empty()) throw Error(ErrorCode::EmptyTable, "quantile of empty vector");
    p = std::clamp(p, 0.0, 1.0);
    std::sort(v.begin(), v.end());
    const double h = p * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double w = h - static_cast<double>(lo);
    return (1.0 - w) * v[lo] + w * v[hi];
}

double norm_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw Error(ErrorCode::OutOfRange, "norm_quantile: p must lie in (0,1)");
    }
    double lo = -10.0, hi = 10.0;
    for (int i = 0; i < 40; ++i) {
        const double mid = 0.5 * (lo + hi);
        (norm_cdf(mid) < p ? lo : hi) = mid;
    }
    double x = 0.5 * (lo + hi);
    for (int i = 0; i < 4; ++i) {
        x -= (norm_cdf(x) - p) / norm_pdf(x);
    }
    return x;
}

namespace {

// Golub-Welsch: nodes are eigenvalues of the symmetric Jacobi matrix, weights
// come from the squared first components of the eigenvectors.
QuadratureRule golub_welsch(const Eigen::VectorXd& offdiag, double weight_total) {
    const int n = static_cast<int>(offdiag.size()) + 1;
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i + 1 < n; ++i) {
        jacobi(i, i + 1) = offdiag(i);
        jacobi(i + 1, i) = offdiag(i);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
    QuadratureRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        rule.nodes[i] = solver.eigenvalues()(i);
        const double v0 = solver.eigenvectors()(0, i);
        rule.weights[i] = weight_total * v0 * v0;
    }
    return rule;
}

}  // namespace

QuadratureRule gauss_hermite_normal(int n) {
    // Probabilists' Hermite recurrence: off-diagonal sqrt(k).
    Eigen::VectorXd off(n - 1);
    for (int k = 1; k < n; ++k) off(k - 1) = std::sqrt(static_cast<double>(k));
    return golub_welsch(off, 1.0);
}

QuadratureRule gauss_legendre(int n, double a, double b) {
    Eigen::VectorXd off(n - 1);
    for (int k = 1; k < n; ++k) {
        const double kk = static_cast<double>(k);
        off(k - 1) = kk / std::sqrt(4.0 * kk * kk - 1.0);
    }
    QuadratureRule rule = golub_welsch(off, 2.0);
    // Map from [-1, 1] to [a, b].
    const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        rule.nodes[i] = mid + half * rule.nodes[i];
        rule.weights[i] *= half;
    }
    return rule;
}

}  // namespace cfbound
