#include "cfbound/hsic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cfbound/error.hpp"
#include "cfbound/rng.hpp"

namespace cfbound {

namespace {

double sq_dist(const double* a, const double* b, std::size_t dim) {
    double s = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
        const double diff = a[d] - b[d];
        s += diff * diff;
    }
    return s;
}

}  // namespace

namespace detail {

void rbf_gram(PointSet p, double sigma, std::vector<double>& out) {
    const std::size_t n = p.n;
    out.assign(n * n, 0.0);
    const double inv = -1.0 / (2.0 * sigma * sigma);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        const double* xi = p.data + i * p.dim;
        for (std::size_t j = 0; j < n; ++j) {
            out[i * n + j] = std::exp(inv * sq_dist(xi, p.data + j * p.dim, p.dim));
        }
    }
}

void center_gram(std::vector<double>& g, std::size_t n) {
    std::vector<double> row_mean(n, 0.0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += g[i * n + j];
        row_mean[i] = s / static_cast<double>(n);
    }
    double grand = 0.0;
    for (std::size_t i = 0; i < n; ++i) grand += row_mean[i];
    grand /= static_cast<double>(n);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            g[i * n + j] += grand - row_mean[i] - row_mean[j];
        }
    }
}

}  // namespace detail

double median_bandwidth(PointSet points) {
    if (points.n < 2) {
        throw Error(ErrorCode::LengthMismatch, "median_bandwidth needs >= 2 points");
    }
    std::vector<const double*> rows;
    std::vector<double> subsample;  // owns copied rows when subsampling
    const std::size_t cap = 2000;
    if (points.n <= cap) {
        rows.reserve(points.n);
        for (std::size_t i = 0; i < points.n; ++i) rows.push_back(points.data + i * points.dim);
    } else {
        std::vector<std::size_t> idx(points.n);
        std::iota(idx.begin(), idx.end(), 0);
        auto eng = make_engine(splitmix64(0xBAD5EEDULL));
        std::shuffle(idx.begin(), idx.end(), eng);
        idx.resize(cap);
        std::sort(idx.begin(), idx.end());
        subsample.reserve(cap * points.dim);
        for (std::size_t i : idx) {
            subsample.insert(subsample.end(), points.data + i * points.dim,
                             points.data + (i + 1) * points.dim);
        }
        rows.reserve(cap);
        for (std::size_t i = 0; i < cap; ++i) rows.push_back(subsample.data() + i * points.dim);
    }
    const std::size_t m = rows.size();
    std::vector<double> dists;
    dists.reserve(m * (m - 1) / 2);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) {
            dists.push_back(std::sqrt(sq_dist(rows[i], rows[j], points.dim)));
        }
    }
    std::sort(dists.begin(), dists.end());
    double med;
    if (dists.size() % 2 == 1) {
        med = dists[dists.size() / 2];
    } else {
        med = 0.5 * (dists[dists.size() / 2 - 1] + dists[dists.size() / 2]);
    }
    if (med > 0.0) return med;
    // Duplicate-heavy input: fall back to the smallest positive distance.
    for (double d : dists) {
        if (d > 0.0) return d;
    }
    throw Error(ErrorCode::AllPointsIdentical, "all points identical");
}

namespace {

// stat = (1/n^2) sum_ij Kc_ij L_ij with Kc already centered. Per-row partial
// sums are reduced in fixed row order so the result does not depend on the
// thread count.
double centered_product_sum(const std::vector<double>& kc, const std::vector<double>& l,
                            std::size_t n) {
    std::vector<double> row_sum(n, 0.0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += kc[i * n + j] * l[i * n + j];
        row_sum[i] = s;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += row_sum[i];
    return total / (static_cast<double>(n) * static_cast<double>(n));
}

}  // namespace

double hsic_stat(PointSet xs, PointSet ys, KernelSpec spec_x, KernelSpec spec_y) {
    if (xs.n != ys.n) throw Error(ErrorCode::LengthMismatch, "hsic_stat: |xs| != |ys|");
    if (xs.n < 2) throw Error(ErrorCode::LengthMismatch, "hsic_stat needs n >= 2");
    std::vector<double> k, l;
    detail::rbf_gram(xs, spec_x.sigma, k);
    detail::rbf_gram(ys, spec_y.sigma, l);
    detail::center_gram(k, xs.n);
    return centered_product_sum(k, l, xs.n);
}

namespace reference {

double hsic_stat(PointSet xs, PointSet ys, KernelSpec spec_x, KernelSpec spec_y) {
    if (xs.n != ys.n) throw Error(ErrorCode::LengthMismatch, "hsic_stat: |xs| != |ys|");
    const std::size_t n = xs.n;
    const double inv_x = -1.0 / (2.0 * spec_x.sigma * spec_x.sigma);
    const double inv_y = -1.0 / (2.0 * spec_y.sigma * spec_y.sigma);
    std::vector<double> k(n * n), l(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            k[i * n + j] = std::exp(inv_x * sq_dist(xs.data + i * xs.dim,
                                                    xs.data + j * xs.dim, xs.dim));
            l[i * n + j] = std::exp(inv_y * sq_dist(ys.data + i * ys.dim,
                                                    ys.data + j * ys.dim, ys.dim));
        }
    }
    std::vector<double> row_k(n, 0.0), row_l(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            row_k[i] += k[i * n + j];
            row_l[i] += l[i * n + j];
        }
    }
    double sum_k = 0.0, sum_l = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sum_k += row_k[i];
        sum_l += row_l[i];
    }
    const double nn = static_cast<double>(n);
    double term1 = 0.0, term3 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) term1 += k[i * n + j] * l[i * n + j];
        term3 += row_k[i] * row_l[i];
    }
    return term1 / (nn * nn) + sum_k * sum_l / (nn * nn * nn * nn) -
           2.0 * term3 / (nn * nn * nn);
}

}  // namespace reference

HsicResult permutation_test(PointSet xs, PointSet ys, KernelSpec spec_x,
                            KernelSpec spec_y, int n_perm, std::uint64_t seed) {
    if (xs.n != ys.n) throw Error(ErrorCode::LengthMismatch, "permutation_test: |xs| != |ys|");
    if (n_perm < 99) throw Error(ErrorCode::BadConfig, "permutation_test needs n_perm >= 99");
    const std::size_t n = xs.n;
    std::vector<double> kc, l;
    detail::rbf_gram(xs, spec_x.sigma, kc);
    detail::rbf_gram(ys, spec_y.sigma, l);
    detail::center_gram(kc, n);
    // Observed statistic accumulated in exactly the order the permuted ones
    // use, so exact ties (e.g. constant ys) compare as equal.
    double observed = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) observed += kc[i * n + j] * l[i * n + j];
    }
    observed /= static_cast<double>(n) * static_cast<double>(n);

    std::vector<double> perm_stats(n_perm, 0.0);
#pragma omp parallel for schedule(dynamic)
    for (int p = 0; p < n_perm; ++p) {
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        auto eng = make_engine(mix_seed(seed, static_cast<std::uint64_t>(p)));
        std::shuffle(perm.begin(), perm.end(), eng);
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t pi = perm[i] * n;
            const std::size_t in = i * n;
            for (std::size_t j = 0; j < n; ++j) s += kc[in + j] * l[pi + perm[j]];
        }
        perm_stats[p] = s / (static_cast<double>(n) * static_cast<double>(n));
    }
    int exceed = 0;
    for (double s : perm_stats) {
        if (s >= observed) ++exceed;
    }
    HsicResult res;
    res.statistic = observed;
    res.n_perm = n_perm;
    res.p_value = (1.0 + exceed) / (1.0 + n_perm);
    return res;
}

}  // namespace cfbound
