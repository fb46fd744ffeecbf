#pragma once

#include <cstdint>
#include <vector>

namespace cfbound {

/// RBF kernel k(x, x') = exp(-||x - x'||^2 / (2 sigma^2)).
struct KernelSpec {
    double sigma = 1.0;
};

struct HsicResult {
    double statistic = 0.0;
    double p_value = 1.0;
    int n_perm = 0;
};

/// Points are row-major n-by-dim. dim = 1 treats the vector as scalars.
struct PointSet {
    const double* data;
    std::size_t n;
    std::size_t dim;
};

inline PointSet scalars(const std::vector<double>& v) { return {v.data(), v.size(), 1}; }

/// Median of pairwise Euclidean distances; exact for n <= 2000, above that a
/// fixed-seed subsample of 2000 points is used.
double median_bandwidth(PointSet points);

/// Biased HSIC V-statistic: (1/n^2) trace(K H L H). OpenMP over Gram rows;
/// final reduction in fixed index order.
double hsic_stat(PointSet xs, PointSet ys, KernelSpec spec_x, KernelSpec spec_y);

/// Permutation test of independence: permutes ys only, derived per-permutation
/// seeds; p = (1 + #{perm >= observed}) / (1 + n_perm).
HsicResult permutation_test(PointSet xs, PointSet ys, KernelSpec spec_x,
                            KernelSpec spec_y, int n_perm, std::uint64_t seed);

/// Centered Gram machinery shared with the IV-VAE penalty gradient.
namespace detail {
// Row-major n*n RBF Gram matrix.
void rbf_gram(PointSet p, double sigma, std::vector<double>& out);
// In-place double centering G <- H G H.
void center_gram(std::vector<double>& g, std::size_t n);
}  // namespace detail

namespace reference {
/// Serial implementation kept as the comparison baseline for tests and the
/// benchmark target.
double hsic_stat(PointSet xs, PointSet ys, KernelSpec spec_x, KernelSpec spec_y);
}  // namespace reference

}  // namespace cfbound
