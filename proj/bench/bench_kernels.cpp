// Timing comparison of the OpenMP kernels against their serial reference
// implementations. Run with OMP_NUM_THREADS set to the core budget.
#include <chrono>
#include <cstdio>
#include <random>
#include <vector>

#include <omp.h>

#include "cfbound/hsic.hpp"
#include "cfbound/nuisance.hpp"
#include "cfbound/rng.hpp"
#include "cfbound/simgen.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int iters) {
    // One warmup, then best of iters.
    fn();
    double best = 1e300;
    for (int i = 0; i < iters; ++i) {
        const auto t0 = Clock::now();
        fn();
        const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
        if (ms < best) best = ms;
    }
    return best;
}

}  // namespace

int main() {
    std::printf("threads: %d\n", omp_get_max_threads());
    std::printf("%-28s %12s %12s %8s\n", "kernel", "serial ms", "openmp ms", "speedup");

    {
        const std::size_t n = 1500;
        auto eng = cfbound::make_engine(7);
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::vector<double> xs(n), ys(n);
        for (std::size_t i = 0; i < n; ++i) {
            xs[i] = gauss(eng);
            ys[i] = 0.5 * xs[i] + gauss(eng);
        }
        const double bx = cfbound::median_bandwidth(cfbound::scalars(xs));
        const double by = cfbound::median_bandwidth(cfbound::scalars(ys));
        double sink = 0.0;
        const double serial = time_ms(
            [&] {
                sink += cfbound::reference::hsic_stat(cfbound::scalars(xs), cfbound::scalars(ys),
                                                      {bx}, {by});
            },
            5);
        const double parallel = time_ms(
            [&] {
                sink += cfbound::hsic_stat(cfbound::scalars(xs), cfbound::scalars(ys), {bx}, {by});
            },
            5);
        std::printf("%-28s %12.2f %12.2f %7.2fx (checksum %.3g)\n", "hsic_stat n=1500", serial,
                    parallel, serial / parallel, sink);
    }

    {
        cfbound::IvDgpSpec spec;
        spec.treatment = cfbound::IvTreatment::ContinuousTreatment;
        spec.n = 4000;
        spec.seed = 11;
        const auto sample = cfbound::gen_iv_dgp(spec);
        Eigen::MatrixXd z(sample.data.n(), 1);
        for (std::size_t i = 0; i < sample.data.n(); ++i) z(i, 0) = sample.z_c[i];
        cfbound::NuisanceConfig nc;
        const auto gps = cfbound::GpsModel::fit(z, sample.data.a(), nc);
        double sink = 0.0;
        // density() is row-parallel; a single-thread run is the reference.
        const int saved = omp_get_max_threads();
        omp_set_num_threads(1);
        const double serial =
            time_ms([&] { sink += gps.density(sample.data.a(), z).sum(); }, 3);
        omp_set_num_threads(saved);
        const double parallel =
            time_ms([&] { sink += gps.density(sample.data.a(), z).sum(); }, 3);
        std::printf("%-28s %12.2f %12.2f %7.2fx (checksum %.3g)\n", "gps_density n=4000", serial,
                    parallel, serial / parallel, sink);
    }

    {
        const std::vector<std::pair<double, double>> pairs = {{1.0, 0.0}};
        double sink = 0.0;
        const int saved = omp_get_max_threads();
        omp_set_num_threads(1);
        const double serial = time_ms(
            [&] {
                sink += cfbound::oracle_bounds_grid(cfbound::BoundsVariant::Nonlinear, pairs,
                                                    50.0, 400000, 3)[0]
                            .u.value;
            },
            3);
        omp_set_num_threads(saved);
        const double parallel = time_ms(
            [&] {
                sink += cfbound::oracle_bounds_grid(cfbound::BoundsVariant::Nonlinear, pairs,
                                                    50.0, 400000, 3)[0]
                            .u.value;
            },
            3);
        std::printf("%-28s %12.2f %12.2f %7.2fx (checksum %.3g)\n", "mc_bounds_oracle 4e5", serial,
                    parallel, serial / parallel, sink);
    }
    return 0;
}
