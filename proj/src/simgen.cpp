#include "cfbound/simgen.hpp"

#include <algorithm>
#include <cmath>

#include "cfbound/error.hpp"
#include "cfbound/mathutil.hpp"
#include "cfbound/rng.hpp"

namespace cfbound {

namespace {

constexpr double kBoundsNoiseSd = 1.0;    // outcome noise in the bounds DGPs
constexpr double kAssignNoiseSd = 0.1;    // logit noise in the bounds assignment
constexpr double kIvNoiseSd = 0.2;        // instrument-model and outcome noise

double zs_mean(double s) {
    return 0.5 * s + 0.1 * std::tanh(s) + 0.3 * sigmoid(2.0 * s);
}

// Fixed-size chunks with derived seeds keep Monte Carlo results identical
// regardless of thread count or schedule.
constexpr long kMcChunk = 8192;

struct MomentAcc {
    std::vector<double> sum;
    std::vector<double> sumsq;
    explicit MomentAcc(std::size_t q) : sum(q, 0.0), sumsq(q, 0.0) {}
    void add(std::size_t j, double v) {
        sum[j] += v;
        sumsq[j] += v * v;
    }
    void merge(const MomentAcc& o) {
        for (std::size_t j = 0; j < sum.size(); ++j) {
            sum[j] += o.sum[j];
            sumsq[j] += o.sumsq[j];
        }
    }
};

struct MomentResult {
    double mean;
    double mc_se;
};

MomentResult moments(const MomentAcc& acc, std::size_t j, long n) {
    const double m = acc.sum[j] / static_cast<double>(n);
    const double var = std::max(acc.sumsq[j] / static_cast<double>(n) - m * m, 0.0);
    return {m, std::sqrt(var / static_cast<double>(n))};
}

}  // namespace

BoundsSample gen_bounds_dgp(const BoundsDgpSpec& spec) {
    if (spec.n < 2) throw Error(ErrorCode::BadConfig, "DGP needs n >= 2");
    auto eng = make_engine(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    std::vector<double> y(spec.n), a(spec.n), x(spec.n * 2), y0(spec.n), y1(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) {
        const double x1 = gauss(eng);
        const double x2 = gauss(eng);
        const double eps_s = kAssignNoiseSd * gauss(eng);
        const double u = unif(eng);
        const double eps_y = kBoundsNoiseSd * gauss(eng);
        const double p1 = sigmoid(0.5 * x1 - 0.3 * x2 + eps_s);
        const double treat = u < p1 ? 1.0 : 0.0;
        double out0, out1;
        if (spec.variant == BoundsVariant::LinearSCM) {
            out0 = x1 + 0.5 * x2 + eps_y;
            out1 = out0 + 1.0;
        } else {
            out0 = std::sin(2.0 * x1) + x2 * x2 + eps_y;
            out1 = std::cos(2.0 * x1) + x2 * x2 + 0.5 + eps_y;
        }
        x[2 * i] = x1;
        x[2 * i + 1] = x2;
        a[i] = treat;
        y0[i] = out0;
        y1[i] = out1;
        y[i] = treat == 1.0 ? out1 : out0;
    }
    BoundsSample sample{Dataset(std::move(y), std::move(a), std::move(x), 2, {}),
                        std::move(y0), std::move(y1)};
    return sample;
}

IvSample gen_iv_dgp(const IvDgpSpec& spec) {
    if (spec.n < 2) throw Error(ErrorCode::BadConfig, "DGP needs n >= 2");
    auto eng = make_engine(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif_s(-2.0, 2.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    std::vector<double> y(spec.n), a(spec.n), s(spec.n), zc(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) {
        const double si = unif_s(eng);
        const double z = gauss(eng);
        const double eps_s = kIvNoiseSd * gauss(eng);
        const double u = unif(eng);
        const double eps_y = kIvNoiseSd * gauss(eng);
        const double z_s = zs_mean(si) + 0.2 * z + eps_s;
        double treat;
        if (spec.treatment == IvTreatment::BinaryTreatment) {
            treat = u < sigmoid(z_s) ? 1.0 : 0.0;
        } else {
            treat = z_s;
        }
        y[i] = iv_outcome_mean(spec.outcome, treat, z) + eps_y;
        a[i] = treat;
        s[i] = si;
        zc[i] = z;
    }
    IvSample sample{Dataset(std::move(y), std::move(a), {}, 0, std::move(s)), std::move(zc)};
    return sample;
}

double bounds_theta(BoundsVariant variant, int arm, double y, double x1, double x2) {
    double mu;
    if (variant == BoundsVariant::LinearSCM) {
        mu = x1 + 0.5 * x2 + (arm == 1 ? 1.0 : 0.0);
    } else {
        mu = arm == 1 ? std::cos(2.0 * x1) + x2 * x2 + 0.5 : std::sin(2.0 * x1) + x2 * x2;
    }
    return norm_cdf((y - mu) / kBoundsNoiseSd);
}

double bounds_propensity(double x1, double x2) {
    static const QuadratureRule rule = gauss_hermite_normal(24);
    const double m = 0.5 * x1 - 0.3 * x2;
    double p = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        p += rule.weights[i] * sigmoid(m + kAssignNoiseSd * rule.nodes[i]);
    }
    return p;
}

OracleTruth oracle_marginal_cdf(BoundsVariant variant, int arm, double y, long n_mc,
                                std::uint64_t seed) {
    OracleTruth truth;
    truth.target = "f" + std::to_string(arm);
    if (variant == BoundsVariant::LinearSCM) {
        // Y(a) ~ N(a, 1 + Var(X1 + 0.5 X2)) = N(a, 2.25)
        truth.value = norm_cdf((y - (arm == 1 ? 1.0 : 0.0)) / 1.5);
        return truth;
    }
    const long n_chunks = (n_mc + kMcChunk - 1) / kMcChunk;
    std::vector<MomentAcc> partial(n_chunks, MomentAcc(1));
#pragma omp parallel for schedule(static)
    for (long c = 0; c < n_chunks; ++c) {
        auto eng = make_engine(mix_seed(seed, static_cast<std::uint64_t>(c)));
        std::normal_distribution<double> gauss(0.0, 1.0);
        const long lo = c * kMcChunk, hi = std::min(n_mc, lo + kMcChunk);
        for (long i = lo; i < hi; ++i) {
            const double x1 = gauss(eng), x2 = gauss(eng);
            partial[c].add(0, bounds_theta(variant, arm, y, x1, x2));
        }
    }
    MomentAcc acc(1);
    for (const auto& p : partial) acc.merge(p);
    const auto [m, se] = moments(acc, 0, n_mc);
    truth.value = m;
    truth.mc_se = se;
    truth.analytic = false;
    truth.n_mc = n_mc;
    return truth;
}

double oracle_marginal_quantile(BoundsVariant variant, int arm, double p, long n_mc,
                                std::uint64_t seed) {
    if (variant == BoundsVariant::LinearSCM) {
        return (arm == 1 ? 1.0 : 0.0) + 1.5 * norm_quantile(p);
    }
    auto eng = make_engine(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> draws(n_mc);
    for (long i = 0; i < n_mc; ++i) {
        const double x1 = gauss(eng), x2 = gauss(eng), ey = gauss(eng);
        draws[i] = arm == 1 ? std::cos(2.0 * x1) + x2 * x2 + 0.5 + ey
                            : std::sin(2.0 * x1) + x2 * x2 + ey;
    }
    return quantile(std::move(draws), p);
}

namespace {

/// Shared Monte-Carlo loop for bound-grid oracles. `theta_pair` maps a draw of
/// the conditioning variable (two standard normals; the second may be unused)
/// to the pair (theta1, theta0) at the given thresholds.
template <typename ThetaPair>
std::vector<PairOracle> bounds_grid_impl(const std::vector<std::pair<double, double>>& pairs,
                                         double t, long n_mc, std::uint64_t seed,
                                         ThetaPair theta_pair) {
    const std::size_t np = pairs.size();
    // Per pair: min, max(sum-1,0), theta1, theta0, theta1+theta0, g_t, softplus_t
    const std::size_t q_per = 7;
    const long n_chunks = (n_mc + kMcChunk - 1) / kMcChunk;
    std::vector<MomentAcc> partial(n_chunks, MomentAcc(np * q_per));
#pragma omp parallel for schedule(static)
    for (long c = 0; c < n_chunks; ++c) {
        auto eng = make_engine(mix_seed(seed, static_cast<std::uint64_t>(c)));
        std::normal_distribution<double> gauss(0.0, 1.0);
        const long lo = c * kMcChunk, hi = std::min(n_mc, lo + kMcChunk);
        for (long i = lo; i < hi; ++i) {
            const double x1 = gauss(eng), x2 = gauss(eng);
            for (std::size_t p = 0; p < np; ++p) {
                const auto [th1, th0] = theta_pair(pairs[p].first, pairs[p].second, x1, x2);
                const std::size_t base = p * q_per;
                partial[c].add(base + 0, std::min(th1, th0));
                partial[c].add(base + 1, std::max(th1 + th0 - 1.0, 0.0));
                partial[c].add(base + 2, th1);
                partial[c].add(base + 3, th0);
                partial[c].add(base + 4, th1 + th0);
                const double gap = std::abs(th1 - th0);
                partial[c].add(base + 5, std::min(th1, th0) - log1pexp(-t * gap) / t);
                partial[c].add(base + 6, log1pexp(t * (th1 + th0 - 1.0)) / t);
            }
        }
    }
    MomentAcc acc(np * q_per);
    for (const auto& p : partial) acc.merge(p);

    std::vector<PairOracle> out(np);
    for (std::size_t p = 0; p < np; ++p) {
        const std::size_t base = p * q_per;
        auto& po = out[p];
        po.y1 = pairs[p].first;
        po.y0 = pairs[p].second;
        auto fill = [&](OracleTruth& tr, const char* name, std::size_t j) {
            const auto [m, se] = moments(acc, j, n_mc);
            tr.target = name;
            tr.value = m;
            tr.mc_se = se;
            tr.analytic = false;
            tr.n_mc = n_mc;
        };
        fill(po.u, "u", base + 0);
        fill(po.l, "l", base + 1);
        fill(po.smooth_u, "smooth_u", base + 5);
        fill(po.smooth_l, "smooth_l", base + 6);
        const auto [f1, f1_se] = moments(acc, base + 2, n_mc);
        const auto [f0, f0_se] = moments(acc, base + 3, n_mc);
        const auto [fsum, fsum_se] = moments(acc, base + 4, n_mc);
        po.u_marg.target = "u_marg";
        po.u_marg.value = std::min(f1, f0);
        po.u_marg.mc_se = f1 < f0 ? f1_se : f0_se;
        po.u_marg.analytic = false;
        po.u_marg.n_mc = n_mc;
        po.l_marg.target = "l_marg";
        po.l_marg.value = std::max(fsum - 1.0, 0.0);
        po.l_marg.mc_se = fsum_se;
        po.l_marg.analytic = false;
        po.l_marg.n_mc = n_mc;
    }
    return out;
}

}  // namespace

std::vector<PairOracle> oracle_bounds_grid(BoundsVariant variant,
                                           const std::vector<std::pair<double, double>>& pairs,
                                           double t, long n_mc, std::uint64_t seed) {
    return bounds_grid_impl(pairs, t, n_mc, seed,
                            [variant](double y1, double y0, double x1, double x2) {
                                return std::pair<double, double>{
                                    bounds_theta(variant, 1, y1, x1, x2),
                                    bounds_theta(variant, 0, y0, x1, x2)};
                            });
}

double iv_theta(IvOutcome outcome, int arm, double y, double z) {
    return norm_cdf((y - iv_outcome_mean(outcome, static_cast<double>(arm), z)) / kIvNoiseSd);
}

std::vector<PairOracle> oracle_iv_bounds_grid(IvOutcome outcome,
                                              const std::vector<std::pair<double, double>>& pairs,
                                              double t, long n_mc, std::uint64_t seed) {
    return bounds_grid_impl(pairs, t, n_mc, seed,
                            [outcome](double y1, double y0, double z, double) {
                                return std::pair<double, double>{iv_theta(outcome, 1, y1, z),
                                                                 iv_theta(outcome, 0, y0, z)};
                            });
}

OracleTruth oracle_margin_mass(BoundsVariant variant, double y1, double y0, double margin,
                               long n_mc, std::uint64_t seed) {
    const long n_chunks = (n_mc + kMcChunk - 1) / kMcChunk;
    std::vector<MomentAcc> partial(n_chunks, MomentAcc(1));
#pragma omp parallel for schedule(static)
    for (long c = 0; c < n_chunks; ++c) {
        auto eng = make_engine(mix_seed(seed, static_cast<std::uint64_t>(c)));
        std::normal_distribution<double> gauss(0.0, 1.0);
        const long lo = c * kMcChunk, hi = std::min(n_mc, lo + kMcChunk);
        for (long i = lo; i < hi; ++i) {
            const double x1 = gauss(eng), x2 = gauss(eng);
            const double th1 = bounds_theta(variant, 1, y1, x1, x2);
            const double th0 = bounds_theta(variant, 0, y0, x1, x2);
            partial[c].add(0, std::abs(th1 - th0) <= margin ? 1.0 : 0.0);
        }
    }
    MomentAcc acc(1);
    for (const auto& p : partial) acc.merge(p);
    const auto [m, se] = moments(acc, 0, n_mc);
    OracleTruth truth;
    truth.target = "margin_mass";
    truth.value = m;
    truth.mc_se = se;
    truth.analytic = false;
    truth.n_mc = n_mc;
    return truth;
}

double iv_outcome_mean(IvOutcome outcome, double a, double z) {
    if (outcome == IvOutcome::LinearOutcome) {
        return 1.0 + 2.0 * a + 3.0 * z;
    }
    return 1.0 + 0.3 * a + 0.2 * std::sin(2.0 * a + 0.5) + 0.3 * z + 2.0 * sigmoid(z) +
           0.2 * a * z;
}

OracleTruth oracle_dose_response(IvOutcome outcome, double a) {
    OracleTruth truth;
    truth.target = "dose";
    if (outcome == IvOutcome::LinearOutcome) {
        truth.value = 1.0 + 2.0 * a;
    } else {
        // E[0.3 Z + 2 sigmoid(Z)] = 1 for Z ~ N(0,1) by symmetry of sigmoid.
        truth.value = 2.0 + 0.3 * a + 0.2 * std::sin(2.0 * a + 0.5);
    }
    return truth;
}

OracleTruth oracle_ate(IvOutcome outcome, double a_hi, double a_lo) {
    OracleTruth truth;
    truth.target = "ate";
    truth.value = oracle_dose_response(outcome, a_hi).value -
                  oracle_dose_response(outcome, a_lo).value;
    return truth;
}

double iv_oracle_propensity(double z) {
    static const QuadratureRule s_rule = gauss_legendre(64, -2.0, 2.0);
    static const QuadratureRule e_rule = gauss_hermite_normal(24);
    double p = 0.0;
    for (std::size_t i = 0; i < s_rule.nodes.size(); ++i) {
        const double m = zs_mean(s_rule.nodes[i]) + 0.2 * z;
        double inner = 0.0;
        for (std::size_t j = 0; j < e_rule.nodes.size(); ++j) {
            inner += e_rule.weights[j] * sigmoid(m + kIvNoiseSd * e_rule.nodes[j]);
        }
        p += s_rule.weights[i] * inner;
    }
    return p / 4.0;  // S ~ U(-2, 2)
}

OracleTruth oracle_truth_bounds(BoundsVariant variant, const std::string& target, double y1,
                                double y0, double t, long n_mc, std::uint64_t seed) {
    if (target == "f1") return oracle_marginal_cdf(variant, 1, y1, n_mc, seed);
    if (target == "f0") return oracle_marginal_cdf(variant, 0, y0, n_mc, seed);
    if (target == "margin") return oracle_margin_mass(variant, y1, y0, t, n_mc, seed);
    const auto grid = oracle_bounds_grid(variant, {{y1, y0}}, t, n_mc, seed);
    if (target == "l") return grid[0].l;
    if (target == "u") return grid[0].u;
    if (target == "l_marg") return grid[0].l_marg;
    if (target == "u_marg") return grid[0].u_marg;
    if (target == "smooth_u") return grid[0].smooth_u;
    if (target == "smooth_l") return grid[0].smooth_l;
    throw Error(ErrorCode::UnsupportedTarget, "unknown bounds oracle target: " + target);
}

OracleTruth oracle_truth_iv(IvOutcome outcome, const std::string& target, double a_hi,
                            double a_lo) {
    if (target == "ate") return oracle_ate(outcome, a_hi, a_lo);
    if (target == "dose") return oracle_dose_response(outcome, a_hi);
    throw Error(ErrorCode::UnsupportedTarget, "unknown IV oracle target: " + target);
}

}  // namespace cfbound
