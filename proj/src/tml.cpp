#include "cfbound/tml.hpp"

#include <algorithm>
#include <cmath>

#include "cfbound/error.hpp"
#include "cfbound/ivvae.hpp"
#include "cfbound/mathutil.hpp"
#include "cfbound/nuisance.hpp"
#include "cfbound/rng.hpp"

namespace cfbound {

const char* tml_estimator_name(TmlEstimator e) {
    switch (e) {
        case TmlEstimator::Or: return "or";
        case TmlEstimator::Ipw: return "ipw";
        case TmlEstimator::Dr: return "dr";
        case TmlEstimator::GpsIpw: return "gps_ipw";
        case TmlEstimator::DrDensity: return "dr_density";
        case TmlEstimator::DrKernel: return "dr_kernel";
        case TmlEstimator::TwoSls: return "2sls";
    }
    return "unknown";
}

const char* tml_target_name(TmlTargetKind t) {
    switch (t) {
        case TmlTargetKind::PotentialMean: return "potential_mean";
        case TmlTargetKind::Ate: return "ate";
        case TmlTargetKind::DoseCurve: return "dose_curve";
    }
    return "unknown";
}

namespace {

NuisanceConfig nuisance_config(const RunConfig& cfg) {
    NuisanceConfig nc;
    nc.clip_eps = cfg.clip_eps;
    return nc;
}

/// Latent scores for every row of `data` under one rotation: either the
/// supplied oracle column or the encoder trained on the representation folds.
Eigen::MatrixXd rotation_latent(const Dataset& data, const FoldPlan& plan, int rotation,
                                const RunConfig& cfg, std::uint64_t seed,
                                const TmlHooks& hooks) {
    if (hooks.oracle_latent) {
        if (hooks.oracle_latent->size() != data.n()) {
            throw Error(ErrorCode::LengthMismatch, "oracle latent length mismatch");
        }
        Eigen::MatrixXd z(data.n(), 1);
        for (std::size_t i = 0; i < data.n(); ++i) z(i, 0) = (*hooks.oracle_latent)[i];
        return z;
    }
    const auto rep_rows = plan.rows_with_role(rotation, FoldRole::Representation);
    const Dataset rep = data.subset(rep_rows);
    const auto trained =
        train_ivvae(rep, cfg.vae, mix_seed(seed, 100 + static_cast<std::uint64_t>(rotation)));
    return encode(trained.model, data);
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<int>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
    }
    return out;
}

std::vector<double> take(const std::vector<double>& v, const std::vector<int>& rows) {
    std::vector<double> out;
    out.reserve(rows.size());
    for (int r : rows) out.push_back(v[r]);
    return out;
}

struct WaldSummary {
    double value, se, lo, hi;
};

WaldSummary wald_from_scores(const std::vector<double>& scores) {
    WaldSummary w{};
    w.value = mean(scores);
    w.se = std::sqrt(variance_pop(scores) / static_cast<double>(scores.size()));
    w.lo = w.value - kZ975 * w.se;
    w.hi = w.value + kZ975 * w.se;
    return w;
}

FoldPlan triple_plan(const Dataset& data, const RunConfig& cfg, std::uint64_t seed) {
    return make_folds(data.n(), cfg.k_folds, FoldMode::Triple, mix_seed(seed, 11));
}

}  // namespace

std::vector<TmlEstimate> run_tml_binary(const Dataset& data, const RunConfig& cfg,
                                        std::uint64_t seed, const TmlHooks& hooks) {
    if (data.treatment_kind() != TreatmentKind::Binary) {
        throw Error(ErrorCode::BadConfig, "run_tml_binary needs a binary treatment");
    }
    if (!data.has_instrument() && !hooks.oracle_latent) {
        throw Error(ErrorCode::MissingInstrument, "run_tml_binary needs an instrument");
    }
    if (data.n() < 600 && !hooks.oracle_latent) {
        throw Error(ErrorCode::BadConfig, "run_tml_binary needs n >= 600");
    }
    const FoldPlan plan = triple_plan(data, cfg, seed);
    const int n_rot = plan.rotations();

    // Per-row scores, each row scored once (its evaluation rotation).
    // Index: [estimator][arm] -> scores.
    constexpr int kOr = 0, kIpw = 1, kDr = 2;
    std::vector<std::vector<std::vector<double>>> scores(
        3, std::vector<std::vector<double>>(2));
    std::vector<std::vector<std::vector<double>>> rot_means(
        3, std::vector<std::vector<double>>(2, std::vector<double>(n_rot, 0.0)));

    for (int r = 0; r < n_rot; ++r) {
        const Eigen::MatrixXd z = rotation_latent(data, plan, r, cfg, seed, hooks);
        const auto nui_rows = plan.rows_with_role(r, FoldRole::Nuisance);
        const auto eval_rows = plan.rows_with_role(r, FoldRole::Evaluation);
        const Eigen::MatrixXd z_nui = take_rows(z, nui_rows);
        const auto nc = nuisance_config(cfg);

        OutcomeMeanModel outcome;
        if (!hooks.oracle_outcome) {
            outcome = OutcomeMeanModel::fit_binary(z_nui, take(data.y(), nui_rows),
                                                   take(data.a(), nui_rows), nc);
            if (hooks.corrupt_outcome) outcome.corrupt_for_testing();
        }
        PropensityModel propensity;
        if (!hooks.oracle_propensity && !hooks.corrupt_propensity) {
            propensity = PropensityModel::fit(z_nui, take(data.a(), nui_rows), nc);
        }

        const Eigen::MatrixXd z_eval = take_rows(z, eval_rows);
        Eigen::VectorXd m0, m1, p1;
        if (hooks.oracle_outcome) {
            m0.resize(z_eval.rows());
            m1.resize(z_eval.rows());
            for (Eigen::Index i = 0; i < z_eval.rows(); ++i) {
                m0(i) = hooks.oracle_outcome(0.0, z_eval(i, 0));
                m1(i) = hooks.oracle_outcome(1.0, z_eval(i, 0));
            }
        } else {
            m0 = outcome.predict_at_dose(0.0, z_eval);
            m1 = outcome.predict_at_dose(1.0, z_eval);
        }
        if (hooks.corrupt_propensity) {
            p1 = Eigen::VectorXd::Constant(z_eval.rows(), 0.5);
        } else if (hooks.oracle_propensity) {
            p1.resize(z_eval.rows());
            for (Eigen::Index i = 0; i < z_eval.rows(); ++i) {
                p1(i) = std::clamp(hooks.oracle_propensity(z_eval(i, 0)), cfg.clip_eps,
                                   1.0 - cfg.clip_eps);
            }
        } else {
            p1 = propensity.predict_p1(z_eval);
        }

        std::vector<std::vector<std::vector<double>>> rot_scores(
            3, std::vector<std::vector<double>>(2));
        for (std::size_t i = 0; i < eval_rows.size(); ++i) {
            const int row = eval_rows[i];
            const double yv = data.y()[row];
            const double av = data.a()[row];
            const double m[2] = {m0(static_cast<Eigen::Index>(i)), m1(static_cast<Eigen::Index>(i))};
            const double pi[2] = {1.0 - p1(static_cast<Eigen::Index>(i)),
                                  p1(static_cast<Eigen::Index>(i))};
            for (int arm = 0; arm < 2; ++arm) {
                const double ind = av == static_cast<double>(arm) ? 1.0 : 0.0;
                rot_scores[kOr][arm].push_back(m[arm]);
                rot_scores[kIpw][arm].push_back(ind * yv / pi[arm]);
                rot_scores[kDr][arm].push_back(dr_summand_binary(arm, av, yv, m[arm], pi[arm]));
            }
        }
        for (int e = 0; e < 3; ++e) {
            for (int arm = 0; arm < 2; ++arm) {
                rot_means[e][arm][r] = mean(rot_scores[e][arm]);
                scores[e][arm].insert(scores[e][arm].end(), rot_scores[e][arm].begin(),
                                      rot_scores[e][arm].end());
            }
        }
    }

    const TmlEstimator kinds[3] = {TmlEstimator::Or, TmlEstimator::Ipw, TmlEstimator::Dr};
    std::vector<TmlEstimate> out;
    for (int e = 0; e < 3; ++e) {
        for (int arm = 0; arm < 2; ++arm) {
            TmlEstimate est;
            est.target = TmlTargetKind::PotentialMean;
            est.estimator = kinds[e];
            est.a_hi = static_cast<double>(arm);
            const auto w = wald_from_scores(scores[e][arm]);
            est.value = {w.value};
            est.se = {w.se};
            est.ci_lo = {w.lo};
            est.ci_hi = {w.hi};
            est.per_rotation.resize(n_rot);
            for (int r = 0; r < n_rot; ++r) est.per_rotation[r] = {rot_means[e][arm][r]};
            out.push_back(std::move(est));
        }
        TmlEstimate ate;
        ate.target = TmlTargetKind::Ate;
        ate.estimator = kinds[e];
        std::vector<double> diff(scores[e][1].size());
        for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = scores[e][1][i] - scores[e][0][i];
        const auto w = wald_from_scores(diff);
        ate.value = {w.value};
        ate.se = {w.se};
        ate.ci_lo = {w.lo};
        ate.ci_hi = {w.hi};
        ate.per_rotation.resize(n_rot);
        for (int r = 0; r < n_rot; ++r) {
            ate.per_rotation[r] = {rot_means[e][1][r] - rot_means[e][0][r]};
        }
        out.push_back(std::move(ate));
    }
    return out;
}

namespace {

double gauss_kernel(double u, double h) {
    const double t = u / h;
    return std::exp(-0.5 * t * t) / (h * 2.5066282746310002);
}

}  // namespace

std::vector<TmlEstimate> run_tml_continuous(const Dataset& data, const RunConfig& cfg,
                                            const DoseGrid& grid, std::uint64_t seed,
                                            const TmlHooks& hooks) {
    // Doses that happen to be all 0/1 are legal here; the dose pipeline is what
    // the caller asked for.
    if (!data.has_instrument() && !hooks.oracle_latent) {
        throw Error(ErrorCode::MissingInstrument, "run_tml_continuous needs an instrument");
    }
    std::vector<double> doses = grid.doses;
    if (doses.empty()) {
        const double lo = quantile(data.a(), 0.05), hi = quantile(data.a(), 0.95);
        const int m = 25;
        for (int i = 0; i < m; ++i) {
            doses.push_back(lo + (hi - lo) * static_cast<double>(i) / (m - 1));
        }
    }
    const std::size_t n_dose = doses.size();
    const FoldPlan plan = triple_plan(data, cfg, seed);
    const int n_rot = plan.rotations();
    const double inv_clip = 1.0 / cfg.clip_eps;  // weight cap

    constexpr int kOr = 0, kGps = 1, kDrD = 2, kDrK = 3;
    const TmlEstimator kinds[4] = {TmlEstimator::Or, TmlEstimator::GpsIpw,
                                   TmlEstimator::DrDensity, TmlEstimator::DrKernel};
    // scores[est][dose] across all evaluation rows; GPS-IPW keeps linearized
    // residual scores plus the pooled ratio parts.
    std::vector<std::vector<std::vector<double>>> scores(
        4, std::vector<std::vector<double>>(n_dose));
    std::vector<std::vector<std::vector<double>>> rot_means(
        4, std::vector<std::vector<double>>(n_dose, std::vector<double>(n_rot, 0.0)));

    for (int r = 0; r < n_rot; ++r) {
        const Eigen::MatrixXd z = rotation_latent(data, plan, r, cfg, seed, hooks);
        const auto nui_rows = plan.rows_with_role(r, FoldRole::Nuisance);
        const auto eval_rows = plan.rows_with_role(r, FoldRole::Evaluation);
        const Eigen::MatrixXd z_nui = take_rows(z, nui_rows);
        const auto nc = nuisance_config(cfg);
        const auto a_nui = take(data.a(), nui_rows);

        OutcomeMeanModel outcome;
        if (!hooks.oracle_outcome) {
            outcome = OutcomeMeanModel::fit_continuous(z_nui, take(data.y(), nui_rows), a_nui, nc);
            if (hooks.corrupt_outcome) outcome.corrupt_for_testing();
        }
        const GpsModel gps = GpsModel::fit(z_nui, a_nui, nc);

        const Eigen::MatrixXd z_eval = take_rows(z, eval_rows);
        const auto a_eval = take(data.a(), eval_rows);
        const auto y_eval = take(data.y(), eval_rows);
        const std::size_t ne = eval_rows.size();

        const double h = grid.h > 0.0
                             ? grid.h
                             : 1.06 * sd_sample(a_eval) *
                                   std::pow(static_cast<double>(ne), -0.2);
        const double a_min = *std::min_element(a_eval.begin(), a_eval.end());
        const double a_max = *std::max_element(a_eval.begin(), a_eval.end());
        for (double a : doses) {
            if (a < a_min - 6.0 * h || a > a_max + 6.0 * h) {
                throw Error(ErrorCode::ZeroKernelMass,
                            "no observation within 6 bandwidths of dose " + std::to_string(a));
            }
        }

        // Fitted values at observed doses and GPS densities.
        Eigen::VectorXd m_obs(ne);
        if (hooks.oracle_outcome) {
            for (std::size_t i = 0; i < ne; ++i) {
                m_obs(static_cast<Eigen::Index>(i)) = hooks.oracle_outcome(a_eval[i], z_eval(i, 0));
            }
        } else {
            m_obs = outcome.predict(a_eval, z_eval);
        }
        const Eigen::VectorXd r_obs = gps.density(a_eval, z_eval);

        for (std::size_t d = 0; d < n_dose; ++d) {
            const double a = doses[d];
            Eigen::VectorXd m_a(ne);
            if (hooks.oracle_outcome) {
                for (std::size_t i = 0; i < ne; ++i) {
                    m_a(static_cast<Eigen::Index>(i)) = hooks.oracle_outcome(a, z_eval(i, 0));
                }
            } else {
                m_a = outcome.predict_at_dose(a, z_eval);
            }
            const Eigen::VectorXd r_a = gps.density_at_dose(a, z_eval);

            std::vector<double> kern(ne);
            double kern_sum = 0.0;
            for (std::size_t i = 0; i < ne; ++i) {
                kern[i] = gauss_kernel(a_eval[i] - a, h);
                kern_sum += kern[i];
            }
            if (kern_sum <= 0.0) {
                throw Error(ErrorCode::ZeroKernelMass,
                            "zero kernel mass at dose " + std::to_string(a));
            }

            std::vector<double> s_or(ne), s_drd(ne), s_drk(ne);
            // GPS-IPW ratio parts.
            double num = 0.0, den = 0.0;
            for (std::size_t i = 0; i < ne; ++i) {
                const auto ii = static_cast<Eigen::Index>(i);
                const double resid = y_eval[i] - m_obs(ii);
                s_or[i] = m_a(ii);
                const double ratio = std::min(r_a(ii) / r_obs(ii), inv_clip);
                s_drd[i] = m_a(ii) + ratio * resid;
                const double w = kern[i] / kern_sum;
                s_drk[i] = m_a(ii) + static_cast<double>(ne) * w * resid;
                const double inv_dens = std::min(1.0 / r_obs(ii), inv_clip);
                num += kern[i] * inv_dens * y_eval[i];
                den += kern[i] * inv_dens;
            }
            const double gps_est = num / den;
            // Linearized scores for the ratio estimator's Wald se.
            std::vector<double> s_gps(ne);
            const double mean_w = den / static_cast<double>(ne);
            for (std::size_t i = 0; i < ne; ++i) {
                const auto ii = static_cast<Eigen::Index>(i);
                const double inv_dens = std::min(1.0 / r_obs(ii), inv_clip);
                s_gps[i] = gps_est + kern[i] * inv_dens * (y_eval[i] - gps_est) / mean_w;
            }

            rot_means[kOr][d][r] = mean(s_or);
            rot_means[kGps][d][r] = gps_est;
            rot_means[kDrD][d][r] = mean(s_drd);
            rot_means[kDrK][d][r] = mean(s_drk);
            scores[kOr][d].insert(scores[kOr][d].end(), s_or.begin(), s_or.end());
            scores[kGps][d].insert(scores[kGps][d].end(), s_gps.begin(), s_gps.end());
            scores[kDrD][d].insert(scores[kDrD][d].end(), s_drd.begin(), s_drd.end());
            scores[kDrK][d].insert(scores[kDrK][d].end(), s_drk.begin(), s_drk.end());
        }
    }

    std::vector<TmlEstimate> out;
    for (int e = 0; e < 4; ++e) {
        TmlEstimate est;
        est.target = TmlTargetKind::DoseCurve;
        est.estimator = kinds[e];
        est.doses = doses;
        est.per_rotation.assign(n_rot, std::vector<double>(n_dose, 0.0));
        for (std::size_t d = 0; d < n_dose; ++d) {
            // Pool rotations by mean; the per-row scores give the Wald se.
            double point = 0.0;
            for (int r = 0; r < n_rot; ++r) {
                point += rot_means[e][d][r];
                est.per_rotation[r][d] = rot_means[e][d][r];
            }
            point /= n_rot;
            const double se = std::sqrt(variance_pop(scores[e][d]) /
                                        static_cast<double>(scores[e][d].size()));
            est.value.push_back(point);
            est.se.push_back(se);
            est.ci_lo.push_back(point - kZ975 * se);
            est.ci_hi.push_back(point + kZ975 * se);
        }
        out.push_back(std::move(est));
    }
    return out;
}

std::vector<TmlEstimate> tml_continuous_ate(const Dataset& data, const RunConfig& cfg,
                                            double a_hi, double a_lo, std::uint64_t seed,
                                            const TmlHooks& hooks) {
    DoseGrid grid;
    grid.doses = {a_lo, a_hi};
    const auto curves = run_tml_continuous(data, cfg, grid, seed, hooks);
    std::vector<TmlEstimate> out;
    for (const auto& c : curves) {
        TmlEstimate est;
        est.target = TmlTargetKind::Ate;
        est.estimator = c.estimator;
        est.a_hi = a_hi;
        est.a_lo = a_lo;
        est.value = {c.value[1] - c.value[0]};
        const double se = std::sqrt(c.se[0] * c.se[0] + c.se[1] * c.se[1]);
        est.se = {se};
        est.ci_lo = {est.value[0] - kZ975 * se};
        est.ci_hi = {est.value[0] + kZ975 * se};
        for (const auto& pr : c.per_rotation) est.per_rotation.push_back({pr[1] - pr[0]});
        out.push_back(std::move(est));
    }
    return out;
}

TmlEstimate twosls_baseline(const Dataset& data) {
    if (!data.has_instrument()) {
        throw Error(ErrorCode::MissingInstrument, "2SLS needs an instrument");
    }
    const auto& s = data.s();
    const auto& a = data.a();
    const auto& y = data.y();
    const double sbar = mean(s), abar = mean(a), ybar = mean(y);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < data.n(); ++i) {
        num += (s[i] - sbar) * (y[i] - ybar);
        den += (s[i] - sbar) * (a[i] - abar);
    }
    const double sd_s = sd_pop(s), sd_a = sd_pop(a);
    if (std::abs(den) <= 1e-10 * static_cast<double>(data.n()) * sd_s * sd_a ||
        sd_s == 0.0 || sd_a == 0.0) {
        throw Error(ErrorCode::WeakInstrument, "2SLS denominator too small");
    }
    const double beta = num / den;
    double meat = 0.0;
    for (std::size_t i = 0; i < data.n(); ++i) {
        const double u = (y[i] - ybar) - beta * (a[i] - abar);
        meat += (s[i] - sbar) * (s[i] - sbar) * u * u;
    }
    const double se = std::sqrt(meat) / std::abs(den);
    TmlEstimate est;
    est.target = TmlTargetKind::Ate;
    est.estimator = TmlEstimator::TwoSls;
    est.value = {beta};
    est.se = {se};
    est.ci_lo = {beta - kZ975 * se};
    est.ci_hi = {beta + kZ975 * se};
    est.per_rotation = {{beta}};
    return est;
}

TmlEstimate aggregate_splits(const std::vector<TmlEstimate>& splits) {
    if (splits.empty()) {
        throw Error(ErrorCode::EmptyEvaluationSet, "aggregate_splits: no estimates");
    }
    const auto& first = splits.front();
    for (const auto& e : splits) {
        if (e.target != first.target || e.estimator != first.estimator ||
            e.value.size() != first.value.size()) {
            throw Error(ErrorCode::MixedTargets, "aggregate_splits: mixed targets");
        }
    }
    auto median_of = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        const std::size_t m = v.size();
        return m % 2 == 1 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
    };
    TmlEstimate out = first;
    out.per_rotation.clear();
    const std::size_t npt = first.value.size();
    for (std::size_t p = 0; p < npt; ++p) {
        std::vector<double> vals, vars;
        for (const auto& e : splits) vals.push_back(e.value[p]);
        const double point = median_of(vals);
        for (const auto& e : splits) {
            vars.push_back(e.se[p] * e.se[p] + (e.value[p] - point) * (e.value[p] - point));
        }
        const double se = std::sqrt(median_of(vars));
        out.value[p] = point;
        out.se[p] = se;
        out.ci_lo[p] = point - kZ975 * se;
        out.ci_hi[p] = point + kZ975 * se;
    }
    return out;
}

}  // namespace cfbound
