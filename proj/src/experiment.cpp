#include "cfbound/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>

#include <json.hpp>

#include "cfbound/ivvae.hpp"
#include "cfbound/mathutil.hpp"
#include "cfbound/nuisance.hpp"
#include "cfbound/rng.hpp"
#include "cfbound/tml.hpp"

namespace cfbound {

const char* experiment_kind_name(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::BoundsSim: return "sim-bounds";
        case ExperimentKind::IvAteSim: return "sim-iv-ate";
        case ExperimentKind::DoseSim: return "sim-dose";
        case ExperimentKind::BoundsOnRepresentation: return "bounds-on-rep";
        case ExperimentKind::UserCsv: return "fit-csv";
    }
    return "unknown";
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

bool estimator_selected(const ExperimentSpec& spec, const std::string& name) {
    if (spec.run.estimators.empty()) return true;
    return std::find(spec.run.estimators.begin(), spec.run.estimators.end(), name) !=
           spec.run.estimators.end();
}

int ci_covers(double lo, double hi, double truth) {
    return lo <= truth && truth <= hi ? 1 : 0;
}

}  // namespace

std::vector<std::pair<double, double>> default_bounds_pairs(BoundsVariant variant) {
    const double qs[3] = {0.25, 0.5, 0.75};
    std::vector<double> y1s, y0s;
    for (double q : qs) {
        y1s.push_back(oracle_marginal_quantile(variant, 1, q, 400000, 20240601));
        y0s.push_back(oracle_marginal_quantile(variant, 0, q, 400000, 20240602));
    }
    std::vector<std::pair<double, double>> pairs;
    for (double a : y1s) {
        for (double b : y0s) pairs.emplace_back(a, b);
    }
    return pairs;
}

std::vector<std::vector<PerPointNuisance>> crossfit_bound_rows(
    const Dataset& data, const std::vector<std::pair<double, double>>& pairs,
    const BoundsNuisanceOptions& opt, std::uint64_t seed) {
    if (data.treatment_kind() != TreatmentKind::Binary) {
        throw Error(ErrorCode::BadConfig, "bound estimators need a binary treatment");
    }
    const std::size_t n = data.n();
    std::vector<std::vector<PerPointNuisance>> rows(pairs.size(),
                                                    std::vector<PerPointNuisance>(n));

    auto fill_indicators = [&](std::size_t p, std::size_t i) {
        rows[p][i].a = static_cast<int>(data.a()[i]);
        rows[p][i].y_le_y0 = data.y()[i] <= pairs[p].second;
        rows[p][i].y_le_y1 = data.y()[i] <= pairs[p].first;
    };

    if (opt.oracle) {
        for (std::size_t i = 0; i < n; ++i) {
            const double x1 = data.x_row(i)[0], x2 = data.x_row(i)[1];
            const double p1 = std::clamp(bounds_propensity(x1, x2), opt.nuisance.clip_eps,
                                         1.0 - opt.nuisance.clip_eps);
            for (std::size_t p = 0; p < pairs.size(); ++p) {
                rows[p][i].theta1 = bounds_theta(opt.variant, 1, pairs[p].first, x1, x2);
                rows[p][i].theta0 = bounds_theta(opt.variant, 0, pairs[p].second, x1, x2);
                rows[p][i].pi1 = p1;
                fill_indicators(p, i);
            }
        }
        return rows;
    }

    // Union threshold grid shared by both arms; each pair indexes into it.
    std::vector<double> grid;
    for (const auto& pr : pairs) {
        grid.push_back(pr.first);
        grid.push_back(pr.second);
    }
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    auto grid_index = [&](double y) {
        return static_cast<int>(std::lower_bound(grid.begin(), grid.end(), y) - grid.begin());
    };

    const Eigen::MatrixXd x = covariate_matrix(data);
    const FoldPlan plan = make_folds(n, opt.k_folds, FoldMode::Double, seed);
    for (int f = 0; f < plan.k; ++f) {
        std::vector<int> train_rows;
        train_rows.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (plan.fold_of_row[i] != f) train_rows.push_back(static_cast<int>(i));
        }
        Eigen::MatrixXd x_train(train_rows.size(), x.cols());
        std::vector<double> y_train, a_train;
        for (std::size_t i = 0; i < train_rows.size(); ++i) {
            x_train.row(static_cast<Eigen::Index>(i)) = x.row(train_rows[i]);
            y_train.push_back(data.y()[train_rows[i]]);
            a_train.push_back(data.a()[train_rows[i]]);
        }
        const auto cdf = ConditionalCdfModel::fit(x_train, y_train, a_train, grid, opt.nuisance);
        const auto prop = PropensityModel::fit(x_train, a_train, opt.nuisance);

        const auto& fold_rows = plan.rows_of_fold[f];
        Eigen::MatrixXd x_fold(fold_rows.size(), x.cols());
        for (std::size_t i = 0; i < fold_rows.size(); ++i) {
            x_fold.row(static_cast<Eigen::Index>(i)) = x.row(fold_rows[i]);
        }
        const Eigen::MatrixXd th0 = cdf.predict(0, x_fold);
        const Eigen::MatrixXd th1 = cdf.predict(1, x_fold);
        const Eigen::VectorXd p1 = prop.predict_p1(x_fold);
        for (std::size_t p = 0; p < pairs.size(); ++p) {
            const int i1 = grid_index(pairs[p].first);
            const int i0 = grid_index(pairs[p].second);
            for (std::size_t i = 0; i < fold_rows.size(); ++i) {
                const auto ii = static_cast<Eigen::Index>(i);
                const std::size_t row = static_cast<std::size_t>(fold_rows[i]);
                rows[p][row].theta0 = th0(ii, i0);
                rows[p][row].theta1 = th1(ii, i1);
                rows[p][row].pi1 = p1(ii);
                fill_indicators(p, row);
            }
        }
    }
    return rows;
}

namespace {

ReplicateRecord bound_record(int replicate, const BoundEstimate& est, const PairOracle& oracle) {
    ReplicateRecord rec;
    rec.replicate = replicate;
    rec.estimator = bound_kind_name(est.kind);
    rec.target = "bound";
    rec.y1 = est.y1;
    rec.y0 = est.y0;
    rec.dose = std::nan("");
    rec.value = est.value;
    rec.raw = est.raw;
    rec.se = est.se;
    rec.ci_lo = est.ci_lo;
    rec.ci_hi = est.ci_hi;
    rec.has_truth = 1;
    switch (est.kind) {
        case BoundKind::MarginalL: rec.truth = rec.truth_smooth = oracle.l_marg.value; break;
        case BoundKind::MarginalU: rec.truth = rec.truth_smooth = oracle.u_marg.value; break;
        case BoundKind::PluginL: rec.truth = rec.truth_smooth = oracle.l.value; break;
        case BoundKind::PluginU:
        case BoundKind::DrDirectU: rec.truth = rec.truth_smooth = oracle.u.value; break;
        case BoundKind::DrSmoothU:
            rec.truth = oracle.u.value;
            rec.truth_smooth = oracle.smooth_u.value;
            break;
        case BoundKind::DrSmoothL:
            rec.truth = oracle.l.value;
            rec.truth_smooth = oracle.smooth_l.value;
            break;
    }
    rec.covered = ci_covers(rec.ci_lo, rec.ci_hi, rec.truth_smooth);
    return rec;
}

std::vector<ReplicateRecord> bound_estimator_records(
    const ExperimentSpec& spec, int replicate,
    const std::vector<std::vector<PerPointNuisance>>& rows,
    const std::vector<std::pair<double, double>>& pairs,
    const std::vector<PairOracle>& oracle) {
    std::vector<ReplicateRecord> recs;
    const double t = spec.run.smoothing_t;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const auto [y1, y0] = pairs[p];
        if (estimator_selected(spec, "plugin")) {
            const auto pair_est = plugin_bounds(rows[p], y1, y0);
            recs.push_back(bound_record(replicate, pair_est.lower, oracle[p]));
            recs.push_back(bound_record(replicate, pair_est.upper, oracle[p]));
        }
        if (estimator_selected(spec, "dr_direct")) {
            recs.push_back(bound_record(replicate, dr_direct_upper(rows[p], y1, y0), oracle[p]));
        }
        if (estimator_selected(spec, "dr_smooth")) {
            recs.push_back(bound_record(replicate, dr_smooth_upper(rows[p], t, y1, y0), oracle[p]));
            recs.push_back(bound_record(replicate, dr_smooth_lower(rows[p], t, y1, y0), oracle[p]));
        }
        if (estimator_selected(spec, "marginal")) {
            // Plug-in marginals: FH bounds of the mean fitted CDFs.
            double f1 = 0.0, f0 = 0.0;
            for (const auto& r : rows[p]) {
                f1 += r.theta1;
                f0 += r.theta0;
            }
            f1 /= static_cast<double>(rows[p].size());
            f0 /= static_cast<double>(rows[p].size());
            const auto [l, u] = fh_pointwise(f1, f0);
            for (int which = 0; which < 2; ++which) {
                BoundEstimate est;
                est.kind = which == 0 ? BoundKind::MarginalL : BoundKind::MarginalU;
                est.raw = which == 0 ? l : u;
                est.value = est.raw;
                est.ci_lo = est.ci_hi = est.raw;
                est.y1 = y1;
                est.y0 = y0;
                recs.push_back(bound_record(replicate, est, oracle[p]));
            }
        }
    }
    return recs;
}

std::vector<ReplicateRecord> tml_records(const ExperimentSpec& spec, int replicate,
                                         const std::vector<TmlEstimate>& ests,
                                         IvOutcome outcome) {
    std::vector<ReplicateRecord> recs;
    for (const auto& est : ests) {
        const std::string name = tml_estimator_name(est.estimator);
        if (!estimator_selected(spec, name)) continue;
        if (est.target == TmlTargetKind::DoseCurve) {
            for (std::size_t d = 0; d < est.doses.size(); ++d) {
                ReplicateRecord rec;
                rec.replicate = replicate;
                rec.estimator = name;
                rec.target = "dose";
                rec.dose = est.doses[d];
                rec.y1 = rec.y0 = std::nan("");
                rec.value = rec.raw = est.value[d];
                rec.se = est.se[d];
                rec.ci_lo = est.ci_lo[d];
                rec.ci_hi = est.ci_hi[d];
                rec.truth = rec.truth_smooth = oracle_dose_response(outcome, est.doses[d]).value;
                rec.has_truth = 1;
                rec.covered = ci_covers(rec.ci_lo, rec.ci_hi, rec.truth);
                recs.push_back(rec);
            }
            continue;
        }
        ReplicateRecord rec;
        rec.replicate = replicate;
        rec.estimator = name;
        rec.y1 = rec.y0 = rec.dose = std::nan("");
        rec.value = rec.raw = est.value[0];
        rec.se = est.se[0];
        rec.ci_lo = est.ci_lo[0];
        rec.ci_hi = est.ci_hi[0];
        rec.has_truth = 1;
        if (est.target == TmlTargetKind::Ate) {
            rec.target = "ate";
            rec.truth = oracle_ate(outcome, est.a_hi, est.a_lo).value;
        } else {
            rec.target = "ey" + std::to_string(static_cast<int>(est.a_hi));
            rec.truth = oracle_dose_response(outcome, est.a_hi).value;
        }
        rec.truth_smooth = rec.truth;
        rec.covered = ci_covers(rec.ci_lo, rec.ci_hi, rec.truth);
        recs.push_back(rec);
    }
    return recs;
}

double iv_marginal_quantile(IvOutcome outcome, int arm, double p, std::uint64_t seed) {
    auto eng = make_engine(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const long n = 200000;
    std::vector<double> draws(n);
    for (long i = 0; i < n; ++i) {
        const double z = gauss(eng), ey = 0.2 * gauss(eng);
        draws[i] = iv_outcome_mean(outcome, static_cast<double>(arm), z) + ey;
    }
    return quantile(std::move(draws), p);
}

/// Per-replicate body for BoundsOnRepresentation: rotate the triple plan,
/// learn z_hat on representation folds (or take the true score), fit the CDF
/// and propensity nuisances on z_hat, score evaluation folds.
struct RepBoundsOutput {
    std::vector<std::vector<PerPointNuisance>> rows;
    double corr = std::nan("");
    std::vector<std::pair<double, double>> scatter;
};

RepBoundsOutput rep_bounds_rows(const ExperimentSpec& spec, const IvSample& sample,
                                const std::vector<std::pair<double, double>>& pairs,
                                std::uint64_t seed, bool want_scatter) {
    const Dataset& data = sample.data;
    const std::size_t n = data.n();
    RepBoundsOutput out;
    out.rows.assign(pairs.size(), std::vector<PerPointNuisance>(n));

    std::vector<double> grid;
    for (const auto& pr : pairs) {
        grid.push_back(pr.first);
        grid.push_back(pr.second);
    }
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    auto grid_index = [&](double y) {
        return static_cast<int>(std::lower_bound(grid.begin(), grid.end(), y) - grid.begin());
    };

    NuisanceConfig nc;
    nc.clip_eps = spec.run.clip_eps;
    const FoldPlan plan = make_folds(n, spec.run.k_folds, FoldMode::Triple, mix_seed(seed, 11));
    for (int r = 0; r < plan.rotations(); ++r) {
        Eigen::MatrixXd z;
        if (spec.oracle_nuisance) {
            z.resize(n, 1);
            for (std::size_t i = 0; i < n; ++i) z(i, 0) = sample.z_c[i];
        } else {
            const auto rep_rows = plan.rows_with_role(r, FoldRole::Representation);
            const auto trained = train_ivvae(data.subset(rep_rows), spec.run.vae,
                                             mix_seed(seed, 100 + static_cast<std::uint64_t>(r)));
            z = encode(trained.model, data);
        }
        if (r == 0 && !spec.oracle_nuisance) {
            std::vector<double> zc(sample.z_c), zh(n);
            for (std::size_t i = 0; i < n; ++i) zh[i] = z(i, 0);
            out.corr = std::abs(pearson_corr(zh, zc));
            if (want_scatter) {
                const std::size_t step = std::max<std::size_t>(1, n / 500);
                for (std::size_t i = 0; i < n; i += step) {
                    out.scatter.emplace_back(zc[i], zh[i]);
                }
            }
        }
        const auto nui_rows = plan.rows_with_role(r, FoldRole::Nuisance);
        const auto eval_rows = plan.rows_with_role(r, FoldRole::Evaluation);
        Eigen::MatrixXd z_nui(nui_rows.size(), z.cols());
        std::vector<double> y_nui, a_nui;
        for (std::size_t i = 0; i < nui_rows.size(); ++i) {
            z_nui.row(static_cast<Eigen::Index>(i)) = z.row(nui_rows[i]);
            y_nui.push_back(data.y()[nui_rows[i]]);
            a_nui.push_back(data.a()[nui_rows[i]]);
        }
        const auto cdf = ConditionalCdfModel::fit(z_nui, y_nui, a_nui, grid, nc);
        const auto prop = PropensityModel::fit(z_nui, a_nui, nc);

        Eigen::MatrixXd z_eval(eval_rows.size(), z.cols());
        for (std::size_t i = 0; i < eval_rows.size(); ++i) {
            z_eval.row(static_cast<Eigen::Index>(i)) = z.row(eval_rows[i]);
        }
        const Eigen::MatrixXd th0 = cdf.predict(0, z_eval);
        const Eigen::MatrixXd th1 = cdf.predict(1, z_eval);
        const Eigen::VectorXd p1 = prop.predict_p1(z_eval);
        for (std::size_t p = 0; p < pairs.size(); ++p) {
            const int i1 = grid_index(pairs[p].first);
            const int i0 = grid_index(pairs[p].second);
            for (std::size_t i = 0; i < eval_rows.size(); ++i) {
                const auto ii = static_cast<Eigen::Index>(i);
                const std::size_t row = static_cast<std::size_t>(eval_rows[i]);
                auto& pr = out.rows[p][row];
                pr.theta0 = th0(ii, i0);
                pr.theta1 = th1(ii, i1);
                pr.pi1 = p1(ii);
                pr.a = static_cast<int>(data.a()[row]);
                pr.y_le_y0 = data.y()[row] <= pairs[p].second;
                pr.y_le_y1 = data.y()[row] <= pairs[p].first;
            }
        }
    }
    return out;
}

struct RepOutcome {
    std::vector<ReplicateRecord> records;
    std::string failure;
    double corr = std::nan("");
    std::vector<std::pair<double, double>> scatter;
};

void aggregate(ExperimentReport& report) {
    struct Key {
        std::string estimator, target;
        double y1, y0, dose;
        bool operator<(const Key& o) const {
            auto tie = [](const Key& k) {
                // NaNs compare equal through the string round trip below.
                return std::tuple<const std::string&, const std::string&, std::string,
                                  std::string, std::string>(
                    k.estimator, k.target, fmt(k.y1), fmt(k.y0), fmt(k.dose));
            };
            return tie(*this) < tie(o);
        }
    };
    std::map<Key, std::vector<const ReplicateRecord*>> groups;
    for (const auto& rec : report.replicates) {
        groups[{rec.estimator, rec.target, rec.y1, rec.y0, rec.dose}].push_back(&rec);
    }
    for (const auto& [key, recs] : groups) {
        AggregateRecord agg;
        agg.estimator = key.estimator;
        agg.target = key.target;
        agg.y1 = key.y1;
        agg.y0 = key.y0;
        agg.dose = key.dose;
        agg.reps = static_cast<int>(recs.size());
        agg.has_truth = recs.front()->has_truth;
        agg.truth = recs.front()->truth;
        std::vector<double> values;
        double cover = 0.0, msq = 0.0;
        for (const auto* r : recs) {
            values.push_back(r->value);
            cover += r->covered;
            const double err = r->value - r->truth;
            msq += err * err;
        }
        agg.value = mean(values);
        agg.se = sd_pop(values);
        if (agg.has_truth) {
            agg.bias = agg.value - agg.truth;
            agg.mse = agg.bias * agg.bias + agg.se * agg.se;
            agg.mean_sq_err = msq / static_cast<double>(recs.size());
            agg.coverage = cover / static_cast<double>(recs.size());
        }
        report.aggregates.push_back(std::move(agg));
    }
}

void run_bounds_sim(const ExperimentSpec& spec, ExperimentReport& report, bool on_representation) {
    std::vector<std::pair<double, double>> pairs;
    if (!spec.run.grid.y1.empty()) {
        for (std::size_t i = 0; i < spec.run.grid.y1.size(); ++i) {
            pairs.emplace_back(spec.run.grid.y1[i], spec.run.grid.y0[i]);
        }
    } else if (on_representation) {
        const double qs[3] = {0.25, 0.5, 0.75};
        std::vector<double> y1s, y0s;
        for (double q : qs) {
            y1s.push_back(iv_marginal_quantile(spec.iv_outcome, 1, q, 20240611));
            y0s.push_back(iv_marginal_quantile(spec.iv_outcome, 0, q, 20240612));
        }
        for (double a : y1s) {
            for (double b : y0s) pairs.emplace_back(a, b);
        }
    } else {
        pairs = default_bounds_pairs(spec.bounds_variant);
    }

    report.bounds_oracle =
        on_representation
            ? oracle_iv_bounds_grid(spec.iv_outcome, pairs, spec.run.smoothing_t, spec.n_mc,
                                    mix_seed(spec.base_seed, 0xACE))
            : oracle_bounds_grid(spec.bounds_variant, pairs, spec.run.smoothing_t, spec.n_mc,
                                 mix_seed(spec.base_seed, 0xACE));

    const int R = spec.replications;
    std::vector<RepOutcome> outcomes(R);
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, spec.jobs))
    for (int r = 0; r < R; ++r) {
        try {
            const std::uint64_t seed = mix_seed(spec.base_seed, static_cast<std::uint64_t>(r));
            if (on_representation) {
                IvDgpSpec dgp{spec.iv_outcome, IvTreatment::BinaryTreatment, spec.n, seed};
                const IvSample sample = gen_iv_dgp(dgp);
                auto rows = rep_bounds_rows(spec, sample, pairs, seed, r == 0);
                outcomes[r].records = bound_estimator_records(spec, r, rows.rows, pairs,
                                                              report.bounds_oracle);
                outcomes[r].corr = rows.corr;
                outcomes[r].scatter = std::move(rows.scatter);
            } else {
                BoundsDgpSpec dgp{spec.bounds_variant, spec.n, seed};
                const BoundsSample sample = gen_bounds_dgp(dgp);
                BoundsNuisanceOptions opt;
                opt.oracle = spec.oracle_nuisance;
                opt.variant = spec.bounds_variant;
                opt.nuisance.clip_eps = spec.run.clip_eps;
                const auto rows = crossfit_bound_rows(sample.data, pairs, opt, mix_seed(seed, 77));
                outcomes[r].records =
                    bound_estimator_records(spec, r, rows, pairs, report.bounds_oracle);
            }
        } catch (const std::exception& e) {
            outcomes[r].failure = e.what();
        }
    }
    for (int r = 0; r < R; ++r) {
        if (!outcomes[r].failure.empty()) {
            report.failures.push_back("replicate " + std::to_string(r) + ": " +
                                      outcomes[r].failure);
            continue;
        }
        report.replicates.insert(report.replicates.end(), outcomes[r].records.begin(),
                                 outcomes[r].records.end());
        if (std::isfinite(outcomes[r].corr)) report.rep_corr.push_back(outcomes[r].corr);
        if (!outcomes[r].scatter.empty()) report.rep_scatter = std::move(outcomes[r].scatter);
    }
}

void run_iv_sim(const ExperimentSpec& spec, ExperimentReport& report, bool dose_curve) {
    const int R = spec.replications;
    // A fixed dose grid across replicates; from config or a reference draw.
    std::vector<double> doses = spec.run.grid.doses;
    if (dose_curve && doses.empty()) {
        IvDgpSpec ref{spec.iv_outcome, IvTreatment::ContinuousTreatment, spec.n,
                      mix_seed(spec.base_seed, 0xD05E)};
        const auto sample = gen_iv_dgp(ref);
        const double lo = quantile(sample.data.a(), 0.05);
        const double hi = quantile(sample.data.a(), 0.95);
        for (int i = 0; i < 25; ++i) doses.push_back(lo + (hi - lo) * i / 24.0);
    }

    std::vector<RepOutcome> outcomes(R);
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, spec.jobs))
    for (int r = 0; r < R; ++r) {
        try {
            const std::uint64_t seed = mix_seed(spec.base_seed, static_cast<std::uint64_t>(r));
            IvDgpSpec dgp{spec.iv_outcome,
                          dose_curve ? IvTreatment::ContinuousTreatment : spec.iv_treatment,
                          spec.n, seed};
            const IvSample sample = gen_iv_dgp(dgp);
            TmlHooks hooks;
            if (spec.oracle_nuisance) hooks.oracle_latent = &sample.z_c;
            std::vector<TmlEstimate> ests;
            if (dose_curve) {
                DoseGrid grid;
                grid.doses = doses;
                ests = run_tml_continuous(sample.data, spec.run, grid, seed, hooks);
            } else if (dgp.treatment == IvTreatment::BinaryTreatment) {
                ests = run_tml_binary(sample.data, spec.run, seed, hooks);
            } else {
                ests = tml_continuous_ate(sample.data, spec.run, 1.0, 0.0, seed, hooks);
            }
            if (estimator_selected(spec, "2sls") && !dose_curve) {
                ests.push_back(twosls_baseline(sample.data));
            }
            outcomes[r].records = tml_records(spec, r, ests, spec.iv_outcome);
        } catch (const std::exception& e) {
            outcomes[r].failure = e.what();
        }
    }
    for (int r = 0; r < R; ++r) {
        if (!outcomes[r].failure.empty()) {
            report.failures.push_back("replicate " + std::to_string(r) + ": " +
                                      outcomes[r].failure);
            continue;
        }
        report.replicates.insert(report.replicates.end(), outcomes[r].records.begin(),
                                 outcomes[r].records.end());
    }
    // Representation-quality bundle from one extra training run on the first
    // replicate's representation folds.
    if (!spec.oracle_nuisance && R > 0) {
        try {
            const std::uint64_t seed = mix_seed(spec.base_seed, 0);
            IvDgpSpec dgp{spec.iv_outcome,
                          dose_curve ? IvTreatment::ContinuousTreatment : spec.iv_treatment,
                          spec.n, seed};
            const IvSample sample = gen_iv_dgp(dgp);
            const FoldPlan plan =
                make_folds(sample.data.n(), spec.run.k_folds, FoldMode::Triple, mix_seed(seed, 11));
            const auto rep_rows = plan.rows_with_role(0, FoldRole::Representation);
            const auto trained =
                train_ivvae(sample.data.subset(rep_rows), spec.run.vae, mix_seed(seed, 100));
            const Eigen::MatrixXd z = encode(trained.model, sample.data);
            std::vector<double> zh(sample.data.n());
            for (std::size_t i = 0; i < zh.size(); ++i) zh[i] = z(i, 0);
            report.rep_corr.push_back(std::abs(pearson_corr(zh, sample.z_c)));
            const std::size_t step = std::max<std::size_t>(1, zh.size() / 500);
            for (std::size_t i = 0; i < zh.size(); i += step) {
                report.rep_scatter.emplace_back(sample.z_c[i], zh[i]);
            }
        } catch (const std::exception& e) {
            report.failures.push_back(std::string("representation bundle: ") + e.what());
        }
    }
}

void run_user_csv(const ExperimentSpec& spec, ExperimentReport& report) {
    const Dataset data = validate_dataset(read_csv_file(spec.csv_path));
    if (!data.has_instrument()) {
        throw Error(ErrorCode::MissingInstrument, "fit-csv needs an instrument column s");
    }
    const int B = spec.replications;
    std::vector<std::vector<TmlEstimate>> splits(B);
    std::vector<std::string> split_failures(B);
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, spec.jobs))
    for (int b = 0; b < B; ++b) {
        try {
            const std::uint64_t seed = mix_seed(spec.base_seed, static_cast<std::uint64_t>(b));
            std::vector<TmlEstimate> ests;
            if (data.treatment_kind() == TreatmentKind::Binary) {
                ests = run_tml_binary(data, spec.run, seed);
            } else {
                const double a_lo = quantile(data.a(), 0.25);
                const double a_hi = quantile(data.a(), 0.75);
                ests = tml_continuous_ate(data, spec.run, a_hi, a_lo, seed);
                DoseGrid grid;
                grid.doses = spec.run.grid.doses;
                const auto curves = run_tml_continuous(data, spec.run, grid, seed);
                ests.insert(ests.end(), curves.begin(), curves.end());
            }
            for (auto& e : ests) e.split_id = b;
            splits[b] = std::move(ests);
        } catch (const std::exception& e) {
            split_failures[b] = e.what();
        }
    }
    for (int b = 0; b < B; ++b) {
        if (!split_failures[b].empty()) {
            report.failures.push_back("split " + std::to_string(b) + ": " + split_failures[b]);
        }
    }
    // Per-split rows plus a median-aggregated summary per estimator/target.
    auto push_records = [&](const std::vector<TmlEstimate>& ests, int replicate) {
        for (const auto& est : ests) {
            const std::string name = tml_estimator_name(est.estimator);
            if (!estimator_selected(spec, name)) continue;
            const bool curve = est.target == TmlTargetKind::DoseCurve;
            const std::size_t npt = est.value.size();
            for (std::size_t p = 0; p < npt; ++p) {
                ReplicateRecord rec;
                rec.replicate = replicate;
                rec.estimator = name;
                rec.target = curve ? "dose" : tml_target_name(est.target);
                rec.dose = curve ? est.doses[p] : std::nan("");
                rec.y1 = rec.y0 = std::nan("");
                rec.value = rec.raw = est.value[p];
                rec.se = est.se[p];
                rec.ci_lo = est.ci_lo[p];
                rec.ci_hi = est.ci_hi[p];
                rec.truth = rec.truth_smooth = std::nan("");
                rec.has_truth = 0;
                report.replicates.push_back(rec);
            }
        }
    };
    for (int b = 0; b < B; ++b) push_records(splits[b], b);

    std::size_t per_split = 0;
    for (const auto& s : splits) {
        if (!s.empty()) {
            per_split = s.size();
            break;
        }
    }
    std::vector<TmlEstimate> aggregated;
    for (std::size_t j = 0; j < per_split; ++j) {
        std::vector<TmlEstimate> across;
        for (int b = 0; b < B; ++b) {
            if (splits[b].size() > j) across.push_back(splits[b][j]);
        }
        if (!across.empty()) aggregated.push_back(aggregate_splits(across));
    }
    push_records(aggregated, -1);
    const auto twosls = twosls_baseline(data);
    std::vector<TmlEstimate> base{twosls};
    push_records(base, -1);
}

}  // namespace

ExperimentReport run_experiment(const ExperimentSpec& spec) {
    spec.run.validate();
    if (spec.replications < 1) throw Error(ErrorCode::BadConfig, "replications must be >= 1");
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentReport report;
    report.spec = spec;
    switch (spec.which) {
        case ExperimentKind::BoundsSim: run_bounds_sim(spec, report, false); break;
        case ExperimentKind::BoundsOnRepresentation: run_bounds_sim(spec, report, true); break;
        case ExperimentKind::IvAteSim: run_iv_sim(spec, report, false); break;
        case ExperimentKind::DoseSim: run_iv_sim(spec, report, true); break;
        case ExperimentKind::UserCsv: run_user_csv(spec, report); break;
    }
    auto nan_safe = [](double v) { return std::isnan(v) ? -1e300 : v; };
    std::sort(report.replicates.begin(), report.replicates.end(),
              [&](const ReplicateRecord& a, const ReplicateRecord& b) {
                  return std::make_tuple(a.replicate, std::cref(a.estimator), std::cref(a.target),
                                         nan_safe(a.y1), nan_safe(a.y0), nan_safe(a.dose)) <
                         std::make_tuple(b.replicate, std::cref(b.estimator), std::cref(b.target),
                                         nan_safe(b.y1), nan_safe(b.y0), nan_safe(b.dose));
              });
    aggregate(report);
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

std::string ExperimentSpec::to_json() const {
    nlohmann::ordered_json j;
    j["which"] = experiment_kind_name(which);
    j["replications"] = replications;
    j["n"] = n;
    j["base_seed"] = base_seed;
    j["bounds_variant"] = bounds_variant == BoundsVariant::LinearSCM ? "linear" : "nonlinear";
    j["iv_outcome"] = iv_outcome == IvOutcome::LinearOutcome ? "linear" : "nonlinear";
    j["iv_treatment"] =
        iv_treatment == IvTreatment::BinaryTreatment ? "binary" : "continuous";
    j["oracle_nuisance"] = oracle_nuisance;
    j["csv_path"] = csv_path;
    j["jobs"] = jobs;
    j["n_mc"] = n_mc;
    j["run"] = nlohmann::ordered_json::parse(run.to_json());
    return j.dump(2);
}

void emit_report(const ExperimentReport& report, const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + out_dir);

    auto open = [&](const std::string& name) {
        std::ofstream f(out_dir + "/" + name);
        if (!f) throw Error(ErrorCode::IoFailure, "cannot write " + out_dir + "/" + name);
        return f;
    };

    {
        auto f = open("replicates.csv");
        f << "replicate,estimator,target,y1,y0,dose,value,raw,se,ci_lo,ci_hi,truth,"
             "truth_smooth,covered,has_truth\n";
        for (const auto& r : report.replicates) {
            f << r.replicate << ',' << r.estimator << ',' << r.target << ',' << fmt(r.y1) << ','
              << fmt(r.y0) << ',' << fmt(r.dose) << ',' << fmt(r.value) << ',' << fmt(r.raw)
              << ',' << fmt(r.se) << ',' << fmt(r.ci_lo) << ',' << fmt(r.ci_hi) << ','
              << fmt(r.truth) << ',' << fmt(r.truth_smooth) << ',' << r.covered << ','
              << r.has_truth << '\n';
        }
    }
    {
        auto f = open("aggregates.csv");
        f << "estimator,target,y1,y0,dose,truth,truth_mc_se,reps,value,bias,se,mse,"
             "mean_sq_err,coverage,has_truth\n";
        for (const auto& a : report.aggregates) {
            f << a.estimator << ',' << a.target << ',' << fmt(a.y1) << ',' << fmt(a.y0) << ','
              << fmt(a.dose) << ',' << fmt(a.truth) << ',' << fmt(a.truth_mc_se) << ','
              << a.reps << ',' << fmt(a.value) << ',' << fmt(a.bias) << ',' << fmt(a.se) << ','
              << fmt(a.mse) << ',' << fmt(a.mean_sq_err) << ',' << fmt(a.coverage) << ','
              << a.has_truth << '\n';
        }
    }
    {
        nlohmann::ordered_json j;
        j["spec"] = nlohmann::ordered_json::parse(report.spec.to_json());
        j["aggregates"] = nlohmann::ordered_json::array();
        for (const auto& a : report.aggregates) {
            j["aggregates"].push_back({{"estimator", a.estimator}, {"target", a.target},
                                       {"y1", a.y1}, {"y0", a.y0}, {"dose", a.dose},
                                       {"truth", a.truth}, {"value", a.value},
                                       {"bias", a.bias}, {"se", a.se}, {"mse", a.mse},
                                       {"coverage", a.coverage}});
        }
        // Boxplot quartiles of per-replicate error per estimator/target.
        std::map<std::string, std::vector<double>> errs;
        for (const auto& r : report.replicates) {
            if (r.has_truth && r.replicate >= 0) {
                errs[r.estimator + "|" + r.target].push_back(r.value - r.truth);
            }
        }
        nlohmann::ordered_json box = nlohmann::ordered_json::array();
        for (const auto& [key, v] : errs) {
            box.push_back({{"series", key},
                           {"q0", quantile(v, 0.0)},
                           {"q25", quantile(v, 0.25)},
                           {"q50", quantile(v, 0.5)},
                           {"q75", quantile(v, 0.75)},
                           {"q100", quantile(v, 1.0)}});
        }
        j["bias_boxplots"] = box;
        // Dose-response curves with CI bands (means over replicates).
        struct Curve {
            std::vector<double> dose, value, lo, hi, truth;
            std::map<double, std::vector<double>> by_dose, lo_by, hi_by;
            std::map<double, double> truth_by;
        };
        std::map<std::string, Curve> curves;
        for (const auto& r : report.replicates) {
            if (r.target != "dose" || r.replicate < 0) continue;
            auto& c = curves[r.estimator];
            c.by_dose[r.dose].push_back(r.value);
            c.lo_by[r.dose].push_back(r.ci_lo);
            c.hi_by[r.dose].push_back(r.ci_hi);
            c.truth_by[r.dose] = r.truth;
        }
        nlohmann::ordered_json curve_json = nlohmann::ordered_json::array();
        for (auto& [name, c] : curves) {
            nlohmann::ordered_json entry;
            entry["estimator"] = name;
            for (const auto& [dose, vals] : c.by_dose) {
                entry["dose"].push_back(dose);
                entry["value"].push_back(mean(vals));
                entry["ci_lo"].push_back(mean(c.lo_by[dose]));
                entry["ci_hi"].push_back(mean(c.hi_by[dose]));
                entry["truth"].push_back(c.truth_by[dose]);
            }
            curve_json.push_back(entry);
        }
        j["dose_curves"] = curve_json;
        // Oracle width reduction per threshold pair.
        nlohmann::ordered_json width = nlohmann::ordered_json::array();
        for (const auto& po : report.bounds_oracle) {
            width.push_back({{"y1", po.y1},
                             {"y0", po.y0},
                             {"reduction", (po.u_marg.value - po.l_marg.value) -
                                               (po.u.value - po.l.value)}});
        }
        j["width_reduction"] = width;
        nlohmann::ordered_json rep;
        rep["abs_corr"] = report.rep_corr;
        nlohmann::ordered_json scatter = nlohmann::ordered_json::array();
        for (const auto& [zc, zh] : report.rep_scatter) scatter.push_back({zc, zh});
        rep["scatter_zc_zhat"] = scatter;
        j["representation"] = rep;
        auto f = open("report.json");
        f << j.dump(2) << '\n';
    }
    {
        nlohmann::ordered_json j;
        j["spec"] = nlohmann::ordered_json::parse(report.spec.to_json());
        j["version"] = "cfbound 0.1.0";
        j["wall_seconds"] = report.wall_seconds;
        j["seed_scheme"] = "replicate r uses splitmix64 mix(base_seed, r)";
        j["failures"] = report.failures;
        j["files"] = {"replicates.csv", "aggregates.csv", "report.json"};
        auto f = open("manifest.json");
        f << j.dump(2) << '\n';
    }
}

}  // namespace cfbound
