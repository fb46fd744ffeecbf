#include "cfbound/fh_bounds.hpp"

#include <algorithm>
#include <cmath>

#include "cfbound/error.hpp"
#include "cfbound/mathutil.hpp"

namespace cfbound {

const char* bound_kind_name(BoundKind kind) {
    switch (kind) {
        case BoundKind::MarginalL: return "marginal_l";
        case BoundKind::MarginalU: return "marginal_u";
        case BoundKind::PluginL: return "plugin_l";
        case BoundKind::PluginU: return "plugin_u";
        case BoundKind::DrDirectU: return "dr_direct_u";
        case BoundKind::DrSmoothU: return "dr_smooth_u";
        case BoundKind::DrSmoothL: return "dr_smooth_l";
    }
    return "unknown";
}

std::pair<double, double> fh_pointwise(double u1, double u0) {
    if (!(u1 >= 0.0 && u1 <= 1.0 && u0 >= 0.0 && u0 <= 1.0)) {
        throw Error(ErrorCode::OutOfRange, "fh_pointwise: inputs must lie in [0,1]");
    }
    return {std::max(u1 + u0 - 1.0, 0.0), std::min(u1, u0)};
}

double logsumexp_min(double u, double v, double t) {
    const double lo = std::min(u, v);
    const double hi = std::max(u, v);
    // -(1/t) log(e^{-tu} + e^{-tv}) = lo - (1/t) log(1 + e^{-t (hi - lo)})
    return lo - log1pexp(-t * (hi - lo)) / t;
}

double softplus_max(double u, double v, double t) {
    return log1pexp(t * (u + v - 1.0)) / t;
}

double smooth_weight(double theta_a, double theta_other, double t) {
    // e^{-t a} / (e^{-t a} + e^{-t b}) = sigmoid(t (b - a))
    return sigmoid(t * (theta_other - theta_a));
}

namespace {

void require_rows(const std::vector<PerPointNuisance>& rows, const char* who) {
    if (rows.empty()) {
        throw Error(ErrorCode::EmptyEvaluationSet, std::string(who) + ": no evaluation rows");
    }
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

/// Mean + Wald machinery shared by the DR estimators: the estimate is the mean
/// of per-row scores, se^2 the empirical variance of the score over n.
BoundEstimate from_scores(const std::vector<double>& scores, BoundKind kind,
                          std::optional<double> t, double y1, double y0) {
    BoundEstimate est;
    est.kind = kind;
    est.t = t;
    est.y1 = y1;
    est.y0 = y0;
    est.raw = mean(scores);
    est.se = std::sqrt(variance_pop(scores) / static_cast<double>(scores.size()));
    est.value = clamp01(est.raw);
    est.ci_lo = clamp01(est.raw - kZ975 * est.se);
    est.ci_hi = clamp01(est.raw + kZ975 * est.se);
    return est;
}

double ipw_residual(const PerPointNuisance& r, int arm) {
    if (r.a != arm) return 0.0;
    const double pi_a = arm == 1 ? r.pi1 : 1.0 - r.pi1;
    const double theta_a = arm == 1 ? r.theta1 : r.theta0;
    const double ind = arm == 1 ? (r.y_le_y1 ? 1.0 : 0.0) : (r.y_le_y0 ? 1.0 : 0.0);
    return (ind - theta_a) / pi_a;
}

}  // namespace

BoundPair plugin_bounds(const std::vector<PerPointNuisance>& rows, double y1, double y0) {
    require_rows(rows, "plugin_bounds");
    std::vector<double> lo(rows.size()), hi(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto [l, u] = fh_pointwise(rows[i].theta1, rows[i].theta0);
        lo[i] = l;
        hi[i] = u;
    }
    BoundPair pair;
    pair.lower = from_scores(lo, BoundKind::PluginL, std::nullopt, y1, y0);
    pair.upper = from_scores(hi, BoundKind::PluginU, std::nullopt, y1, y0);
    return pair;
}

BoundEstimate dr_direct_upper(const std::vector<PerPointNuisance>& rows, double y1, double y0) {
    require_rows(rows, "dr_direct_upper");
    std::vector<double> scores(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        // Plug-in selector argmin_a theta_a; ties go to arm 0.
        const int d = r.theta1 < r.theta0 ? 1 : 0;
        const double theta_d = d == 1 ? r.theta1 : r.theta0;
        scores[i] = theta_d + ipw_residual(r, d);
    }
    return from_scores(scores, BoundKind::DrDirectU, std::nullopt, y1, y0);
}

BoundEstimate dr_smooth_upper(const std::vector<PerPointNuisance>& rows, double t,
                              double y1, double y0) {
    require_rows(rows, "dr_smooth_upper");
    if (!(t > 0.0)) throw Error(ErrorCode::BadConfig, "smoothing t must be > 0");
    std::vector<double> scores(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        const double w0 = smooth_weight(r.theta0, r.theta1, t);
        const double w1 = 1.0 - w0;
        scores[i] = w0 * ipw_residual(r, 0) + w1 * ipw_residual(r, 1) +
                    logsumexp_min(r.theta0, r.theta1, t);
    }
    return from_scores(scores, BoundKind::DrSmoothU, t, y1, y0);
}

BoundEstimate dr_smooth_lower(const std::vector<PerPointNuisance>& rows, double t,
                              double y1, double y0) {
    require_rows(rows, "dr_smooth_lower");
    if (!(t > 0.0)) throw Error(ErrorCode::BadConfig, "smoothing t must be > 0");
    std::vector<double> scores(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        // Both arms share the weight sigma(t (theta0 + theta1 - 1)).
        const double w = sigmoid(t * (r.theta0 + r.theta1 - 1.0));
        scores[i] = w * (ipw_residual(r, 0) + ipw_residual(r, 1)) +
                    softplus_max(r.theta0, r.theta1, t);
    }
    return from_scores(scores, BoundKind::DrSmoothL, t, y1, y0);
}

MarginProfile margin_profile(const std::vector<PerPointNuisance>& rows,
                             std::vector<double> t_grid, double flip_eps) {
    require_rows(rows, "margin_profile");
    MarginProfile prof;
    prof.t_grid = std::move(t_grid);
    prof.tie_mass.resize(prof.t_grid.size(), 0.0);
    const double n = static_cast<double>(rows.size());
    int flips = 0;
    for (const auto& r : rows) {
        const double gap = std::abs(r.theta1 - r.theta0);
        for (std::size_t g = 0; g < prof.t_grid.size(); ++g) {
            if (gap <= prof.t_grid[g]) prof.tie_mass[g] += 1.0;
        }
        // A +-eps perturbation of each fitted CDF can move the gap by 2 eps.
        if (gap <= 2.0 * flip_eps) ++flips;
    }
    for (double& m : prof.tie_mass) m /= n;
    prof.flip_fraction = static_cast<double>(flips) / n;
    prof.flip_eps = flip_eps;
    return prof;
}

double width_reduction(const std::pair<double, double>& marginal,
                       const std::pair<double, double>& conditional) {
    return (marginal.second - marginal.first) - (conditional.second - conditional.first);
}

}  // namespace cfbound
