#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace cfbound {

enum class BoundKind {
    MarginalL,
    MarginalU,
    PluginL,
    PluginU,
    DrDirectU,
    DrSmoothU,
    DrSmoothL,
};

const char* bound_kind_name(BoundKind kind);

/// Point estimate with influence-function-based Wald inference. `value` and
/// the CI are truncated to [0,1] (the target is a CDF value); `raw` keeps the
/// untruncated estimate for bias studies.
struct BoundEstimate {
    double value = 0.0;
    double raw = 0.0;
    double se = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    BoundKind kind = BoundKind::PluginU;
    std::optional<double> t;
    double y1 = 0.0;
    double y0 = 0.0;
};

/// Cross-fitted nuisance evaluations for one observation at a threshold pair
/// (y1, y0): theta_a = conditional CDF of arm a at its own threshold.
struct PerPointNuisance {
    double theta0 = 0.0;
    double theta1 = 0.0;
    double pi1 = 0.5;      // clipped propensity of arm 1
    int a = 0;             // observed treatment
    bool y_le_y0 = false;  // 1{Y <= y0}
    bool y_le_y1 = false;  // 1{Y <= y1}
};

/// Pointwise Frechet-Hoeffding bounds: (max(u1+u0-1, 0), min(u1, u0)).
std::pair<double, double> fh_pointwise(double u1, double u0);

/// Smooth minimum g_t(u, v) = -(1/t) log(e^{-tu} + e^{-tv}), evaluated by
/// factoring out e^{-t min(u,v)}.
double logsumexp_min(double u, double v, double t);

/// Smooth max(u+v-1, 0) surrogate: (1/t) log(1 + e^{t(u+v-1)}).
double softplus_max(double u, double v, double t);

/// Softmax selector weight w_{a,t} on arm a.
double smooth_weight(double theta_a, double theta_other, double t);

struct BoundPair {
    BoundEstimate lower;
    BoundEstimate upper;
};

/// Naive plug-in bounds: means of the pointwise FH bounds of the fitted CDFs;
/// se is the sample SD of the pointwise values over sqrt(n) (no IF correction).
BoundPair plugin_bounds(const std::vector<PerPointNuisance>& rows, double y1, double y0);

/// Doubly robust direct estimator of the upper bound with the plug-in argmin
/// selector (ties go to arm 0).
BoundEstimate dr_direct_upper(const std::vector<PerPointNuisance>& rows, double y1, double y0);

/// Smooth log-sum-exp estimator of the upper bound at smoothing t.
BoundEstimate dr_smooth_upper(const std::vector<PerPointNuisance>& rows, double t,
                              double y1, double y0);

/// Smooth estimator of the lower bound at smoothing t.
BoundEstimate dr_smooth_lower(const std::vector<PerPointNuisance>& rows, double t,
                              double y1, double y0);

/// Selector-stability diagnostic: the empirical curve P(|theta1 - theta0| <= t)
/// over t_grid, plus the fraction of rows whose argmin selector can flip under
/// a +-eps perturbation of the fitted CDFs.
struct MarginProfile {
    std::vector<double> t_grid;
    std::vector<double> tie_mass;
    double flip_fraction = 0.0;
    double flip_eps = 0.0;
};

MarginProfile margin_profile(const std::vector<PerPointNuisance>& rows,
                             std::vector<double> t_grid, double flip_eps = 0.01);

/// (U_marg - L_marg) - (U_cond - L_cond); nonnegative on oracle quantities.
double width_reduction(const std::pair<double, double>& marginal,
                       const std::pair<double, double>& conditional);

}  // namespace cfbound
