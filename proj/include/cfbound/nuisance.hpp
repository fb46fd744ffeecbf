#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "cfbound/data.hpp"
#include "cfbound/features.hpp"

namespace cfbound {

/// Per-arm conditional outcome CDF theta_a(y_g | input) on a fixed threshold
/// grid, via logistic probability regressions of 1{Y <= y_g}. Predictions are
/// projected to be non-decreasing across the grid (pool adjacent violators).
class ConditionalCdfModel {
public:
    static ConditionalCdfModel fit(const Eigen::MatrixXd& inputs,
                                   const std::vector<double>& y,
                                   const std::vector<double>& a,
                                   const std::vector<double>& grid,
                                   const NuisanceConfig& cfg);

    /// n-by-G matrix of monotone CDF predictions for one arm.
    Eigen::MatrixXd predict(int arm, const Eigen::MatrixXd& inputs) const;

    const std::vector<double>& grid() const { return grid_; }
    bool converged() const { return converged_; }
    std::string to_json() const;

private:
    FeatureMap fmap_;
    std::vector<double> grid_;
    // coef_[arm][g]; empty vector marks a degenerate (constant-label) fit with
    // value const_[arm][g].
    std::array<std::vector<Eigen::VectorXd>, 2> coef_;
    std::array<std::vector<double>, 2> const_;
    bool converged_ = true;
};

/// Logistic propensity P(A=1 | input), predictions clipped to
/// [clip_eps, 1 - clip_eps].
class PropensityModel {
public:
    static PropensityModel fit(const Eigen::MatrixXd& inputs, const std::vector<double>& a,
                               const NuisanceConfig& cfg);

    Eigen::VectorXd predict_p1(const Eigen::MatrixXd& inputs) const;
    bool converged() const { return converged_; }
    double clip_eps() const { return clip_eps_; }

private:
    FeatureMap fmap_;
    Eigen::VectorXd beta_;
    double clip_eps_ = 0.01;
    bool converged_ = true;
};

/// Ridge outcome means: per-arm fits for binary treatments; a joint fit over
/// dose, dose^2 and dose-by-feature interactions for continuous doses.
class OutcomeMeanModel {
public:
    static OutcomeMeanModel fit_binary(const Eigen::MatrixXd& inputs,
                                       const std::vector<double>& y,
                                       const std::vector<double>& a,
                                       const NuisanceConfig& cfg);
    static OutcomeMeanModel fit_continuous(const Eigen::MatrixXd& inputs,
                                           const std::vector<double>& y,
                                           const std::vector<double>& a,
                                           const NuisanceConfig& cfg);

    /// Predictions at a common dose for every input row.
    Eigen::VectorXd predict_at_dose(double a, const Eigen::MatrixXd& inputs) const;
    /// Row-wise predictions at per-row doses.
    Eigen::VectorXd predict(const std::vector<double>& a, const Eigen::MatrixXd& inputs) const;

    /// Test hook for double-robustness studies: zeroes all coefficients.
    void corrupt_for_testing();

private:
    bool continuous_ = false;
    FeatureMap fmap_;
    std::array<Eigen::VectorXd, 2> beta_arm_;
    Eigen::VectorXd beta_joint_;
    double dose_mean_ = 0.0, dose_scale_ = 1.0;

    Eigen::MatrixXd joint_design(const std::vector<double>& a,
                                 const Eigen::MatrixXd& inputs) const;
};

/// Generalized propensity score: dose-mean regression plus a Gaussian KDE on
/// its residuals, Silverman bandwidth, evaluations floored at the in-sample
/// trim quantile.
class GpsModel {
public:
    static GpsModel fit(const Eigen::MatrixXd& inputs, const std::vector<double>& a,
                        const NuisanceConfig& cfg);

    Eigen::VectorXd predict_mu(const Eigen::MatrixXd& inputs) const;
    /// Trimmed density r(a_i | z_i) for row-wise dose/input pairs.
    Eigen::VectorXd density(const std::vector<double>& a, const Eigen::MatrixXd& inputs) const;
    Eigen::VectorXd density_at_dose(double a, const Eigen::MatrixXd& inputs) const;

    double bandwidth() const { return h_; }
    double trim_floor() const { return trim_floor_; }

private:
    FeatureMap fmap_;
    Eigen::VectorXd beta_mu_;
    std::vector<double> residuals_;
    double h_ = 1.0;
    double trim_floor_ = 0.0;

    double kde(double u) const;
};

/// Dataset-facing wrappers (covariate columns as inputs).
ConditionalCdfModel fit_conditional_cdf(const Dataset& train, const std::vector<double>& grid,
                                        const NuisanceConfig& cfg);
PropensityModel fit_propensity(const Dataset& train, const NuisanceConfig& cfg);
OutcomeMeanModel fit_outcome_mean(const Dataset& train, const NuisanceConfig& cfg);
GpsModel fit_gps(const Dataset& train, const NuisanceConfig& cfg);

Eigen::MatrixXd covariate_matrix(const Dataset& data);

}  // namespace cfbound
