#include "cfbound/nuisance.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "cfbound/error.hpp"
#include "cfbound/mathutil.hpp"

namespace cfbound {

namespace {

double effective_ridge(const NuisanceConfig& cfg, Eigen::Index n_train) {
    return cfg.ridge_abs >= 0.0 ? cfg.ridge_abs
                                : cfg.ridge_scale * static_cast<double>(n_train);
}

std::vector<int> arm_rows(const std::vector<double>& a, int arm) {
    std::vector<int> rows;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] == static_cast<double>(arm)) rows.push_back(static_cast<int>(i));
    }
    return rows;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<int>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
    return out;
}

Eigen::VectorXd take(const std::vector<double>& v, const std::vector<int>& rows) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[rows[i]];
    return out;
}

}  // namespace

Eigen::MatrixXd covariate_matrix(const Dataset& data) {
    Eigen::MatrixXd x(data.n(), data.x_dim());
    for (std::size_t i = 0; i < data.n(); ++i) {
        for (std::size_t j = 0; j < data.x_dim(); ++j) x(i, j) = data.x_row(i)[j];
    }
    return x;
}

ConditionalCdfModel ConditionalCdfModel::fit(const Eigen::MatrixXd& inputs,
                                             const std::vector<double>& y,
                                             const std::vector<double>& a,
                                             const std::vector<double>& grid,
                                             const NuisanceConfig& cfg) {
    if (inputs.rows() == 0) throw Error(ErrorCode::DegenerateDesign, "empty training set");
    for (std::size_t g = 1; g < grid.size(); ++g) {
        if (!(grid[g] > grid[g - 1])) {
            throw Error(ErrorCode::BadConfig, "threshold grid must be strictly increasing");
        }
    }
    ConditionalCdfModel model;
    model.grid_ = grid;
    model.fmap_ = FeatureMap::fit(inputs);
    const Eigen::MatrixXd features = model.fmap_.transform(inputs);
    for (int arm = 0; arm < 2; ++arm) {
        const auto rows = arm_rows(a, arm);
        if (rows.empty()) {
            throw Error(ErrorCode::ArmMissing, "no rows with treatment arm " + std::to_string(arm));
        }
        const Eigen::MatrixXd design = with_intercept(take_rows(features, rows));
        model.coef_[arm].resize(grid.size());
        model.const_[arm].assign(grid.size(), -1.0);
        for (std::size_t g = 0; g < grid.size(); ++g) {
            Eigen::VectorXd labels(static_cast<Eigen::Index>(rows.size()));
            for (std::size_t i = 0; i < rows.size(); ++i) {
                labels(static_cast<Eigen::Index>(i)) = y[rows[i]] <= grid[g] ? 1.0 : 0.0;
            }
            const double lab_sum = labels.sum();
            if (lab_sum == 0.0 || lab_sum == static_cast<double>(labels.size())) {
                model.const_[arm][g] = lab_sum == 0.0 ? 0.0 : 1.0;
                continue;
            }
            auto fit = fit_logistic(design, labels, cfg.max_iter, cfg.grad_tol);
            model.converged_ = model.converged_ && fit.converged;
            model.coef_[arm][g] = std::move(fit.beta);
        }
    }
    return model;
}

Eigen::MatrixXd ConditionalCdfModel::predict(int arm, const Eigen::MatrixXd& inputs) const {
    const Eigen::MatrixXd design = with_intercept(fmap_.transform(inputs));
    const auto n = design.rows();
    const int G = static_cast<int>(grid_.size());
    Eigen::MatrixXd out(n, G);
    for (int g = 0; g < G; ++g) {
        if (const_[arm][g] >= 0.0) {
            out.col(g).setConstant(const_[arm][g]);
        } else {
            Eigen::VectorXd eta = design * coef_[arm][g];
            for (Eigen::Index i = 0; i < n; ++i) out(i, g) = sigmoid(eta(i));
        }
    }
    std::vector<double> curve(G);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int g = 0; g < G; ++g) curve[g] = out(i, g);
        pava_non_decreasing(curve.data(), G);
        for (int g = 0; g < G; ++g) out(i, g) = curve[g];
    }
    return out;
}

std::string ConditionalCdfModel::to_json() const {
    nlohmann::ordered_json j;
    j["grid"] = grid_;
    for (int arm = 0; arm < 2; ++arm) {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (std::size_t g = 0; g < grid_.size(); ++g) {
            if (const_[arm][g] >= 0.0) {
                arr.push_back({{"constant", const_[arm][g]}});
            } else {
                std::vector<double> c(coef_[arm][g].data(),
                                      coef_[arm][g].data() + coef_[arm][g].size());
                arr.push_back({{"coef", c}});
            }
        }
        j["arm" + std::to_string(arm)] = arr;
    }
    return j.dump();
}

PropensityModel PropensityModel::fit(const Eigen::MatrixXd& inputs,
                                     const std::vector<double>& a,
                                     const NuisanceConfig& cfg) {
    for (int arm = 0; arm < 2; ++arm) {
        if (arm_rows(a, arm).empty()) {
            throw Error(ErrorCode::ArmMissing, "propensity fit needs both arms");
        }
    }
    PropensityModel model;
    model.clip_eps_ = cfg.clip_eps;
    model.fmap_ = FeatureMap::fit(inputs);
    const Eigen::MatrixXd design = with_intercept(model.fmap_.transform(inputs));
    Eigen::VectorXd labels(design.rows());
    for (Eigen::Index i = 0; i < design.rows(); ++i) labels(i) = a[i];
    auto fit = fit_logistic(design, labels, cfg.max_iter, cfg.grad_tol);
    model.beta_ = std::move(fit.beta);
    model.converged_ = fit.converged;
    return model;
}

Eigen::VectorXd PropensityModel::predict_p1(const Eigen::MatrixXd& inputs) const {
    const Eigen::MatrixXd design = with_intercept(fmap_.transform(inputs));
    Eigen::VectorXd eta = design * beta_;
    Eigen::VectorXd out(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        out(i) = std::clamp(sigmoid(eta(i)), clip_eps_, 1.0 - clip_eps_);
    }
    return out;
}

OutcomeMeanModel OutcomeMeanModel::fit_binary(const Eigen::MatrixXd& inputs,
                                              const std::vector<double>& y,
                                              const std::vector<double>& a,
                                              const NuisanceConfig& cfg) {
    OutcomeMeanModel model;
    model.continuous_ = false;
    model.fmap_ = FeatureMap::fit(inputs);
    const Eigen::MatrixXd features = model.fmap_.transform(inputs);
    for (int arm = 0; arm < 2; ++arm) {
        const auto rows = arm_rows(a, arm);
        if (rows.empty()) throw Error(ErrorCode::ArmMissing, "outcome fit needs both arms");
        const Eigen::MatrixXd design = with_intercept(take_rows(features, rows));
        if (design.rows() <= design.cols()) {
            throw Error(ErrorCode::DegenerateDesign,
                        "outcome fit: n_train <= feature dimension");
        }
        model.beta_arm_[arm] =
            fit_ridge(design, take(y, rows), effective_ridge(cfg, design.rows()));
    }
    return model;
}

Eigen::MatrixXd OutcomeMeanModel::joint_design(const std::vector<double>& a,
                                               const Eigen::MatrixXd& inputs) const {
    const Eigen::MatrixXd features = fmap_.transform(inputs);
    const auto n = features.rows();
    const auto p = features.cols();
    Eigen::MatrixXd design(n, 1 + p + 2 + p);
    design.col(0).setOnes();
    design.middleCols(1, p) = features;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double dose = (a[i] - dose_mean_) / dose_scale_;
        design(i, 1 + p) = dose;
        design(i, 2 + p) = dose * dose;
        for (Eigen::Index j = 0; j < p; ++j) design(i, 3 + p + j) = dose * features(i, j);
    }
    return design;
}

OutcomeMeanModel OutcomeMeanModel::fit_continuous(const Eigen::MatrixXd& inputs,
                                                  const std::vector<double>& y,
                                                  const std::vector<double>& a,
                                                  const NuisanceConfig& cfg) {
    OutcomeMeanModel model;
    model.continuous_ = true;
    model.fmap_ = FeatureMap::fit(inputs);
    model.dose_mean_ = mean(a);
    const double sd = sd_pop(a);
    model.dose_scale_ = sd > 0.0 ? sd : 1.0;
    const Eigen::MatrixXd design = model.joint_design(a, inputs);
    if (design.rows() <= design.cols()) {
        throw Error(ErrorCode::DegenerateDesign, "outcome fit: n_train <= feature dimension");
    }
    Eigen::VectorXd target(design.rows());
    for (Eigen::Index i = 0; i < design.rows(); ++i) target(i) = y[i];
    model.beta_joint_ = fit_ridge(design, target, effective_ridge(cfg, design.rows()));
    return model;
}

Eigen::VectorXd OutcomeMeanModel::predict_at_dose(double a, const Eigen::MatrixXd& inputs) const {
    const std::vector<double> doses(static_cast<std::size_t>(inputs.rows()), a);
    return predict(doses, inputs);
}

Eigen::VectorXd OutcomeMeanModel::predict(const std::vector<double>& a,
                                          const Eigen::MatrixXd& inputs) const {
    if (static_cast<Eigen::Index>(a.size()) != inputs.rows()) {
        throw Error(ErrorCode::LengthMismatch, "outcome predict: dose/input mismatch");
    }
    if (continuous_) {
        return joint_design(a, inputs) * beta_joint_;
    }
    const Eigen::MatrixXd design = with_intercept(fmap_.transform(inputs));
    Eigen::VectorXd out(design.rows());
    const Eigen::VectorXd p0 = design * beta_arm_[0];
    const Eigen::VectorXd p1 = design * beta_arm_[1];
    for (Eigen::Index i = 0; i < design.rows(); ++i) {
        out(i) = a[i] == 1.0 ? p1(i) : p0(i);
    }
    return out;
}

void OutcomeMeanModel::corrupt_for_testing() {
    for (auto& beta : beta_arm_) beta.setZero();
    beta_joint_.setZero();
}

GpsModel GpsModel::fit(const Eigen::MatrixXd& inputs, const std::vector<double>& a,
                       const NuisanceConfig& cfg) {
    GpsModel model;
    const auto n = inputs.rows();
    if (n < 2) throw Error(ErrorCode::DegenerateDesign, "GPS fit needs n >= 2");
    model.fmap_ = FeatureMap::fit(inputs);
    const Eigen::MatrixXd design = with_intercept(model.fmap_.transform(inputs));
    Eigen::VectorXd doses(n);
    for (Eigen::Index i = 0; i < n; ++i) doses(i) = a[i];
    model.beta_mu_ = fit_ridge(design, doses, effective_ridge(cfg, n));
    const Eigen::VectorXd mu = design * model.beta_mu_;
    model.residuals_.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) model.residuals_[i] = a[i] - mu(i);

    const double sd_a = sd_sample(std::vector<double>(a.begin(), a.end()));
    if (!(sd_a > 0.0)) throw Error(ErrorCode::ZeroVariance, "treatment has zero variance");
    model.h_ = 1.06 * sd_a * std::pow(static_cast<double>(n), -0.2);

    // Trim floor: quantile of in-sample densities evaluated at the residuals.
    std::vector<double> in_sample(n);
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < n; ++i) in_sample[i] = model.kde(model.residuals_[i]);
    model.trim_floor_ = quantile(in_sample, cfg.gps_trim_quantile);
    return model;
}

double GpsModel::kde(double u) const {
    const double inv_h = 1.0 / h_;
    const double norm = inv_h * 0.3989422804014327;
    double s = 0.0;
    for (double r : residuals_) {
        const double t = (u - r) * inv_h;
        s += std::exp(-0.5 * t * t);
    }
    return norm * s / static_cast<double>(residuals_.size());
}

Eigen::VectorXd GpsModel::predict_mu(const Eigen::MatrixXd& inputs) const {
    return with_intercept(fmap_.transform(inputs)) * beta_mu_;
}

Eigen::VectorXd GpsModel::density(const std::vector<double>& a,
                                  const Eigen::MatrixXd& inputs) const {
    if (static_cast<Eigen::Index>(a.size()) != inputs.rows()) {
        throw Error(ErrorCode::LengthMismatch, "GPS density: dose/input mismatch");
    }
    const Eigen::VectorXd mu = predict_mu(inputs);
    Eigen::VectorXd out(mu.size());
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
        out(i) = std::max(kde(a[i] - mu(i)), trim_floor_);
    }
    return out;
}

Eigen::VectorXd GpsModel::density_at_dose(double a, const Eigen::MatrixXd& inputs) const {
    const std::vector<double> doses(static_cast<std::size_t>(inputs.rows()), a);
    return density(doses, inputs);
}

ConditionalCdfModel fit_conditional_cdf(const Dataset& train, const std::vector<double>& grid,
                                        const NuisanceConfig& cfg) {
    if (train.treatment_kind() != TreatmentKind::Binary) {
        throw Error(ErrorCode::BadConfig, "conditional CDF model needs binary treatment");
    }
    return ConditionalCdfModel::fit(covariate_matrix(train), train.y(), train.a(), grid, cfg);
}

PropensityModel fit_propensity(const Dataset& train, const NuisanceConfig& cfg) {
    if (train.treatment_kind() != TreatmentKind::Binary) {
        throw Error(ErrorCode::BadConfig, "propensity model needs binary treatment");
    }
    return PropensityModel::fit(covariate_matrix(train), train.a(), cfg);
}

OutcomeMeanModel fit_outcome_mean(const Dataset& train, const NuisanceConfig& cfg) {
    if (train.treatment_kind() == TreatmentKind::Binary) {
        return OutcomeMeanModel::fit_binary(covariate_matrix(train), train.y(), train.a(), cfg);
    }
    return OutcomeMeanModel::fit_continuous(covariate_matrix(train), train.y(), train.a(), cfg);
}

GpsModel fit_gps(const Dataset& train, const NuisanceConfig& cfg) {
    if (train.treatment_kind() != TreatmentKind::Continuous) {
        throw Error(ErrorCode::BadConfig, "GPS model needs continuous treatment");
    }
    return GpsModel::fit(covariate_matrix(train), train.a(), cfg);
}

}  // namespace cfbound
