#pragma once

#include <Eigen/Dense>

namespace cfbound {

/// Degree-2 polynomial expansion (linear + squares + pairwise products) of
/// inputs standardized on the fitting sample. Dimension 0 inputs expand to an
/// empty map (intercept-only designs downstream).
class FeatureMap {
public:
    FeatureMap() = default;

    static FeatureMap fit(const Eigen::MatrixXd& inputs);

    Eigen::MatrixXd transform(const Eigen::MatrixXd& inputs) const;

    int in_dim() const { return static_cast<int>(mean_.size()); }
    int out_dim() const {
        const int d = in_dim();
        return d + d + d * (d - 1) / 2;
    }

private:
    Eigen::VectorXd mean_, scale_;
};

/// Prepends a column of ones.
Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& features);

struct LogisticFit {
    Eigen::VectorXd beta;
    bool converged = false;
    int iterations = 0;
};

/// Unpenalized logistic regression by iteratively reweighted least squares.
/// Stops when the mean score norm drops below grad_tol; on max-iteration
/// exhaustion returns the last iterate with converged = false.
LogisticFit fit_logistic(const Eigen::MatrixXd& design, const Eigen::VectorXd& labels,
                         int max_iter, double grad_tol);

/// Ridge regression with an unpenalized leading intercept column.
Eigen::VectorXd fit_ridge(const Eigen::MatrixXd& design, const Eigen::VectorXd& target,
                          double lambda);

/// In-place pool-adjacent-violators projection to a non-decreasing sequence
/// (least squares, equal weights).
void pava_non_decreasing(double* v, int n);

}  // namespace cfbound
