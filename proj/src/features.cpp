#include "cfbound/features.hpp"

#include <cmath>

#include "cfbound/error.hpp"
#include "cfbound/mathutil.hpp"

namespace cfbound {

FeatureMap FeatureMap::fit(const Eigen::MatrixXd& inputs) {
    FeatureMap map;
    const int d = static_cast<int>(inputs.cols());
    map.mean_ = Eigen::VectorXd::Zero(d);
    map.scale_ = Eigen::VectorXd::Ones(d);
    if (inputs.rows() == 0) return map;
    for (int j = 0; j < d; ++j) {
        map.mean_(j) = inputs.col(j).mean();
        const double var =
            (inputs.col(j).array() - map.mean_(j)).square().sum() / inputs.rows();
        const double sd = std::sqrt(var);
        map.scale_(j) = sd > 0.0 ? sd : 1.0;
    }
    return map;
}

Eigen::MatrixXd FeatureMap::transform(const Eigen::MatrixXd& inputs) const {
    const int d = in_dim();
    if (inputs.cols() != d) {
        throw Error(ErrorCode::ShapeMismatch, "FeatureMap: input dimension mismatch");
    }
    const auto n = inputs.rows();
    Eigen::MatrixXd z(n, d);
    for (int j = 0; j < d; ++j) {
        z.col(j) = (inputs.col(j).array() - mean_(j)) / scale_(j);
    }
    Eigen::MatrixXd out(n, out_dim());
    int c = 0;
    for (int j = 0; j < d; ++j) out.col(c++) = z.col(j);
    for (int j = 0; j < d; ++j) out.col(c++) = z.col(j).array().square();
    for (int i = 0; i < d; ++i) {
        for (int j = i + 1; j < d; ++j) {
            out.col(c++) = z.col(i).array() * z.col(j).array();
        }
    }
    return out;
}

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& features) {
    Eigen::MatrixXd design(features.rows(), features.cols() + 1);
    design.col(0).setOnes();
    design.rightCols(features.cols()) = features;
    return design;
}

LogisticFit fit_logistic(const Eigen::MatrixXd& design, const Eigen::VectorXd& labels,
                         int max_iter, double grad_tol) {
    const auto n = design.rows();
    const auto p = design.cols();
    if (n == 0 || p == 0) {
        throw Error(ErrorCode::DegenerateDesign, "logistic fit on empty design");
    }
    LogisticFit fit;
    fit.beta = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd prob(n), w(n);
    for (int it = 0; it < max_iter; ++it) {
        fit.iterations = it + 1;
        Eigen::VectorXd eta = design * fit.beta;
        for (Eigen::Index i = 0; i < n; ++i) prob(i) = sigmoid(eta(i));
        Eigen::VectorXd score = design.transpose() * (labels - prob);
        if (score.lpNorm<Eigen::Infinity>() / static_cast<double>(n) < grad_tol) {
            fit.converged = true;
            break;
        }
        for (Eigen::Index i = 0; i < n; ++i) w(i) = std::max(prob(i) * (1.0 - prob(i)), 1e-10);
        Eigen::MatrixXd hess = design.transpose() * w.asDiagonal() * design;
        hess.diagonal().array() += 1e-10;
        fit.beta += hess.ldlt().solve(score);
    }
    return fit;
}

Eigen::VectorXd fit_ridge(const Eigen::MatrixXd& design, const Eigen::VectorXd& target,
                          double lambda) {
    const auto p = design.cols();
    if (design.rows() == 0 || p == 0) {
        throw Error(ErrorCode::DegenerateDesign, "ridge fit on empty design");
    }
    Eigen::MatrixXd gram = design.transpose() * design;
    for (Eigen::Index j = 1; j < p; ++j) gram(j, j) += lambda;
    gram(0, 0) += 1e-12;  // keep the solve well-posed if the intercept is redundant
    return gram.ldlt().solve(design.transpose() * target);
}

void pava_non_decreasing(double* v, int n) {
    if (n <= 1) return;
    // Block-merge PAVA: each block carries its mean and size.
    std::vector<double> mean(n);
    std::vector<int> size(n);
    int m = 0;
    for (int i = 0; i < n; ++i) {
        mean[m] = v[i];
        size[m] = 1;
        ++m;
        while (m > 1 && mean[m - 2] > mean[m - 1]) {
            const double total = mean[m - 2] * size[m - 2] + mean[m - 1] * size[m - 1];
            size[m - 2] += size[m - 1];
            mean[m - 2] = total / size[m - 2];
            --m;
        }
    }
    int i = 0;
    for (int b = 0; b < m; ++b) {
        for (int r = 0; r < size[b]; ++r) v[i++] = mean[b];
    }
}

}  // namespace cfbound
