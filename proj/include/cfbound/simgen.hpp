#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cfbound/data.hpp"

namespace cfbound {

enum class BoundsVariant { LinearSCM, Nonlinear };

struct BoundsDgpSpec {
    BoundsVariant variant = BoundsVariant::LinearSCM;
    std::size_t n = 2000;
    std::uint64_t seed = 1;
};

/// Generated sample with both potential outcomes retained alongside.
struct BoundsSample {
    Dataset data;
    std::vector<double> y0;
    std::vector<double> y1;
};

BoundsSample gen_bounds_dgp(const BoundsDgpSpec& spec);

enum class IvOutcome { LinearOutcome, NonlinearOutcome };
enum class IvTreatment { BinaryTreatment, ContinuousTreatment };

struct IvDgpSpec {
    IvOutcome outcome = IvOutcome::LinearOutcome;
    IvTreatment treatment = IvTreatment::BinaryTreatment;
    std::size_t n = 6000;
    std::uint64_t seed = 1;
};

/// Generated sample with the true confounding score retained alongside.
struct IvSample {
    Dataset data;
    std::vector<double> z_c;
};

IvSample gen_iv_dgp(const IvDgpSpec& spec);

struct OracleTruth {
    std::string target;
    double value = 0.0;
    double mc_se = 0.0;   // 0 for analytic values
    bool analytic = true;
    long n_mc = 0;
};

/// Analytic conditional CDF theta_a(y | x) for the bounds DGPs.
double bounds_theta(BoundsVariant variant, int arm, double y, double x1, double x2);

/// Oracle treatment probability P(A=1 | x): the noise inside the assignment
/// logit makes this a Gaussian-smoothed sigmoid, integrated by quadrature.
double bounds_propensity(double x1, double x2);

/// Marginal F_{Y(a)}: analytic Gaussian convolution for the linear SCM,
/// Monte Carlo otherwise.
OracleTruth oracle_marginal_cdf(BoundsVariant variant, int arm, double y, long n_mc,
                                std::uint64_t seed);

double oracle_marginal_quantile(BoundsVariant variant, int arm, double p, long n_mc,
                                std::uint64_t seed);

/// All bound truths for a grid of threshold pairs from one set of draws:
/// conditional L/U, marginal L/U, and the smoothed functionals at t.
struct PairOracle {
    double y1 = 0.0, y0 = 0.0;
    OracleTruth l, u, l_marg, u_marg, smooth_u, smooth_l;
};

std::vector<PairOracle> oracle_bounds_grid(BoundsVariant variant,
                                           const std::vector<std::pair<double, double>>& pairs,
                                           double t, long n_mc, std::uint64_t seed);

/// P(|theta1(X) - theta0(X)| <= margin) at one threshold pair.
OracleTruth oracle_margin_mass(BoundsVariant variant, double y1, double y0, double margin,
                               long n_mc, std::uint64_t seed);

/// Bound truths for the binary IV DGPs, conditioning on the true confounding
/// score: theta_a(z) = Phi((y - m(a,z)) / sd_eps).
std::vector<PairOracle> oracle_iv_bounds_grid(IvOutcome outcome,
                                              const std::vector<std::pair<double, double>>& pairs,
                                              double t, long n_mc, std::uint64_t seed);

/// Conditional CDF of the observed outcome given (A=a, Z_C=z) in the IV DGPs.
double iv_theta(IvOutcome outcome, int arm, double y, double z);

/// Analytic outcome mean m(a, z) = E[Y | A=a, Z_C=z] for the IV DGPs.
double iv_outcome_mean(IvOutcome outcome, double a, double z);

/// Analytic dose-response E[Y(a)].
OracleTruth oracle_dose_response(IvOutcome outcome, double a);

/// Analytic ATE between doses (binary: a_hi=1, a_lo=0).
OracleTruth oracle_ate(IvOutcome outcome, double a_hi = 1.0, double a_lo = 0.0);

/// Oracle propensity P(A=1 | Z_C=z) for the binary IV DGP, by quadrature over
/// the instrument and the assignment noise.
double iv_oracle_propensity(double z);

/// Umbrella entry points used by the CLI `oracle` subcommand.
OracleTruth oracle_truth_bounds(BoundsVariant variant, const std::string& target, double y1,
                                double y0, double t, long n_mc, std::uint64_t seed);
OracleTruth oracle_truth_iv(IvOutcome outcome, const std::string& target, double a_hi,
                            double a_lo);

}  // namespace cfbound
