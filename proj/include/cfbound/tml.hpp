#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cfbound/data.hpp"

namespace cfbound {

enum class TmlEstimator { Or, Ipw, Dr, GpsIpw, DrDensity, DrKernel, TwoSls };
enum class TmlTargetKind { PotentialMean, Ate, DoseCurve };

const char* tml_estimator_name(TmlEstimator e);
const char* tml_target_name(TmlTargetKind t);

/// One estimator's result for one target; dose-curve targets carry one entry
/// per grid point, scalar targets a single entry.
struct TmlEstimate {
    TmlTargetKind target = TmlTargetKind::Ate;
    TmlEstimator estimator = TmlEstimator::Dr;
    double a_hi = 1.0, a_lo = 0.0;
    std::vector<double> doses;
    std::vector<double> value;
    std::vector<double> se;
    std::vector<double> ci_lo, ci_hi;
    std::vector<std::vector<double>> per_rotation;  // [rotation][point]
    int split_id = 0;
};

struct DoseGrid {
    std::vector<double> doses;  // empty: 25 points between the 5th/95th percentiles
    double h = 0.0;             // 0: Silverman bandwidth per evaluation fold
};

/// Test and oracle hooks: replace the learned representation with the true
/// confounding score, swap a nuisance for its analytic oracle, or corrupt one
/// side for double-robustness studies.
struct TmlHooks {
    const std::vector<double>* oracle_latent = nullptr;
    std::function<double(double a, double z)> oracle_outcome;
    std::function<double(double z)> oracle_propensity;  // P(A=1 | z), binary only
    bool corrupt_outcome = false;
    bool corrupt_propensity = false;
};

/// Per-row score of the doubly robust binary estimator for arm `arm`.
inline double dr_summand_binary(int arm, double a_obs, double y, double m_arm,
                                double pi_arm) {
    const double ind = a_obs == static_cast<double>(arm) ? 1.0 : 0.0;
    return m_arm + ind / pi_arm * (y - m_arm);
}

/// Triple cross-fitting for binary treatments: per rotation, train the IV-VAE
/// on the representation folds, fit nuisances on the nuisance folds over
/// features of z_hat, score the evaluation folds; rotations pool by mean.
/// Returns {OR, IPW, DR} x {E[Y(0)], E[Y(1)], ATE}.
std::vector<TmlEstimate> run_tml_binary(const Dataset& data, const RunConfig& cfg,
                                        std::uint64_t seed, const TmlHooks& hooks = {});

/// Continuous-dose analog: {OR, GPS-IPW, DR-density, DR-kernel} over the grid.
std::vector<TmlEstimate> run_tml_continuous(const Dataset& data, const RunConfig& cfg,
                                            const DoseGrid& grid, std::uint64_t seed,
                                            const TmlHooks& hooks = {});

/// Dose contrast E[Y(a_hi)] - E[Y(a_lo)] per continuous estimator.
std::vector<TmlEstimate> tml_continuous_ate(const Dataset& data, const RunConfig& cfg,
                                            double a_hi, double a_lo, std::uint64_t seed,
                                            const TmlHooks& hooks = {});

/// Classical instrumental-variable slope with sandwich standard error; the
/// slope is the ATE per unit dose.
TmlEstimate twosls_baseline(const Dataset& data);

/// Median-of-splits aggregation: point = median of split estimates, variance =
/// median over splits of se_b^2 + (value_b - point)^2.
TmlEstimate aggregate_splits(const std::vector<TmlEstimate>& splits);

}  // namespace cfbound
