#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cfbound/data.hpp"
#include "cfbound/fh_bounds.hpp"
#include "cfbound/simgen.hpp"

namespace cfbound {

enum class ExperimentKind { BoundsSim, IvAteSim, DoseSim, BoundsOnRepresentation, UserCsv };

const char* experiment_kind_name(ExperimentKind kind);

struct ExperimentSpec {
    ExperimentKind which = ExperimentKind::BoundsSim;
    int replications = 100;
    std::size_t n = 2000;
    std::uint64_t base_seed = 1;
    RunConfig run;
    BoundsVariant bounds_variant = BoundsVariant::LinearSCM;
    IvOutcome iv_outcome = IvOutcome::LinearOutcome;
    IvTreatment iv_treatment = IvTreatment::BinaryTreatment;
    bool oracle_nuisance = false;  // bounds: analytic theta/pi; TML: true Z_C
    std::string csv_path;
    int jobs = 1;
    long n_mc = 1000000;

    std::string to_json() const;
};

/// One estimate record: scalar targets leave dose at NaN, bound targets carry
/// the threshold pair.
struct ReplicateRecord {
    int replicate = 0;
    std::string estimator;
    std::string target;
    double y1 = 0.0, y0 = 0.0;
    double dose = 0.0;
    double value = 0.0;
    double raw = 0.0;
    double se = 0.0;
    double ci_lo = 0.0, ci_hi = 0.0;
    double truth = 0.0;         // the estimator's unsmoothed estimand (when known)
    double truth_smooth = 0.0;  // smoothed estimand for the smooth estimators
    int covered = 0;            // CI covers truth_smooth
    int has_truth = 0;
};

struct AggregateRecord {
    std::string estimator;
    std::string target;
    double y1 = 0.0, y0 = 0.0, dose = 0.0;
    double truth = 0.0, truth_mc_se = 0.0;
    int reps = 0;
    double value = 0.0;         // mean estimate over replicates
    double bias = 0.0;          // mean(value - truth)
    double se = 0.0;            // sd of values over replicates (population)
    double mse = 0.0;           // bias^2 + se^2 by construction
    double mean_sq_err = 0.0;   // mean (value - truth)^2
    double coverage = 0.0;
    int has_truth = 0;
};

struct ExperimentReport {
    ExperimentSpec spec;
    std::vector<ReplicateRecord> replicates;
    std::vector<AggregateRecord> aggregates;
    std::vector<std::string> failures;  // "replicate <r>: <message>"
    // Plot-ready bundles used by report.json.
    std::vector<PairOracle> bounds_oracle;            // bounds experiments
    std::vector<double> rep_corr;                     // |corr(z_hat, Z_C)| per replicate
    std::vector<std::pair<double, double>> rep_scatter;  // (Z_C, z_hat) sample
    double wall_seconds = 0.0;
};

ExperimentReport run_experiment(const ExperimentSpec& spec);

/// Writes aggregates.csv, replicates.csv, report.json and manifest.json under
/// out_dir. Everything except the manifest is byte-deterministic for a fixed
/// spec.
void emit_report(const ExperimentReport& report, const std::string& out_dir);

/// Cross-fitted nuisance rows for the bound estimators at each threshold pair.
struct BoundsNuisanceOptions {
    int k_folds = 5;
    bool oracle = false;  // analytic DGP nuisances instead of fitted ones
    BoundsVariant variant = BoundsVariant::LinearSCM;
    NuisanceConfig nuisance;
};

std::vector<std::vector<PerPointNuisance>> crossfit_bound_rows(
    const Dataset& data, const std::vector<std::pair<double, double>>& pairs,
    const BoundsNuisanceOptions& opt, std::uint64_t seed);

/// Default 9-pair threshold grid at the outcome quantiles {0.25, 0.5, 0.75}^2
/// of the two potential-outcome laws.
std::vector<std::pair<double, double>> default_bounds_pairs(BoundsVariant variant);

}  // namespace cfbound
