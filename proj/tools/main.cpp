// cfbound: counterfactual distribution bounds and triple-ML estimation.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "cfbound/experiment.hpp"
#include "cfbound/mathutil.hpp"
#include "cfbound/simgen.hpp"

namespace {

using namespace cfbound;

struct GlobalArgs {
    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 1;
    int reps = -1;
    long n = -1;
    int jobs = 1;
};

void add_global_flags(CLI::App* cmd, GlobalArgs& g) {
    cmd->add_option("--config", g.config_path, "JSON run configuration file");
    cmd->add_option("--out", g.out_dir, "output directory");
    cmd->add_option("--seed", g.seed, "base seed");
    cmd->add_option("--reps", g.reps, "replications");
    cmd->add_option("--n", g.n, "per-replicate sample size");
    cmd->add_option("--jobs", g.jobs, "parallel replicate workers");
}

RunConfig load_run_config(const GlobalArgs& g) {
    RunConfig cfg;
    if (!g.config_path.empty()) {
        std::ifstream f(g.config_path);
        if (!f) throw Error(ErrorCode::BadConfig, "cannot open config " + g.config_path);
        std::stringstream ss;
        ss << f.rdbuf();
        cfg = RunConfig::from_json(ss.str());
    }
    cfg.seed = g.seed;
    return cfg;
}

ExperimentSpec base_spec(const GlobalArgs& g, ExperimentKind kind, std::size_t default_n,
                         int default_reps) {
    ExperimentSpec spec;
    spec.which = kind;
    spec.run = load_run_config(g);
    spec.base_seed = g.seed;
    spec.n = g.n > 0 ? static_cast<std::size_t>(g.n) : default_n;
    spec.replications = g.reps > 0 ? g.reps : default_reps;
    spec.jobs = g.jobs;
    return spec;
}

int run_and_emit(ExperimentSpec& spec, const GlobalArgs& g) {
    const ExperimentReport report = run_experiment(spec);
    emit_report(report, g.out_dir);
    std::printf("wrote %s/{replicates.csv,aggregates.csv,report.json,manifest.json}\n",
                g.out_dir.c_str());
    if (!report.failures.empty()) {
        std::fprintf(stderr, "%zu replicate failure(s); see manifest.json\n",
                     report.failures.size());
    }
    return 0;
}

BoundsVariant parse_bounds_variant(const std::string& v) {
    if (v == "linear") return BoundsVariant::LinearSCM;
    if (v == "nonlinear") return BoundsVariant::Nonlinear;
    throw Error(ErrorCode::BadConfig, "unknown variant: " + v);
}

IvOutcome parse_iv_outcome(const std::string& v) {
    if (v == "linear") return IvOutcome::LinearOutcome;
    if (v == "nonlinear") return IvOutcome::NonlinearOutcome;
    throw Error(ErrorCode::BadConfig, "unknown variant: " + v);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"counterfactual bounds and triple-ML estimators"};
    app.require_subcommand(1);

    GlobalArgs g;
    std::string variant = "linear";
    std::string treatment = "binary";
    std::string csv_path;
    std::string oracle_dgp = "bounds-linear";
    std::string oracle_target = "u";
    double y1 = 0.0, y0 = 0.0, t_param = 50.0;
    double a_hi = 1.0, a_lo = 0.0;
    long n_mc = 1000000;
    bool oracle_nuisance = false;

    auto* sim_bounds = app.add_subcommand("sim-bounds", "bound estimators on the simulation DGPs");
    add_global_flags(sim_bounds, g);
    sim_bounds->add_option("--variant", variant, "linear | nonlinear");
    sim_bounds->add_flag("--oracle-nuisance", oracle_nuisance,
                         "use analytic DGP nuisances instead of fitted ones");
    sim_bounds->add_option("--t", t_param, "log-sum-exp smoothing parameter");
    sim_bounds->add_option("--nmc", n_mc, "Monte Carlo draws for oracle truths");

    auto* sim_iv = app.add_subcommand("sim-iv-ate", "TML ATE estimation with an instrument");
    add_global_flags(sim_iv, g);
    sim_iv->add_option("--variant", variant, "linear | nonlinear outcome");
    sim_iv->add_option("--treatment", treatment, "binary | continuous");
    sim_iv->add_flag("--oracle-z", oracle_nuisance, "use the true confounding score");

    auto* sim_dose = app.add_subcommand("sim-dose", "dose-response curves under continuous doses");
    add_global_flags(sim_dose, g);
    sim_dose->add_option("--variant", variant, "linear | nonlinear outcome");
    sim_dose->add_flag("--oracle-z", oracle_nuisance, "use the true confounding score");

    auto* rep_bounds = app.add_subcommand("bounds-on-rep",
                                          "FH bounds on a learned confounding representation");
    add_global_flags(rep_bounds, g);
    rep_bounds->add_option("--variant", variant, "linear | nonlinear outcome");
    rep_bounds->add_flag("--oracle-z", oracle_nuisance, "use the true confounding score");
    rep_bounds->add_option("--t", t_param, "log-sum-exp smoothing parameter");

    auto* fit_csv = app.add_subcommand("fit-csv", "TML estimation on a user CSV (y, a, s columns)");
    add_global_flags(fit_csv, g);
    fit_csv->add_option("--input", csv_path, "CSV file")->required();

    auto* oracle = app.add_subcommand("oracle", "print an oracle truth for a DGP target");
    add_global_flags(oracle, g);
    oracle->add_option("--dgp", oracle_dgp,
                       "bounds-linear | bounds-nonlinear | iv-linear | iv-nonlinear");
    oracle->add_option("--target", oracle_target,
                       "bounds: l u l_marg u_marg smooth_u smooth_l f1 f0 margin; iv: ate dose");
    oracle->add_option("--y1", y1, "threshold for Y(1)");
    oracle->add_option("--y0", y0, "threshold for Y(0)");
    oracle->add_option("--t", t_param, "smoothing parameter (or margin width for target=margin)");
    oracle->add_option("--a-hi", a_hi, "upper dose");
    oracle->add_option("--a-lo", a_lo, "lower dose");
    oracle->add_option("--nmc", n_mc, "Monte Carlo draws");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim_bounds->parsed()) {
            auto spec = base_spec(g, ExperimentKind::BoundsSim, 2000, 100);
            spec.bounds_variant = parse_bounds_variant(variant);
            spec.oracle_nuisance = oracle_nuisance;
            spec.run.smoothing_t = t_param;
            spec.n_mc = n_mc;
            return run_and_emit(spec, g);
        }
        if (sim_iv->parsed()) {
            auto spec = base_spec(g, ExperimentKind::IvAteSim, 6000, 20);
            spec.iv_outcome = parse_iv_outcome(variant);
            spec.iv_treatment = treatment == "continuous" ? IvTreatment::ContinuousTreatment
                                                          : IvTreatment::BinaryTreatment;
            spec.oracle_nuisance = oracle_nuisance;
            return run_and_emit(spec, g);
        }
        if (sim_dose->parsed()) {
            auto spec = base_spec(g, ExperimentKind::DoseSim, 6000, 10);
            spec.iv_outcome = parse_iv_outcome(variant);
            spec.iv_treatment = IvTreatment::ContinuousTreatment;
            spec.oracle_nuisance = oracle_nuisance;
            return run_and_emit(spec, g);
        }
        if (rep_bounds->parsed()) {
            auto spec = base_spec(g, ExperimentKind::BoundsOnRepresentation, 6000, 5);
            spec.iv_outcome = parse_iv_outcome(variant);
            spec.oracle_nuisance = oracle_nuisance;
            spec.run.smoothing_t = t_param;
            return run_and_emit(spec, g);
        }
        if (fit_csv->parsed()) {
            auto spec = base_spec(g, ExperimentKind::UserCsv, 0, 5);
            spec.csv_path = csv_path;
            return run_and_emit(spec, g);
        }
        if (oracle->parsed()) {
            OracleTruth truth;
            if (oracle_dgp.rfind("bounds-", 0) == 0) {
                truth = oracle_truth_bounds(parse_bounds_variant(oracle_dgp.substr(7)),
                                            oracle_target, y1, y0, t_param, n_mc, g.seed);
            } else if (oracle_dgp.rfind("iv-", 0) == 0) {
                truth = oracle_truth_iv(parse_iv_outcome(oracle_dgp.substr(3)), oracle_target,
                                        a_hi, a_lo);
            } else {
                throw Error(ErrorCode::BadConfig, "unknown DGP: " + oracle_dgp);
            }
            std::printf("target=%s value=%.10g mc_se=%.3g method=%s\n", truth.target.c_str(),
                        truth.value, truth.mc_se,
                        truth.analytic ? "analytic"
                                       : ("mc(" + std::to_string(truth.n_mc) + ")").c_str());
            return 0;
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error [%s]: %s\n", error_code_name(e.code()), e.what());
        return e.exit_code();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    }
    return 2;
}
