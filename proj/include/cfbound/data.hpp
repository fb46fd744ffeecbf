#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cfbound/error.hpp"

namespace cfbound {

enum class TreatmentKind { Binary, Continuous };

struct Observation {
    double y = 0.0;
    double a = 0.0;
    std::vector<double> x;        // observed covariates, possibly empty
    std::optional<double> s;      // instrument
};

/// Immutable column-homogeneous sample. Stored column-wise; `x` is row-major
/// n-by-x_dim.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::vector<double> y, std::vector<double> a, std::vector<double> x,
            std::size_t x_dim, std::vector<double> s);

    std::size_t n() const { return y_.size(); }
    std::size_t x_dim() const { return x_dim_; }
    bool has_instrument() const { return !s_.empty(); }
    TreatmentKind treatment_kind() const { return kind_; }

    const std::vector<double>& y() const { return y_; }
    const std::vector<double>& a() const { return a_; }
    const std::vector<double>& s() const { return s_; }
    const std::vector<double>& x() const { return x_; }
    const double* x_row(std::size_t i) const { return x_.data() + i * x_dim_; }

    Observation row(std::size_t i) const;

    /// Subset by row indices; preserves schema and treatment kind.
    Dataset subset(const std::vector<int>& rows) const;

private:
    std::vector<double> y_, a_, x_, s_;
    std::size_t x_dim_ = 0;
    TreatmentKind kind_ = TreatmentKind::Binary;
};

/// Untyped column table as parsed from CSV: header names plus numeric columns.
struct ColumnTable {
    std::vector<std::string> names;
    std::vector<std::vector<double>> columns;
};

/// Builds a validated Dataset from a table with columns y, a and optionally
/// x1..xd, s. Treatment kind is Binary iff every a is exactly 0 or 1.
Dataset validate_dataset(const ColumnTable& table);

ColumnTable read_csv(std::istream& in);
ColumnTable read_csv_file(const std::string& path);
void write_csv(std::ostream& out, const ColumnTable& table);

enum class FoldMode { Double, Triple };
enum class FoldRole { Representation, Nuisance, Evaluation };

/// Deterministic partition of {0..n-1} into k folds of near-equal size. In
/// Triple mode folds are grouped into thirds and the
/// Representation/Nuisance/Evaluation roles rotate over three rotations, so
/// each fold serves each role exactly once.
struct FoldPlan {
    int k = 0;
    FoldMode mode = FoldMode::Double;
    std::vector<int> fold_of_row;
    std::vector<std::vector<int>> rows_of_fold;
    // role_of_fold[rotation][fold]; empty in Double mode.
    std::vector<std::vector<FoldRole>> role_of_fold;

    int rotations() const { return static_cast<int>(role_of_fold.size()); }
    std::vector<int> rows_with_role(int rotation, FoldRole role) const;
};

FoldPlan make_folds(std::size_t n, int k, FoldMode mode, std::uint64_t seed);

/// Hyperparameters of the IV-VAE; defaults per the run configuration.
struct VaeConfig {
    int latent_dim = 1;
    int hidden = 32;
    double beta = 1.0;
    double lambda_hsic = 10.0;
    double lr = 1e-3;
    int batch = 256;
    int epochs = 300;
};

struct NuisanceConfig {
    double ridge_scale = 1e-3;     // effective ridge penalty = ridge_scale * n_train
    double ridge_abs = -1.0;       // if >= 0, absolute penalty overriding ridge_scale
    double clip_eps = 0.01;
    double gps_trim_quantile = 0.01;
    int max_iter = 500;
    double grad_tol = 1e-8;
};

/// Threshold pairs (bounds targets) or dose grid (continuous targets).
struct EvalGrid {
    std::vector<double> y1;   // thresholds for Y(1), paired elementwise with y0
    std::vector<double> y0;
    std::vector<double> doses;
};

struct RunConfig {
    std::uint64_t seed = 1;
    int k_folds = 6;
    double smoothing_t = 50.0;
    double clip_eps = 0.01;
    int replications = 100;
    EvalGrid grid;
    std::vector<std::string> estimators;
    VaeConfig vae;

    void validate() const;
    std::string to_json() const;
    static RunConfig from_json(const std::string& text);
};

}  // namespace cfbound
