#include "cfbound/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "cfbound/rng.hpp"

namespace cfbound {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::BadConfig: return "BadConfig";
        case ErrorCode::BadFoldCount: return "BadFoldCount";
        case ErrorCode::OutOfRange: return "OutOfRange";
        case ErrorCode::UnsupportedTarget: return "UnsupportedTarget";
        case ErrorCode::MixedTargets: return "MixedTargets";
        case ErrorCode::MissingColumn: return "MissingColumn";
        case ErrorCode::NonFiniteValue: return "NonFiniteValue";
        case ErrorCode::HeterogeneousSchema: return "HeterogeneousSchema";
        case ErrorCode::EmptyTable: return "EmptyTable";
        case ErrorCode::ArmMissing: return "ArmMissing";
        case ErrorCode::MissingInstrument: return "MissingInstrument";
        case ErrorCode::EmptyEvaluationSet: return "EmptyEvaluationSet";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::IoFailure: return "IoFailure";
        case ErrorCode::DegenerateDesign: return "DegenerateDesign";
        case ErrorCode::ZeroVariance: return "ZeroVariance";
        case ErrorCode::AllPointsIdentical: return "AllPointsIdentical";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::ZeroKernelMass: return "ZeroKernelMass";
        case ErrorCode::WeakInstrument: return "WeakInstrument";
    }
    return "Unknown";
}

Dataset::Dataset(std::vector<double> y, std::vector<double> a, std::vector<double> x,
                 std::size_t x_dim, std::vector<double> s)
    : y_(std::move(y)), a_(std::move(a)), x_(std::move(x)), s_(std::move(s)),
      x_dim_(x_dim) {
    const std::size_t n = y_.size();
    if (n < 2) throw Error(ErrorCode::EmptyTable, "dataset needs at least 2 rows");
    if (a_.size() != n || (!s_.empty() && s_.size() != n) || x_.size() != n * x_dim_) {
        throw Error(ErrorCode::HeterogeneousSchema, "column lengths differ");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(y_[i]) || !std::isfinite(a_[i]) ||
            (!s_.empty() && !std::isfinite(s_[i]))) {
            throw Error(ErrorCode::NonFiniteValue,
                        "non-finite value in row " + std::to_string(i));
        }
    }
    for (double v : x_) {
        if (!std::isfinite(v)) {
            throw Error(ErrorCode::NonFiniteValue, "non-finite covariate");
        }
    }
    const bool all01 = std::all_of(a_.begin(), a_.end(),
                                   [](double v) { return v == 0.0 || v == 1.0; });
    kind_ = all01 ? TreatmentKind::Binary : TreatmentKind::Continuous;
}

Observation Dataset::row(std::size_t i) const {
    Observation o;
    o.y = y_[i];
    o.a = a_[i];
    o.x.assign(x_row(i), x_row(i) + x_dim_);
    if (has_instrument()) o.s = s_[i];
    return o;
}

Dataset Dataset::subset(const std::vector<int>& rows) const {
    std::vector<double> y, a, x, s;
    y.reserve(rows.size());
    a.reserve(rows.size());
    x.reserve(rows.size() * x_dim_);
    if (has_instrument()) s.reserve(rows.size());
    for (int r : rows) {
        y.push_back(y_[r]);
        a.push_back(a_[r]);
        x.insert(x.end(), x_row(r), x_row(r) + x_dim_);
        if (has_instrument()) s.push_back(s_[r]);
    }
    return Dataset(std::move(y), std::move(a), std::move(x), x_dim_, std::move(s));
}

Dataset validate_dataset(const ColumnTable& table) {
    if (table.names.empty() || table.columns.empty() || table.columns[0].empty()) {
        throw Error(ErrorCode::EmptyTable, "empty table");
    }
    if (table.names.size() != table.columns.size()) {
        throw Error(ErrorCode::HeterogeneousSchema, "header/column count mismatch");
    }
    const std::size_t n = table.columns[0].size();
    for (const auto& col : table.columns) {
        if (col.size() != n) {
            throw Error(ErrorCode::HeterogeneousSchema, "ragged columns");
        }
    }
    auto find = [&](const std::string& name) -> const std::vector<double>* {
        for (std::size_t i = 0; i < table.names.size(); ++i) {
            if (table.names[i] == name) return &table.columns[i];
        }
        return nullptr;
    };
    const auto* ycol = find("y");
    const auto* acol = find("a");
    if (!ycol) throw Error(ErrorCode::MissingColumn, "missing column: y");
    if (!acol) throw Error(ErrorCode::MissingColumn, "missing column: a");

    // Covariates must be named x1..xd with no gaps.
    std::size_t d = 0;
    while (find("x" + std::to_string(d + 1)) != nullptr) ++d;
    for (const auto& name : table.names) {
        if (name.size() > 1 && name[0] == 'x') {
            const int idx = std::atoi(name.c_str() + 1);
            if (idx <= 0 || static_cast<std::size_t>(idx) > d) {
                throw Error(ErrorCode::MissingColumn,
                            "covariate columns must be contiguous x1..xd; found " + name);
            }
        }
    }
    std::vector<double> x;
    x.reserve(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 1; j <= d; ++j) {
            x.push_back((*find("x" + std::to_string(j)))[i]);
        }
    }
    std::vector<double> s;
    if (const auto* scol = find("s")) s = *scol;
    return Dataset(*ycol, *acol, std::move(x), d, std::move(s));
}

namespace {

double parse_number(const std::string& tok, std::size_t line_no) {
    std::size_t pos = 0;
    double v;
    try {
        v = std::stod(tok, &pos);
    } catch (const std::exception&) {
        throw Error(ErrorCode::NonFiniteValue,
                    "unparseable number '" + tok + "' on line " + std::to_string(line_no));
    }
    while (pos < tok.size() && std::isspace(static_cast<unsigned char>(tok[pos]))) ++pos;
    if (pos != tok.size()) {
        throw Error(ErrorCode::NonFiniteValue,
                    "trailing characters in '" + tok + "' on line " + std::to_string(line_no));
    }
    return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

ColumnTable read_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::EmptyTable, "empty CSV");
    ColumnTable table;
    for (auto& name : split_csv_line(line)) {
        // trim
        const auto b = name.find_first_not_of(" \t");
        const auto e = name.find_last_not_of(" \t");
        table.names.push_back(b == std::string::npos ? "" : name.substr(b, e - b + 1));
    }
    table.columns.resize(table.names.size());
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto toks = split_csv_line(line);
        if (toks.size() != table.names.size()) {
            throw Error(ErrorCode::HeterogeneousSchema,
                        "line " + std::to_string(line_no) + " has " +
                            std::to_string(toks.size()) + " fields, expected " +
                            std::to_string(table.names.size()));
        }
        for (std::size_t j = 0; j < toks.size(); ++j) {
            table.columns[j].push_back(parse_number(toks[j], line_no));
        }
    }
    return table;
}

ColumnTable read_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path);
    return read_csv(in);
}

void write_csv(std::ostream& out, const ColumnTable& table) {
    for (std::size_t j = 0; j < table.names.size(); ++j) {
        if (j) out << ',';
        out << table.names[j];
    }
    out << '\n';
    const std::size_t n = table.columns.empty() ? 0 : table.columns[0].size();
    char buf[40];
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < table.columns.size(); ++j) {
            if (j) out << ',';
            std::snprintf(buf, sizeof buf, "%.17g", table.columns[j][i]);
            out << buf;
        }
        out << '\n';
    }
}

std::vector<int> FoldPlan::rows_with_role(int rotation, FoldRole role) const {
    std::vector<int> rows;
    for (int f = 0; f < k; ++f) {
        if (role_of_fold[rotation][f] == role) {
            rows.insert(rows.end(), rows_of_fold[f].begin(), rows_of_fold[f].end());
        }
    }
    std::sort(rows.begin(), rows.end());
    return rows;
}

FoldPlan make_folds(std::size_t n, int k, FoldMode mode, std::uint64_t seed) {
    if (mode == FoldMode::Double) {
        if (k < 2) throw Error(ErrorCode::BadFoldCount, "Double mode needs k >= 2");
    } else {
        if (k < 3 || k % 3 != 0) {
            throw Error(ErrorCode::BadFoldCount, "Triple mode needs k >= 3 divisible by 3");
        }
    }
    if (static_cast<std::size_t>(k) > n) {
        throw Error(ErrorCode::BadFoldCount, "more folds than rows");
    }
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    auto eng = make_engine(seed);
    std::shuffle(perm.begin(), perm.end(), eng);

    FoldPlan plan;
    plan.k = k;
    plan.mode = mode;
    plan.fold_of_row.assign(n, -1);
    plan.rows_of_fold.assign(k, {});
    for (std::size_t i = 0; i < n; ++i) {
        const int f = static_cast<int>(i % static_cast<std::size_t>(k));
        plan.fold_of_row[perm[i]] = f;
        plan.rows_of_fold[f].push_back(perm[i]);
    }
    for (auto& rows : plan.rows_of_fold) std::sort(rows.begin(), rows.end());

    if (mode == FoldMode::Triple) {
        const int third = k / 3;
        plan.role_of_fold.assign(3, std::vector<FoldRole>(k));
        for (int r = 0; r < 3; ++r) {
            for (int f = 0; f < k; ++f) {
                // Fold group 0 starts as Representation, 1 as Nuisance,
                // 2 as Evaluation; roles advance with the rotation.
                const int group = f / third;
                const int role = ((group - r) % 3 + 3) % 3;
                plan.role_of_fold[r][f] = static_cast<FoldRole>(role);
            }
        }
    }
    return plan;
}

void RunConfig::validate() const {
    if (k_folds < 2) throw Error(ErrorCode::BadConfig, "k_folds must be >= 2");
    if (!(smoothing_t > 0.0)) throw Error(ErrorCode::BadConfig, "smoothing_t must be > 0");
    if (!(clip_eps > 0.0 && clip_eps < 0.5)) {
        throw Error(ErrorCode::BadConfig, "clip_eps must lie in (0, 0.5)");
    }
    if (replications < 1) throw Error(ErrorCode::BadConfig, "replications must be >= 1");
    if (grid.y1.size() != grid.y0.size()) {
        throw Error(ErrorCode::BadConfig, "grid.y1 and grid.y0 must pair up");
    }
    if (vae.latent_dim < 1) throw Error(ErrorCode::BadConfig, "latent_dim must be >= 1");
}

std::string RunConfig::to_json() const {
    nlohmann::ordered_json j;
    j["seed"] = seed;
    j["k_folds"] = k_folds;
    j["smoothing_t"] = smoothing_t;
    j["clip_eps"] = clip_eps;
    j["replications"] = replications;
    j["grid"] = {{"y1", grid.y1}, {"y0", grid.y0}, {"doses", grid.doses}};
    j["estimators"] = estimators;
    j["vae"] = {{"latent_dim", vae.latent_dim}, {"hidden", vae.hidden},
                {"beta", vae.beta},             {"lambda_hsic", vae.lambda_hsic},
                {"lr", vae.lr},                 {"batch", vae.batch},
                {"epochs", vae.epochs}};
    return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw Error(ErrorCode::BadConfig, std::string("config parse failure: ") + e.what());
    }
    RunConfig cfg;
    try {
        cfg.seed = j.value("seed", cfg.seed);
        cfg.k_folds = j.value("k_folds", cfg.k_folds);
        cfg.smoothing_t = j.value("smoothing_t", cfg.smoothing_t);
        cfg.clip_eps = j.value("clip_eps", cfg.clip_eps);
        cfg.replications = j.value("replications", cfg.replications);
        if (j.contains("grid")) {
            cfg.grid.y1 = j["grid"].value("y1", std::vector<double>{});
            cfg.grid.y0 = j["grid"].value("y0", std::vector<double>{});
            cfg.grid.doses = j["grid"].value("doses", std::vector<double>{});
        }
        cfg.estimators = j.value("estimators", std::vector<std::string>{});
        if (j.contains("vae")) {
            const auto& v = j["vae"];
            cfg.vae.latent_dim = v.value("latent_dim", cfg.vae.latent_dim);
            cfg.vae.hidden = v.value("hidden", cfg.vae.hidden);
            cfg.vae.beta = v.value("beta", cfg.vae.beta);
            cfg.vae.lambda_hsic = v.value("lambda_hsic", cfg.vae.lambda_hsic);
            cfg.vae.lr = v.value("lr", cfg.vae.lr);
            cfg.vae.batch = v.value("batch", cfg.vae.batch);
            cfg.vae.epochs = v.value("epochs", cfg.vae.epochs);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::BadConfig, std::string("config field error: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

}  // namespace cfbound
