#include "cfbound/ivvae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "cfbound/error.hpp"
#include "cfbound/hsic.hpp"
#include "cfbound/mathutil.hpp"
#include "cfbound/rng.hpp"

namespace cfbound {

namespace {

constexpr double kLogVarClamp = 10.0;
constexpr double kHalfLog2Pi = 0.9189385332046727;

double clamp_lv(double lv) { return std::clamp(lv, -kLogVarClamp, kLogVarClamp); }

struct Standardized {
    Eigen::VectorXd a, y, s;
};

Standardized standardize(const IvVaeModel& m, const std::vector<double>& a,
                         const std::vector<double>& y, const std::vector<double>& s) {
    const auto n = static_cast<Eigen::Index>(a.size());
    if (y.size() != a.size() || s.size() != a.size()) {
        throw Error(ErrorCode::LengthMismatch, "ivvae: column length mismatch");
    }
    Standardized out;
    out.a.resize(n);
    out.y.resize(n);
    out.s.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        out.a(i) = (a[i] - m.a_mean) / m.a_sd;
        out.y(i) = (y[i] - m.y_mean) / m.y_sd;
        out.s(i) = (s[i] - m.s_mean) / m.s_sd;
    }
    return out;
}

/// Biased HSIC V-statistic of (z, s) with per-batch median bandwidths, plus
/// its gradient with respect to z. Bandwidths are constants in the gradient.
double hsic_penalty(const Eigen::MatrixXd& z, const Eigen::VectorXd& s,
                    Eigen::MatrixXd* dz) {
    const auto n = z.rows();
    const auto dim = z.cols();
    // Degenerate batches carry no dependence signal.
    bool z_const = true, s_const = true;
    for (Eigen::Index i = 1; i < n && (z_const || s_const); ++i) {
        if ((z.row(i) - z.row(0)).cwiseAbs().maxCoeff() > 0.0) z_const = false;
        if (std::abs(s(i) - s(0)) > 0.0) s_const = false;
    }
    if (z_const || s_const) {
        if (dz) dz->setZero(n, dim);
        return 0.0;
    }
    const double sig_z = median_bandwidth({z.data(), static_cast<std::size_t>(n),
                                           static_cast<std::size_t>(dim)});
    const double sig_s = median_bandwidth({s.data(), static_cast<std::size_t>(n), 1});
    // Eigen matrices are column-major; PointSet expects row-major rows. For
    // dim == 1 the layouts coincide; otherwise copy.
    Eigen::MatrixXd k(n, n), l(n, n);
    const double iz = -1.0 / (2.0 * sig_z * sig_z);
    const double is = -1.0 / (2.0 * sig_s * sig_s);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            k(i, j) = std::exp(iz * (z.row(i) - z.row(j)).squaredNorm());
            const double ds = s(i) - s(j);
            l(i, j) = std::exp(is * ds * ds);
        }
    }
    // C = H L H
    Eigen::VectorXd row_mean = l.rowwise().mean();
    const double grand = row_mean.mean();
    Eigen::MatrixXd c = l;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) c(i, j) += grand - row_mean(i) - row_mean(j);
    }
    const double nn = static_cast<double>(n);
    const double stat = (k.array() * c.array()).sum() / (nn * nn);
    if (dz) {
        dz->setZero(n, dim);
        const double scale = 2.0 / (nn * nn * sig_z * sig_z);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
                const double w = scale * c(i, j) * k(i, j);
                dz->row(i) += w * (z.row(j) - z.row(i));
            }
        }
    }
    return stat;
}

}  // namespace

std::size_t IvVaeModel::param_count() const {
    return encoder.param_count() + decoder_a.param_count() + decoder_y.param_count() + 2;
}

void IvVaeModel::get_params(std::vector<double>& out) const {
    out.resize(param_count());
    double* p = out.data();
    encoder.flatten_params(p);
    p += encoder.param_count();
    decoder_a.flatten_params(p);
    p += decoder_a.param_count();
    decoder_y.flatten_params(p);
    p += decoder_y.param_count();
    p[0] = log_var_a;
    p[1] = log_var_y;
}

void IvVaeModel::set_params(const std::vector<double>& in) {
    if (in.size() != param_count()) {
        throw Error(ErrorCode::ShapeMismatch, "ivvae: parameter vector size mismatch");
    }
    const double* p = in.data();
    encoder.unflatten_params(p);
    p += encoder.param_count();
    decoder_a.unflatten_params(p);
    p += decoder_a.param_count();
    decoder_y.unflatten_params(p);
    p += decoder_y.param_count();
    log_var_a = clamp_lv(p[0]);
    log_var_y = clamp_lv(p[1]);
}

IvVaeModel make_ivvae(const VaeConfig& cfg, std::uint64_t seed) {
    IvVaeModel m;
    m.latent_dim = cfg.latent_dim;
    m.encoder = Mlp({3, cfg.hidden, cfg.hidden, 2 * cfg.latent_dim}, mix_seed(seed, 1));
    m.decoder_a = Mlp({1 + cfg.latent_dim, cfg.hidden, cfg.hidden, 1}, mix_seed(seed, 2));
    m.decoder_y = Mlp({1 + cfg.latent_dim, cfg.hidden, cfg.hidden, 1}, mix_seed(seed, 3));
    return m;
}

LossComponents loss_and_grads(const IvVaeModel& model, const std::vector<double>& a,
                              const std::vector<double>& y, const std::vector<double>& s,
                              const Eigen::MatrixXd& noise, double beta, double lambda,
                              std::vector<double>* grads) {
    const auto n = static_cast<Eigen::Index>(a.size());
    const int L = model.latent_dim;
    if (n == 0) throw Error(ErrorCode::EmptyEvaluationSet, "ivvae loss: empty batch");
    if (noise.rows() != n || noise.cols() != L) {
        throw Error(ErrorCode::ShapeMismatch, "ivvae loss: noise must be n-by-latent");
    }
    const Standardized st = standardize(model, a, y, s);
    const double inv_n = 1.0 / static_cast<double>(n);

    // Encoder forward.
    Eigen::MatrixXd enc_in(n, 3);
    enc_in.col(0) = st.a;
    enc_in.col(1) = st.y;
    enc_in.col(2) = st.s;
    Mlp::Cache enc_cache;
    const Eigen::MatrixXd enc_out = model.encoder.forward(enc_in, &enc_cache);
    Eigen::MatrixXd mu = enc_out.leftCols(L);
    Eigen::MatrixXd lv_raw = enc_out.rightCols(L);
    Eigen::MatrixXd lv = lv_raw.unaryExpr([](double v) { return clamp_lv(v); });
    Eigen::MatrixXd sig = (0.5 * lv).array().exp().matrix();
    Eigen::MatrixXd z = mu + sig.cwiseProduct(noise);

    // Decoder A forward: input (s, z).
    Eigen::MatrixXd da_in(n, 1 + L);
    da_in.col(0) = st.s;
    da_in.rightCols(L) = z;
    Mlp::Cache da_cache;
    const Eigen::VectorXd mu_a = model.decoder_a.forward(da_in, &da_cache).col(0);

    // Decoder Y forward: input (a, z).
    Eigen::MatrixXd dy_in(n, 1 + L);
    dy_in.col(0) = st.a;
    dy_in.rightCols(L) = z;
    Mlp::Cache dy_cache;
    const Eigen::VectorXd mu_y = model.decoder_y.forward(dy_in, &dy_cache).col(0);

    LossComponents loss;
    const double var_a = std::exp(model.log_var_a);
    const double var_y = std::exp(model.log_var_y);
    const Eigen::VectorXd res_a = st.a - mu_a;
    const Eigen::VectorXd res_y = st.y - mu_y;
    loss.recon_a = kHalfLog2Pi + 0.5 * model.log_var_a +
                   0.5 * res_a.squaredNorm() * inv_n / var_a;
    loss.recon_y = kHalfLog2Pi + 0.5 * model.log_var_y +
                   0.5 * res_y.squaredNorm() * inv_n / var_y;
    loss.kl = 0.5 * inv_n *
              (mu.array().square() + lv.array().exp() - 1.0 - lv.array()).sum();

    Eigen::MatrixXd dz;
    loss.hsic = lambda != 0.0 ? hsic_penalty(z, st.s, grads ? &dz : nullptr) : 0.0;
    loss.total = loss.recon_a + loss.recon_y + beta * loss.kl + lambda * loss.hsic;

    if (!grads) return loss;

    // Backward pass.
    Eigen::MatrixXd d_mu_a = (-inv_n / var_a) * res_a;
    Eigen::MatrixXd da_din;
    const auto da_grads = model.decoder_a.backward(da_cache, d_mu_a, &da_din);

    Eigen::MatrixXd d_mu_y = (-inv_n / var_y) * res_y;
    Eigen::MatrixXd dy_din;
    const auto dy_grads = model.decoder_y.backward(dy_cache, d_mu_y, &dy_din);

    Eigen::MatrixXd gz = da_din.rightCols(L) + dy_din.rightCols(L);
    if (lambda != 0.0) gz += lambda * dz;

    // Reparameterization: dz/dmu = 1, dz/dlogvar = 0.5 sigma eps.
    Eigen::MatrixXd d_mu = gz + beta * inv_n * mu;
    Eigen::MatrixXd d_lv = gz.cwiseProduct(0.5 * sig.cwiseProduct(noise)) +
                           beta * 0.5 * inv_n * (lv.array().exp() - 1.0).matrix();
    // Clamp mask: no gradient where the raw log-variance is outside the box.
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int l = 0; l < L; ++l) {
            if (std::abs(lv_raw(i, l)) > kLogVarClamp) d_lv(i, l) = 0.0;
        }
    }
    Eigen::MatrixXd enc_dout(n, 2 * L);
    enc_dout.leftCols(L) = d_mu;
    enc_dout.rightCols(L) = d_lv;
    const auto enc_grads = model.encoder.backward(enc_cache, enc_dout);

    grads->assign(model.param_count(), 0.0);
    double* p = grads->data();
    Mlp::flatten_grads(enc_grads, p);
    p += model.encoder.param_count();
    Mlp::flatten_grads(da_grads, p);
    p += model.decoder_a.param_count();
    Mlp::flatten_grads(dy_grads, p);
    p += model.decoder_y.param_count();
    // d recon_a / d log_var_a = 0.5 - 0.5 E[(a - mu_a)^2] / var_a
    p[0] = 0.5 - 0.5 * res_a.squaredNorm() * inv_n / var_a;
    p[1] = 0.5 - 0.5 * res_y.squaredNorm() * inv_n / var_y;
    return loss;
}

TrainResult train_ivvae(const Dataset& train, const VaeConfig& cfg, std::uint64_t seed) {
    if (!train.has_instrument()) {
        throw Error(ErrorCode::MissingInstrument, "IV-VAE training needs an instrument column");
    }
    if (train.n() < 200) {
        throw Error(ErrorCode::BadConfig, "IV-VAE training needs n >= 200");
    }
    TrainResult result;
    result.model = make_ivvae(cfg, seed);
    IvVaeModel& model = result.model;
    model.a_mean = mean(train.a());
    model.y_mean = mean(train.y());
    model.s_mean = mean(train.s());
    auto sd_or_one = [](const std::vector<double>& v) {
        const double sd = sd_pop(v);
        return sd > 0.0 ? sd : 1.0;
    };
    model.a_sd = sd_or_one(train.a());
    model.y_sd = sd_or_one(train.y());
    model.s_sd = sd_or_one(train.s());

    std::vector<double> params;
    model.get_params(params);
    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.lr;
    AdamState adam(params.size(), adam_cfg);

    auto noise_eng = make_engine(mix_seed(seed, 7777));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<int> order(train.n());
    std::iota(order.begin(), order.end(), 0);

    std::vector<double> grads;
    const int n_batches =
        static_cast<int>((train.n() + cfg.batch - 1) / static_cast<std::size_t>(cfg.batch));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto shuffle_eng = make_engine(mix_seed(seed, 100000 + static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), shuffle_eng);
        TrainLog::Epoch ep;
        for (int b = 0; b < n_batches; ++b) {
            const std::size_t lo = static_cast<std::size_t>(b) * cfg.batch;
            const std::size_t hi = std::min(train.n(), lo + cfg.batch);
            const std::size_t bs = hi - lo;
            std::vector<double> ba(bs), by(bs), bs_col(bs);
            for (std::size_t i = 0; i < bs; ++i) {
                const int r = order[lo + i];
                ba[i] = train.a()[r];
                by[i] = train.y()[r];
                bs_col[i] = train.s()[r];
            }
            Eigen::MatrixXd noise(bs, cfg.latent_dim);
            for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = gauss(noise_eng);
            const LossComponents loss = loss_and_grads(model, ba, by, bs_col, noise, cfg.beta,
                                                       cfg.lambda_hsic, &grads);
            if (!std::isfinite(loss.total)) {
                throw Error(ErrorCode::NonFiniteLoss,
                            "IV-VAE training diverged at epoch " + std::to_string(epoch));
            }
            adam.step(params, grads);
            model.set_params(params);  // also re-clamps the scalar log-variances
            model.get_params(params);
            ep.total += loss.total;
            ep.recon += loss.recon_a + loss.recon_y;
            ep.kl += loss.kl;
            ep.hsic += loss.hsic;
        }
        const double inv_b = 1.0 / static_cast<double>(n_batches);
        ep.total *= inv_b;
        ep.recon *= inv_b;
        ep.kl *= inv_b;
        ep.hsic *= inv_b;
        result.log.epochs.push_back(ep);
    }

    // Final dependence diagnostic on (z_hat, S); subsampled for memory on
    // large folds.
    const Eigen::MatrixXd zhat = encode(model, train);
    const std::size_t cap = 2000;
    std::vector<double> zs, ss;
    if (train.n() <= cap) {
        zs.assign(zhat.data(), zhat.data() + train.n());
        ss = train.s();
    } else {
        std::vector<int> idx(train.n());
        std::iota(idx.begin(), idx.end(), 0);
        auto eng = make_engine(mix_seed(seed, 9999));
        std::shuffle(idx.begin(), idx.end(), eng);
        idx.resize(cap);
        for (int r : idx) {
            zs.push_back(zhat(r, 0));
            ss.push_back(train.s()[r]);
        }
    }
    if (cfg.latent_dim == 1) {
        const double bw_z = median_bandwidth(scalars(zs));
        const double bw_s = median_bandwidth(scalars(ss));
        result.log.final_hsic = hsic_stat(scalars(zs), scalars(ss), {bw_z}, {bw_s});
    }
    return result;
}

Eigen::MatrixXd encode(const IvVaeModel& model, const std::vector<double>& a,
                       const std::vector<double>& y, const std::vector<double>& s) {
    return posterior(model, a, y, s).mu;
}

Posterior posterior(const IvVaeModel& model, const std::vector<double>& a,
                    const std::vector<double>& y, const std::vector<double>& s) {
    const Standardized st = standardize(model, a, y, s);
    Eigen::MatrixXd enc_in(st.a.size(), 3);
    enc_in.col(0) = st.a;
    enc_in.col(1) = st.y;
    enc_in.col(2) = st.s;
    const Eigen::MatrixXd out = model.encoder.forward(enc_in);
    Posterior post;
    post.mu = out.leftCols(model.latent_dim);
    post.logvar =
        out.rightCols(model.latent_dim).unaryExpr([](double v) { return clamp_lv(v); });
    return post;
}

Eigen::MatrixXd encode(const IvVaeModel& model, const Dataset& rows) {
    if (!rows.has_instrument()) {
        throw Error(ErrorCode::MissingInstrument, "encode needs an instrument column");
    }
    return encode(model, rows.a(), rows.y(), rows.s());
}

std::string IvVaeModel::to_json() const {
    nlohmann::ordered_json j;
    j["latent_dim"] = latent_dim;
    j["encoder"] = nlohmann::json::parse(encoder.to_json());
    j["decoder_a"] = nlohmann::json::parse(decoder_a.to_json());
    j["decoder_y"] = nlohmann::json::parse(decoder_y.to_json());
    j["log_var_a"] = log_var_a;
    j["log_var_y"] = log_var_y;
    j["standardize"] = {{"a_mean", a_mean}, {"a_sd", a_sd}, {"y_mean", y_mean},
                        {"y_sd", y_sd},     {"s_mean", s_mean}, {"s_sd", s_sd}};
    return j.dump();
}

IvVaeModel IvVaeModel::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    IvVaeModel m;
    m.latent_dim = j.at("latent_dim").get<int>();
    m.encoder = Mlp::from_json(j.at("encoder").dump());
    m.decoder_a = Mlp::from_json(j.at("decoder_a").dump());
    m.decoder_y = Mlp::from_json(j.at("decoder_y").dump());
    m.log_var_a = j.at("log_var_a").get<double>();
    m.log_var_y = j.at("log_var_y").get<double>();
    const auto& s = j.at("standardize");
    m.a_mean = s.at("a_mean");
    m.a_sd = s.at("a_sd");
    m.y_mean = s.at("y_mean");
    m.y_sd = s.at("y_sd");
    m.s_mean = s.at("s_mean");
    m.s_sd = s.at("s_sd");
    return m;
}

void TrainLog::to_csv(std::ostream& out) const {
    out << "epoch,loss,recon,kl,hsic\n";
    char buf[40];
    for (std::size_t e = 0; e < epochs.size(); ++e) {
        out << e;
        for (double v : {epochs[e].total, epochs[e].recon, epochs[e].kl, epochs[e].hsic}) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            out << ',' << buf;
        }
        out << '\n';
    }
}

}  // namespace cfbound
