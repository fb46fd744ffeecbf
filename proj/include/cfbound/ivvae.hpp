#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cfbound/data.hpp"
#include "cfbound/neural.hpp"

namespace cfbound {

/// Reduced-form IV-VAE: Gaussian encoder q(Z_C | A, Y, S), Gaussian decoders
/// p(A | S, Z_C) and p(Y | A, Z_C) with scalar learnable log-variances.
/// Inputs are standardized with constants baked into the model.
struct IvVaeModel {
    Mlp encoder;    // (a, y, s) -> (mu_z, logvar_z)
    Mlp decoder_a;  // (s, z) -> mu_A
    Mlp decoder_y;  // (a, z) -> mu_Y
    double log_var_a = 0.0;  // clamped to [-10, 10]
    double log_var_y = 0.0;
    int latent_dim = 1;
    double a_mean = 0.0, a_sd = 1.0;
    double y_mean = 0.0, y_sd = 1.0;
    double s_mean = 0.0, s_sd = 1.0;

    std::size_t param_count() const;
    void get_params(std::vector<double>& out) const;
    void set_params(const std::vector<double>& in);

    std::string to_json() const;
    static IvVaeModel from_json(const std::string& text);
};

IvVaeModel make_ivvae(const VaeConfig& cfg, std::uint64_t seed);

struct LossComponents {
    double total = 0.0;
    double recon_a = 0.0;
    double recon_y = 0.0;
    double kl = 0.0;
    double hsic = 0.0;
};

/// Loss and exact parameter gradients on one minibatch with frozen
/// reparameterization noise (one standard-normal draw per row per latent
/// dimension). HSIC bandwidths are recomputed per batch by the median
/// heuristic and treated as constants in the gradient. Pass grads = nullptr
/// for loss-only evaluation (finite-difference checks).
LossComponents loss_and_grads(const IvVaeModel& model, const std::vector<double>& a,
                              const std::vector<double>& y, const std::vector<double>& s,
                              const Eigen::MatrixXd& noise, double beta, double lambda,
                              std::vector<double>* grads);

struct TrainLog {
    struct Epoch {
        double total = 0.0, recon = 0.0, kl = 0.0, hsic = 0.0;
    };
    std::vector<Epoch> epochs;
    double final_hsic = 0.0;  // HSIC(z_hat, S) on the training rows after training

    void to_csv(std::ostream& out) const;
};

struct TrainResult {
    IvVaeModel model;
    TrainLog log;
};

/// Minibatch Adam training, deterministic in the seed. Standardization
/// constants are estimated on `train` and baked into the returned model.
TrainResult train_ivvae(const Dataset& train, const VaeConfig& cfg, std::uint64_t seed);

/// Posterior means per row; no sampling at inference.
Eigen::MatrixXd encode(const IvVaeModel& model, const Dataset& rows);
Eigen::MatrixXd encode(const IvVaeModel& model, const std::vector<double>& a,
                       const std::vector<double>& y, const std::vector<double>& s);

struct Posterior {
    Eigen::MatrixXd mu;
    Eigen::MatrixXd logvar;  // clamped like the training path
};

Posterior posterior(const IvVaeModel& model, const std::vector<double>& a,
                    const std::vector<double>& y, const std::vector<double>& s);

}  // namespace cfbound
