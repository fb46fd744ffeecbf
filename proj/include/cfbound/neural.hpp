#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace cfbound {

/// Fixed-architecture multilayer perceptron: tanh hidden layers, identity
/// output, 64-bit floats. Batches are row-major (rows = samples).
class Mlp {
public:
    struct Cache {
        // acts[0] is the input batch; acts[l] the post-activation output of
        // layer l-1. Enough to reconstruct exact gradients.
        std::vector<Eigen::MatrixXd> acts;
    };

    Mlp() = default;
    /// Xavier-uniform weights, zero biases, deterministic in the seed.
    Mlp(std::vector<int> layer_sizes, std::uint64_t seed);

    const std::vector<int>& layer_sizes() const { return sizes_; }
    int input_dim() const { return sizes_.front(); }
    int output_dim() const { return sizes_.back(); }

    Eigen::MatrixXd forward(const Eigen::MatrixXd& input, Cache* cache = nullptr) const;

    struct Grads {
        std::vector<Eigen::MatrixXd> w;
        std::vector<Eigen::VectorXd> b;
    };

    /// Exact gradients of the scalar loss whose per-sample output gradient is
    /// `dout` (same shape as the forward output), summed over the batch.
    /// Optionally also returns the gradient with respect to the input batch.
    Grads backward(const Cache& cache, const Eigen::MatrixXd& dout,
                   Eigen::MatrixXd* dinput = nullptr) const;

    std::size_t param_count() const;
    void flatten_params(double* out) const;
    void unflatten_params(const double* in);
    static void flatten_grads(const Grads& g, double* out);

    std::string to_json() const;
    static Mlp from_json(const std::string& text);

    std::vector<Eigen::MatrixXd>& weights() { return w_; }
    std::vector<Eigen::VectorXd>& biases() { return b_; }
    const std::vector<Eigen::MatrixXd>& weights() const { return w_; }
    const std::vector<Eigen::VectorXd>& biases() const { return b_; }

private:
    std::vector<int> sizes_;
    std::vector<Eigen::MatrixXd> w_;  // w_[l] is sizes_[l+1] x sizes_[l]
    std::vector<Eigen::VectorXd> b_;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam over a flat parameter vector.
class AdamState {
public:
    AdamState() = default;
    AdamState(std::size_t n_params, AdamConfig cfg);

    void step(std::vector<double>& params, const std::vector<double>& grads);
    long step_count() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    std::vector<double> m_, v_;
    long t_ = 0;
};

}  // namespace cfbound
