#include "cfbound/neural.hpp"

#include <cmath>

#include <json.hpp>

#include "cfbound/error.hpp"
#include "cfbound/rng.hpp"

namespace cfbound {

Mlp::Mlp(std::vector<int> layer_sizes, std::uint64_t seed) : sizes_(std::move(layer_sizes)) {
    if (sizes_.size() < 2) {
        throw Error(ErrorCode::ShapeMismatch, "Mlp needs at least input and output sizes");
    }
    auto eng = make_engine(seed);
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        const int fan_in = sizes_[l], fan_out = sizes_[l + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> u(-limit, limit);
        Eigen::MatrixXd w(fan_out, fan_in);
        for (int i = 0; i < fan_out; ++i) {
            for (int j = 0; j < fan_in; ++j) w(i, j) = u(eng);
        }
        w_.push_back(std::move(w));
        b_.push_back(Eigen::VectorXd::Zero(fan_out));
    }
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& input, Cache* cache) const {
    if (input.cols() != sizes_.front()) {
        throw Error(ErrorCode::ShapeMismatch, "forward: input width " +
                                                  std::to_string(input.cols()) + " != " +
                                                  std::to_string(sizes_.front()));
    }
    if (cache) {
        cache->acts.clear();
        cache->acts.push_back(input);
    }
    Eigen::MatrixXd h = input;
    for (std::size_t l = 0; l < w_.size(); ++l) {
        Eigen::MatrixXd z = (h * w_[l].transpose()).rowwise() + b_[l].transpose();
        if (l + 1 < w_.size()) {
            h = z.array().tanh().matrix();
        } else {
            h = std::move(z);
        }
        if (cache) cache->acts.push_back(h);
    }
    return h;
}

Mlp::Grads Mlp::backward(const Cache& cache, const Eigen::MatrixXd& dout,
                         Eigen::MatrixXd* dinput) const {
    if (cache.acts.size() != w_.size() + 1) {
        throw Error(ErrorCode::ShapeMismatch, "backward: cache does not match network");
    }
    if (dout.rows() != cache.acts.back().rows() || dout.cols() != sizes_.back()) {
        throw Error(ErrorCode::ShapeMismatch, "backward: output gradient shape");
    }
    Grads g;
    g.w.resize(w_.size());
    g.b.resize(w_.size());
    Eigen::MatrixXd delta = dout;
    for (std::size_t l = w_.size(); l-- > 0;) {
        g.w[l] = delta.transpose() * cache.acts[l];
        g.b[l] = delta.colwise().sum().transpose();
        if (l > 0 || dinput) {
            Eigen::MatrixXd dprev = delta * w_[l];
            if (l > 0) {
                // tanh'(z) = 1 - tanh(z)^2, and acts[l] stores tanh(z).
                dprev.array() *= 1.0 - cache.acts[l].array().square();
                delta = std::move(dprev);
            } else {
                *dinput = std::move(dprev);
            }
        }
    }
    return g;
}

std::size_t Mlp::param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < w_.size(); ++l) {
        n += static_cast<std::size_t>(w_[l].size()) + static_cast<std::size_t>(b_[l].size());
    }
    return n;
}

void Mlp::flatten_params(double* out) const {
    std::size_t k = 0;
    for (std::size_t l = 0; l < w_.size(); ++l) {
        for (int i = 0; i < w_[l].rows(); ++i) {
            for (int j = 0; j < w_[l].cols(); ++j) out[k++] = w_[l](i, j);
        }
        for (int i = 0; i < b_[l].size(); ++i) out[k++] = b_[l](i);
    }
}

void Mlp::unflatten_params(const double* in) {
    std::size_t k = 0;
    for (std::size_t l = 0; l < w_.size(); ++l) {
        for (int i = 0; i < w_[l].rows(); ++i) {
            for (int j = 0; j < w_[l].cols(); ++j) w_[l](i, j) = in[k++];
        }
        for (int i = 0; i < b_[l].size(); ++i) b_[l](i) = in[k++];
    }
}

void Mlp::flatten_grads(const Grads& g, double* out) {
    std::size_t k = 0;
    for (std::size_t l = 0; l < g.w.size(); ++l) {
        for (int i = 0; i < g.w[l].rows(); ++i) {
            for (int j = 0; j < g.w[l].cols(); ++j) out[k++] = g.w[l](i, j);
        }
        for (int i = 0; i < g.b[l].size(); ++i) out[k++] = g.b[l](i);
    }
}

std::string Mlp::to_json() const {
    nlohmann::ordered_json j;
    j["layer_sizes"] = sizes_;
    std::vector<double> flat(param_count());
    flatten_params(flat.data());
    j["params"] = flat;
    return j.dump();
}

Mlp Mlp::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    Mlp net(j.at("layer_sizes").get<std::vector<int>>(), 0);
    const auto flat = j.at("params").get<std::vector<double>>();
    if (flat.size() != net.param_count()) {
        throw Error(ErrorCode::ShapeMismatch, "parameter snapshot does not match shape header");
    }
    net.unflatten_params(flat.data());
    return net;
}

AdamState::AdamState(std::size_t n_params, AdamConfig cfg)
    : cfg_(cfg), m_(n_params, 0.0), v_(n_params, 0.0) {}

void AdamState::step(std::vector<double>& params, const std::vector<double>& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
        throw Error(ErrorCode::ShapeMismatch, "adam_step: size mismatch");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grads[i];
        v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grads[i] * grads[i];
        const double mhat = m_[i] / bc1;
        const double vhat = v_[i] / bc2;
        params[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
}

}  // namespace cfbound
