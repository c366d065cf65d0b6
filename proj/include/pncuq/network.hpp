#pragma once

#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "pncuq/data.hpp"
#include "pncuq/errors.hpp"
#include "pncuq/rng.hpp"

namespace pncuq {

enum class Activation { ReLU };

/// c_sigma = 1 / E[sigma(z)^2], z ~ N(0, 1); equals 2 for ReLU.
inline constexpr double relu_c_sigma = 2.0;

/// Fully connected, bias-free network: `depth` hidden layers of `width` units.
struct NetConfig {
    std::size_t input_dim = 1;
    std::size_t depth = 1;
    std::size_t width = 1;
    Activation activation = Activation::ReLU;
    std::optional<std::size_t> width_factor;  // width = width_factor * n when resolved against data

    void validate() const {
        require(input_dim >= 1, "input_dim must be positive");
        require(depth >= 1, "depth must be positive");
        require(width >= 1, "width must be positive");
    }

    /// Width resolved from the width_factor * n convention, if set.
    [[nodiscard]] NetConfig resolved_for(std::size_t n) const {
        NetConfig c = *this;
        if (width_factor) c.width = *width_factor * n;
        return c;
    }

    [[nodiscard]] std::size_t layer_in(std::size_t layer) const { return layer == 0 ? input_dim : width; }
    [[nodiscard]] std::size_t layer_out(std::size_t layer) const { return layer == depth ? 1 : width; }

    [[nodiscard]] std::size_t param_count() const {
        std::size_t p = 0;
        for (std::size_t l = 0; l <= depth; ++l) p += layer_in(l) * layer_out(l);
        return p;
    }

    friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

struct TrainConfig {
    double ridge = 1e-10;
    double learning_rate = 1.0;
    std::size_t epochs = 1000;
    bool record_loss = false;

    void validate() const {
        require(std::isfinite(ridge) && ridge >= 0.0, "ridge must be nonnegative");
        require(std::isfinite(learning_rate) && learning_rate > 0.0, "learning_rate must be positive");
    }
};

/// Parameters are stored flat: W^(1), ..., W^(L+1), each column-major with
/// shape (layer_out x layer_in). The initialization snapshot never changes.
class WideNet {
public:
    WideNet(NetConfig config, Vector init) : config_(config), params_(init), init_params_(std::move(init)) {
        config_.validate();
        require(static_cast<std::size_t>(init_params_.size()) == config_.param_count(),
                "parameter vector length does not match config");
    }

    WideNet(NetConfig config, Vector params, Vector init) : WideNet(config, std::move(init)) {
        require(params.size() == init_params_.size(), "parameter vector length does not match config");
        params_ = std::move(params);
    }

    [[nodiscard]] const NetConfig& config() const noexcept { return config_; }
    [[nodiscard]] const Vector& params() const noexcept { return params_; }
    [[nodiscard]] const Vector& init_params() const noexcept { return init_params_; }
    [[nodiscard]] std::size_t param_count() const noexcept { return static_cast<std::size_t>(params_.size()); }

    /// Same initialization, new current parameters.
    [[nodiscard]] WideNet with_params(Vector params) const { return {config_, std::move(params), init_params_}; }

    /// The untrained network s_{theta^b}.
    [[nodiscard]] WideNet at_init() const { return {config_, init_params_}; }

    /// Offset of W^(layer+1) inside the flat parameter vector.
    [[nodiscard]] std::size_t layer_offset(std::size_t layer) const {
        std::size_t off = 0;
        for (std::size_t l = 0; l < layer; ++l) off += config_.layer_in(l) * config_.layer_out(l);
        return off;
    }

    [[nodiscard]] Eigen::Map<const Matrix> weights(std::size_t layer) const {
        return weights_of(params_, layer);
    }

    [[nodiscard]] Eigen::Map<const Matrix> weights_of(const Vector& flat, std::size_t layer) const {
        return {flat.data() + layer_offset(layer), static_cast<Eigen::Index>(config_.layer_out(layer)),
                static_cast<Eigen::Index>(config_.layer_in(layer))};
    }

    [[nodiscard]] double layer_scale() const { return std::sqrt(relu_c_sigma / static_cast<double>(config_.width)); }

private:
    NetConfig config_;
    Vector params_;
    Vector init_params_;
};

/// Every weight i.i.d. N(0, 1); the sqrt(c_sigma / width) factors live in the forward pass.
inline WideNet init_he(const NetConfig& config, const RngStream& rng) {
    config.validate();
    auto gen = rng.engine();
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector theta(static_cast<Eigen::Index>(config.param_count()));
    for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] = normal(gen);
    return {config, std::move(theta)};
}

namespace detail {

/// Activations of one forward sweep over a batch held as columns.
struct ForwardCache {
    std::vector<Matrix> pre;     // f^(l), l = 1..L, each width x n
    std::vector<Matrix> post;    // g^(l), l = 0..L (g^(0) = inputs^T)
    Eigen::RowVectorXd output;   // 1 x n
};

inline ForwardCache forward_cached(const WideNet& net, const Vector& flat, const Matrix& xs) {
    const auto& cfg = net.config();
    const double scale = net.layer_scale();
    ForwardCache cache;
    cache.post.reserve(cfg.depth + 1);
    cache.pre.reserve(cfg.depth);
    cache.post.emplace_back(xs.transpose());
    for (std::size_t l = 0; l < cfg.depth; ++l) {
        cache.pre.emplace_back(net.weights_of(flat, l) * cache.post.back());
        cache.post.emplace_back(scale * cache.pre.back().cwiseMax(0.0));
    }
    cache.output = net.weights_of(flat, cfg.depth) * cache.post.back();
    return cache;
}

inline void check_inputs(const WideNet& net, const Matrix& xs) {
    require(static_cast<std::size_t>(xs.cols()) == net.config().input_dim,
            "dimension mismatch: network expects " + std::to_string(net.config().input_dim) + " inputs, got " +
                std::to_string(xs.cols()));
}

}  // namespace detail

/// Outputs at every row of `xs`.
inline Vector forward(const WideNet& net, const Matrix& xs) {
    detail::check_inputs(net, xs);
    return detail::forward_cached(net, net.params(), xs).output.transpose();
}

inline double forward(const WideNet& net, const Vector& x) {
    require(static_cast<std::size_t>(x.size()) == net.config().input_dim,
            "dimension mismatch: network expects " + std::to_string(net.config().input_dim) + " inputs, got " +
                std::to_string(x.size()));
    return forward(net, Matrix(x.transpose()))[0];
}

/// d f(x_i) / d theta for every row; result is n x p.
inline Matrix jacobian(const WideNet& net, const Matrix& xs) {
    detail::check_inputs(net, xs);
    const auto& cfg = net.config();
    const double scale = net.layer_scale();
    Matrix jac(xs.rows(), static_cast<Eigen::Index>(net.param_count()));
    for (Eigen::Index i = 0; i < xs.rows(); ++i) {
        const auto cache = detail::forward_cached(net, net.params(), Matrix(xs.row(i)));
        // Gradient w.r.t. the output layer input, then walk backwards.
        Vector delta = Vector::Ones(1);
        for (std::size_t l = cfg.depth + 1; l-- > 0;) {
            const Vector& below = cache.post[l];
            const Matrix grad = delta * below.transpose();
            jac.row(i).segment(static_cast<Eigen::Index>(net.layer_offset(l)), grad.size()) =
                Eigen::Map<const Eigen::RowVectorXd>(grad.data(), grad.size());
            if (l == 0) break;
            Vector up = net.weights(l).transpose() * delta;
            const Vector& pre = cache.pre[l - 1];
            delta = scale * up.cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
        }
    }
    return jac;
}

struct TrainOutcome {
    WideNet net;
    std::vector<double> loss_trace;  // loss at the start of each epoch, if recorded
};

namespace detail {

/// One hidden layer, fused over samples so the working set is a few
/// width-length vectors instead of width x n activation matrices.
inline double shallow_loss_and_gradient(const WideNet& net, const Vector& flat, const Matrix& xs, const Vector& ys,
                                        double ridge, Vector& grad) {
    const auto& cfg = net.config();
    const auto w = static_cast<Eigen::Index>(cfg.width);
    const auto d = static_cast<Eigen::Index>(cfg.input_dim);
    const Eigen::Index n = xs.rows();
    const double scale = net.layer_scale();
    const Eigen::Map<const Matrix> w1(flat.data(), w, d);
    const Eigen::Map<const Eigen::ArrayXd> w2(flat.data() + w * d, w);

    Eigen::ArrayXd pre(w);
    Vector resid(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        pre.matrix().noalias() = w1 * xs.row(i).transpose();
        resid[i] = scale * (w2 * pre.max(0.0)).sum() - ys[i];
    }
    const Vector drift = flat - net.init_params();
    const double loss = resid.squaredNorm() / static_cast<double>(n) + ridge * drift.squaredNorm();

    grad.setZero(flat.size());
    Eigen::Map<Eigen::ArrayXXd> g1(grad.data(), w, d);
    Eigen::Map<Eigen::ArrayXd> g2(grad.data() + w * d, w);
    Eigen::ArrayXd gate(w);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double delta = (2.0 / static_cast<double>(n)) * resid[i];
        pre.matrix().noalias() = w1 * xs.row(i).transpose();
        g2 += delta * pre.max(0.0);
        gate = delta * (pre > 0.0).cast<double>();
        for (Eigen::Index k = 0; k < d; ++k) g1.col(k) += xs(i, k) * gate;
    }
    g2 *= scale;
    for (Eigen::Index k = 0; k < d; ++k) g1.col(k) *= scale * w2;
    grad += (2.0 * ridge) * drift;
    return loss;
}

/// Regularized MSE (1/n) sum (f - y)^2 + ridge * ||theta - theta_b||^2 and its gradient.
inline double loss_and_gradient(const WideNet& net, const Vector& flat, const Matrix& xs, const Vector& ys,
                                double ridge, Vector& grad) {
    const auto& cfg = net.config();
    if (cfg.depth == 1) return shallow_loss_and_gradient(net, flat, xs, ys, ridge, grad);
    const double scale = net.layer_scale();
    const double n = static_cast<double>(xs.rows());
    const auto cache = forward_cached(net, flat, xs);
    const Eigen::RowVectorXd resid = cache.output - ys.transpose();
    const Vector drift = flat - net.init_params();
    const double loss = resid.squaredNorm() / n + ridge * drift.squaredNorm();

    grad.resize(flat.size());
    Matrix delta = (2.0 / n) * resid;  // 1 x n
    for (std::size_t l = cfg.depth + 1; l-- > 0;) {
        const auto off = static_cast<Eigen::Index>(net.layer_offset(l));
        const auto rows = static_cast<Eigen::Index>(cfg.layer_out(l));
        const auto cols = static_cast<Eigen::Index>(cfg.layer_in(l));
        Eigen::Map<Matrix>(grad.data() + off, rows, cols).noalias() = delta * cache.post[l].transpose();
        if (l == 0) break;
        Matrix up = net.weights_of(flat, l).transpose() * delta;
        delta = scale * up.cwiseProduct((cache.pre[l - 1].array() > 0.0).cast<double>().matrix());
    }
    grad += (2.0 * ridge) * drift;
    return loss;
}

inline constexpr double divergence_factor = 1e8;

}  // namespace detail

/// Full-batch gradient descent on the regularized MSE, starting from the
/// current parameters and anchored at the initialization snapshot.
inline TrainOutcome train_gd_traced(const WideNet& net, const Dataset& data, const TrainConfig& cfg) {
    cfg.validate();
    detail::check_inputs(net, data.inputs());
    Vector theta = net.params();
    Vector grad;
    std::vector<double> trace;
    if (cfg.record_loss) trace.reserve(cfg.epochs);
    std::vector<double> recent;  // kept for the divergence report even when not recording
    // non-finite, or 1e8 above the starting loss scale
    double blowup = detail::divergence_factor *
                    std::max(data.responses().squaredNorm() / static_cast<double>(data.size()), 1e-12);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double loss = detail::loss_and_gradient(net, theta, data.inputs(), data.responses(), cfg.ridge, grad);
        if (cfg.record_loss) trace.push_back(loss);
        if (epoch == 0) blowup = std::max(blowup, detail::divergence_factor * loss);
        if (!std::isfinite(loss) || !grad.allFinite() || loss > blowup) {
            if (!cfg.record_loss) {
                recent.push_back(loss);
                trace = std::move(recent);
            }
            throw DivergenceError(epoch, std::move(trace));
        }
        if (!cfg.record_loss) {
            if (recent.size() >= 16) recent.erase(recent.begin());
            recent.push_back(loss);
        }
        theta.noalias() -= cfg.learning_rate * grad;
    }
    if (!theta.allFinite()) throw DivergenceError(cfg.epochs, std::move(trace));
    return {net.with_params(std::move(theta)), std::move(trace)};
}

inline WideNet train_gd(const WideNet& net, const Dataset& data, const TrainConfig& cfg) {
    return train_gd_traced(net, data, cfg).net;
}

inline double training_mse(const WideNet& net, const Dataset& data) {
    return (forward(net, data.inputs()) - data.responses()).squaredNorm() / static_cast<double>(data.size());
}

// Checkpoints -----------------------------------------------------------------

inline nlohmann::json to_json(const NetConfig& c) {
    nlohmann::json j{{"input_dim", c.input_dim}, {"depth", c.depth}, {"width", c.width}, {"activation", "relu"}};
    if (c.width_factor) j["width_factor"] = *c.width_factor;
    return j;
}

inline NetConfig net_config_from_json(const nlohmann::json& j) {
    NetConfig c;
    c.input_dim = j.value("input_dim", std::size_t{1});
    c.depth = j.value("depth", std::size_t{1});
    c.width = j.value("width", std::size_t{1});
    require(j.value("activation", std::string("relu")) == "relu", "only relu activation is supported");
    if (j.contains("width_factor")) c.width_factor = j.at("width_factor").get<std::size_t>();
    return c;
}

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"ridge", c.ridge}, {"learning_rate", c.learning_rate}, {"epochs", c.epochs}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {}) {
    base.ridge = j.value("ridge", base.ridge);
    base.learning_rate = j.value("learning_rate", base.learning_rate);
    base.epochs = j.value("epochs", base.epochs);
    base.validate();
    return base;
}

inline nlohmann::json to_json(const WideNet& net) {
    return {{"config", to_json(net.config())},
            {"params", std::vector<double>(net.params().begin(), net.params().end())},
            {"init_params", std::vector<double>(net.init_params().begin(), net.init_params().end())}};
}

inline WideNet wide_net_from_json(const nlohmann::json& j) {
    const auto cfg = net_config_from_json(j.at("config"));
    const auto params = j.at("params").get<std::vector<double>>();
    const auto init = j.at("init_params").get<std::vector<double>>();
    return {cfg, Eigen::Map<const Vector>(params.data(), static_cast<Eigen::Index>(params.size())),
            Eigen::Map<const Vector>(init.data(), static_cast<Eigen::Index>(init.size()))};
}

inline void write_loss_trace_csv(std::ostream& out, const std::vector<double>& trace) {
    out << "epoch,loss\n";
    out.precision(17);
    for (std::size_t e = 0; e < trace.size(); ++e) out << e << ',' << trace[e] << '\n';
}

}  // namespace pncuq
