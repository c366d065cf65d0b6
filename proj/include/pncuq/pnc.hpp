#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pncuq/data.hpp"
#include "pncuq/errors.hpp"
#include "pncuq/krr.hpp"
#include "pncuq/network.hpp"
#include "pncuq/rng.hpp"

namespace pncuq {

enum class MeanInitMode { Zero, MonteCarlo };

/// How s_bar(x) = E[s_{theta^b}(x)] is obtained. He initialization gives a
/// zero-mean output, so Zero is the default.
struct MeanInitSpec {
    MeanInitMode mode = MeanInitMode::Zero;
    std::size_t mc_count = 0;  // 0 means "100 * n" when resolved against data

    [[nodiscard]] MeanInitSpec resolved_for(std::size_t n) const {
        MeanInitSpec s = *this;
        if (s.mode == MeanInitMode::MonteCarlo && s.mc_count == 0) s.mc_count = 100 * n;
        return s;
    }
};

/// s_bar at every row of `xs`. MonteCarlo averages `mc_count` fresh He
/// initializations drawn from `rng`, so the same stream always gives the same function.
inline Vector mean_init_values(const MeanInitSpec& spec, const NetConfig& config, const Matrix& xs,
                               const RngStream& rng) {
    if (spec.mode == MeanInitMode::Zero) return Vector::Zero(xs.rows());
    require(spec.mc_count >= 1, "mean_init: MonteCarlo mode needs mc_count >= 1");
    Vector acc = Vector::Zero(xs.rows());
    for (std::size_t k = 0; k < spec.mc_count; ++k) acc += forward(init_he(config, rng.derive(k)), xs);
    return acc / static_cast<double>(spec.mc_count);
}

inline double mean_init_evaluate(const MeanInitSpec& spec, const NetConfig& config, const Vector& x,
                                 const RngStream& rng) {
    return mean_init_values(spec, config, Matrix(x.transpose()), rng)[0];
}

/// s_bar as a shift function for the closed-form predictors.
inline ShiftFn mean_init_shift(const MeanInitSpec& spec, const NetConfig& config, const RngStream& rng) {
    if (spec.mode == MeanInitMode::Zero) return zero_shift();
    return [spec, config, rng](const Matrix& xs) { return mean_init_values(spec, config, xs, rng); };
}

/// Base network plus auxiliary network trained on s_bar labels from the same
/// initialization; predicts base(x) - (auxiliary(x) - s_bar(x)).
struct PncPredictor {
    WideNet base;
    WideNet auxiliary;
    MeanInitSpec mean_init;
    RngStream mean_init_stream;
    TrainConfig train_cfg;
};

inline Vector pnc_predict(const PncPredictor& p, const Matrix& xs) {
    return forward(p.base, xs) - forward(p.auxiliary, xs) +
           mean_init_values(p.mean_init, p.base.config(), xs, p.mean_init_stream);
}

inline double pnc_predict(const PncPredictor& p, const Vector& x) {
    require(static_cast<std::size_t>(x.size()) == p.base.config().input_dim, "pnc_predict: dimension mismatch");
    return pnc_predict(p, Matrix(x.transpose()))[0];
}

inline PncPredictor fit_pnc(const Dataset& data, const NetConfig& net_cfg, const TrainConfig& train_cfg,
                            const MeanInitSpec& mean_init, const RngStream& rng) {
    const NetConfig cfg = net_cfg.resolved_for(data.size());
    const MeanInitSpec mi = mean_init.resolved_for(data.size());
    require(cfg.input_dim == data.dim(), "fit_pnc: network input_dim does not match data");
    const WideNet init = init_he(cfg, rng.derive(stream_tag::init));
    const RngStream mean_stream = rng.derive(stream_tag::mean_init);

    auto train = [&](const Dataset& d, const char* role) {
        try {
            return train_gd(init, d, train_cfg);
        } catch (const DivergenceError& e) {
            throw e.tagged(role);
        }
    };
    WideNet base = train(data, "base");
    const Dataset artificial = data.with_responses(mean_init_values(mi, cfg, data.inputs(), mean_stream));
    WideNet auxiliary = train(artificial, "auxiliary");
    return {std::move(base), std::move(auxiliary), mi, mean_stream, train_cfg};
}

/// Everything needed to fit a PNC predictor on some dataset.
struct PncPipeline {
    NetConfig net;
    TrainConfig train;
    MeanInitSpec mean_init;

    [[nodiscard]] PncPredictor fit(const Dataset& data, const RngStream& rng) const {
        return fit_pnc(data, net, train, mean_init, rng);
    }

    /// Fit on `data` and predict at one point.
    [[nodiscard]] double fit_predict(const Dataset& data, const Vector& x0, const RngStream& rng) const {
        return pnc_predict(fit(data, rng), x0);
    }
};

/// Average of m independently initialized base networks.
class DeepEnsemble {
public:
    explicit DeepEnsemble(std::vector<WideNet> members) : members_(std::move(members)) {
        require(!members_.empty(), "deep ensemble needs at least one member");
    }

    [[nodiscard]] Vector predict(const Matrix& xs) const { return predict_first(members_.size(), xs); }
    [[nodiscard]] double predict(const Vector& x) const { return predict(Matrix(x.transpose()))[0]; }

    /// Prediction of the sub-ensemble made of the first `m` members.
    [[nodiscard]] Vector predict_first(std::size_t m, const Matrix& xs) const {
        require(m >= 1 && m <= members_.size(), "deep ensemble: bad sub-ensemble size");
        Vector acc = Vector::Zero(xs.rows());
        for (std::size_t k = 0; k < m; ++k) acc += forward(members_[k], xs);
        return acc / static_cast<double>(m);
    }

    [[nodiscard]] const std::vector<WideNet>& members() const noexcept { return members_; }
    [[nodiscard]] std::size_t size() const noexcept { return members_.size(); }

private:
    std::vector<WideNet> members_;
};

inline WideNet train_ensemble_member(const Dataset& data, const NetConfig& cfg, const TrainConfig& train_cfg,
                                     const RngStream& rng, std::size_t index) {
    const WideNet init = init_he(cfg, rng.derive(stream_tag::member).derive(index));
    try {
        return train_gd(init, data, train_cfg);
    } catch (const DivergenceError& e) {
        throw e.tagged("ensemble member " + std::to_string(index));
    }
}

inline DeepEnsemble deep_ensemble(const Dataset& data, const NetConfig& net_cfg, const TrainConfig& train_cfg,
                                  std::size_t m, const RngStream& rng) {
    require(m >= 1, "deep_ensemble: m must be positive");
    const NetConfig cfg = net_cfg.resolved_for(data.size());
    require(cfg.input_dim == data.dim(), "deep_ensemble: network input_dim does not match data");
    std::vector<WideNet> members;
    members.reserve(m);
    for (std::size_t k = 0; k < m; ++k) members.push_back(train_ensemble_member(data, cfg, train_cfg, rng, k));
    return DeepEnsemble(std::move(members));
}

inline nlohmann::json to_json(const MeanInitSpec& s) {
    nlohmann::json j{{"mode", s.mode == MeanInitMode::Zero ? "zero" : "monte_carlo"}};
    if (s.mode == MeanInitMode::MonteCarlo) j["mc_count"] = s.mc_count;
    return j;
}

inline MeanInitSpec mean_init_from_json(const nlohmann::json& j) {
    MeanInitSpec s;
    const auto mode = j.value("mode", std::string("zero"));
    if (mode == "zero") {
        s.mode = MeanInitMode::Zero;
    } else if (mode == "monte_carlo") {
        s.mode = MeanInitMode::MonteCarlo;
        s.mc_count = j.value("mc_count", std::size_t{0});
    } else {
        throw ValidationError("unknown mean_init mode: " + mode);
    }
    return s;
}

/// Checkpoint: both networks (sharing init_params) plus the mean-init spec.
inline nlohmann::json to_json(const PncPredictor& p) {
    return {{"base", to_json(p.base)},
            {"auxiliary", to_json(p.auxiliary)},
            {"mean_init", to_json(p.mean_init)},
            {"mean_init_stream", {{"master_seed", p.mean_init_stream.master_seed},
                                  {"stream_id", p.mean_init_stream.stream_id}}},
            {"train", to_json(p.train_cfg)}};
}

inline PncPredictor pnc_from_json(const nlohmann::json& j) {
    const auto& s = j.at("mean_init_stream");
    return {wide_net_from_json(j.at("base")), wide_net_from_json(j.at("auxiliary")),
            mean_init_from_json(j.at("mean_init")),
            RngStream{s.at("master_seed").get<std::uint64_t>(), s.at("stream_id").get<std::uint64_t>()},
            train_config_from_json(j.at("train"))};
}

}  // namespace pncuq
