#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pncuq/data.hpp"
#include "pncuq/errors.hpp"
#include "pncuq/krr.hpp"
#include "pncuq/ntk.hpp"
#include "pncuq/pnc.hpp"
#include "pncuq/quantiles.hpp"
#include "pncuq/rng.hpp"

namespace pncuq {

enum class CiMethod { Batching, CheapBootstrap, InfinitesimalJackknife };

inline const char* to_string(CiMethod m) {
    switch (m) {
        case CiMethod::Batching: return "batching";
        case CiMethod::CheapBootstrap: return "cheap_bootstrap";
        case CiMethod::InfinitesimalJackknife: return "infinitesimal_jackknife";
    }
    return "?";
}

/// [center - half_width, center + half_width]. `scale` is S_B, S_C or sigma_hat
/// depending on the method, `df` may be infinite_df.
struct ConfidenceInterval {
    double center = 0.0;
    double half_width = 0.0;
    double level = 0.95;
    CiMethod method = CiMethod::Batching;
    double df = infinite_df;
    double scale = 0.0;
    std::size_t replications = 0;
    std::vector<double> estimates;  // batch / resample predictions, if any

    [[nodiscard]] double lower() const noexcept { return center - half_width; }
    [[nodiscard]] double upper() const noexcept { return center + half_width; }
    [[nodiscard]] double width() const noexcept { return 2.0 * half_width; }
    [[nodiscard]] bool contains(double y) const noexcept { return lower() <= y && y <= upper(); }
};

inline nlohmann::json to_json(const ConfidenceInterval& ci) {
    nlohmann::json j{{"method", to_string(ci.method)}, {"level", ci.level},   {"center", ci.center},
                     {"half_width", ci.half_width},      {"scale", ci.scale},   {"replications", ci.replications}};
    if (std::isinf(ci.df)) {
        j["df"] = "inf";
    } else {
        j["df"] = ci.df;
    }
    return j;
}

namespace detail {

inline void check_level(double level) {
    require(std::isfinite(level) && level > 0.0 && level < 1.0, "confidence level must lie in (0, 1)");
}

}  // namespace detail

// Batching --------------------------------------------------------------------

/// psi_B and S_B from the m' batch predictions; one training run serves every level.
struct BatchingEstimate {
    std::vector<double> predictions;
    double psi = 0.0;
    double s = 0.0;

    [[nodiscard]] ConfidenceInterval interval(double level) const {
        detail::check_level(level);
        const std::size_t m = predictions.size();
        const double df = static_cast<double>(m - 1);
        const double q = t_quantile(df, 1.0 - (1.0 - level) / 2.0);
        return {psi, q * s / std::sqrt(static_cast<double>(m)), level, CiMethod::Batching, df, s, m, predictions};
    }
};

inline BatchingEstimate batching_from_predictions(std::vector<double> predictions) {
    require(predictions.size() >= 2, "batching needs at least 2 batch predictions");
    const auto m = static_cast<double>(predictions.size());
    double psi = 0.0;
    for (double v : predictions) psi += v;
    psi /= m;
    double ss = 0.0;
    for (double v : predictions) ss += (v - psi) * (v - psi);
    const double s = std::sqrt(ss / (m - 1.0));
    return {std::move(predictions), psi, s};
}

/// One PNC predictor per disjoint batch, each evaluated at x0.
inline BatchingEstimate batching_estimate(const Dataset& data, const Vector& x0, std::size_t m_prime,
                                          const PncPipeline& pipeline, const RngStream& rng) {
    require(m_prime >= 2, "batching: m' must be at least 2");
    require(data.size() >= 2 * m_prime, "batching: n (" + std::to_string(data.size()) +
                                            ") too small for " + std::to_string(m_prime) +
                                            " batches of at least 2 rows");
    require(static_cast<std::size_t>(x0.size()) == data.dim(), "batching: x0 dimension mismatch");
    const BatchSplit split = split_batches(data, m_prime, rng.derive(stream_tag::split));
    std::vector<double> preds;
    preds.reserve(m_prime);
    for (std::size_t b = 0; b < m_prime; ++b) {
        try {
            preds.push_back(pipeline.fit_predict(split.batches[b], x0, rng.derive(stream_tag::batch).derive(b)));
        } catch (const DivergenceError& e) {
            throw e.tagged("batch " + std::to_string(b));
        }
    }
    return batching_from_predictions(std::move(preds));
}

inline ConfidenceInterval batching_ci(const Dataset& data, const Vector& x0, double level, std::size_t m_prime,
                                      const PncPipeline& pipeline, const RngStream& rng) {
    detail::check_level(level);
    return batching_estimate(data, x0, m_prime, pipeline, rng).interval(level);
}

// Cheap bootstrap ---------------------------------------------------------------

/// psi_C is the full-data prediction, S_C^2 = (1/R) sum_j (v*_j - psi_C)^2.
/// The half-width t_{R, 1-alpha/2} * S_C has no 1/sqrt(R) factor: the t_R pivot
/// already accounts for the number of resamples.
struct CheapBootstrapEstimate {
    double psi = 0.0;
    std::vector<double> replicates;
    double s = 0.0;

    [[nodiscard]] ConfidenceInterval interval(double level) const {
        detail::check_level(level);
        const std::size_t r = replicates.size();
        const double df = static_cast<double>(r);
        const double q = t_quantile(df, 1.0 - (1.0 - level) / 2.0);
        return {psi, q * s, level, CiMethod::CheapBootstrap, df, s, r, replicates};
    }
};

inline CheapBootstrapEstimate cheap_bootstrap_from_predictions(double psi, std::vector<double> replicates) {
    require(!replicates.empty(), "cheap bootstrap needs R >= 1");
    double ss = 0.0;
    for (double v : replicates) ss += (v - psi) * (v - psi);
    const double s = std::sqrt(ss / static_cast<double>(replicates.size()));
    return {psi, std::move(replicates), s};
}

inline CheapBootstrapEstimate cheap_bootstrap_estimate(const Dataset& data, const Vector& x0, std::size_t resamples,
                                                       const PncPipeline& pipeline, const RngStream& rng) {
    require(resamples >= 1, "cheap bootstrap: R must be at least 1");
    require(static_cast<std::size_t>(x0.size()) == data.dim(), "cheap bootstrap: x0 dimension mismatch");
    double psi = 0.0;
    try {
        psi = pipeline.fit_predict(data, x0, rng.derive(stream_tag::init));
    } catch (const DivergenceError& e) {
        throw e.tagged("full data");
    }
    std::vector<double> reps;
    reps.reserve(resamples);
    for (std::size_t j = 0; j < resamples; ++j) {
        const RngStream unit = rng.derive(stream_tag::resample).derive(j);
        const Dataset star = bootstrap_resample(data, unit.derive(stream_tag::data));
        try {
            reps.push_back(pipeline.fit_predict(star, x0, unit));
        } catch (const DivergenceError& e) {
            throw e.tagged("resample " + std::to_string(j));
        }
    }
    return cheap_bootstrap_from_predictions(psi, std::move(reps));
}

inline ConfidenceInterval cheap_bootstrap_ci(const Dataset& data, const Vector& x0, double level,
                                             std::size_t resamples, const PncPipeline& pipeline,
                                             const RngStream& rng) {
    detail::check_level(level);
    return cheap_bootstrap_estimate(data, x0, resamples, pipeline, rng).interval(level);
}

// Infinitesimal jackknife -----------------------------------------------------------

/// Influence of the point mass at z = (z_x, z_y) on the shifted-KRR functional at x0:
///   IF = K(x0, X)(K + lambda n I)^{-1} M_z(X) - M_z(x0),
///   M_z(x) = g(x) - (z_y - h(z_x)) K(z_x, x) / lambda,   g = h - s_bar,
/// where h is `sol` (built with shift s_bar) and lambda is its ridge.
inline double ij_influence(const KrrSolution& sol, const Vector& z_x, double z_y, const Vector& x0) {
    const Matrix& xs = sol.train_inputs();
    require(z_x.size() == xs.cols() && x0.size() == xs.cols(), "ij_influence: dimension mismatch");
    const double lambda = sol.ridge();
    const Vector g_train = sol.fitted() - sol.shift_at_train();
    const double g_x0 = sol.predict(x0) - sol.shift()(Matrix(x0.transpose()))[0];
    const double residual = z_y - sol.predict(z_x);

    const Vector k_z = kernel_vector(sol.kernel(), z_x, xs);
    const double k_z_x0 = sol.kernel()(z_x, x0);
    const Vector w = sol.factor().solve(kernel_vector(sol.kernel(), x0, xs));

    const Vector m_train = g_train - (residual / lambda) * k_z;
    const double m_x0 = g_x0 - (residual / lambda) * k_z_x0;
    return w.dot(m_train) - m_x0;
}

struct IjEstimate {
    double center = 0.0;
    double sigma_hat_sq = 0.0;
    Vector per_point_if;
};

/// All n training-point influences. For z = x_i the residual is
/// e_i = lambda n alpha_i and w^T K(X, x_i) = K(x0, x_i) - lambda n w_i, so
///   IF_i = w^T g(X) - g(x0) + n e_i w_i,
/// which avoids dividing the tiny residual by the tiny ridge.
inline IjEstimate ij_variance(const KrrSolution& sol, const Vector& x0) {
    const Matrix& xs = sol.train_inputs();
    require(x0.size() == xs.cols(), "ij_variance: dimension mismatch");
    const auto n = static_cast<double>(sol.size());
    const double lambda = sol.ridge();
    const Vector g_train = sol.fitted() - sol.shift_at_train();
    const double center = sol.predict(x0);
    const double g_x0 = center - sol.shift()(Matrix(x0.transpose()))[0];
    const Vector w = sol.factor().solve(kernel_vector(sol.kernel(), x0, xs));
    const double base = w.dot(g_train) - g_x0;
    const Vector residual = lambda * n * sol.dual_coef();

    IjEstimate est;
    est.center = center;
    est.per_point_if = (base + n * residual.cwiseProduct(w).array()).matrix();
    est.sigma_hat_sq = est.per_point_if.squaredNorm() / n;
    return est;
}

/// Idealized-ensemble closed form for the IJ path: shifted KRR with s_bar.
inline KrrSolution ij_solution(const Dataset& data, const NtkKernel& kernel, double ridge, const ShiftFn& mean_shift) {
    return ensemble_closed_form(kernel, data, ridge, mean_shift);
}

inline ConfidenceInterval ij_interval(const IjEstimate& est, std::size_t n, double level) {
    detail::check_level(level);
    const double sigma = std::sqrt(est.sigma_hat_sq);
    const double z = normal_quantile(1.0 - (1.0 - level) / 2.0);
    return {est.center, z * sigma / std::sqrt(static_cast<double>(n)), level, CiMethod::InfinitesimalJackknife,
            infinite_df, sigma, n, {}};
}

/// [h(x0) +- z_{1-alpha/2} sigma_hat / sqrt(n)] on the closed-form predictor.
inline ConfidenceInterval ij_ci(const Dataset& data, const Vector& x0, double level, const NtkKernel& kernel,
                                double ridge, const ShiftFn& mean_shift = zero_shift()) {
    const KrrSolution sol = ij_solution(data, kernel, ridge, mean_shift);
    return ij_interval(ij_variance(sol, x0), data.size(), level);
}

}  // namespace pncuq
