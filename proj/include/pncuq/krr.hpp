#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pncuq/data.hpp"
#include "pncuq/errors.hpp"
#include "pncuq/network.hpp"
#include "pncuq/ntk.hpp"

namespace pncuq {

/// A function evaluated at every row of its argument. Used for the
/// initial-function shift s(.) in shifted kernel ridge regression.
using ShiftFn = std::function<Vector(const Matrix&)>;

inline ShiftFn zero_shift() {
    return [](const Matrix& xs) { return Vector::Zero(xs.rows()).eval(); };
}

/// s_{theta^b}: the network at its initialization snapshot.
inline ShiftFn network_shift(const WideNet& net) {
    auto init = std::make_shared<const WideNet>(net.at_init());
    return [init](const Matrix& xs) { return forward(*init, xs); };
}

/// Pointwise average of several shifts.
inline ShiftFn averaged_shift(std::vector<ShiftFn> parts) {
    require(!parts.empty(), "averaged_shift: nothing to average");
    auto shared = std::make_shared<const std::vector<ShiftFn>>(std::move(parts));
    return [shared](const Matrix& xs) {
        Vector acc = Vector::Zero(xs.rows());
        for (const auto& f : *shared) acc += f(xs);
        return (acc / static_cast<double>(shared->size())).eval();
    };
}

inline ShiftFn difference_shift(ShiftFn a, ShiftFn b) {
    return [a = std::move(a), b = std::move(b)](const Matrix& xs) { return (a(xs) - b(xs)).eval(); };
}

/// Dual-form shifted KRR predictor s(x) + K(x, X) alpha with
/// (K(X, X) + ridge * n * I) alpha = y - s(X).
class KrrSolution {
public:
    KrrSolution(NtkKernel kernel, Matrix train_inputs, Vector targets, double ridge, ShiftFn shift)
        : kernel_(std::move(kernel)), train_inputs_(std::move(train_inputs)), ridge_(ridge), shift_(std::move(shift)) {
        require(train_inputs_.rows() >= 1, "krr: empty dataset");
        require(std::isfinite(ridge_) && ridge_ > 0.0, "krr: ridge must be positive");
        require(targets.size() == train_inputs_.rows(), "krr: targets and inputs differ in length");
        shift_at_train_ = shift_(train_inputs_);
        const GramMatrix g = gram(kernel_, train_inputs_, ridge_);
        factor_ = std::make_shared<const SpdFactor>(g.values);
        const Vector rhs = targets - shift_at_train_;
        dual_coef_ = factor_->solve(rhs);
        const double rhs_norm = rhs.norm();
        residual_ = rhs_norm > 0.0 ? (g.values * dual_coef_ - rhs).norm() / rhs_norm : (g.values * dual_coef_).norm();
        kernel_train_ = g.values;
        kernel_train_.diagonal().array() -= ridge_ * static_cast<double>(train_inputs_.rows());
    }

    [[nodiscard]] double predict(const Vector& x) const {
        require(x.size() == train_inputs_.cols(), "krr predict: dimension mismatch");
        return predict(Matrix(x.transpose()))[0];
    }

    [[nodiscard]] Vector predict(const Matrix& xs) const {
        require(xs.cols() == train_inputs_.cols(), "krr predict: dimension mismatch");
        return shift_(xs) + kernel_.cross(xs, train_inputs_) * dual_coef_;
    }

    /// Predictions at the training inputs, without re-evaluating the kernel.
    [[nodiscard]] Vector fitted() const { return shift_at_train_ + kernel_train_ * dual_coef_; }

    [[nodiscard]] const NtkKernel& kernel() const noexcept { return kernel_; }
    [[nodiscard]] const Matrix& train_inputs() const noexcept { return train_inputs_; }
    [[nodiscard]] const Vector& dual_coef() const noexcept { return dual_coef_; }
    [[nodiscard]] double ridge() const noexcept { return ridge_; }
    [[nodiscard]] const ShiftFn& shift() const noexcept { return shift_; }
    [[nodiscard]] const Vector& shift_at_train() const noexcept { return shift_at_train_; }
    /// K(X, X) without the ridge.
    [[nodiscard]] const Matrix& kernel_train() const noexcept { return kernel_train_; }
    /// Factorization of K(X, X) + ridge * n * I, reused by influence computations.
    [[nodiscard]] const SpdFactor& factor() const noexcept { return *factor_; }
    /// ||(K + ridge n I) alpha - (y - s(X))|| / ||y - s(X)||.
    [[nodiscard]] double relative_residual() const noexcept { return residual_; }
    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(train_inputs_.rows()); }

private:
    NtkKernel kernel_;
    Matrix train_inputs_;
    double ridge_;
    ShiftFn shift_;
    Vector shift_at_train_;
    Matrix kernel_train_;
    std::shared_ptr<const SpdFactor> factor_;
    Vector dual_coef_;
    double residual_ = 0.0;
};

inline KrrSolution solve(const NtkKernel& kernel, const Dataset& data, double ridge, ShiftFn shift = zero_shift()) {
    return {kernel, data.inputs(), data.responses(), ridge, std::move(shift)};
}

inline double predict(const KrrSolution& sol, const Vector& x) { return sol.predict(x); }

/// The infinite-ensemble limit: shifted KRR with the mean initial function.
inline KrrSolution ensemble_closed_form(const NtkKernel& kernel, const Dataset& data, double ridge,
                                        ShiftFn mean_shift = zero_shift()) {
    return solve(kernel, data, ridge, std::move(mean_shift));
}

/// Procedural noise phi(x) = s_init(x) - s_bar(x) + K(x, X)(K + ridge n I)^{-1}(s_bar(X) - s_init(X)),
/// i.e. the gap between one trained network and the infinite ensemble.
inline KrrSolution procedural_noise_closed_form(const NtkKernel& kernel, const Matrix& train_inputs, double ridge,
                                                ShiftFn s_init, ShiftFn s_bar) {
    return {kernel, train_inputs, Vector::Zero(train_inputs.rows()), ridge,
            difference_shift(std::move(s_init), std::move(s_bar))};
}

}  // namespace pncuq
