#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "pncuq/data.hpp"
#include "pncuq/errors.hpp"
#include "pncuq/network.hpp"

namespace pncuq {

namespace detail {

/// Correlation of a 2x2 Gaussian covariance [[a, c], [c, b]], clipped to [-1, 1].
/// Returns nullopt when a marginal is degenerate (ab = 0).
inline std::optional<double> relu_correlation(double a, double b, double c) {
    require(a >= 0.0 && b >= 0.0, "relu expectation: variances must be nonnegative");
    const double ab = a * b;
    require(c * c <= ab * (1.0 + 1e-9), "relu expectation: covariance is not positive semidefinite");
    if (ab == 0.0) return std::nullopt;
    return std::clamp(c / std::sqrt(ab), -1.0, 1.0);
}

}  // namespace detail

/// c_sigma * E[relu(u) relu(v)] for (u, v) ~ N(0, [[a, c], [c, b]]), c_sigma = 2
/// (first-order arc-cosine kernel).
inline double relu_sigma(double a, double b, double c) {
    const auto rho = detail::relu_correlation(a, b, c);
    if (!rho) return 0.0;
    const double r = *rho;
    return std::sqrt(a * b) / std::numbers::pi * (std::sqrt(1.0 - r * r) + r * (std::numbers::pi - std::acos(r)));
}

/// c_sigma * E[relu'(u) relu'(v)] (zeroth-order arc-cosine kernel).
inline double relu_sigma_prime(double a, double b, double c) {
    const auto rho = detail::relu_correlation(a, b, c);
    if (!rho) return 0.0;
    return (std::numbers::pi - std::acos(*rho)) / std::numbers::pi;
}

/// Population NTK of an infinitely wide bias-free ReLU network with `depth`
/// hidden layers, via the layer recursion
///   K^(1) = Sigma^(0),  K^(l+1) = K^(l) Sigma'^(l) + Sigma^(l).
inline double analytic_ntk_value(std::size_t depth, const Eigen::Ref<const Vector>& x,
                                 const Eigen::Ref<const Vector>& x2) {
    require(x.size() == x2.size(), "analytic_ntk: dimension mismatch");
    double sxx = x.squaredNorm();
    double syy = x2.squaredNorm();
    double sxy = x.dot(x2);
    double k = sxy;
    for (std::size_t l = 0; l < depth; ++l) {
        const double next_xy = relu_sigma(sxx, syy, sxy);
        const double deriv = relu_sigma_prime(sxx, syy, sxy);
        k = k * deriv + next_xy;
        // Diagonal entries propagate unchanged: relu_sigma(a, a, a) = a.
        sxy = next_xy;
    }
    return k;
}

enum class KernelMode { Analytic, Empirical };

/// Kernel evaluator. Analytic mode depends only on depth; empirical mode
/// holds one network and uses its Jacobian inner products.
class NtkKernel {
public:
    static NtkKernel analytic(std::size_t depth) {
        require(depth >= 1, "depth must be positive");
        NtkKernel k;
        k.depth_ = depth;
        return k;
    }

    static NtkKernel empirical(WideNet net) {
        NtkKernel k;
        k.depth_ = net.config().depth;
        k.net_ = std::make_shared<const WideNet>(std::move(net));
        return k;
    }

    [[nodiscard]] KernelMode mode() const noexcept { return net_ ? KernelMode::Empirical : KernelMode::Analytic; }
    [[nodiscard]] std::size_t depth() const noexcept { return depth_; }
    [[nodiscard]] const WideNet* network() const noexcept { return net_.get(); }

    [[nodiscard]] double operator()(const Vector& x, const Vector& x2) const {
        return cross(Matrix(x.transpose()), Matrix(x2.transpose()))(0, 0);
    }

    /// Kernel values between the rows of `a` and the rows of `b`.
    [[nodiscard]] Matrix cross(const Matrix& a, const Matrix& b) const {
        require(a.cols() == b.cols(), "kernel: dimension mismatch");
        if (net_) {
            const Matrix ja = jacobian(*net_, a);
            const Matrix jb = jacobian(*net_, b);
            return ja * jb.transpose();
        }
        Matrix out(a.rows(), b.rows());
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            for (Eigen::Index j = 0; j < b.rows(); ++j) {
                out(i, j) = analytic_ntk_value(depth_, a.row(i).transpose(), b.row(j).transpose());
            }
        }
        return out;
    }

    /// Symmetric kernel matrix of the rows of `xs` (exactly symmetric).
    [[nodiscard]] Matrix self(const Matrix& xs) const {
        if (net_) {
            const Matrix j = jacobian(*net_, xs);
            Matrix k = j * j.transpose();
            return 0.5 * (k + k.transpose());
        }
        const Eigen::Index n = xs.rows();
        Matrix out(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j <= i; ++j) {
                out(i, j) = out(j, i) = analytic_ntk_value(depth_, xs.row(i).transpose(), xs.row(j).transpose());
            }
        }
        return out;
    }

private:
    NtkKernel() = default;

    std::size_t depth_ = 1;
    std::shared_ptr<const WideNet> net_;
};

inline double analytic_ntk(const NtkKernel& kernel, const Vector& x, const Vector& x2) {
    require(kernel.mode() == KernelMode::Analytic, "analytic_ntk needs an analytic kernel");
    return analytic_ntk_value(kernel.depth(), x, x2);
}

inline double empirical_ntk(const NtkKernel& kernel, const Vector& x, const Vector& x2) {
    require(kernel.mode() == KernelMode::Empirical, "empirical_ntk needs an empirical kernel");
    return kernel(x, x2);
}

/// K(X, X) + ridge * n * I.
struct GramMatrix {
    Matrix values;
    double ridge = 0.0;
};

inline GramMatrix gram(const NtkKernel& kernel, const Matrix& xs, double ridge) {
    require(xs.rows() >= 1, "gram: need at least one point");
    require(std::isfinite(ridge) && ridge >= 0.0, "gram: ridge must be nonnegative");
    GramMatrix g{kernel.self(xs), ridge};
    if (!g.values.allFinite()) throw NumericalError("gram: non-finite kernel value");
    g.values.diagonal().array() += ridge * static_cast<double>(xs.rows());
    return g;
}

inline Vector kernel_vector(const NtkKernel& kernel, const Vector& x, const Matrix& xs) {
    require(xs.rows() >= 1, "kernel_vector: need at least one point");
    Vector k = kernel.cross(xs, Matrix(x.transpose())).col(0);
    if (!k.allFinite()) throw NumericalError("kernel_vector: non-finite kernel value");
    return k;
}

enum class FactorMethod { Cholesky, PivotedLdlt, Jittered };

inline const char* to_string(FactorMethod m) {
    switch (m) {
        case FactorMethod::Cholesky: return "cholesky";
        case FactorMethod::PivotedLdlt: return "pivoted_ldlt";
        case FactorMethod::Jittered: return "jittered_cholesky";
    }
    return "?";
}

/// Factorization of a symmetric PSD matrix: Cholesky, then pivoted LDL^T,
/// then one jitter of 1e-12 * trace / n.
class SpdFactor {
public:
    explicit SpdFactor(const Matrix& a) : size_(a.rows()) {
        require(a.rows() == a.cols() && a.rows() >= 1, "factor: matrix must be square and nonempty");
        const double max_diag = a.diagonal().cwiseAbs().maxCoeff();
        const double tol = static_cast<double>(a.rows()) * std::numeric_limits<double>::epsilon() * max_diag;

        Eigen::LLT<Matrix> llt(a);
        if (llt.info() == Eigen::Success && llt.matrixLLT().diagonal().array().square().minCoeff() > tol) {
            method_ = FactorMethod::Cholesky;
            llt_ = std::move(llt);
            return;
        }
        Eigen::LDLT<Matrix> ldlt(a);
        if (ldlt.info() == Eigen::Success && ldlt.vectorD().minCoeff() > tol) {
            method_ = FactorMethod::PivotedLdlt;
            ldlt_ = std::move(ldlt);
            std::clog << "warning: Cholesky failed, using pivoted LDL^T\n";
            return;
        }
        jitter_ = 1e-12 * a.trace() / static_cast<double>(a.rows());
        Matrix shifted = a;
        shifted.diagonal().array() += jitter_;
        Eigen::LLT<Matrix> retry(shifted);
        if (retry.info() != Eigen::Success || !(jitter_ > 0.0)) {
            throw NumericalError("factorization failed after jitter escalation");
        }
        method_ = FactorMethod::Jittered;
        llt_ = std::move(retry);
        std::clog << "warning: matrix is numerically singular, added jitter " << jitter_ << '\n';
    }

    [[nodiscard]] Vector solve(const Vector& b) const {
        require(b.size() == size_, "factor: right-hand side has wrong length");
        return method_ == FactorMethod::PivotedLdlt ? Vector(ldlt_.solve(b)) : Vector(llt_.solve(b));
    }

    [[nodiscard]] Matrix solve(const Matrix& b) const {
        require(b.rows() == size_, "factor: right-hand side has wrong length");
        return method_ == FactorMethod::PivotedLdlt ? Matrix(ldlt_.solve(b)) : Matrix(llt_.solve(b));
    }

    [[nodiscard]] FactorMethod method() const noexcept { return method_; }
    [[nodiscard]] double jitter() const noexcept { return jitter_; }
    [[nodiscard]] Eigen::Index size() const noexcept { return size_; }

private:
    Eigen::Index size_;
    FactorMethod method_ = FactorMethod::Cholesky;
    double jitter_ = 0.0;
    Eigen::LLT<Matrix> llt_;
    Eigen::LDLT<Matrix> ldlt_;
};

/// Dense dump: uint64 rows, uint64 cols, then rows*cols float64 in row-major
/// order, all little-endian (host order on the supported platforms).
inline void write_dense_binary(std::ostream& out, const Matrix& m) {
    const auto rows = static_cast<std::uint64_t>(m.rows());
    const auto cols = static_cast<std::uint64_t>(m.cols());
    out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
    out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    out.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(sizeof(double) * rm.size()));
}

inline Matrix read_dense_binary(std::istream& in) {
    std::uint64_t rows = 0;
    std::uint64_t cols = 0;
    in.read(reinterpret_cast<char*>(&rows), sizeof rows);
    in.read(reinterpret_cast<char*>(&cols), sizeof cols);
    if (!in) throw ValidationError("dense binary: truncated header");
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(static_cast<Eigen::Index>(rows),
                                                                              static_cast<Eigen::Index>(cols));
    in.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(sizeof(double) * rm.size()));
    if (!in) throw ValidationError("dense binary: truncated payload");
    return rm;
}

inline void save_gram(const std::string& path, const GramMatrix& g) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path);
    write_dense_binary(out, g.values);
}

}  // namespace pncuq
