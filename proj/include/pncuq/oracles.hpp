#pragma once

// Brute-force reference computations used by `selfcheck` and the test suites.
// None of them share code paths with the quantities they check.

#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <random>
#include <utility>

#include <Eigen/Dense>

#include "pncuq/data.hpp"
#include "pncuq/ntk.hpp"
#include "pncuq/rng.hpp"

namespace pncuq::oracle {

struct ReluMoments {
    double sigma = 0.0;        // 2 E[relu(u) relu(v)]
    double sigma_prime = 0.0;  // 2 E[1{u > 0} 1{v > 0}]
};

/// Monte Carlo over (u, v) ~ N(0, [[a, c], [c, b]]).
inline ReluMoments relu_moments_mc(double a, double b, double c, std::size_t samples, const RngStream& rng) {
    auto gen = rng.engine();
    std::normal_distribution<double> normal(0.0, 1.0);
    const double l11 = std::sqrt(a);
    const double l21 = l11 > 0.0 ? c / l11 : 0.0;
    const double l22 = std::sqrt(std::max(0.0, b - l21 * l21));
    double s = 0.0;
    double sp = 0.0;
    for (std::size_t k = 0; k < samples; ++k) {
        const double z1 = normal(gen);
        const double z2 = normal(gen);
        const double u = l11 * z1;
        const double v = l21 * z1 + l22 * z2;
        if (u > 0.0 && v > 0.0) {
            s += u * v;
            sp += 1.0;
        }
    }
    const auto m = static_cast<double>(samples);
    return {2.0 * s / m, 2.0 * sp / m};
}

/// Composite Simpson rule with `intervals` (even) subintervals.
inline double simpson(const std::function<double(double)>& f, double lo, double hi, std::size_t intervals = 20000) {
    if (intervals % 2 == 1) ++intervals;
    const double h = (hi - lo) / static_cast<double>(intervals);
    double acc = f(lo) + f(hi);
    for (std::size_t i = 1; i < intervals; ++i) acc += (i % 2 == 1 ? 4.0 : 2.0) * f(lo + h * static_cast<double>(i));
    return acc * h / 3.0;
}

inline double normal_density(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

inline double t_density(double df, double x) {
    const double logc = std::lgamma((df + 1.0) / 2.0) - std::lgamma(df / 2.0) - 0.5 * std::log(df * std::numbers::pi);
    return std::exp(logc - (df + 1.0) / 2.0 * std::log1p(x * x / df));
}

/// Quantile for p > 1/2 of a symmetric density: bisection on 1/2 + integral_0^q.
inline double symmetric_quantile(const std::function<double(double)>& density, double p, double hi = 100.0) {
    double lo = 0.0;
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double cdf = 0.5 + simpson(density, 0.0, mid, 4000);
        (cdf < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

/// T1 of the mixture (1 - eps) pi_n + eps delta_z: weighted shifted KRR on the
/// n + 1 points, minimizing sum_j w_j (h(p_j) - y_j)^2 + lambda ||h - s_bar||^2.
/// With h = s_bar + sum_j a_j K(., p_j) the normal equations are (W K + lambda I) a = W r.
inline double mixture_krr(const NtkKernel& kernel, const Matrix& xs, const Vector& ys, const Vector& shift_train,
                          const Vector& z_x, double z_y, double shift_z, double lambda, double eps,
                          const Vector& x0, double shift_x0) {
    const Eigen::Index n = xs.rows();
    Matrix pts(n + 1, xs.cols());
    pts.topRows(n) = xs;
    pts.row(n) = z_x.transpose();
    Vector r(n + 1);
    r.head(n) = ys - shift_train;
    r[n] = z_y - shift_z;
    Vector w = Vector::Constant(n + 1, (1.0 - eps) / static_cast<double>(n));
    w[n] = eps;
    const Matrix k = kernel.self(pts);
    Matrix a = w.asDiagonal() * k;
    a.diagonal().array() += lambda;
    const Vector coef = a.partialPivLu().solve(w.cwiseProduct(r));
    return shift_x0 + kernel.cross(Matrix(x0.transpose()), pts).row(0).dot(coef);
}

}  // namespace pncuq::oracle
