#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>

#include "pncuq/errors.hpp"

namespace pncuq {

inline constexpr double infinite_df = std::numeric_limits<double>::infinity();

namespace detail {

inline void check_probability(double p, const char* who) {
    require(std::isfinite(p) && p > 0.0 && p < 1.0, std::string(who) + ": probability must lie in (0, 1)");
}

}  // namespace detail

inline double normal_quantile(double p) {
    detail::check_probability(p, "normal_quantile");
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

inline double normal_cdf(double x) { return boost::math::cdf(boost::math::normal_distribution<double>(), x); }

/// Student t inverse CDF; df = infinite_df gives the standard normal.
inline double t_quantile(double df, double p) {
    detail::check_probability(p, "t_quantile");
    require(df > 0.0, "t_quantile: degrees of freedom must be positive");
    if (std::isinf(df)) return normal_quantile(p);
    return boost::math::quantile(boost::math::students_t_distribution<double>(df), p);
}

inline double t_cdf(double df, double x) {
    require(df > 0.0, "t_cdf: degrees of freedom must be positive");
    if (std::isinf(df)) return normal_cdf(x);
    return boost::math::cdf(boost::math::students_t_distribution<double>(df), x);
}

/// Exact binomial band from Beta quantiles.
inline std::pair<double, double> clopper_pearson(long successes, long trials, double level) {
    require(trials >= 1, "clopper_pearson: trials must be positive");
    require(successes >= 0 && successes <= trials, "clopper_pearson: successes must lie in [0, trials]");
    detail::check_probability(level, "clopper_pearson");
    const double alpha = 1.0 - level;
    const auto x = static_cast<double>(successes);
    const auto n = static_cast<double>(trials);
    const double lo = successes == 0 ? 0.0 : boost::math::ibeta_inv(x, n - x + 1.0, alpha / 2.0);
    const double hi = successes == trials ? 1.0 : boost::math::ibeta_inv(x + 1.0, n - x, 1.0 - alpha / 2.0);
    return {lo, hi};
}

}  // namespace pncuq
