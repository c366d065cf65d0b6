#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pncuq/data.hpp"
#include "pncuq/inference.hpp"
#include "pncuq/krr.hpp"
#include "pncuq/ntk.hpp"
#include "pncuq/oracles.hpp"
#include "pncuq/quantiles.hpp"

using namespace pncuq;

namespace {

Dataset synthetic(std::size_t n, std::uint64_t seed, double noise = 0.001) {
    SyntheticSpec s;
    s.noise_sd = noise;
    return generate_synthetic(s, n, {seed, 1});
}

PncPipeline tiny_pipeline() {
    PncPipeline p;
    p.net.input_dim = 2;
    p.net.width = 256;
    p.train.learning_rate = 10.0;
    p.train.epochs = 50;
    return p;
}

const Vector x0 = Vector::Constant(2, 0.1);

}  // namespace

TEST(Batching, TwoPointAlgebra) {
    const double a = 0.3;
    const double b = 0.1;
    const BatchingEstimate est = batching_from_predictions({a, b});
    EXPECT_DOUBLE_EQ(est.psi, 0.2);
    EXPECT_NEAR(est.s * est.s, (a - b) * (a - b) / 2, 1e-16);
    const ConfidenceInterval ci = est.interval(0.95);
    EXPECT_NEAR(ci.half_width, t_quantile(1, 0.975) * std::abs(a - b) / 2, 1e-14);
    EXPECT_EQ(ci.df, 1.0);
    EXPECT_EQ(ci.method, CiMethod::Batching);
}

TEST(Batching, EqualPredictionsGiveZeroWidth) {
    const ConfidenceInterval ci = batching_from_predictions({0.2, 0.2, 0.2, 0.2}).interval(0.9);
    EXPECT_EQ(ci.half_width, 0.0);
    EXPECT_TRUE(ci.contains(0.2));
}

TEST(Batching, PermutationInvariant) {
    std::vector<double> v{0.19, 0.21, 0.205, 0.198};
    const BatchingEstimate a = batching_from_predictions(v);
    std::reverse(v.begin(), v.end());
    const BatchingEstimate b = batching_from_predictions(v);
    EXPECT_NEAR(a.psi, b.psi, 1e-16);
    EXPECT_NEAR(a.s, b.s, 1e-16);
}

TEST(Batching, EndToEndAndErrors) {
    const Dataset d = synthetic(16, 1);
    const BatchingEstimate est = batching_estimate(d, x0, 4, tiny_pipeline(), {1, 1});
    ASSERT_EQ(est.predictions.size(), 4u);
    const ConfidenceInterval ci95 = est.interval(0.95);
    const ConfidenceInterval ci90 = est.interval(0.90);
    EXPECT_LE(ci95.lower(), ci90.lower());
    EXPECT_GE(ci95.upper(), ci90.upper());
    EXPECT_NEAR(ci95.center, est.psi, 0.0);
    EXPECT_THROW(batching_estimate(synthetic(7, 1), x0, 4, tiny_pipeline(), {1, 1}), ValidationError);
    EXPECT_THROW(batching_estimate(d, x0, 1, tiny_pipeline(), {1, 1}), ValidationError);
    EXPECT_THROW(est.interval(1.0), ValidationError);
}

TEST(Batching, DivergenceNamesBatch) {
    PncPipeline p = tiny_pipeline();
    p.train.learning_rate = 1e6;
    try {
        batching_ci(synthetic(8, 1), x0, 0.95, 2, p, {1, 1});
        FAIL();
    } catch (const DivergenceError& e) {
        EXPECT_NE(std::string(e.what()).find("batch 0"), std::string::npos);
    }
}

TEST(CheapBootstrap, SingleReplicate) {
    const CheapBootstrapEstimate est = cheap_bootstrap_from_predictions(0.2, {0.25});
    const ConfidenceInterval ci = est.interval(0.95);
    EXPECT_NEAR(ci.half_width, 12.706 * 0.05, 1e-3 * 0.05);
    EXPECT_EQ(ci.df, 1.0);
}

TEST(CheapBootstrap, IdenticalReplicatesGiveZeroWidth) {
    EXPECT_EQ(cheap_bootstrap_from_predictions(0.2, {0.2, 0.2, 0.2}).interval(0.95).half_width, 0.0);
    EXPECT_THROW(cheap_bootstrap_from_predictions(0.2, {}), ValidationError);
}

TEST(CheapBootstrap, ScaleHasNoSqrtR) {
    const CheapBootstrapEstimate est = cheap_bootstrap_from_predictions(0.0, {0.1, -0.1, 0.1, -0.1});
    EXPECT_NEAR(est.s, 0.1, 1e-16);
    EXPECT_NEAR(est.interval(0.95).half_width, t_quantile(4, 0.975) * 0.1, 1e-15);
}

TEST(CheapBootstrap, DeterministicGivenStream) {
    const Dataset d = synthetic(8, 2);
    const auto a = cheap_bootstrap_estimate(d, x0, 2, tiny_pipeline(), {3, 3});
    const auto b = cheap_bootstrap_estimate(d, x0, 2, tiny_pipeline(), {3, 3});
    EXPECT_EQ(a.psi, b.psi);
    EXPECT_EQ(a.s, b.s);
    EXPECT_EQ(a.replicates, b.replicates);
    const auto c = cheap_bootstrap_estimate(d, x0, 2, tiny_pipeline(), {3, 4});
    EXPECT_NE(a.replicates, c.replicates);
}

TEST(Interval, JsonFields) {
    const auto j = to_json(batching_from_predictions({0.1, 0.2}).interval(0.95));
    for (const char* key : {"method", "level", "center", "half_width", "df", "scale", "replications"}) {
        EXPECT_TRUE(j.contains(key)) << key;
    }
    const auto ij = to_json(ij_interval({0.1, 0.04, Vector::Zero(2)}, 2, 0.95));
    EXPECT_EQ(ij["df"], "inf");
}

TEST(Ij, ResidualTermVanishesForZeroResidualPoint) {
    const Dataset d = synthetic(12, 3);
    const KrrSolution sol = ij_solution(d, NtkKernel::analytic(1), 1e-3, zero_shift());
    const Vector z = synthetic(1, 9).inputs().row(0).transpose();
    const double if_z = ij_influence(sol, z, sol.predict(z), x0);
    const Vector w = sol.factor().solve(kernel_vector(sol.kernel(), x0, d.inputs()));
    EXPECT_NEAR(if_z, w.dot(sol.fitted()) - sol.predict(x0), 1e-12);
}

TEST(Ij, InfluenceMatchesMixtureFiniteDifference) {
    for (std::size_t n : {8u, 32u}) {
        const Dataset d = synthetic(n, 4 + n);
        const double lambda = 1e-2;
        const NtkKernel k = NtkKernel::analytic(1);
        const KrrSolution sol = ij_solution(d, k, lambda, zero_shift());
        const Vector zx = synthetic(1, 50 + n).inputs().row(0).transpose();
        const double zy = 2 * std::sin(0.1) + 0.05;
        const double influence = ij_influence(sol, zx, zy, x0);
        const double t0 = sol.predict(x0);
        std::vector<double> err;
        for (double eps : {1e-3, 1e-4}) {
            const double te = oracle::mixture_krr(k, d.inputs(), d.responses(), Vector::Zero(n), zx, zy, 0.0, lambda,
                                                  eps, x0, 0.0);
            err.push_back(std::abs((te - t0) / eps - influence));
        }
        EXPECT_LE(err[1], 1e-3 * std::abs(influence)) << "n=" << n;
        const double ratio = err[0] / err[1];
        EXPECT_GE(ratio, 5.0) << "n=" << n;
        EXPECT_LE(ratio, 20.0) << "n=" << n;
    }
}

TEST(Ij, StableFormMatchesDirectInfluence) {
    const Dataset d = synthetic(16, 5);
    const KrrSolution sol = ij_solution(d, NtkKernel::analytic(1), 1e-4, zero_shift());
    const IjEstimate est = ij_variance(sol, x0);
    ASSERT_EQ(est.per_point_if.size(), 16);
    double sq = 0.0;
    for (Eigen::Index i = 0; i < 16; ++i) {
        const double direct = ij_influence(sol, d.inputs().row(i).transpose(), d.responses()[i], x0);
        EXPECT_NEAR(est.per_point_if[i], direct, 1e-8 * std::max(1.0, std::abs(direct)));
        sq += direct * direct;
    }
    EXPECT_NEAR(est.sigma_hat_sq, sq / 16, 1e-8 * sq);
}

TEST(Ij, SinglePoint) {
    const Dataset d = synthetic(1, 6);
    const KrrSolution sol = ij_solution(d, NtkKernel::analytic(1), 1e-3, zero_shift());
    const IjEstimate est = ij_variance(sol, x0);
    const double direct = ij_influence(sol, d.inputs().row(0).transpose(), d.responses()[0], x0);
    EXPECT_NEAR(est.sigma_hat_sq, direct * direct, 1e-10 * std::max(1.0, direct * direct));
}

TEST(Ij, DuplicationInvariance) {
    const Dataset d = synthetic(10, 7);
    Matrix xs(20, 2);
    xs << d.inputs(), d.inputs();
    Vector ys(20);
    ys << d.responses(), d.responses();
    const Dataset dd(xs, ys);
    const double lambda0 = 1e-4;
    const NtkKernel k = NtkKernel::analytic(1);
    const IjEstimate a = ij_variance(ij_solution(d, k, lambda0, zero_shift()), x0);
    const IjEstimate b = ij_variance(ij_solution(dd, k, lambda0, zero_shift()), x0);
    EXPECT_NEAR(a.center, b.center, 1e-10);
    EXPECT_NEAR(a.sigma_hat_sq, b.sigma_hat_sq, 1e-8);
}

TEST(Ij, BoundedInfluenceAtLargeRidge) {
    const Dataset d = synthetic(12, 8, 0.05);
    const double lambda0 = 10.0;
    const NtkKernel k = NtkKernel::analytic(1);
    const KrrSolution sol = ij_solution(d, k, lambda0, zero_shift());
    const Vector residual = d.responses() - sol.fitted();
    const double max_k = k.self(d.inputs()).cwiseAbs().maxCoeff();
    const double max_g = std::max(sol.fitted().cwiseAbs().maxCoeff(), std::abs(sol.predict(x0)));
    const double bound = 2.0 / lambda0 * residual.cwiseAbs().maxCoeff() * std::max(max_k, k(x0, x0)) + 2 * max_g;
    const IjEstimate est = ij_variance(sol, x0);
    EXPECT_LE(est.per_point_if.cwiseAbs().maxCoeff(), bound);
}

TEST(Ij, IntervalShape) {
    const IjEstimate est{0.2, 0.04, Vector::Zero(4)};
    const ConfidenceInterval ci = ij_interval(est, 100, 0.95);
    EXPECT_NEAR(ci.half_width, normal_quantile(0.975) * 0.2 / 10.0, 1e-15);
    EXPECT_TRUE(std::isinf(ci.df));
    const ConfidenceInterval ci90 = ij_interval(est, 100, 0.90);
    EXPECT_LT(ci90.half_width, ci.half_width);
}

TEST(Quantiles, NormalMatchesIntegratedDensity) {
    EXPECT_NEAR(t_quantile(infinite_df, 0.975), oracle::symmetric_quantile(oracle::normal_density, 0.975, 12.0), 1e-4);
    EXPECT_NEAR(t_quantile(infinite_df, 0.975), 1.95996, 1e-4);
}

TEST(Quantiles, CauchyClosedForm) {
    EXPECT_NEAR(t_quantile(1, 0.975), std::tan(std::numbers::pi * 0.475), 1e-9);
    EXPECT_NEAR(t_quantile(1, 0.975), 12.7062, 1e-3);
}

TEST(Quantiles, StudentMatchesIntegratedDensity) {
    for (double df : {2.0, 3.0, 4.0, 10.0}) {
        const auto dens = [df](double x) { return oracle::t_density(df, x); };
        EXPECT_NEAR(t_quantile(df, 0.975), oracle::symmetric_quantile(dens, 0.975, 200.0), 1e-3) << "df=" << df;
    }
}

TEST(Quantiles, SymmetryMonotonicityAndLimit) {
    for (double df : {1.0, 3.0, 30.0, infinite_df}) {
        EXPECT_NEAR(t_quantile(df, 0.5), 0.0, 1e-12);
        double prev = -std::numeric_limits<double>::infinity();
        for (double p = 0.05; p < 1.0; p += 0.05) {
            const double q = t_quantile(df, p);
            EXPECT_GT(q, prev);
            prev = q;
        }
    }
    EXPECT_LT(std::abs(t_quantile(200, 0.975) - 1.96), 0.02);
    EXPECT_THROW(t_quantile(3, 0.0), ValidationError);
    EXPECT_THROW(t_quantile(3, 1.0), ValidationError);
}

TEST(ClopperPearson, TableValues) {
    const auto [lo, hi] = clopper_pearson(95, 100, 0.95);
    EXPECT_NEAR(lo, 0.887, 1e-3);
    EXPECT_NEAR(hi, 0.984, 1e-3);
    const auto [lo1, hi1] = clopper_pearson(100, 100, 0.95);
    EXPECT_NEAR(lo1, 0.964, 1e-3);
    EXPECT_EQ(hi1, 1.0);
    EXPECT_EQ(clopper_pearson(0, 1, 0.95).first, 0.0);
    EXPECT_THROW(clopper_pearson(3, 2, 0.95), ValidationError);
    EXPECT_THROW(clopper_pearson(0, 0, 0.95), ValidationError);
}

TEST(ClopperPearson, MatchesBinomialTailDefinition) {
    // lo solves P(X >= x | lo) = alpha/2, summed directly.
    const long n = 40;
    const long x = 31;
    const auto [lo, hi] = clopper_pearson(x, n, 0.9);
    auto tail_ge = [&](double p) {
        double s = 0.0;
        for (long k = x; k <= n; ++k) {
            s += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) + k * std::log(p) +
                          (n - k) * std::log1p(-p));
        }
        return s;
    };
    auto tail_le = [&](double p) {
        double s = 0.0;
        for (long k = 0; k <= x; ++k) {
            s += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) + k * std::log(p) +
                          (n - k) * std::log1p(-p));
        }
        return s;
    };
    EXPECT_NEAR(tail_ge(lo), 0.05, 1e-9);
    EXPECT_NEAR(tail_le(hi), 0.05, 1e-9);
}
