#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "pncuq/data.hpp"

using namespace pncuq;

namespace {

SyntheticSpec sin_sum(std::size_t d, double noise) {
    SyntheticSpec s;
    s.family = SyntheticFamily::SinSum;
    s.dim = d;
    s.noise_sd = noise;
    return s;
}

std::string error_of(const std::string& csv) {
    std::istringstream in(csv);
    try {
        read_csv(in, "t.csv");
    } catch (const ValidationError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(GenerateSynthetic, ZeroNoiseMatchesGroundTruthExactly) {
    const auto spec = sin_sum(2, 0.0);
    const Dataset d = generate_synthetic(spec, 50, {1, 2});
    for (std::size_t i = 0; i < d.size(); ++i) {
        const Eigen::Index r = static_cast<Eigen::Index>(i);
        EXPECT_EQ(d.responses()[r], std::sin(d.inputs()(r, 0)) + std::sin(d.inputs()(r, 1)));
    }
}

TEST(GenerateSynthetic, InputsInsideBox) {
    const Dataset d = generate_synthetic(sin_sum(3, 0.001), 500, {4, 4});
    EXPECT_GE(d.inputs().minCoeff(), 0.0);
    EXPECT_LE(d.inputs().maxCoeff(), 0.2);
}

TEST(GenerateSynthetic, SampleMeanNearPopulationMean) {
    // Population mean of g* by brute-force Monte Carlo over uniform inputs.
    std::mt19937_64 gen(99);
    std::uniform_real_distribution<double> u(0.0, 0.2);
    double pop = 0.0;
    const int draws = 1'000'000;
    for (int k = 0; k < draws; ++k) pop += std::sin(u(gen)) + std::sin(u(gen));
    pop /= draws;

    const Dataset d = generate_synthetic(sin_sum(2, 0.001), 128, {7, 1});
    const double mean = d.responses().mean();
    // sd of g*(X) is at most half the range of g* on the box.
    const double g_range = 2.0 * std::sin(0.2);
    const double tol = 4.0 * (0.001 / std::sqrt(128.0) + 0.5 * g_range / std::sqrt(128.0));
    EXPECT_NEAR(mean, pop, tol);
}

TEST(GenerateSynthetic, XSinXAtConstantPoint) {
    SyntheticSpec s = sin_sum(16, 0.0);
    s.family = SyntheticFamily::XSinX;
    EXPECT_NEAR(ground_truth(s, Vector::Constant(16, 0.1)), 16 * 0.1 * std::sin(0.1), 1e-15);
}

TEST(GenerateSynthetic, DeterministicPerStream) {
    const auto spec = sin_sum(2, 0.001);
    EXPECT_EQ(generate_synthetic(spec, 20, {3, 9}), generate_synthetic(spec, 20, {3, 9}));
    EXPECT_FALSE(generate_synthetic(spec, 20, {3, 9}) == generate_synthetic(spec, 20, {3, 10}));
}

TEST(GroundTruth, ClosedForms) {
    EXPECT_EQ(ground_truth(sin_sum(2, 0), Vector::Zero(2)), 0.0);
    EXPECT_NEAR(ground_truth(sin_sum(4, 0), Vector::Constant(4, 0.1)), 0.39933, 1e-5);
    SyntheticSpec s = sin_sum(2, 0);
    s.family = SyntheticFamily::XSinX;
    EXPECT_DOUBLE_EQ(ground_truth(s, Vector::Constant(2, 0.2)), 2 * 0.2 * std::sin(0.2));
}

TEST(GroundTruth, DimensionMismatch) {
    EXPECT_THROW(ground_truth(sin_sum(2, 0), Vector::Zero(3)), ValidationError);
}

TEST(Dataset, RejectsEmptyAndNonFinite) {
    EXPECT_THROW(Dataset(Matrix(0, 2), Vector(0)), ValidationError);
    Matrix x(1, 1);
    x << std::nan("");
    EXPECT_THROW(Dataset(x, Vector::Zero(1)), ValidationError);
    EXPECT_THROW(Dataset(Matrix::Zero(2, 1), Vector::Zero(3)), ValidationError);
}

TEST(LoadCsv, TwoRows) {
    std::istringstream in("x1,y\n0.1,0.5\n0.2,0.7\n");
    const Dataset d = read_csv(in);
    ASSERT_EQ(d.size(), 2u);
    ASSERT_EQ(d.dim(), 1u);
    EXPECT_EQ(d.inputs()(1, 0), 0.2);
    EXPECT_EQ(d.responses()[0], 0.5);
}

TEST(LoadCsv, Errors) {
    EXPECT_NE(error_of("x1,y\n").find("empty dataset"), std::string::npos);
    EXPECT_NE(error_of("x1,y,x2\n1,2,3\n").find("response column must be last"), std::string::npos);
    const auto bad = error_of("x1,x2,y\n1,2,3\n4,abc,6\n");
    EXPECT_NE(bad.find("row 3"), std::string::npos);
    EXPECT_NE(bad.find("column 2"), std::string::npos);
    EXPECT_NE(error_of("x1,y\n1,inf\n").find("non-finite"), std::string::npos);
    EXPECT_NE(error_of("a,y\n1,2\n").find("header"), std::string::npos);
}

TEST(LoadCsv, MissingFileNamesPath) {
    try {
        load_csv("/no/such/file.csv");
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("/no/such/file.csv"), std::string::npos);
    }
}

TEST(LoadCsv, RoundTripIsBitExact) {
    const Dataset d = generate_synthetic(sin_sum(3, 0.01), 17, {5, 5});
    std::stringstream buf;
    write_csv(buf, d);
    EXPECT_EQ(read_csv(buf), d);
}

TEST(SplitBatches, ExactDivision) {
    const Dataset d = generate_synthetic(sin_sum(2, 0), 8, {1, 1});
    const auto s = split_batches(d, 4, {1, 2});
    ASSERT_EQ(s.batches.size(), 4u);
    std::set<std::size_t> rows;
    for (const auto& idx : s.row_indices) {
        EXPECT_EQ(idx.size(), 2u);
        rows.insert(idx.begin(), idx.end());
    }
    EXPECT_EQ(rows.size(), 8u);
    EXPECT_EQ(s.dropped_rows, 0u);
}

TEST(SplitBatches, RemainderDropped) {
    const Dataset d = generate_synthetic(sin_sum(2, 0), 9, {1, 1});
    const auto s = split_batches(d, 4, {1, 2});
    std::set<std::size_t> rows;
    for (const auto& idx : s.row_indices) {
        EXPECT_EQ(idx.size(), 2u);
        rows.insert(idx.begin(), idx.end());
    }
    EXPECT_EQ(rows.size(), 8u);
    EXPECT_EQ(s.dropped_rows, 1u);
}

TEST(SplitBatches, BatchesMatchSelectedRows) {
    const Dataset d = generate_synthetic(sin_sum(2, 0.01), 12, {1, 1});
    const auto s = split_batches(d, 3, {8, 2});
    for (std::size_t b = 0; b < 3; ++b) EXPECT_EQ(s.batches[b], d.select(s.row_indices[b]));
}

TEST(SplitBatches, TooFewRows) {
    const Dataset d = generate_synthetic(sin_sum(2, 0), 3, {1, 1});
    EXPECT_THROW(split_batches(d, 4, {1, 2}), ValidationError);
    EXPECT_THROW(split_batches(d, 1, {1, 2}), ValidationError);
}

TEST(Bootstrap, SingleRow) {
    const Dataset d = generate_synthetic(sin_sum(2, 0.01), 1, {1, 1});
    for (std::uint64_t k = 0; k < 5; ++k) EXPECT_EQ(bootstrap_resample(d, {k, 3}), d);
}

TEST(Bootstrap, DistinctFractionNearOneMinusInverseE) {
    const std::size_t n = 1000;
    double frac = 0.0;
    for (std::uint64_t r = 0; r < 100; ++r) {
        const auto idx = bootstrap_indices(n, {r, 77});
        frac += static_cast<double>(std::set<std::size_t>(idx.begin(), idx.end()).size()) / n;
    }
    EXPECT_NEAR(frac / 100.0, 1.0 - std::exp(-1.0), 0.05);
}

TEST(Bootstrap, RowsComeFromInput) {
    const Dataset d = generate_synthetic(sin_sum(2, 0.01), 30, {1, 1});
    const auto idx = bootstrap_indices(d.size(), {2, 2});
    const Dataset r = d.select(idx);
    EXPECT_EQ(r, bootstrap_resample(d, {2, 2}));
    for (std::size_t i = 0; i < idx.size(); ++i) EXPECT_LT(idx[i], d.size());
}

TEST(SimulateReal, TinyNoise) {
    const Dataset d = generate_synthetic(sin_sum(2, 0.0), 100, {1, 1});
    const Dataset s = simulate_real(d, 1e-12, {3, 3});
    EXPECT_EQ(s.inputs(), d.inputs());
    EXPECT_LT((s.responses() - d.responses()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(SimulateReal, MeanPerturbationNearZero) {
    const Dataset d = generate_synthetic(sin_sum(2, 0.0), 10000, {1, 1});
    const Dataset s = simulate_real(d, 0.5, {3, 3});
    EXPECT_NEAR((s.responses() - d.responses()).mean(), 0.0, 4 * 0.5 / 100.0);
}

TEST(SimulateReal, StreamsDifferAndNoiseMustBePositive) {
    const Dataset d = generate_synthetic(sin_sum(2, 0.0), 10, {1, 1});
    EXPECT_NE(simulate_real(d, 0.1, {3, 3}).responses(), simulate_real(d, 0.1, {3, 4}).responses());
    EXPECT_THROW(simulate_real(d, 0.0, {3, 3}), ValidationError);
}

TEST(RngStream, DerivedStreamsAreDistinctAndStable) {
    const RngStream s{11, 0};
    EXPECT_EQ(s.derive(3), s.derive(3));
    EXPECT_FALSE(s.derive(3) == s.derive(4));
    auto a = s.derive(3).engine();
    auto b = s.derive(3).engine();
    EXPECT_EQ(a(), b());
}
