#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "pncuq/errors.hpp"
#include "pncuq/rng.hpp"

namespace pncuq {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Paired samples (x_i, y_i): row i of `inputs` goes with `responses[i]`.
class Dataset {
public:
    Dataset(Matrix inputs, Vector responses) : inputs_(std::move(inputs)), responses_(std::move(responses)) {
        require(inputs_.rows() >= 1, "empty dataset");
        require(inputs_.cols() >= 1, "dataset needs at least one input column");
        require(inputs_.rows() == responses_.size(), "inputs and responses differ in length");
        require(inputs_.allFinite() && responses_.allFinite(), "dataset contains non-finite values");
    }

    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(inputs_.rows()); }
    [[nodiscard]] std::size_t dim() const noexcept { return static_cast<std::size_t>(inputs_.cols()); }
    [[nodiscard]] const Matrix& inputs() const noexcept { return inputs_; }
    [[nodiscard]] const Vector& responses() const noexcept { return responses_; }

    /// Rows picked by index, in the given order; repeats allowed.
    [[nodiscard]] Dataset select(std::span<const std::size_t> rows) const {
        require(!rows.empty(), "empty dataset");
        Matrix x(static_cast<Eigen::Index>(rows.size()), inputs_.cols());
        Vector y(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t k = 0; k < rows.size(); ++k) {
            require(rows[k] < size(), "row index out of range");
            const auto r = static_cast<Eigen::Index>(rows[k]);
            x.row(static_cast<Eigen::Index>(k)) = inputs_.row(r);
            y[static_cast<Eigen::Index>(k)] = responses_[r];
        }
        return {std::move(x), std::move(y)};
    }

    [[nodiscard]] Dataset with_responses(Vector y) const { return {inputs_, std::move(y)}; }

    friend bool operator==(const Dataset& a, const Dataset& b) {
        return a.inputs_.rows() == b.inputs_.rows() && a.inputs_.cols() == b.inputs_.cols() &&
               a.inputs_ == b.inputs_ && a.responses_ == b.responses_;
    }

private:
    Matrix inputs_;
    Vector responses_;
};

enum class SyntheticFamily { SinSum, XSinX };

/// Data-generating law: X ~ Unif([0, box_high]^d), Y = g*(X) + N(0, noise_sd^2).
struct SyntheticSpec {
    SyntheticFamily family = SyntheticFamily::SinSum;
    std::size_t dim = 2;
    double noise_sd = 0.001;
    double box_high = 0.2;

    void validate() const {
        require(dim >= 1, "synthetic dim must be positive");
        require(std::isfinite(noise_sd) && noise_sd >= 0.0, "noise_sd must be nonnegative");
        require(std::isfinite(box_high) && box_high > 0.0, "box_high must be positive");
    }
};

/// Noise-free regression function g*(x).
inline double ground_truth(const SyntheticSpec& spec, std::span<const double> x) {
    require(x.size() == spec.dim, "ground_truth: dimension mismatch (expected " +
                                      std::to_string(spec.dim) + ", got " + std::to_string(x.size()) + ")");
    double sum = 0.0;
    for (double v : x) {
        sum += spec.family == SyntheticFamily::SinSum ? std::sin(v) : v * std::sin(v);
    }
    return sum;
}

inline double ground_truth(const SyntheticSpec& spec, const Vector& x) {
    return ground_truth(spec, std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
}

inline Dataset generate_synthetic(const SyntheticSpec& spec, std::size_t n, const RngStream& rng) {
    spec.validate();
    require(n >= 1, "generate_synthetic: n must be positive");
    auto gen = rng.engine();
    std::uniform_real_distribution<double> unif(0.0, spec.box_high);
    std::normal_distribution<double> noise(0.0, 1.0);

    const auto rows = static_cast<Eigen::Index>(n);
    const auto cols = static_cast<Eigen::Index>(spec.dim);
    Matrix x(rows, cols);
    Vector y(rows);
    Vector xi(cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) xi[j] = unif(gen);
        x.row(i) = xi.transpose();
        const double eps = noise(gen);
        y[i] = ground_truth(spec, xi) + (spec.noise_sd > 0.0 ? spec.noise_sd * eps : 0.0);
    }
    return {std::move(x), std::move(y)};
}

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    for (auto& c : cells) {
        while (!c.empty() && (c.front() == ' ' || c.front() == '\t')) c.remove_prefix(1);
        while (!c.empty() && (c.back() == ' ' || c.back() == '\t' || c.back() == '\r')) c.remove_suffix(1);
    }
    return cells;
}

inline bool parse_double(std::string_view cell, double& out) {
    if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
    const auto* end = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(cell.data(), end, out);
    return ec == std::errc() && ptr == end && !cell.empty();
}

}  // namespace detail

/// Reads a `x1,...,xd,y` CSV. The response column must be last.
inline Dataset read_csv(std::istream& in, const std::string& source = "<stream>") {
    std::string line;
    if (!std::getline(in, line)) throw ValidationError(source + ": empty dataset");
    const auto header = detail::split_csv_line(line);
    require(header.size() >= 2, source + ": header needs at least one input column and y");
    for (std::size_t j = 0; j + 1 < header.size(); ++j) {
        if (header[j] == "y") throw ValidationError(source + ": response column must be last");
        if (header[j] != "x" + std::to_string(j + 1)) {
            throw ValidationError(source + ": malformed header, expected x" + std::to_string(j + 1) + " in column " +
                                  std::to_string(j + 1));
        }
    }
    if (header.back() != "y") throw ValidationError(source + ": response column must be last");

    const std::size_t d = header.size() - 1;
    std::vector<double> values;
    std::size_t rows = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != d + 1) {
            throw ValidationError(source + ": row " + std::to_string(line_no) + " has " +
                                  std::to_string(cells.size()) + " cells, expected " + std::to_string(d + 1));
        }
        for (std::size_t j = 0; j < cells.size(); ++j) {
            double v = 0.0;
            if (!detail::parse_double(cells[j], v) || !std::isfinite(v)) {
                throw ValidationError(source + ": non-numeric or non-finite value at row " + std::to_string(line_no) +
                                      ", column " + std::to_string(j + 1));
            }
            values.push_back(v);
        }
        ++rows;
    }
    if (rows == 0) throw ValidationError(source + ": empty dataset");

    Matrix x(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(d));
    Vector y(static_cast<Eigen::Index>(rows));
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[i * (d + 1) + j];
        }
        y[static_cast<Eigen::Index>(i)] = values[i * (d + 1) + d];
    }
    return {std::move(x), std::move(y)};
}

inline Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open data file: " + path);
    return read_csv(in, path);
}

inline void write_csv(std::ostream& out, const Dataset& data) {
    for (std::size_t j = 0; j < data.dim(); ++j) out << 'x' << (j + 1) << ',';
    out << "y\n";
    std::ostringstream row;
    row.precision(17);
    for (std::size_t i = 0; i < data.size(); ++i) {
        row.str({});
        for (std::size_t j = 0; j < data.dim(); ++j) {
            row << data.inputs()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) << ',';
        }
        row << data.responses()[static_cast<Eigen::Index>(i)] << '\n';
        out << row.str();
    }
}

inline void save_csv(const std::string& path, const Dataset& data) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write data file: " + path);
    write_csv(out, data);
}

/// Equal-size disjoint batches from a random permutation. Rows beyond
/// m' * floor(n / m') are dropped.
struct BatchSplit {
    std::vector<Dataset> batches;
    std::vector<std::vector<std::size_t>> row_indices;
    std::size_t dropped_rows = 0;
};

inline BatchSplit split_batches(const Dataset& data, std::size_t m_prime, const RngStream& rng) {
    require(m_prime >= 2, "split_batches: need at least 2 batches");
    const std::size_t n = data.size();
    require(n >= m_prime, "split_batches: n (" + std::to_string(n) + ") smaller than number of batches (" +
                              std::to_string(m_prime) + ")");
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    auto gen = rng.engine();
    std::shuffle(perm.begin(), perm.end(), gen);

    BatchSplit out;
    const std::size_t per_batch = n / m_prime;
    out.dropped_rows = n - per_batch * m_prime;
    if (out.dropped_rows > 0) {
        std::clog << "warning: split_batches dropped " << out.dropped_rows << " row(s) so that all " << m_prime
                  << " batches have " << per_batch << " rows\n";
    }
    for (std::size_t b = 0; b < m_prime; ++b) {
        std::vector<std::size_t> rows(perm.begin() + static_cast<std::ptrdiff_t>(b * per_batch),
                                      perm.begin() + static_cast<std::ptrdiff_t>((b + 1) * per_batch));
        out.batches.push_back(data.select(rows));
        out.row_indices.push_back(std::move(rows));
    }
    return out;
}

/// n draws with replacement.
inline std::vector<std::size_t> bootstrap_indices(std::size_t n, const RngStream& rng) {
    require(n >= 1, "bootstrap_resample: empty dataset");
    auto gen = rng.engine();
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::size_t> rows(n);
    for (auto& r : rows) r = pick(gen);
    return rows;
}

inline Dataset bootstrap_resample(const Dataset& data, const RngStream& rng) {
    const auto rows = bootstrap_indices(data.size(), rng);
    return data.select(rows);
}

/// Same inputs, labels perturbed by independent N(0, noise_sd^2).
inline Dataset simulate_real(const Dataset& data, double noise_sd, const RngStream& rng) {
    require(std::isfinite(noise_sd) && noise_sd > 0.0, "simulate_real: noise_sd must be positive");
    auto gen = rng.engine();
    std::normal_distribution<double> noise(0.0, noise_sd);
    Vector y = data.responses();
    for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += noise(gen);
    return data.with_responses(std::move(y));
}

}  // namespace pncuq
