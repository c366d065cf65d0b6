#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <type_traits>
#include <variant>
#include <vector>

#include <json.hpp>

#include "pncuq/data.hpp"
#include "pncuq/errors.hpp"
#include "pncuq/inference.hpp"
#include "pncuq/krr.hpp"
#include "pncuq/network.hpp"
#include "pncuq/ntk.hpp"
#include "pncuq/pnc.hpp"
#include "pncuq/rng.hpp"

#ifndef PNCUQ_BUILD_ID
#define PNCUQ_BUILD_ID "unknown"
#endif

namespace pncuq {

inline constexpr const char* build_id = PNCUQ_BUILD_ID;

/// Labels are re-noised copies of a fixed CSV design; y0 is the reference value at x0.
struct CsvSource {
    std::string path;
    double noise_sd = 0.001;
    double y0 = 0.0;
};

struct BatchingMethod {
    std::size_t m_prime = 4;
};

struct CheapBootstrapMethod {
    std::size_t resamples = 4;
};

struct IjMethod {
    std::optional<double> ridge;  // defaults to train.ridge
};

using MethodSpec = std::variant<BatchingMethod, CheapBootstrapMethod, IjMethod>;

struct MseSettings {
    std::size_t seeds = 10;
    std::size_t test_size = 2048;
};

struct ExperimentConfig {
    std::variant<SyntheticSpec, CsvSource> source = SyntheticSpec{};
    std::size_t n = 128;
    NetConfig net = [] {
        NetConfig c;
        c.input_dim = 2;
        c.width_factor = 32;
        return c;
    }();
    TrainConfig train = [] {
        TrainConfig t;
        t.learning_rate = 10.0;
        t.epochs = 1000;
        return t;
    }();
    MeanInitSpec mean_init;
    MethodSpec method = BatchingMethod{};
    std::vector<double> levels{0.95, 0.90};
    std::size_t repetitions = 100;
    std::optional<Vector> x0;  // defaults to (0.1, ..., 0.1)
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    MseSettings mse;
    bool verbose = false;

    [[nodiscard]] std::size_t dim() const {
        if (const auto* s = std::get_if<SyntheticSpec>(&source)) return s->dim;
        return net.input_dim;
    }

    [[nodiscard]] Vector resolved_x0() const {
        return x0 ? *x0 : Vector::Constant(static_cast<Eigen::Index>(dim()), 0.1);
    }

    [[nodiscard]] PncPipeline pipeline() const { return {net, train, mean_init}; }

    void validate() const {
        if (const auto* s = std::get_if<SyntheticSpec>(&source)) s->validate();
        if (const auto* c = std::get_if<CsvSource>(&source)) {
            require(c->noise_sd > 0.0, "config.data.noise_sd: must be positive for csv data");
        }
        require(n >= 1, "config.n: must be positive");
        require(net.input_dim == dim(), "config.network.input_dim: does not match data dimension");
        net.validate();
        train.validate();
        require(!levels.empty(), "config.levels: need at least one level");
        for (double l : levels) require(l > 0.0 && l < 1.0, "config.levels: each level must lie in (0, 1)");
        require(repetitions >= 1, "config.repetitions: must be positive");
        require(threads >= 1, "config.threads: must be positive");
        require(static_cast<std::size_t>(resolved_x0().size()) == dim(), "config.x0: dimension mismatch");
        if (const auto* b = std::get_if<BatchingMethod>(&method)) {
            require(b->m_prime >= 2, "config.method.m_prime: must be at least 2");
            require(n >= 2 * b->m_prime, "config.method.m_prime: n too small for batches of size 2");
        }
        if (const auto* c = std::get_if<CheapBootstrapMethod>(&method)) {
            require(c->resamples >= 1, "config.method.R: must be at least 1");
        }
        if (const auto* ij = std::get_if<IjMethod>(&method)) {
            require(!ij->ridge || *ij->ridge > 0.0, "config.method.ridge: must be positive");
            require(train.ridge > 0.0 || ij->ridge, "config.train.ridge: IJ needs a positive ridge");
        }
        require(mse.seeds >= 1, "config.mse.seeds: must be positive");
        require(mse.test_size >= 1, "config.mse.test_size: must be positive");
    }
};

namespace detail {

template <class T>
T config_field(const nlohmann::json& j, const std::string& key, const std::string& path, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ValidationError(path + "." + key + ": wrong type");
    }
}

inline void check_object(const nlohmann::json& j, const std::string& path) {
    if (!j.is_object()) throw ValidationError(path + ": expected an object");
}

inline SyntheticFamily family_from_string(const std::string& s, const std::string& path) {
    if (s == "sin_sum") return SyntheticFamily::SinSum;
    if (s == "x_sin_x") return SyntheticFamily::XSinX;
    throw ValidationError(path + ": unknown family '" + s + "' (expected sin_sum or x_sin_x)");
}

inline const char* to_string(SyntheticFamily f) { return f == SyntheticFamily::SinSum ? "sin_sum" : "x_sin_x"; }

}  // namespace detail

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
    using detail::config_field;
    detail::check_object(j, "config");
    ExperimentConfig c;

    if (j.contains("data")) {
        const auto& d = j.at("data");
        detail::check_object(d, "config.data");
        if (d.contains("csv")) {
            CsvSource src;
            src.path = config_field<std::string>(d, "csv", "config.data", "");
            src.noise_sd = config_field(d, "noise_sd", "config.data", src.noise_sd);
            if (!d.contains("y0")) throw ValidationError("config.data.y0: required for csv data");
            src.y0 = config_field(d, "y0", "config.data", 0.0);
            c.source = src;
        } else {
            SyntheticSpec s;
            s.family = detail::family_from_string(config_field<std::string>(d, "family", "config.data", "sin_sum"),
                                                  "config.data.family");
            s.dim = config_field(d, "dim", "config.data", s.dim);
            s.noise_sd = config_field(d, "noise_sd", "config.data", s.noise_sd);
            s.box_high = config_field(d, "box_high", "config.data", s.box_high);
            c.source = s;
        }
    }
    c.n = config_field(j, "n", "config", c.n);

    c.net.input_dim = c.dim();
    if (const auto* src = std::get_if<CsvSource>(&c.source)) {
        // Dimension and n of a CSV source come from the file itself.
        const Dataset base = load_csv(src->path);
        c.net.input_dim = base.dim();
        c.n = base.size();
    }
    if (j.contains("network")) {
        const auto& nj = j.at("network");
        detail::check_object(nj, "config.network");
        c.net.depth = config_field(nj, "depth", "config.network", c.net.depth);
        if (nj.contains("width")) {
            c.net.width = config_field(nj, "width", "config.network", c.net.width);
            c.net.width_factor.reset();
        }
        if (nj.contains("width_factor")) {
            c.net.width_factor = config_field(nj, "width_factor", "config.network", std::size_t{32});
        }
        require(config_field<std::string>(nj, "activation", "config.network", "relu") == "relu",
                "config.network.activation: only relu is supported");
    }
    if (j.contains("train")) {
        const auto& tj = j.at("train");
        detail::check_object(tj, "config.train");
        c.train.ridge = config_field(tj, "ridge", "config.train", c.train.ridge);
        c.train.learning_rate = config_field(tj, "learning_rate", "config.train", c.train.learning_rate);
        c.train.epochs = config_field(tj, "epochs", "config.train", c.train.epochs);
    }
    if (j.contains("mean_init")) {
        try {
            c.mean_init = mean_init_from_json(j.at("mean_init"));
        } catch (const ValidationError& e) {
            throw ValidationError(std::string("config.mean_init: ") + e.what());
        }
    }
    if (j.contains("method")) {
        const auto& mj = j.at("method");
        detail::check_object(mj, "config.method");
        const auto name = config_field<std::string>(mj, "name", "config.method", "batching");
        if (name == "batching") {
            c.method = BatchingMethod{config_field(mj, "m_prime", "config.method", std::size_t{4})};
        } else if (name == "cheap_bootstrap") {
            c.method = CheapBootstrapMethod{config_field(mj, "R", "config.method", std::size_t{4})};
        } else if (name == "ij") {
            IjMethod m;
            if (mj.contains("ridge")) m.ridge = config_field(mj, "ridge", "config.method", 0.0);
            c.method = m;
        } else {
            throw ValidationError("config.method.name: unknown method '" + name +
                                  "' (expected batching, cheap_bootstrap or ij)");
        }
    }
    c.levels = config_field(j, "levels", "config", c.levels);
    c.repetitions = config_field(j, "repetitions", "config", c.repetitions);
    if (j.contains("x0")) {
        const auto v = config_field(j, "x0", "config", std::vector<double>{});
        c.x0 = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
    c.seed = config_field(j, "seed", "config", c.seed);
    c.threads = config_field(j, "threads", "config", c.threads);
    c.verbose = config_field(j, "verbose", "config", c.verbose);
    if (j.contains("mse")) {
        const auto& sj = j.at("mse");
        detail::check_object(sj, "config.mse");
        c.mse.seeds = config_field(sj, "seeds", "config.mse", c.mse.seeds);
        c.mse.test_size = config_field(sj, "test_size", "config.mse", c.mse.test_size);
    }
    c.validate();
    return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(path + ": invalid JSON: " + e.what());
    }
    try {
        return experiment_config_from_json(j);
    } catch (const ValidationError& e) {
        throw ValidationError(path + ": " + e.what());
    }
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    if (const auto* s = std::get_if<SyntheticSpec>(&c.source)) {
        j["data"] = {{"family", detail::to_string(s->family)},
                     {"dim", s->dim},
                     {"noise_sd", s->noise_sd},
                     {"box_high", s->box_high}};
    } else {
        const auto& src = std::get<CsvSource>(c.source);
        j["data"] = {{"csv", src.path}, {"noise_sd", src.noise_sd}, {"y0", src.y0}};
    }
    j["n"] = c.n;
    j["network"] = to_json(c.net);
    j["train"] = to_json(c.train);
    j["mean_init"] = to_json(c.mean_init);
    std::visit(
        [&](const auto& m) {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, BatchingMethod>) {
                j["method"] = {{"name", "batching"}, {"m_prime", m.m_prime}};
            } else if constexpr (std::is_same_v<M, CheapBootstrapMethod>) {
                j["method"] = {{"name", "cheap_bootstrap"}, {"R", m.resamples}};
            } else {
                j["method"] = {{"name", "ij"}};
                if (m.ridge) j["method"]["ridge"] = *m.ridge;
            }
        },
        c.method);
    j["levels"] = c.levels;
    j["repetitions"] = c.repetitions;
    const Vector x0 = c.resolved_x0();
    j["x0"] = std::vector<double>(x0.begin(), x0.end());
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["mse"] = {{"seeds", c.mse.seeds}, {"test_size", c.mse.test_size}};
    return j;
}

/// Training data for one repetition (or one MSE seed).
inline Dataset draw_dataset(const ExperimentConfig& c, const RngStream& rng) {
    if (const auto* s = std::get_if<SyntheticSpec>(&c.source)) return generate_synthetic(*s, c.n, rng);
    const auto& src = std::get<CsvSource>(c.source);
    return simulate_real(load_csv(src.path), src.noise_sd, rng);
}

/// The value the intervals should cover.
inline double target_value(const ExperimentConfig& c) {
    if (const auto* s = std::get_if<SyntheticSpec>(&c.source)) return ground_truth(*s, c.resolved_x0());
    return std::get<CsvSource>(c.source).y0;
}

/// Runs `task(i)` for i in [0, count) on at most `threads` workers. The first
/// exception (lowest index) is rethrown after all workers stop.
template <class Task>
void parallel_for(std::size_t count, std::size_t threads, Task&& task) {
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::mutex mu;
    std::size_t failed_index = count;
    std::exception_ptr failure;
    auto worker = [&] {
        while (!stop.load()) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                task(i);
            } catch (...) {
                std::lock_guard lock(mu);
                if (i < failed_index) {
                    failed_index = i;
                    failure = std::current_exception();
                }
                stop.store(true);
            }
        }
    };
    const std::size_t n_workers = std::max<std::size_t>(1, std::min(threads, count));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(n_workers);
        for (std::size_t t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
}

// Coverage ----------------------------------------------------------------------

struct LevelSummary {
    double level = 0.0;
    std::size_t covered = 0;
    std::size_t repetitions = 0;
    double coverage_rate = 0.0;
    double mean_width = 0.0;
    double mean_midpoint = 0.0;
    double cp_low = 0.0;
    double cp_high = 1.0;
};

struct RepetitionResult {
    std::vector<ConfidenceInterval> intervals;  // one per level
    double seconds = 0.0;
    bool done = false;
};

struct CoverageReport {
    ExperimentConfig config;
    double target = 0.0;
    std::vector<LevelSummary> levels;
    std::vector<RepetitionResult> repetitions;
    double total_seconds = 0.0;
};

/// CR, IW and MP per level over the finished repetitions.
inline std::vector<LevelSummary> summarize(const ExperimentConfig& c, double target,
                                           const std::vector<RepetitionResult>& reps) {
    std::vector<LevelSummary> out;
    for (std::size_t l = 0; l < c.levels.size(); ++l) {
        LevelSummary s;
        s.level = c.levels[l];
        for (const auto& r : reps) {
            if (!r.done) continue;
            const auto& ci = r.intervals[l];
            ++s.repetitions;
            if (ci.contains(target)) ++s.covered;
            s.mean_width += ci.width();
            s.mean_midpoint += ci.center;
        }
        if (s.repetitions > 0) {
            const auto j = static_cast<double>(s.repetitions);
            s.coverage_rate = static_cast<double>(s.covered) / j;
            s.mean_width /= j;
            s.mean_midpoint /= j;
            std::tie(s.cp_low, s.cp_high) =
                clopper_pearson(static_cast<long>(s.covered), static_cast<long>(s.repetitions), 0.95);
        }
        out.push_back(s);
    }
    return out;
}

/// Intervals at x0 for every level from one dataset.
inline std::vector<ConfidenceInterval> intervals_for(const ExperimentConfig& c, const Dataset& data,
                                                     const RngStream& rng) {
    const Vector x0 = c.resolved_x0();
    const PncPipeline pipeline = c.pipeline();
    std::vector<ConfidenceInterval> out;
    if (const auto* b = std::get_if<BatchingMethod>(&c.method)) {
        const auto est = batching_estimate(data, x0, b->m_prime, pipeline, rng);
        for (double level : c.levels) out.push_back(est.interval(level));
    } else if (const auto* cb = std::get_if<CheapBootstrapMethod>(&c.method)) {
        const auto est = cheap_bootstrap_estimate(data, x0, cb->resamples, pipeline, rng);
        for (double level : c.levels) out.push_back(est.interval(level));
    } else {
        const auto& ij = std::get<IjMethod>(c.method);
        const double ridge = ij.ridge.value_or(c.train.ridge);
        const NetConfig cfg = c.net.resolved_for(data.size());
        const KrrSolution sol = ij_solution(data, NtkKernel::analytic(c.net.depth), ridge,
                                            mean_init_shift(c.mean_init.resolved_for(data.size()), cfg,
                                                            rng.derive(stream_tag::mean_init)));
        const IjEstimate est = ij_variance(sol, x0);
        for (double level : c.levels) out.push_back(ij_interval(est, data.size(), level));
    }
    return out;
}

/// Raised when a repetition fails; carries the report of everything that finished.
class ExperimentAborted : public NumericalError {
public:
    ExperimentAborted(const std::string& what, std::size_t repetition, CoverageReport partial)
        : NumericalError(what), repetition_(repetition), partial_(std::move(partial)) {}

    [[nodiscard]] std::size_t repetition() const noexcept { return repetition_; }
    [[nodiscard]] const CoverageReport& partial_report() const noexcept { return partial_; }

private:
    std::size_t repetition_;
    CoverageReport partial_;
};

/// J repetitions; repetition j uses stream (seed, j) for its data and all of its trainings.
inline CoverageReport run_coverage(const ExperimentConfig& c) {
    c.validate();
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    CoverageReport report;
    report.config = c;
    report.target = target_value(c);
    report.repetitions.resize(c.repetitions);
    std::mutex log_mu;
    std::atomic<std::size_t> failed{c.repetitions};

    try {
        parallel_for(c.repetitions, c.threads, [&](std::size_t j) {
            const auto t0 = clock::now();
            struct MarkFailed {
                std::atomic<std::size_t>& slot;
                std::size_t j;
                bool armed = true;
                ~MarkFailed() {
                    std::size_t cur = slot.load();
                    while (armed && j < cur && !slot.compare_exchange_weak(cur, j)) {
                    }
                }
            } mark{failed, j};
            const RngStream rep{c.seed, j};
            const Dataset data = draw_dataset(c, rep.derive(stream_tag::data));
            try {
                report.repetitions[j].intervals = intervals_for(c, data, rep);
            } catch (const DivergenceError& e) {
                throw e.tagged("repetition " + std::to_string(j));
            } catch (const NumericalError& e) {
                throw NumericalError("repetition " + std::to_string(j) + ": " + e.what());
            }
            report.repetitions[j].seconds = std::chrono::duration<double>(clock::now() - t0).count();
            report.repetitions[j].done = true;
            mark.armed = false;
            if (c.verbose) {
                std::lock_guard lock(log_mu);
                const auto& ci = report.repetitions[j].intervals.front();
                std::clog << "repetition " << j << ": [" << ci.lower() << ", " << ci.upper() << "] in "
                          << report.repetitions[j].seconds << " s\n";
            }
        });
    } catch (const NumericalError& e) {
        report.levels = summarize(c, report.target, report.repetitions);
        report.total_seconds = std::chrono::duration<double>(clock::now() - start).count();
        throw ExperimentAborted(e.what(), failed.load(), std::move(report));
    }
    report.levels = summarize(c, report.target, report.repetitions);
    report.total_seconds = std::chrono::duration<double>(clock::now() - start).count();
    return report;
}

/// `timings = false` drops wall-clock fields so that two runs compare byte-identical.
inline nlohmann::json to_json(const CoverageReport& r, bool timings = true) {
    nlohmann::json j;
    j["kind"] = "coverage";
    j["build"] = build_id;
    j["config"] = to_json(r.config);
    j["target"] = r.target;
    j["summary"] = nlohmann::json::array();
    for (const auto& s : r.levels) {
        j["summary"].push_back({{"level", s.level},
                                {"repetitions", s.repetitions},
                                {"covered", s.covered},
                                {"CR", s.coverage_rate},
                                {"IW", s.mean_width},
                                {"MP", s.mean_midpoint},
                                {"CR_clopper_pearson_95", {s.cp_low, s.cp_high}}});
    }
    j["repetitions"] = nlohmann::json::array();
    for (std::size_t k = 0; k < r.repetitions.size(); ++k) {
        const auto& rep = r.repetitions[k];
        nlohmann::json e{{"index", k}, {"done", rep.done}};
        if (timings) e["seconds"] = rep.seconds;
        e["intervals"] = nlohmann::json::array();
        for (const auto& ci : rep.intervals) e["intervals"].push_back(to_json(ci));
        if (!rep.intervals.empty() && !rep.intervals.front().estimates.empty()) {
            e["estimates"] = rep.intervals.front().estimates;
        }
        j["repetitions"].push_back(e);
    }
    if (timings) j["total_seconds"] = r.total_seconds;
    return j;
}

/// One row per level: level, CR, IW, MP, CP band.
inline void write_coverage_table(std::ostream& out, const CoverageReport& r) {
    out << "level,CR,IW,MP,CR_low,CR_high,repetitions\n";
    out << std::setprecision(6);
    for (const auto& s : r.levels) {
        out << s.level << ',' << s.coverage_rate << ',' << s.mean_width << ',' << s.mean_midpoint << ',' << s.cp_low
            << ',' << s.cp_high << ',' << s.repetitions << '\n';
    }
}

// MSE benchmark ----------------------------------------------------------------------

struct MethodStats {
    std::string name;
    std::vector<double> mse;  // per seed
    std::vector<double> seconds;
    double mean = 0.0;
    double sd = 0.0;
    double mean_seconds = 0.0;
};

struct MseReport {
    ExperimentConfig config;
    std::vector<MethodStats> methods;  // single, pnc, ensemble_2, ensemble_5
    double total_seconds = 0.0;

    [[nodiscard]] const MethodStats& method(const std::string& name) const {
        for (const auto& m : methods) {
            if (m.name == name) return m;
        }
        throw ValidationError("no such method in report: " + name);
    }
};

inline double mean_squared_error(const Vector& pred, const Vector& truth) {
    return (pred - truth).squaredNorm() / static_cast<double>(pred.size());
}

/// Per seed: a fresh training set and a fresh labelled test set. "single" is
/// ensemble member 0, ensemble(2) its first two members.
inline MseReport run_mse(const ExperimentConfig& c) {
    c.validate();
    require(std::holds_alternative<SyntheticSpec>(c.source), "mse-bench needs synthetic data");
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    const auto& spec = std::get<SyntheticSpec>(c.source);
    const std::size_t seeds = c.mse.seeds;
    std::vector<std::array<double, 4>> mse(seeds);
    std::vector<std::array<double, 4>> secs(seeds);

    parallel_for(seeds, c.threads, [&](std::size_t s) {
        const RngStream run{c.seed, s};
        const Dataset train = generate_synthetic(spec, c.n, run.derive(stream_tag::data));
        const Dataset test = generate_synthetic(spec, c.mse.test_size, run.derive(stream_tag::test_set));
        const NetConfig cfg = c.net.resolved_for(train.size());
        try {
            auto t0 = clock::now();
            const PncPredictor pnc = c.pipeline().fit(train, run);
            const double pnc_secs = std::chrono::duration<double>(clock::now() - t0).count();

            std::vector<WideNet> members;
            std::vector<double> member_secs;
            for (std::size_t k = 0; k < 5; ++k) {
                t0 = clock::now();
                members.push_back(train_ensemble_member(train, cfg, c.train, run, k));
                member_secs.push_back(std::chrono::duration<double>(clock::now() - t0).count());
            }
            const DeepEnsemble ens(std::move(members));
            const Vector& y = test.responses();
            mse[s] = {mean_squared_error(ens.predict_first(1, test.inputs()), y),
                      mean_squared_error(pnc_predict(pnc, test.inputs()), y),
                      mean_squared_error(ens.predict_first(2, test.inputs()), y),
                      mean_squared_error(ens.predict_first(5, test.inputs()), y)};
            double all = 0.0;
            for (double t : member_secs) all += t;
            secs[s] = {member_secs[0], pnc_secs, member_secs[0] + member_secs[1], all};
        } catch (const DivergenceError& e) {
            throw e.tagged("seed " + std::to_string(s));
        }
        if (c.verbose) std::clog << "mse seed " << s << " done\n";
    });

    MseReport report;
    report.config = c;
    const char* names[] = {"single", "pnc", "ensemble_2", "ensemble_5"};
    for (std::size_t m = 0; m < 4; ++m) {
        MethodStats st;
        st.name = names[m];
        for (std::size_t s = 0; s < seeds; ++s) {
            st.mse.push_back(mse[s][m]);
            st.seconds.push_back(secs[s][m]);
        }
        const auto k = static_cast<double>(seeds);
        for (double v : st.mse) st.mean += v / k;
        for (double v : st.seconds) st.mean_seconds += v / k;
        if (seeds > 1) {
            double ss = 0.0;
            for (double v : st.mse) ss += (v - st.mean) * (v - st.mean);
            st.sd = std::sqrt(ss / (k - 1.0));
        }
        report.methods.push_back(std::move(st));
    }
    report.total_seconds = std::chrono::duration<double>(clock::now() - start).count();
    return report;
}

inline nlohmann::json to_json(const MseReport& r, bool timings = true) {
    nlohmann::json j;
    j["kind"] = "mse";
    j["build"] = build_id;
    j["config"] = to_json(r.config);
    j["methods"] = nlohmann::json::array();
    for (const auto& m : r.methods) {
        nlohmann::json e{{"name", m.name}, {"mse", m.mse}, {"mean", m.mean}, {"sd", m.sd}};
        if (timings) {
            e["seconds"] = m.seconds;
            e["mean_seconds"] = m.mean_seconds;
        }
        j["methods"].push_back(e);
    }
    if (timings) j["total_seconds"] = r.total_seconds;
    return j;
}

inline void write_mse_table(std::ostream& out, const MseReport& r) {
    out << "method,mse_mean,mse_sd,mean_seconds\n";
    out << std::setprecision(6);
    for (const auto& m : r.methods) out << m.name << ',' << m.mean << ',' << m.sd << ',' << m.mean_seconds << '\n';
}

}  // namespace pncuq
