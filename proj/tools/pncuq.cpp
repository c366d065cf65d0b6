// Command-line front end: training, single intervals, coverage studies, MSE
// benchmark and the oracle self-check.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "pncuq/pncuq.hpp"
#include "pncuq/oracles.hpp"

namespace {

using namespace pncuq;
using nlohmann::json;

struct Options {
    std::string config_path;
    std::string out_path;
    std::string table_path;
    std::string loss_csv;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::optional<std::size_t> repetitions;
    bool no_timings = false;
    bool verbose = false;
};

ExperimentConfig load_config(const Options& o) {
    ExperimentConfig c = o.config_path.empty() ? ExperimentConfig{} : load_experiment_config(o.config_path);
    if (o.seed) c.seed = *o.seed;
    if (o.threads) c.threads = *o.threads;
    if (o.repetitions) c.repetitions = *o.repetitions;
    if (o.verbose) c.verbose = true;
    c.validate();
    return c;
}

void emit(const Options& o, const json& j) {
    const std::string text = j.dump(2) + "\n";
    if (o.out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(o.out_path);
    if (!out) throw ValidationError("cannot write output file: " + o.out_path);
    out << text;
}

/// The dataset a single-shot subcommand works on: repetition 0 of the config.
Dataset single_dataset(const ExperimentConfig& c) {
    return draw_dataset(c, RngStream{c.seed, 0}.derive(stream_tag::data));
}

json vec_json(const Vector& v) { return std::vector<double>(v.begin(), v.end()); }

int cmd_train(const Options& o) {
    const ExperimentConfig c = load_config(o);
    const Dataset data = single_dataset(c);
    const NetConfig cfg = c.net.resolved_for(data.size());
    TrainConfig t = c.train;
    t.record_loss = !o.loss_csv.empty();
    const WideNet init = init_he(cfg, RngStream{c.seed, 0}.derive(stream_tag::init));
    const TrainOutcome res = train_gd_traced(init, data, t);
    if (!o.loss_csv.empty()) {
        std::ofstream out(o.loss_csv);
        if (!out) throw ValidationError("cannot write loss trace: " + o.loss_csv);
        write_loss_trace_csv(out, res.loss_trace);
    }
    const Vector x0 = c.resolved_x0();
    emit(o, {{"kind", "train"},
             {"build", build_id},
             {"config", to_json(c)},
             {"training_mse", training_mse(res.net, data)},
             {"prediction_x0", forward(res.net, x0)},
             {"network", to_json(res.net)}});
    return 0;
}

int cmd_pnc(const Options& o) {
    const ExperimentConfig c = load_config(o);
    const Dataset data = single_dataset(c);
    const RngStream rng{c.seed, 0};
    const PncPredictor p = c.pipeline().fit(data, rng);
    const Vector x0 = c.resolved_x0();
    const NetConfig cfg = c.net.resolved_for(data.size());
    const KrrSolution closed =
        ensemble_closed_form(NtkKernel::analytic(cfg.depth), data, c.train.ridge,
                             mean_init_shift(p.mean_init, cfg, p.mean_init_stream));
    emit(o, {{"kind", "pnc"},
             {"build", build_id},
             {"config", to_json(c)},
             {"x0", vec_json(x0)},
             {"pnc_prediction", pnc_predict(p, x0)},
             {"base_prediction", forward(p.base, x0)},
             {"closed_form_prediction", closed.predict(x0)},
             {"predictor", to_json(p)}});
    return 0;
}

int cmd_ci(const Options& o, const MethodSpec& default_method, bool force_method) {
    ExperimentConfig c = load_config(o);
    if (force_method && c.method.index() != default_method.index()) c.method = default_method;
    c.validate();
    const Dataset data = single_dataset(c);
    const auto intervals = intervals_for(c, data, RngStream{c.seed, 0});
    json j{{"kind", "interval"}, {"build", build_id}, {"config", to_json(c)}, {"target", target_value(c)}};
    j["intervals"] = json::array();
    for (const auto& ci : intervals) {
        json e = to_json(ci);
        e["lower"] = ci.lower();
        e["upper"] = ci.upper();
        if (!ci.estimates.empty()) e["estimates"] = ci.estimates;
        j["intervals"].push_back(e);
    }
    emit(o, j);
    return 0;
}

int cmd_coverage(const Options& o) {
    const ExperimentConfig c = load_config(o);
    CoverageReport r;
    try {
        r = run_coverage(c);
    } catch (const ExperimentAborted& e) {
        json partial = to_json(e.partial_report(), !o.no_timings);
        partial["aborted"] = {{"repetition", e.repetition()}, {"error", e.what()}};
        emit(o, partial);
        throw;
    }
    if (!o.table_path.empty()) {
        std::ofstream t(o.table_path);
        if (!t) throw ValidationError("cannot write table: " + o.table_path);
        write_coverage_table(t, r);
    }
    emit(o, to_json(r, !o.no_timings));
    return 0;
}

int cmd_mse(const Options& o) {
    const ExperimentConfig c = load_config(o);
    const MseReport r = run_mse(c);
    if (!o.table_path.empty()) {
        std::ofstream t(o.table_path);
        if (!t) throw ValidationError("cannot write table: " + o.table_path);
        write_mse_table(t, r);
    }
    emit(o, to_json(r, !o.no_timings));
    return 0;
}

int cmd_selfcheck(const Options& o) {
    const std::uint64_t seed = o.seed.value_or(7);
    bool all_ok = true;
    json report{{"kind", "selfcheck"}, {"build", build_id}, {"checks", json::array()}};
    auto record = [&](const std::string& name, bool ok, double value, double tol) {
        std::printf("[%s] %s (%.3g, tol %.3g)\n", ok ? "PASS" : "FAIL", name.c_str(), value, tol);
        report["checks"].push_back({{"name", name}, {"pass", ok}, {"value", value}, {"tolerance", tol}});
        all_ok = all_ok && ok;
    };

    // Arc-cosine expectations against Monte Carlo.
    const double rhos[] = {-0.9, -0.5, 0.0, 0.3, 0.7, 0.99};
    double worst = 0.0;
    std::uint64_t k = 0;
    for (double rho : rhos) {
        const double a = 1.3;
        const double b = 0.6;
        const double c = rho * std::sqrt(a * b);
        const auto mc = oracle::relu_moments_mc(a, b, c, 2'000'000, RngStream{seed, k++});
        worst = std::max({worst, std::abs(mc.sigma - relu_sigma(a, b, c)),
                          std::abs(mc.sigma_prime - relu_sigma_prime(a, b, c))});
    }
    record("relu expectations vs Monte Carlo", worst <= 3e-3, worst, 3e-3);

    // Influence function against the epsilon-mixture difference quotient.
    {
        SyntheticSpec spec;
        const Dataset data = generate_synthetic(spec, 16, RngStream{seed, 100});
        const NtkKernel kern = NtkKernel::analytic(1);
        const double lambda = 1e-3;
        const KrrSolution sol = solve(kern, data, lambda);
        const Vector x0 = Vector::Constant(2, 0.1);
        const Vector zx = data.inputs().row(3).transpose();
        const double zy = data.responses()[3] + 0.01;
        const double inf = ij_influence(sol, zx, zy, x0);
        const double t0 = sol.predict(x0);
        const Vector zero = Vector::Zero(data.size());
        double err[2];
        const double eps[2] = {1e-3, 1e-4};
        for (int e = 0; e < 2; ++e) {
            const double te = oracle::mixture_krr(kern, data.inputs(), data.responses(), zero, zx, zy, 0.0, lambda,
                                                  eps[e], x0, 0.0);
            err[e] = std::abs((te - t0) / eps[e] - inf);
        }
        const double ratio = err[0] / err[1];
        record("influence function first-order ratio", ratio > 5.0 && ratio < 20.0, ratio, 5.0);
    }

    // Quantiles against integrated densities.
    {
        const double qn = oracle::symmetric_quantile(oracle::normal_density, 0.975, 20.0);
        record("normal quantile 0.975", std::abs(qn - t_quantile(infinite_df, 0.975)) < 1e-3,
               std::abs(qn - t_quantile(infinite_df, 0.975)), 1e-3);
        double worst_t = 0.0;
        for (double df : {1.0, 3.0, 4.0, 10.0}) {
            const double q = oracle::symmetric_quantile([df](double x) { return oracle::t_density(df, x); }, 0.975,
                                                        df < 2 ? 200.0 : 50.0);
            worst_t = std::max(worst_t, std::abs(q - t_quantile(df, 0.975)));
        }
        record("t quantiles 0.975", worst_t < 1e-3, worst_t, 1e-3);
        const auto [lo, hi] = clopper_pearson(95, 100, 0.95);
        const double dev = std::max(std::abs(lo - 0.887), std::abs(hi - 0.984));
        record("Clopper-Pearson 95/100", dev <= 1e-3, dev, 1e-3);
    }

    report["pass"] = all_ok;
    if (!o.out_path.empty()) emit(o, report);
    return all_ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PNC uncertainty quantification for wide regression networks"};
    app.require_subcommand(1);
    Options o;

    auto add_common = [&o](CLI::App* sub) {
        sub->add_option("--config", o.config_path, "JSON experiment config");
        sub->add_option("--out", o.out_path, "write the JSON report here instead of stdout");
        sub->add_option("--seed", o.seed, "override the master seed");
        sub->add_option("--threads", o.threads, "worker threads");
        sub->add_flag("--verbose", o.verbose, "progress on stderr");
    };

    auto* train = app.add_subcommand("train", "train one network, report training MSE and checkpoint");
    add_common(train);
    train->add_option("--loss-csv", o.loss_csv, "write the per-epoch loss trace as CSV");
    auto* pnc = app.add_subcommand("pnc", "fit a PNC predictor and compare with the closed form at x0");
    add_common(pnc);
    auto* ci_batch = app.add_subcommand("ci-batch", "batching interval on one dataset");
    add_common(ci_batch);
    auto* ci_boot = app.add_subcommand("ci-boot", "cheap bootstrap interval on one dataset");
    add_common(ci_boot);
    auto* ci_ij = app.add_subcommand("ci-ij", "infinitesimal jackknife interval on one dataset");
    add_common(ci_ij);
    auto* coverage = app.add_subcommand("coverage", "repeated-experiment coverage study");
    add_common(coverage);
    coverage->add_option("--repetitions", o.repetitions, "override J");
    coverage->add_option("--table", o.table_path, "CSV summary table");
    coverage->add_flag("--no-timings", o.no_timings, "omit wall-clock fields from the report");
    auto* mse = app.add_subcommand("mse-bench", "test MSE of single, PNC and deep ensembles");
    add_common(mse);
    mse->add_option("--table", o.table_path, "CSV summary table");
    mse->add_flag("--no-timings", o.no_timings, "omit wall-clock fields from the report");
    auto* selfcheck = app.add_subcommand("selfcheck", "run the oracle checks");
    selfcheck->add_option("--out", o.out_path, "JSON report");
    selfcheck->add_option("--seed", o.seed, "Monte Carlo seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (train->parsed()) return cmd_train(o);
        if (pnc->parsed()) return cmd_pnc(o);
        if (ci_batch->parsed()) return cmd_ci(o, BatchingMethod{}, true);
        if (ci_boot->parsed()) return cmd_ci(o, CheapBootstrapMethod{}, true);
        if (ci_ij->parsed()) return cmd_ci(o, IjMethod{}, true);
        if (coverage->parsed()) return cmd_coverage(o);
        if (mse->parsed()) return cmd_mse(o);
        if (selfcheck->parsed()) return cmd_selfcheck(o);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
