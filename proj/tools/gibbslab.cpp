// gibbslab command line: selftest, oracle gating, experiment runs, reports.
//
// Exit codes: 0 success, 1 validation error, 2 diagnostic/oracle failure,
// 3 I/O error. GIBBSLAB_SEED and GIBBSLAB_THREADS override the config.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "gibbslab/fds.hpp"
#include "gibbslab/harness.hpp"
#include "gibbslab/report.hpp"

namespace {

using namespace gibbslab;

int selftest() {
    int failures = 0;
    auto check = [&](const std::string& name, bool ok, const std::string& detail = "") {
        std::cout << (ok ? "[ok]   " : "[FAIL] ") << name;
        if (!ok && !detail.empty()) std::cout << "  (" << detail << ")";
        std::cout << "\n";
        if (!ok) ++failures;
    };

    // perturbation polynomial family invariants
    {
        bool ok = true;
        for (const auto& I : enumerate_truncation(TruncationPolicy{})) {
            double prev = -1;
            for (int g = 0; g <= 100; ++g) {
                const double x = -1.0 + 0.02 * g;
                const double v = poly_P(I, x);
                ok = ok && v > 0 && v <= 1.0 && v >= prev - 1e-15;
                prev = v;
                if (g >= 2) {
                    const double second =
                        poly_P(I, x - 0.04) - 2 * poly_P(I, x - 0.02) + poly_P(I, x);
                    ok = ok && second >= -1e-15;
                }
            }
        }
        check("perturbation polynomials in (0,1], convex, non-decreasing", ok);
    }
    {
        double prev = INFINITY;
        bool ok = true;
        for (int kmax = 4; kmax <= 12; kmax += 2) {
            const double tail = truncation_tail_bound(TruncationPolicy{3, kmax}, 2.0, 1.0);
            ok = ok && tail >= 0 && tail <= prev + 1e-15;
            prev = tail;
        }
        check("truncation tail bound non-negative, decreasing in K_max", ok);
    }
    {
        bool ok = true;
        const double lo = std::exp(-2.0);
        for (int r = 0; r <= 20; ++r) {
            const double bound = reciprocal_poly_error_bound(r) * (1.0 + 1e-12);
            for (int g = 0; g < 10000; ++g) {
                const double x = lo + (1.0 - 1e-9 - lo) * g / 9999.0;
                if (std::fabs(reciprocal_poly(x, r) - 1.0 / x) > bound) ok = false;
            }
        }
        check("reciprocal polynomial error bound on a 10^4 grid, r <= 20", ok);
    }
    {
        bool ok = true;
        Rng rng(90125);
        for (int trial = 0; trial < 25; ++trial) {
            const double a1 = rng.uniform(0, 2), a2 = rng.uniform(0, 2);
            const double c2 = rng.uniform(0.1, 1.0), d2 = rng.uniform(-1, 1);
            C1Function G{[=](double x) { return a1 * x * x; }, [=](double x) { return 2 * a1 * x; }};
            C1Function g{[=](double x) { return a2 * x * x + c2 * std::exp(d2 * x); },
                         [=](double x) { return 2 * a2 * x + c2 * d2 * std::exp(d2 * x); }};
            const auto [lhs, rhs] =
                convex_derivative_gap_bound(G, g, rng.uniform(-1, 1), rng.uniform(0.1, 0.5));
            ok = ok && lhs <= rhs + 1e-10;
        }
        check("convex derivative gap bound on randomized pairs", ok);
    }
    {
        auto phi = [](double x) { return -0.5 * x * x; };
        const double var = quadrature_moment_1d(phi, 2).value - sq(quadrature_moment_1d(phi, 1).value);
        check("Brascamp-Lieb 1D: Var(truncated normal) <= 1/eps",
              var > 0.28 && var < 0.30 && var <= 1.0);
    }
    {
        const auto d = make_random_field(2, 1.0, 77);
        const auto r = fds_identity_check(d, 0.3, PerturbationIndex{0}, FdsF::Sigma1, 1, 1.0);
        check("exact Poisson identity gap <= 1e-6", r.gap <= 1e-6, format_g17(r.gap));
    }
    {
        auto d = std::make_shared<DisorderSample>(make_random_field(4, 1.0, 321));
        McmcConfig cfg;
        cfg.n_samples = 300;
        auto ens = sample_replicas(d, 0.5, 0.0, 6, 1, cfg, 322);
        SeparableOracle oracle(*d, 0.5, 0.0);
        std::vector<double> means;
        for (const auto& r : ens.replicas) {
            double acc = 0;
            for (const auto& s : r.samples) acc += s[0];
            means.push_back(acc / r.samples.size());
        }
        const double diff = std::fabs(mean(means) - oracle.site_moment(0, 1));
        check("sampler matches the 1D oracle", diff <= 4 * stderr_of_mean(means) + 1e-3);
    }
    {
        // determinism micro-run
        const auto tmp = std::filesystem::temp_directory_path() / "gibbslab_selftest";
        std::filesystem::remove_all(tmp);
        ExperimentConfig cfg;
        cfg.experiment_id = "selftest";
        cfg.n_grid = {4};
        cfg.schedule.eps_rule = "const";
        cfg.schedule.eps_const = 0.5;
        cfg.schedule.s_rule = "const";
        cfg.schedule.s_const = 1.0;
        cfg.mcmc.n_samples = 20;
        cfg.n_disorder = 2;
        cfg.run_gate = false;
        EstimatorSpec tv;
        tv.kind = "thermal_variance";
        tv.k = MultioverlapIndex{1};
        cfg.estimators = {tv};
        cfg.replicas = {4, 1};
        cfg.output = "a.csv";
        run_experiment(cfg, (tmp / "r1").string(), 1, false);
        cfg.output = "b.csv";
        run_experiment(cfg, (tmp / "r2").string(), 2, false);
        auto slurp = [](const std::filesystem::path& p) {
            std::ifstream in(p, std::ios::binary);
            return std::string(std::istreambuf_iterator<char>(in), {});
        };
        const std::string a = slurp(tmp / "r1" / "a.csv"), b = slurp(tmp / "r2" / "b.csv");
        check("deterministic run output across thread counts", !a.empty() && a == b);
        std::filesystem::remove_all(tmp);
    }

    if (failures) {
        std::cout << failures << " selftest check(s) failed\n";
        return 2;
    }
    std::cout << "all selftest checks passed\n";
    return 0;
}

void apply_env_overrides(ExperimentConfig& cfg, int& threads) {
    if (const char* seed = std::getenv("GIBBSLAB_SEED")) cfg.master_seed = std::stoull(seed);
    if (const char* th = std::getenv("GIBBSLAB_THREADS")) threads = std::stoi(th);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"gibbslab: disordered log-concave Gibbs measures, sampled and verified"};
    app.require_subcommand(1);

    auto* selftest_cmd = app.add_subcommand("selftest", "run the built-in invariant suite");

    std::string config_path;
    auto* gate_cmd = app.add_subcommand("oracle-check", "run the oracle gate for a config");
    gate_cmd->add_option("--config", config_path, "experiment config (json)")->required();

    std::string run_config, out_dir = ".";
    int threads = 1;
    bool no_resume = false;
    auto* run_cmd = app.add_subcommand("run", "run an experiment sweep");
    run_cmd->add_option("--config", run_config, "experiment config (json)")->required();
    run_cmd->add_option("--threads", threads, "worker threads");
    run_cmd->add_option("--out", out_dir, "output directory");
    run_cmd->add_flag("--no-resume", no_resume, "ignore existing partial results");

    std::string report_in, report_out = "report";
    bool svg = false;
    auto* report_cmd = app.add_subcommand("report", "summarize a results file");
    report_cmd->add_option("--in", report_in, "results csv")->required();
    report_cmd->add_option("--out", report_out, "report output directory");
    report_cmd->add_flag("--svg", svg, "emit SVG line charts");

    CLI11_PARSE(app, argc, argv);

    try {
        if (selftest_cmd->parsed()) return selftest();

        if (gate_cmd->parsed()) {
            auto cfg = load_config(config_path);
            int t_unused = 1;
            apply_env_overrides(cfg, t_unused);
            const auto report = gibbslab::oracle_gate(cfg);
            for (const auto& c : report.checks)
                std::cout << (c.pass ? "[ok]   " : "[FAIL] ") << c.name
                          << (c.detail.empty() ? "" : "  (" + c.detail + ")") << "\n";
            if (!report.pass) {
                std::cout << "oracle gate failed\n";
                return 2;
            }
            std::cout << "oracle gate passed\n";
            return 0;
        }

        if (run_cmd->parsed()) {
            auto cfg = load_config(run_config);
            apply_env_overrides(cfg, threads);
            const auto outcome = gibbslab::run_experiment(cfg, out_dir, threads, !no_resume);
            std::cout << "wrote " << outcome.rows_written << " rows to "
                      << outcome.results_path;
            if (outcome.groups_skipped)
                std::cout << " (resumed past " << outcome.groups_skipped << " complete groups)";
            std::cout << "\n";
            return 0;
        }

        if (report_cmd->parsed()) {
            const auto outcome = gibbslab::write_report(report_in, report_out, svg);
            for (const auto& f : outcome.files) std::cout << f << "\n";
            return 0;
        }
    } catch (const gibbslab::GateFailure& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const gibbslab::DiagnosticFailure& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: invalid config: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
