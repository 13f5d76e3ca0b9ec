#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "gibbslab/harness.hpp"
#include "gibbslab/report.hpp"

using namespace gibbslab;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "gibbslab_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

ExperimentConfig small_config() {
    ExperimentConfig cfg;
    cfg.experiment_id = "small";
    cfg.model.family = "random_field";
    cfg.n_grid = {4, 8};
    cfg.schedule.eps_rule = "cube_root_ratio";
    cfg.schedule.s_rule = "ceil_sqrt";
    cfg.t_values = {0.0, 1.0};
    cfg.mcmc.n_samples = 30;
    cfg.replicas = {4, 2};
    cfg.n_disorder = 4;
    cfg.master_seed = 20240917;
    cfg.run_gate = false;

    EstimatorSpec tv;
    tv.kind = "thermal_variance";
    tv.k = MultioverlapIndex{1, 1};
    EstimatorSpec qv;
    qv.kind = "quenched_variance";
    qv.k = MultioverlapIndex{1, 1};
    EstimatorSpec gap;
    gap.kind = "mean_gap";
    gap.k = MultioverlapIndex{1, 1};
    EstimatorSpec dec;
    dec.kind = "decorrelation";
    dec.hs = {HTag::Identity, HTag::Square};
    dec.sites = {0, 1};
    dec.mode = "both";
    cfg.estimators = {tv, qv, gap, dec};
    return cfg;
}

} // namespace

TEST_CASE("config validation", "[harness]") {
    auto cfg = small_config();
    CHECK_NOTHROW(cfg.validate());

    SECTION("empty N grid") {
        cfg.n_grid.clear();
        CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    }
    SECTION("schedule violation on the grid") {
        cfg.schedule.eps_rule = "const";
        cfg.schedule.eps_const = 1.5; // eps must be in (0,1]
        CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    }
    SECTION("block size below replica count of k") {
        cfg.replicas.block_size = 1;
        CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    }
    SECTION("mean_gap needs both t endpoints") {
        cfg.t_values = {1.0};
        CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    }
    SECTION("bad t values") {
        cfg.t_values = {0.0, 1.5};
        CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    }
    SECTION("json round trip") {
        nlohmann::json j{{"experiment_id", "fromjson"},
                         {"N_grid", {4, 8}},
                         {"t_values", {0.0, 1.0}},
                         {"model", {{"family", "quadratic"}, {"coupling_scale", 0.5}}},
                         {"replicas", {{"n_blocks", 3}, {"block_size", 2}}},
                         {"estimators",
                          {{{"kind", "thermal_variance"}, {"k", {2, 1}}},
                           {{"kind", "decorrelation"},
                            {"h", {"identity", "tanh2"}},
                            {"sites", {0, 2}},
                            {"mode", "thermal"}}}},
                         {"n_disorder", 3},
                         {"master_seed", 99}};
        const auto parsed = config_from_json(j);
        CHECK(parsed.model.family == "quadratic");
        CHECK(parsed.estimators.size() == 2);
        CHECK(parsed.estimators[0].k.dashed() == "2-1");
        CHECK(parsed.estimators[1].hs[1] == HTag::Tanh2);
    }
    SECTION("unknown estimator kind is rejected at run time") {
        auto dir = fresh_dir("badkind");
        cfg.estimators[0].kind = "nonsense";
        CHECK_THROWS_AS(run_experiment(cfg, dir.string(), 1), std::invalid_argument);
    }
}

TEST_CASE("empty estimator list produces a header-only file", "[harness]") {
    auto cfg = small_config();
    cfg.estimators.clear();
    const auto dir = fresh_dir("empty");
    const auto outcome = run_experiment(cfg, dir.string(), 1);
    CHECK(outcome.rows_written == 0);
    CHECK(slurp(outcome.results_path) == std::string(result_csv_header()) + "\n");
}

TEST_CASE("identical seeds give byte-identical results, any thread count", "[harness][slow]") {
    auto cfg = small_config();
    const auto d1 = fresh_dir("det1"), d2 = fresh_dir("det2"), d3 = fresh_dir("det3");
    run_experiment(cfg, d1.string(), 1);
    run_experiment(cfg, d2.string(), 3);
    run_experiment(cfg, d3.string(), 2);
    const auto a = slurp(d1 / cfg.output);
    CHECK(a == slurp(d2 / cfg.output));
    CHECK(a == slurp(d3 / cfg.output));
    CHECK(a.find("group_done") != std::string::npos);
}

TEST_CASE("resume reproduces a fresh run after a simulated crash", "[harness][slow]") {
    auto cfg = small_config();
    const auto full_dir = fresh_dir("resume_full"), crash_dir = fresh_dir("resume_crash");
    run_experiment(cfg, full_dir.string(), 1);
    const std::string full = slurp(full_dir / cfg.output);

    // keep everything through the first group_done plus one torn-off row
    const auto first_done = full.find("group_done");
    REQUIRE(first_done != std::string::npos);
    const auto cut = full.find('\n', first_done) + 1;
    const std::string partial = full.substr(0, cut) + full.substr(cut, 37); // torn row
    {
        std::ofstream out(crash_dir / cfg.output, std::ios::binary);
        out << partial;
    }
    const auto outcome = run_experiment(cfg, crash_dir.string(), 2);
    CHECK(outcome.groups_skipped == 1);
    CHECK(slurp(crash_dir / cfg.output) == full);
}

TEST_CASE("oracle gate", "[harness][slow]") {
    SECTION("separable model passes, including the exact identity") {
        auto cfg = small_config();
        cfg.mcmc.n_samples = 150;
        const auto report = oracle_gate(cfg);
        CHECK(report.pass);
        bool saw_fds = false;
        for (const auto& c : report.checks)
            if (c.name == "fds_identity") {
                saw_fds = true;
                CHECK(c.pass);
            }
        CHECK(saw_fds);
    }
    SECTION("deliberately broken sampler fails with a named diagnostic") {
        auto cfg = small_config();
        cfg.mcmc.algorithm = McmcAlgorithm::ReflectedLangevin;
        cfg.mcmc.step_size = 1e-7; // frozen chains
        cfg.mcmc.n_samples = 220;
        const auto report = oracle_gate(cfg);
        CHECK(!report.pass);
        bool named = false;
        for (const auto& c : report.checks)
            if (!c.pass && (c.name == "sampler_diagnostics" || c.name == "sampler_vs_oracle"))
                named = true;
        CHECK(named);
    }
    SECTION("coupled model at large N skips with a note") {
        auto cfg = small_config();
        cfg.model.family = "quadratic";
        cfg.n_grid = {8, 16};
        cfg.estimators = {};
        const auto report = oracle_gate(cfg);
        CHECK(report.pass);
        REQUIRE(report.checks.size() == 1);
        CHECK(report.checks[0].name == "eligibility");
    }
}

TEST_CASE("quenched variance falls with N in a harness run", "[harness][slow]") {
    ExperimentConfig cfg;
    cfg.experiment_id = "scaling";
    cfg.n_grid = {16, 64};
    cfg.t_values = {0.0};
    cfg.mcmc.n_samples = 120;
    cfg.replicas = {4, 2};
    cfg.n_disorder = 16;
    cfg.master_seed = 424242;
    cfg.run_gate = false;
    EstimatorSpec qv;
    qv.kind = "quenched_variance";
    qv.k = MultioverlapIndex{1, 1};
    cfg.estimators = {qv};
    const auto dir = fresh_dir("scaling");
    const auto outcome = run_experiment(cfg, dir.string(), 2);

    double v16 = 0, v64 = 0, se16 = 0, se64 = 0;
    for (const auto& r : read_result_rows(outcome.results_path)) {
        if (r.estimator != "quenched_variance") continue;
        if (r.N == 16) {
            v16 = r.value;
            se16 = r.stderr_;
        } else {
            v64 = r.value;
            se64 = r.stderr_;
        }
    }
    INFO("v16 " << v16 << " +- " << se16 << "  v64 " << v64 << " +- " << se64);
    CHECK(v64 < v16 + 3 * std::sqrt(se16 * se16 + se64 * se64));
    CHECK(v64 < v16);
}

TEST_CASE("report tables and charts", "[harness][slow]") {
    auto cfg = small_config();
    const auto dir = fresh_dir("report_in");
    const auto outcome = run_experiment(cfg, dir.string(), 2);
    const auto report_dir = fresh_dir("report_out");
    const auto rep = write_report(outcome.results_path, report_dir.string(), true);
    REQUIRE(!rep.files.empty());

    SECTION("bound table carries |k|^2/(N eps)") {
        const auto path = report_dir / "thermal_concentration_bound.csv";
        REQUIRE(fs::exists(path));
        std::ifstream in(path);
        std::string header, line;
        std::getline(in, header);
        CHECK(header == "model,N,k,eps,estimate,stderr,bound,pass");
        bool checked = false;
        while (std::getline(in, line)) {
            const auto f = parse_csv_line(line);
            REQUIRE(f.size() == 8);
            const double N = std::stod(f[1]);
            const double eps = std::stod(f[3]);
            const double bound = std::stod(f[6]);
            CHECK(bound == Catch::Approx(2.0 / (N * eps)).epsilon(1e-12)); // |k|^2 = 2
            checked = true;
        }
        CHECK(checked);
    }
    SECTION("gap table carries the rate column (s_N/N)^{1/6}") {
        const auto path = report_dir / "perturbation_gap_series.csv";
        REQUIRE(fs::exists(path));
        std::ifstream in(path);
        std::string header, line;
        std::getline(in, header);
        bool checked = false;
        while (std::getline(in, line)) {
            const auto f = parse_csv_line(line);
            REQUIRE(f.size() == 7);
            const double N = std::stod(f[2]), s = std::stod(f[3]), rate = std::stod(f[6]);
            CHECK(rate == Catch::Approx(std::pow(s / N, 1.0 / 6.0)).epsilon(1e-12));
            checked = true;
        }
        CHECK(checked);
    }
    SECTION("svg charts are emitted") {
        bool saw_svg = false;
        for (const auto& f : rep.files)
            if (f.size() > 4 && f.substr(f.size() - 4) == ".svg") {
                saw_svg = true;
                const auto content = slurp(f);
                CHECK(content.find("<polyline") != std::string::npos);
            }
        CHECK(saw_svg);
    }
    SECTION("single-row input gives a single-row summary") {
        const auto tiny = fresh_dir("tiny");
        const auto tiny_csv = tiny / "one.csv";
        {
            std::ofstream out(tiny_csv);
            out << result_csv_header() << "\n";
            ResultRow r;
            r.experiment_id = "x";
            r.model = "random_field";
            r.N = 8;
            r.eps = 0.5;
            r.s_N = 2;
            r.t = 0;
            r.k = "1-1";
            r.estimator = "quenched_variance";
            r.value = 0.01;
            r.stderr_ = 0.001;
            r.n_disorder = 4;
            out << to_csv_line(r) << "\n";
        }
        const auto rep2 = write_report(tiny_csv.string(), (tiny / "out").string(), false);
        REQUIRE(rep2.files.size() == 1);
        std::ifstream in(rep2.files[0]);
        std::string header, line;
        std::getline(in, header);
        int rows = 0;
        while (std::getline(in, line))
            if (!line.empty()) ++rows;
        CHECK(rows == 1);
    }
}

TEST_CASE("csv quoting round trip", "[harness]") {
    ResultRow r;
    r.experiment_id = "weird,\"id\"\nwith newline";
    r.model = "random_field";
    r.N = 3;
    r.eps = 0.1;
    r.s_N = 1.7320508075688772;
    r.t = 1;
    r.k = "2-1";
    r.estimator = "overlap_mean";
    r.value = -0.12345678901234567;
    r.stderr_ = 1e-300;
    r.n_disorder = 2;
    r.n_blocks = 3;
    r.seed = 18446744073709551615ull;
    const auto line = to_csv_line(r);
    // the embedded newline is quoted, so single-line parsing applies only to
    // fields without it; exercise comma/quote handling here
    ResultRow r2 = r;
    r2.experiment_id = "weird,\"id\"";
    const auto back = row_from_csv_line(to_csv_line(r2));
    CHECK(back.experiment_id == r2.experiment_id);
    CHECK(back.value == r2.value); // 17 significant digits round-trip exactly
    CHECK(back.stderr_ == r2.stderr_);
    CHECK(back.seed == r2.seed);
    CHECK(back.s_N == r2.s_N);
    (void)line;
}
