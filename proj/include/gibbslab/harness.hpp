#pragma once

// Experiment orchestration: a validated config drives seeded sweeps over
// (N, t, disorder) cells, evaluated in parallel by a work queue and written
// to a results CSV in a deterministic order (identical bytes for identical
// seeds, whatever the thread count).
//
// Rows are appended whole and each N-group ends with a group_done marker;
// resume truncates the file back to the last complete group and recomputes
// the rest, reproducing exactly what a fresh run would have written.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "gibbslab/csv.hpp"
#include "gibbslab/estimators.hpp"
#include "gibbslab/fds.hpp"
#include "gibbslab/models.hpp"
#include "gibbslab/oracle.hpp"
#include "gibbslab/sampler.hpp"
#include "gibbslab/schedule.hpp"

namespace gibbslab {

struct DiagnosticFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct GateFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ModelSpec {
    std::string family = "random_field";
    double field_std = 1.0;
    double coupling_scale = 1.0;
    double noise_std = 1.0;
    double m_factor = 2.0; // M = round(m_factor * N) for the coupled families

    void validate() const {
        check_arg(family == "random_field" || family == "quadratic" || family == "planted_ridge",
                  "config: unknown model family '" + family + "'");
        check_arg(field_std > 0 && coupling_scale > 0 && noise_std > 0 && m_factor > 0,
                  "config: model parameters must be positive");
    }
};

struct ReplicaLayout {
    int n_blocks = 4;
    int block_size = 2;
    int total() const { return n_blocks * block_size; }
};

struct EstimatorSpec {
    std::string kind;
    MultioverlapIndex k{1};
    std::vector<HTag> hs;
    std::vector<int> sites;
    std::string mode = "thermal"; // decorrelation: thermal | quenched | both
    PerturbationIndex index{0};
    FdsF f = FdsF::One;
    int n = 1;
    int depth = 12;
    std::vector<VTag> vtags{VTag::None};

    bool needs_ensemble() const { return kind != "free_entropy_variance"; }

    std::string instance_id() const {
        if (kind == "decorrelation") {
            std::string s = "[";
            for (size_t i = 0; i < hs.size(); ++i)
                s += (i ? "-" : "") + h_tag_name(hs[i]);
            s += "@";
            for (size_t i = 0; i < sites.size(); ++i)
                s += (i ? "-" : "") + std::to_string(sites[i]);
            return s + "]";
        }
        if (kind == "energy_concentration") return "[I=" + index.to_string() + "]";
        if (kind == "fds_statistic")
            return "[I=" + index.to_string() + ",f=" + fds_f_name(f) + ",n=" +
                   std::to_string(n) + "]";
        return "";
    }
};

struct ExperimentConfig {
    std::string experiment_id = "experiment";
    ModelSpec model;
    std::vector<long> n_grid;
    RegularizationSchedule schedule;
    std::vector<double> t_values{1.0};
    McmcConfig mcmc;
    ReplicaLayout replicas;
    std::vector<EstimatorSpec> estimators;
    int n_disorder = 8;
    TruncationPolicy truncation;
    uint64_t master_seed = 1;
    std::string output = "results.csv";
    bool run_gate = true;

    void validate() const {
        model.validate();
        check_arg(!n_grid.empty(), "config: N grid must be non-empty");
        schedule.validate(n_grid);
        check_arg(n_disorder >= 1, "config: n_disorder must be >= 1");
        check_arg(replicas.n_blocks >= 1 && replicas.block_size >= 1,
                  "config: replica layout must be positive");
        mcmc.validate();
        truncation.validate();
        check_arg(!t_values.empty(), "config: need at least one t value");
        for (double t : t_values) check_arg(t >= 0 && t <= 1, "config: t must be in [0,1]");
        for (size_t a = 0; a < t_values.size(); ++a)
            for (size_t b = a + 1; b < t_values.size(); ++b)
                check_arg(t_values[a] != t_values[b], "config: duplicate t values");
        check_arg(!output.empty(), "config: output path must be set");

        const bool has0 = std::count(t_values.begin(), t_values.end(), 0.0) > 0;
        const bool has1 = std::count(t_values.begin(), t_values.end(), 1.0) > 0;
        for (const auto& e : estimators) {
            if (e.kind == "thermal_variance" || e.kind == "quenched_variance" ||
                e.kind == "overlap_mean" || e.kind == "mean_gap" || e.kind == "brascamp_lieb") {
                e.k.validate();
                check_arg(replicas.block_size >= e.k.n(),
                          "config: block_size below the replica count of k for " + e.kind);
            }
            if (e.kind == "thermal_variance" || e.kind == "quenched_variance" ||
                e.kind == "brascamp_lieb")
                check_arg(replicas.n_blocks >= 2, "config: " + e.kind + " needs >= 2 blocks");
            if (e.kind == "quenched_variance")
                check_arg(n_disorder >= 2, "config: quenched_variance needs >= 2 disorders");
            if (e.kind == "mean_gap")
                check_arg(has0 && has1, "config: mean_gap needs t values 0 and 1");
            if (e.kind == "decorrelation") {
                check_arg(!e.hs.empty() && e.hs.size() == e.sites.size(),
                          "config: decorrelation needs matching h and site lists");
                check_arg(e.mode == "thermal" || e.mode == "quenched" || e.mode == "both",
                          "config: decorrelation mode must be thermal|quenched|both");
                if (e.mode != "quenched")
                    check_arg(replicas.n_blocks >= static_cast<int>(e.hs.size()),
                              "config: decorrelation needs one block per h factor");
                if (e.mode != "thermal")
                    check_arg(n_disorder >= std::max<int>(2, static_cast<int>(e.hs.size())),
                              "config: quenched decorrelation needs enough disorders");
            }
            if (e.kind == "energy_concentration") {
                e.index.validate();
                check_arg(n_disorder >= 2, "config: energy_concentration needs >= 2 disorders");
            }
            if (e.kind == "fds_statistic") {
                e.index.validate();
                check_arg(e.n >= 1 && replicas.block_size >= e.n &&
                              replicas.n_blocks >= e.n + 1,
                          "config: fds_statistic needs block_size >= n and n+1 blocks");
                check_arg(n_disorder >= 2, "config: fds_statistic needs >= 2 disorders");
            }
            if (e.kind == "free_entropy_variance") {
                check_arg(model.family == "random_field",
                          "config: free_entropy_variance supports separable models only");
                check_arg(n_disorder >= 2, "config: free_entropy_variance needs >= 2 disorders");
            }
        }
    }
};

// --- config JSON ---

inline void from_json(const nlohmann::json& j, ModelSpec& m) {
    m.family = j.value("family", std::string("random_field"));
    m.field_std = j.value("field_std", 1.0);
    m.coupling_scale = j.value("coupling_scale", 1.0);
    m.noise_std = j.value("noise_std", 1.0);
    m.m_factor = j.value("m_factor", 2.0);
}

inline void from_json(const nlohmann::json& j, EstimatorSpec& e) {
    e.kind = j.at("kind").get<std::string>();
    if (j.contains("k")) e.k = MultioverlapIndex(j.at("k").get<std::vector<int>>());
    if (j.contains("h")) {
        for (const auto& t : j.at("h")) e.hs.push_back(h_tag_from_string(t.get<std::string>()));
    }
    if (j.contains("sites")) e.sites = j.at("sites").get<std::vector<int>>();
    e.mode = j.value("mode", std::string("thermal"));
    if (j.contains("index")) e.index = PerturbationIndex(j.at("index").get<std::vector<int>>());
    if (j.contains("f")) {
        const auto s = j.at("f").get<std::string>();
        if (s == "1") e.f = FdsF::One;
        else if (s == "sigma1") e.f = FdsF::Sigma1;
        else if (s == "sigma1_sigma2") e.f = FdsF::Sigma1Sigma2;
        else throw std::invalid_argument("config: unknown fds f '" + s + "'");
    }
    e.n = j.value("n", 1);
    e.depth = j.value("depth", 12);
    if (j.contains("v_tags")) {
        e.vtags.clear();
        for (const auto& t : j.at("v_tags")) e.vtags.push_back(v_tag_from_string(t));
    }
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    c.experiment_id = j.value("experiment_id", std::string("experiment"));
    if (j.contains("model")) c.model = j.at("model").get<ModelSpec>();
    c.n_grid = j.at("N_grid").get<std::vector<long>>();
    if (j.contains("schedule")) c.schedule = j.at("schedule").get<RegularizationSchedule>();
    if (j.contains("t_values")) c.t_values = j.at("t_values").get<std::vector<double>>();
    if (j.contains("mcmc")) c.mcmc = j.at("mcmc").get<McmcConfig>();
    if (j.contains("replicas")) {
        c.replicas.n_blocks = j.at("replicas").value("n_blocks", 4);
        c.replicas.block_size = j.at("replicas").value("block_size", 2);
    }
    if (j.contains("estimators"))
        c.estimators = j.at("estimators").get<std::vector<EstimatorSpec>>();
    c.n_disorder = j.value("n_disorder", 8);
    if (j.contains("perturbation")) {
        c.truncation.max_order = j.at("perturbation").value("max_order", 3);
        c.truncation.max_iota = j.at("perturbation").value("max_iota", 8);
    }
    c.master_seed = j.value("master_seed", static_cast<uint64_t>(1));
    c.output = j.value("output", std::string("results.csv"));
    c.run_gate = j.value("gate", true);
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
    nlohmann::json j;
    in >> j;
    return config_from_json(j);
}

// --- seeded disorder construction per cell ---

inline std::shared_ptr<DisorderSample> build_disorder(const ExperimentConfig& cfg, long N,
                                                      double s_N, double t, uint64_t cell_base) {
    DisorderSample d;
    const int M = std::max<long>(N, std::lround(cfg.model.m_factor * N));
    if (cfg.model.family == "random_field")
        d = make_random_field(static_cast<int>(N), cfg.model.field_std, cell_base);
    else if (cfg.model.family == "quadratic")
        d = make_quadratic(static_cast<int>(N), M, cfg.model.coupling_scale, cell_base);
    else
        d = make_planted_ridge(static_cast<int>(N), M, cfg.model.noise_std, cell_base);
    attach_perturbation(d, s_N, t, cfg.truncation, cell_base);
    return std::make_shared<DisorderSample>(std::move(d));
}

// --- per-cell evaluation ---

namespace detail {

struct CellOutputs {
    std::vector<ResultRow> rows;
    std::map<int, QuenchedSummary> quenched;
    std::map<int, DecouplingSummary> decoupling;
    std::map<int, EnergyConcentrationSummary> energy;
    std::map<int, FdsCellSummary> fds;
    std::map<int, double> overlap_mean_for_gap;
    std::map<int, std::vector<double>> free_entropy_values; // per estimator, per V tag
    std::map<int, std::pair<double, double>> bl; // variance, bound per estimator
    bool diag_failed = false;
    std::string diag_detail;
};

inline ResultRow base_row(const ExperimentConfig& cfg, long N, double eps, double s_N, double t,
                          uint64_t seed) {
    ResultRow r;
    r.experiment_id = cfg.experiment_id;
    r.model = cfg.model.family;
    r.N = N;
    r.eps = eps;
    r.s_N = s_N;
    r.t = t;
    r.seed = seed;
    return r;
}

inline CellOutputs run_cell(const ExperimentConfig& cfg, long N, size_t t_idx, int d_idx) {
    const double t = cfg.t_values[t_idx];
    const double eps = cfg.schedule.eps(N);
    const double s_N = std::min<double>(cfg.schedule.s(N), static_cast<double>(N));
    const uint64_t cell_base =
        derive_seed(cfg.master_seed, {static_cast<uint64_t>(N), static_cast<uint64_t>(d_idx)});

    CellOutputs out;
    auto disorder = build_disorder(cfg, N, s_N, t, cell_base);

    bool needs_ensemble = false;
    for (const auto& e : cfg.estimators) needs_ensemble |= e.needs_ensemble();

    std::optional<ReplicaEnsemble> ens;
    if (needs_ensemble) {
        const uint64_t chain_base = derive_seed(cell_base, {purpose::chain});
        ens = sample_replicas(disorder, eps, t, cfg.replicas.total(), cfg.replicas.block_size,
                              cfg.mcmc, chain_base);
        // the 1.05 scale-reduction flag has its nominal false-positive rate
        // only for reasonably long chains; short runs rely on the oracle gate
        if (ens->replicas.size() >= 2 && ens->n_samples() >= 100) {
            const auto diag = diagnostics(*ens, false);
            if (diag.failed) {
                out.diag_failed = true;
                out.diag_detail = "N=" + std::to_string(N) + " t=" + format_g17(t) +
                                  " disorder=" + std::to_string(d_idx) + ": " + diag.detail;
            }
        }
    }

    for (size_t e = 0; e < cfg.estimators.size(); ++e) {
        const auto& spec = cfg.estimators[e];
        const uint64_t boot = derive_seed(
            cfg.master_seed,
            {purpose::bootstrap, static_cast<uint64_t>(N), t_idx, e, static_cast<uint64_t>(d_idx)});
        ResultRow row = base_row(cfg, N, eps, s_N, t, cell_base);
        row.n_disorder = 1;

        if (spec.kind == "thermal_variance") {
            const auto est = thermal_variance(*ens, spec.k, boot);
            row.k = spec.k.dashed();
            row.estimator = "thermal_variance";
            row.value = est.value;
            row.stderr_ = est.stderr_;
            row.n_blocks = est.n_replica_blocks;
            out.rows.push_back(row);
        } else if (spec.kind == "overlap_mean") {
            const auto est = overlap_mean(*ens, spec.k, boot);
            row.k = spec.k.dashed();
            row.estimator = "overlap_mean";
            row.value = est.value;
            row.stderr_ = est.stderr_;
            row.n_blocks = est.n_replica_blocks;
            out.rows.push_back(row);
        } else if (spec.kind == "quenched_variance") {
            const auto s = quenched_summary(*ens, spec.k);
            out.quenched[static_cast<int>(e)] = s;
            row.k = spec.k.dashed();
            row.estimator = "overlap_mean";
            row.value = s.thermal_mean;
            row.n_blocks = s.n_blocks;
            out.rows.push_back(row);
            row.estimator = "overlap_sq";
            row.value = s.square_mean;
            out.rows.push_back(row);
        } else if (spec.kind == "decorrelation") {
            if (spec.mode != "quenched") {
                const auto est = decorrelation_thermal(*ens, spec.hs, spec.sites, boot);
                row.estimator = "decorr_thermal" + spec.instance_id();
                row.value = est.value;
                row.stderr_ = est.stderr_;
                row.n_blocks = est.n_replica_blocks;
                out.rows.push_back(row);
            }
            if (spec.mode != "thermal")
                out.decoupling[static_cast<int>(e)] =
                    decoupling_summary(*ens, spec.hs, spec.sites);
        } else if (spec.kind == "energy_concentration") {
            out.energy[static_cast<int>(e)] = energy_concentration_summary(*ens, spec.index);
        } else if (spec.kind == "fds_statistic") {
            out.fds[static_cast<int>(e)] =
                fds_cell_summary(*ens, spec.index, spec.f, spec.n, spec.depth);
        } else if (spec.kind == "mean_gap") {
            out.overlap_mean_for_gap[static_cast<int>(e)] = overlap_mean(*ens, spec.k, boot).value;
        } else if (spec.kind == "brascamp_lieb") {
            const auto g = bl_multioverlap_observable(spec.k, static_cast<int>(N));
            const auto res = brascamp_lieb_check(*ens, g, boot);
            out.bl[static_cast<int>(e)] = {res.variance, res.bound};
            row.k = spec.k.dashed();
            row.estimator = "bl_variance";
            row.value = res.variance;
            row.stderr_ = res.variance_stderr;
            row.n_blocks = ens->n_blocks();
            out.rows.push_back(row);
            row.estimator = "bl_bound";
            row.value = res.bound;
            row.stderr_ = res.bound_stderr;
            out.rows.push_back(row);
        } else if (spec.kind == "free_entropy_variance") {
            std::vector<double> vals;
            for (VTag tag : spec.vtags) {
                const double fv = free_entropy_with_v(*disorder, eps, tag, s_N);
                vals.push_back(fv);
                row.estimator = "free_entropy[" + v_tag_name(tag) + "]";
                row.value = fv;
                out.rows.push_back(row);
            }
            out.free_entropy_values[static_cast<int>(e)] = vals;
        } else {
            throw std::invalid_argument("config: unknown estimator kind '" + spec.kind + "'");
        }
    }
    return out;
}

} // namespace detail

struct RunOutcome {
    std::string results_path;
    long rows_written = 0;
    long groups_skipped = 0;
};

// --- oracle gate ---

struct GateCheck {
    std::string name;
    bool pass = true;
    std::string detail;
};

struct GateReport {
    bool pass = true;
    std::vector<GateCheck> checks;
};

inline GateReport oracle_gate(const ExperimentConfig& cfg) {
    GateReport report;
    const long N0 = cfg.n_grid.front();
    const bool separable = cfg.model.family == "random_field";
    if (!separable && N0 > 3) {
        report.checks.push_back({"eligibility", true, "model not oracle-eligible at N=" +
                                                          std::to_string(N0) + "; gate skipped"});
        return report;
    }

    const double eps = cfg.schedule.eps(N0);
    const double s_N = std::min<double>(cfg.schedule.s(N0), static_cast<double>(N0));
    double t = 0.0;
    for (double tv : cfg.t_values) t = std::max(t, tv);
    const uint64_t base = derive_seed(cfg.master_seed, {purpose::gate, 1});

    // sampler moments against the quadrature oracle
    {
        auto disorder = build_disorder(cfg, N0, s_N, t, base);
        McmcConfig mc = cfg.mcmc;
        mc.n_samples = std::max(mc.n_samples, 200);
        const auto ens = sample_replicas(disorder, eps, t, 8, 1, mc,
                                         derive_seed(base, {purpose::chain}));
        const auto diag = diagnostics(ens, false);
        if (diag.failed || diag.degenerate) {
            report.checks.push_back(
                {"sampler_diagnostics", false,
                 diag.detail.empty() ? "diagnostics failed" : diag.detail});
        } else {
            report.checks.push_back({"sampler_diagnostics", true, ""});
        }

        std::unique_ptr<SeparableOracle> sep;
        std::unique_ptr<GridOracle> grid;
        if (disorder->model->separable())
            sep = std::make_unique<SeparableOracle>(*disorder, eps, t);
        else
            grid = std::make_unique<GridOracle>(*disorder, eps);
        const int n_sites = static_cast<int>(std::min<long>(N0, 3));
        bool ok = true;
        std::string detail;
        for (int site = 0; site < n_sites; ++site) {
            for (int p : {1, 2, 4}) {
                std::vector<double> means;
                for (const auto& r : ens.replicas) {
                    double acc = 0;
                    for (const auto& s : r.samples) acc += pow_int(s[site], p);
                    means.push_back(acc / r.samples.size());
                }
                const double mc_mean = mean(means);
                const double se = stderr_of_mean(means);
                double exact;
                if (sep) {
                    exact = sep->site_moment(site, p);
                } else {
                    std::vector<int> a(N0, 0);
                    a[site] = p;
                    exact = grid->joint_moment(a);
                }
                if (std::fabs(mc_mean - exact) > 4 * se + 1e-3) {
                    ok = false;
                    detail = "site " + std::to_string(site) + " power " + std::to_string(p) +
                             ": mc " + format_g17(mc_mean) + " oracle " + format_g17(exact) +
                             " stderr " + format_g17(se);
                }
            }
        }
        report.checks.push_back({"sampler_vs_oracle", ok, detail});
    }

    // exact Poisson identity on a small separable instance
    {
        const auto d2 = make_random_field(2, 1.0, derive_seed(base, {2}));
        const auto r = fds_identity_check(d2, 0.3, PerturbationIndex{0}, FdsF::Sigma1, 1, 1.0);
        report.checks.push_back({"fds_identity", r.gap <= 1e-6,
                                 r.gap <= 1e-6 ? "" : "gap " + format_g17(r.gap)});
    }

    for (const auto& c : report.checks) report.pass = report.pass && c.pass;
    return report;
}

// --- the run itself ---

namespace detail {

struct ResumeState {
    std::set<long> completed;
    std::uintmax_t keep_bytes = 0;
    bool usable = false;
};

inline ResumeState scan_existing_results(const std::string& path) {
    ResumeState st;
    std::ifstream in(path);
    if (!in) return st;
    std::string line;
    std::uintmax_t offset = 0;
    bool first = true;
    while (std::getline(in, line)) {
        const std::uintmax_t line_bytes = line.size() + 1;
        if (first) {
            if (line != result_csv_header()) return st; // foreign file: start fresh
            first = false;
            offset += line_bytes;
            st.keep_bytes = offset;
            st.usable = true;
            continue;
        }
        offset += line_bytes;
        std::vector<std::string> f = parse_csv_line(line);
        if (f.size() == 13 && f[7] == "group_done") {
            st.completed.insert(std::stol(f[2]));
            st.keep_bytes = offset;
        }
    }
    return st;
}

} // namespace detail

inline RunOutcome run_experiment(const ExperimentConfig& cfg, const std::string& out_dir,
                                 int n_threads = 1, bool resume = true) {
    cfg.validate();
    check_arg(n_threads >= 1, "run: thread count must be >= 1");
    std::filesystem::create_directories(out_dir);
    const std::string path = (std::filesystem::path(out_dir) / cfg.output).string();

    if (cfg.run_gate) {
        const auto gate = oracle_gate(cfg);
        if (!gate.pass) {
            std::string detail = "oracle gate failed:";
            for (const auto& c : gate.checks)
                if (!c.pass) detail += " [" + c.name + "] " + c.detail;
            throw GateFailure(detail);
        }
    }

    RunOutcome outcome;
    outcome.results_path = path;

    if (cfg.estimators.empty()) {
        ResultWriter writer(path, false);
        return outcome; // header-only output
    }

    detail::ResumeState rs;
    if (resume && std::filesystem::exists(path)) {
        rs = detail::scan_existing_results(path);
        // completed groups must form a prefix of the grid; otherwise recompute
        if (rs.usable) {
            std::set<long> prefix;
            for (long n : cfg.n_grid) {
                if (!rs.completed.count(n)) break;
                prefix.insert(n);
            }
            if (prefix != rs.completed) rs.usable = false;
        }
    }

    std::unique_ptr<ResultWriter> writer;
    if (rs.usable) {
        std::filesystem::resize_file(path, rs.keep_bytes);
        writer = std::make_unique<ResultWriter>(path, true);
        outcome.groups_skipped = static_cast<long>(rs.completed.size());
    } else {
        rs.completed.clear();
        writer = std::make_unique<ResultWriter>(path, false);
    }

    for (long N : cfg.n_grid) {
        if (rs.completed.count(N)) continue;

        // cells of this group in deterministic order
        struct Cell {
            size_t t_idx;
            int d_idx;
        };
        std::vector<Cell> cells;
        for (size_t t_idx = 0; t_idx < cfg.t_values.size(); ++t_idx)
            for (int d = 0; d < cfg.n_disorder; ++d) cells.push_back({t_idx, d});

        std::vector<std::unique_ptr<detail::CellOutputs>> slots(cells.size());
        std::vector<std::exception_ptr> errors(cells.size());
        std::atomic<size_t> next{0};
        auto worker = [&] {
            while (true) {
                const size_t i = next.fetch_add(1);
                if (i >= cells.size()) break;
                try {
                    slots[i] = std::make_unique<detail::CellOutputs>(
                        detail::run_cell(cfg, N, cells[i].t_idx, cells[i].d_idx));
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        };
        {
            std::vector<std::thread> pool;
            const int nt = std::min<int>(n_threads, static_cast<int>(cells.size()));
            pool.reserve(nt);
            for (int w = 0; w < nt; ++w) pool.emplace_back(worker);
            for (auto& th : pool) th.join();
        }
        for (size_t i = 0; i < cells.size(); ++i)
            if (errors[i]) std::rethrow_exception(errors[i]);
        for (size_t i = 0; i < cells.size(); ++i)
            if (slots[i]->diag_failed)
                throw DiagnosticFailure("chain diagnostics failed at " + slots[i]->diag_detail);

        const double eps = cfg.schedule.eps(N);
        const double s_N = std::min<double>(cfg.schedule.s(N), static_cast<double>(N));

        // per-cell rows in cell order
        for (size_t i = 0; i < cells.size(); ++i)
            for (const auto& row : slots[i]->rows) {
                writer->write_row(row);
                ++outcome.rows_written;
            }

        // aggregates per (t, estimator)
        for (size_t t_idx = 0; t_idx < cfg.t_values.size(); ++t_idx) {
            const double t = cfg.t_values[t_idx];
            for (size_t e = 0; e < cfg.estimators.size(); ++e) {
                const auto& spec = cfg.estimators[e];
                const uint64_t boot = derive_seed(
                    cfg.master_seed, {purpose::bootstrap, static_cast<uint64_t>(N), t_idx, e});
                ResultRow row = detail::base_row(cfg, N, eps, s_N, t, cfg.master_seed);
                row.n_disorder = cfg.n_disorder;
                row.n_blocks = cfg.replicas.n_blocks;

                auto cell_of = [&](int d) -> const detail::CellOutputs& {
                    return *slots[t_idx * cfg.n_disorder + d];
                };

                if (spec.kind == "quenched_variance") {
                    std::vector<QuenchedSummary> summaries;
                    for (int d = 0; d < cfg.n_disorder; ++d)
                        summaries.push_back(cell_of(d).quenched.at(static_cast<int>(e)));
                    const auto [m, v] =
                        quenched_mean_and_variance_from_summaries(summaries, boot);
                    row.k = spec.k.dashed();
                    row.estimator = "quenched_mean";
                    row.value = m.value;
                    row.stderr_ = m.stderr_;
                    writer->write_row(row);
                    row.estimator = "quenched_variance";
                    row.value = v.value;
                    row.stderr_ = v.stderr_;
                    writer->write_row(row);
                    outcome.rows_written += 2;
                } else if (spec.kind == "decorrelation" && spec.mode != "thermal") {
                    std::vector<DecouplingSummary> summaries;
                    for (int d = 0; d < cfg.n_disorder; ++d)
                        summaries.push_back(cell_of(d).decoupling.at(static_cast<int>(e)));
                    const auto est = decorrelation_quenched_from_summaries(
                        summaries, static_cast<int>(spec.hs.size()), boot);
                    row.estimator = "decorr_quenched" + spec.instance_id();
                    row.value = est.value;
                    row.stderr_ = est.stderr_;
                    writer->write_row(row);
                    ++outcome.rows_written;
                } else if (spec.kind == "energy_concentration") {
                    std::vector<EnergyConcentrationSummary> summaries;
                    for (int d = 0; d < cfg.n_disorder; ++d)
                        summaries.push_back(cell_of(d).energy.at(static_cast<int>(e)));
                    const auto res = energy_concentration_from_summaries(summaries, boot);
                    row.estimator = "energy_concentration" + spec.instance_id();
                    row.value = res.stat.value;
                    row.stderr_ = res.stat.stderr_;
                    writer->write_row(row);
                    ++outcome.rows_written;
                } else if (spec.kind == "fds_statistic") {
                    std::vector<FdsCellSummary> summaries;
                    for (int d = 0; d < cfg.n_disorder; ++d)
                        summaries.push_back(cell_of(d).fds.at(static_cast<int>(e)));
                    const auto res = fds_statistic_from_summaries(summaries, spec.depth, boot);
                    row.estimator = "fds_statistic" + spec.instance_id();
                    row.value = res.est.value;
                    row.stderr_ = res.est.stderr_;
                    writer->write_row(row);
                    ++outcome.rows_written;
                } else if (spec.kind == "free_entropy_variance") {
                    for (size_t tg = 0; tg < spec.vtags.size(); ++tg) {
                        std::vector<double> vals;
                        for (int d = 0; d < cfg.n_disorder; ++d)
                            vals.push_back(
                                cell_of(d).free_entropy_values.at(static_cast<int>(e))[tg]);
                        const double var = vals.size() >= 2 ? sample_variance(vals) : 0.0;
                        Rng rng(fold_seed(boot, tg));
                        const double se =
                            vals.size() >= 2
                                ? bootstrap_stderr(vals.size(), 300, rng,
                                                   [&](std::span<const size_t> idx) {
                                                       std::vector<double> sub;
                                                       for (size_t q : idx)
                                                           sub.push_back(vals[q]);
                                                       return sample_variance(sub);
                                                   })
                                : 0.0;
                        row.estimator =
                            "free_entropy_variance[" + v_tag_name(spec.vtags[tg]) + "]";
                        row.value = var;
                        row.stderr_ = se;
                        writer->write_row(row);
                        ++outcome.rows_written;
                    }
                } else if (spec.kind == "thermal_variance" || spec.kind == "overlap_mean" ||
                           spec.kind == "brascamp_lieb") {
                    // disorder-averaged companion rows
                    std::vector<double> vals;
                    const std::string name = spec.kind == "thermal_variance"
                                                 ? "thermal_variance"
                                                 : (spec.kind == "overlap_mean" ? "overlap_mean"
                                                                                : "bl_margin");
                    for (int d = 0; d < cfg.n_disorder; ++d) {
                        if (spec.kind == "brascamp_lieb") {
                            const auto [var, bound] = cell_of(d).bl.at(static_cast<int>(e));
                            vals.push_back(bound - var);
                        } else {
                            for (const auto& r : cell_of(d).rows)
                                if (r.estimator == name && r.k == spec.k.dashed())
                                    vals.push_back(r.value);
                        }
                    }
                    row.k = spec.k.dashed();
                    row.estimator = name + "_agg";
                    row.value = mean(vals);
                    row.stderr_ = vals.size() >= 2 ? stderr_of_mean(vals) : 0.0;
                    writer->write_row(row);
                    ++outcome.rows_written;
                }
            }
        }

        // gap rows across the t pair (common random numbers by seed lineage)
        for (size_t e = 0; e < cfg.estimators.size(); ++e) {
            const auto& spec = cfg.estimators[e];
            if (spec.kind != "mean_gap") continue;
            size_t i1 = cfg.t_values.size(), i0 = cfg.t_values.size();
            for (size_t t_idx = 0; t_idx < cfg.t_values.size(); ++t_idx) {
                if (cfg.t_values[t_idx] == 1.0) i1 = t_idx;
                if (cfg.t_values[t_idx] == 0.0) i0 = t_idx;
            }
            std::vector<double> gaps;
            for (int d = 0; d < cfg.n_disorder; ++d) {
                const auto& c1 = *slots[i1 * cfg.n_disorder + d];
                const auto& c0 = *slots[i0 * cfg.n_disorder + d];
                gaps.push_back(std::fabs(c1.overlap_mean_for_gap.at(static_cast<int>(e)) -
                                         c0.overlap_mean_for_gap.at(static_cast<int>(e))));
            }
            const auto res = mean_gap_from_values(
                gaps, s_N, static_cast<double>(N),
                derive_seed(cfg.master_seed, {purpose::bootstrap, static_cast<uint64_t>(N), e, 99}));
            ResultRow row = detail::base_row(cfg, N, eps, s_N, -1.0, cfg.master_seed);
            row.n_disorder = cfg.n_disorder;
            row.k = spec.k.dashed();
            row.estimator = "mean_gap";
            row.value = res.stat.value;
            row.stderr_ = res.stat.stderr_;
            writer->write_row(row);
            ++outcome.rows_written;
        }

        ResultRow done = detail::base_row(cfg, N, eps, s_N, 0.0, cfg.master_seed);
        done.estimator = "group_done";
        done.value = 1;
        writer->write_row(done);
        ++outcome.rows_written;
    }

    return outcome;
}

} // namespace gibbslab
