#pragma once

// Per-theorem summary tables from a results CSV, plus optional SVG charts.
// Every derived column the statements supply is recomputed from the row
// context: the thermal-concentration bound |k|^2/(N eps), the perturbation
// rate (s_N/N)^{1/6}, and the energy/FdS reference scales in s_N.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "gibbslab/csv.hpp"
#include "gibbslab/svg.hpp"

namespace gibbslab {

namespace detail {

inline double k_norm_sq(const std::string& dashed) {
    double s = 0;
    size_t pos = 0;
    while (pos < dashed.size()) {
        size_t next = dashed.find('-', pos);
        if (next == std::string::npos) next = dashed.size();
        const double v = std::stod(dashed.substr(pos, next - pos));
        s += v * v;
        pos = next + 1;
    }
    return s;
}

struct Table {
    std::string name;
    std::string header;
    std::vector<std::string> lines;
};

inline void write_table(const std::filesystem::path& dir, const Table& t,
                        std::vector<std::string>& files) {
    if (t.lines.empty()) return;
    const auto path = dir / (t.name + ".csv");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("report: cannot open '" + path.string() + "'");
    out << t.header << "\n";
    for (const auto& l : t.lines) out << l << "\n";
    files.push_back(path.string());
}

} // namespace detail

struct ReportOutcome {
    std::vector<std::string> files;
};

inline ReportOutcome write_report(const std::string& results_path, const std::string& out_dir,
                                  bool svg = false) {
    const auto rows = read_result_rows(results_path);
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);
    ReportOutcome outcome;

    detail::Table thm_bound{"thermal_concentration_bound",
                            "model,N,k,eps,estimate,stderr,bound,pass", {}};
    detail::Table rs_series{"replica_symmetry_series", "model,k,N,eps,value,stderr", {}};
    detail::Table gap_series{"perturbation_gap_series", "model,k,N,s_N,value,stderr,rate", {}};
    detail::Table dec_series{"decoupling_series", "model,mode,instance,N,t,value,stderr", {}};
    detail::Table fds_series{"fds_series", "model,instance,N,s_N,value,stderr,ref_sqrt_2_over_s",
                             {}};
    detail::Table energy_series{"energy_concentration_series",
                                "model,instance,N,s_N,value,stderr,ref_sqrt_2s", {}};
    detail::Table fe_series{"free_entropy_variance_series",
                            "model,instance,N,value,stderr,value_over_N", {}};

    std::map<std::string, std::vector<std::pair<double, double>>> rs_points, gap_points,
        gap_rate_points, dec_points, bound_est_points, bound_points;

    for (const auto& r : rows) {
        if (r.estimator == "thermal_variance_agg" ||
            (r.estimator == "thermal_variance" && r.n_disorder > 1)) {
            const double bound = detail::k_norm_sq(r.k) / (r.N * r.eps);
            const bool pass = r.value <= bound + 3 * r.stderr_;
            thm_bound.lines.push_back(csv_quote(r.model) + "," + std::to_string(r.N) + "," +
                                      csv_quote(r.k) + "," + format_g17(r.eps) + "," +
                                      format_g17(r.value) + "," + format_g17(r.stderr_) + "," +
                                      format_g17(bound) + "," + (pass ? "1" : "0"));
            const std::string key = r.model + " k=" + r.k;
            bound_est_points[key].emplace_back(r.N, r.value);
            bound_points[key + " bound"].emplace_back(r.N, bound);
        } else if (r.estimator == "quenched_variance") {
            rs_series.lines.push_back(csv_quote(r.model) + "," + csv_quote(r.k) + "," +
                                      std::to_string(r.N) + "," + format_g17(r.eps) + "," +
                                      format_g17(r.value) + "," + format_g17(r.stderr_));
            rs_points[r.model + " k=" + r.k].emplace_back(r.N, r.value);
        } else if (r.estimator == "mean_gap") {
            const double rate = std::pow(r.s_N / r.N, 1.0 / 6.0);
            gap_series.lines.push_back(csv_quote(r.model) + "," + csv_quote(r.k) + "," +
                                       std::to_string(r.N) + "," + format_g17(r.s_N) + "," +
                                       format_g17(r.value) + "," + format_g17(r.stderr_) + "," +
                                       format_g17(rate));
            gap_points[r.model + " k=" + r.k].emplace_back(r.N, r.value);
            gap_rate_points["rate (s_N/N)^{1/6}"].emplace_back(r.N, rate);
        } else if (r.estimator.rfind("decorr_", 0) == 0 && r.n_disorder > 1) {
            const bool quenched = r.estimator.rfind("decorr_quenched", 0) == 0;
            const std::string instance = r.estimator.substr(quenched ? 15 : 14);
            dec_series.lines.push_back(csv_quote(r.model) + "," +
                                       (quenched ? "quenched" : "thermal") + "," +
                                       csv_quote(instance) + "," + std::to_string(r.N) + "," +
                                       format_g17(r.t) + "," + format_g17(r.value) + "," +
                                       format_g17(r.stderr_));
            dec_points[(quenched ? "quenched " : "thermal ") + instance].emplace_back(
                r.N, std::fabs(r.value));
        } else if (r.estimator.rfind("fds_statistic", 0) == 0) {
            fds_series.lines.push_back(csv_quote(r.model) + "," +
                                       csv_quote(r.estimator.substr(13)) + "," +
                                       std::to_string(r.N) + "," + format_g17(r.s_N) + "," +
                                       format_g17(r.value) + "," + format_g17(r.stderr_) + "," +
                                       format_g17(std::sqrt(2.0 / std::max(r.s_N, 1e-300))));
        } else if (r.estimator.rfind("energy_concentration", 0) == 0) {
            energy_series.lines.push_back(
                csv_quote(r.model) + "," + csv_quote(r.estimator.substr(20)) + "," +
                std::to_string(r.N) + "," + format_g17(r.s_N) + "," + format_g17(r.value) + "," +
                format_g17(r.stderr_) + "," + format_g17(std::sqrt(2.0 * r.s_N)));
        } else if (r.estimator.rfind("free_entropy_variance", 0) == 0) {
            fe_series.lines.push_back(csv_quote(r.model) + "," +
                                      csv_quote(r.estimator.substr(21)) + "," +
                                      std::to_string(r.N) + "," + format_g17(r.value) + "," +
                                      format_g17(r.stderr_) + "," + format_g17(r.value / r.N));
        }
    }

    detail::write_table(dir, thm_bound, outcome.files);
    detail::write_table(dir, rs_series, outcome.files);
    detail::write_table(dir, gap_series, outcome.files);
    detail::write_table(dir, dec_series, outcome.files);
    detail::write_table(dir, fds_series, outcome.files);
    detail::write_table(dir, energy_series, outcome.files);
    detail::write_table(dir, fe_series, outcome.files);

    if (svg) {
        auto emit = [&](const std::string& name, const std::string& title,
                        const std::map<std::string, std::vector<std::pair<double, double>>>& sets,
                        const std::map<std::string, std::vector<std::pair<double, double>>>& extra =
                            {}) {
            if (sets.empty()) return;
            std::vector<SvgSeries> series;
            for (const auto& [label, pts] : sets) {
                SvgSeries s{label, pts};
                std::sort(s.points.begin(), s.points.end());
                series.push_back(std::move(s));
            }
            for (const auto& [label, pts] : extra) {
                SvgSeries s{label, pts};
                std::sort(s.points.begin(), s.points.end());
                s.points.erase(std::unique(s.points.begin(), s.points.end()), s.points.end());
                series.push_back(std::move(s));
            }
            const auto path = dir / (name + ".svg");
            write_line_chart(path.string(), title, "N", "value", series);
            outcome.files.push_back(path.string());
        };
        emit("thermal_concentration", "thermal variance vs bound", bound_est_points,
             bound_points);
        emit("replica_symmetry", "quenched multioverlap variance", rs_points);
        emit("perturbation_gap", "perturbation gap vs rate", gap_points, gap_rate_points);
        emit("decoupling", "decoupling statistics", dec_points);
    }
    return outcome;
}

} // namespace gibbslab
