#pragma once

// Size-dependent schedules for the regularization strength eps_N and the
// perturbation mean s_N. The asymptotic requirements (eps_N -> 0, N eps_N ->
// inf, s_N -> inf, s_N/N -> 0) are checked in their finite-grid form.

#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gibbslab/common.hpp"

namespace gibbslab {

struct RegularizationSchedule {
    // eps rules: "cube_root_ratio" (eps = (s_N/N)^{1/3}) or "const"
    // s rules:   "ceil_sqrt" (s = ceil(sqrt(N))) or "const"
    std::string eps_rule = "cube_root_ratio";
    std::string s_rule = "ceil_sqrt";
    double eps_const = 0.5;
    double s_const = 1.0;

    double s(long N) const {
        check_arg(N >= 1, "schedule: N must be >= 1");
        if (s_rule == "ceil_sqrt") return std::ceil(std::sqrt(static_cast<double>(N)));
        if (s_rule == "const") return s_const;
        throw std::invalid_argument("schedule: unknown s rule '" + s_rule + "'");
    }

    double eps(long N) const {
        check_arg(N >= 1, "schedule: N must be >= 1");
        if (eps_rule == "cube_root_ratio") return std::cbrt(s(N) / static_cast<double>(N));
        if (eps_rule == "const") return eps_const;
        throw std::invalid_argument("schedule: unknown eps rule '" + eps_rule + "'");
    }

    void validate(std::span<const long> n_grid) const {
        check_arg(!n_grid.empty(), "schedule: empty N grid");
        double prev_eps = INFINITY, prev_neps = 0, prev_s = 0;
        long prev_n = 0;
        for (long N : n_grid) {
            check_arg(N > prev_n, "schedule: N grid must be strictly increasing");
            const double e = eps(N), sv = s(N);
            check_arg(e > 0 && e <= 1.0, "schedule: eps_N must be in (0,1]");
            check_arg(e <= prev_eps + 1e-12, "schedule: eps_N must be non-increasing on the grid");
            check_arg(N * e >= prev_neps - 1e-9,
                      "schedule: N*eps_N must be non-decreasing on the grid");
            check_arg(sv > 0 && sv <= static_cast<double>(N),
                      "schedule: s_N must be in (0, N]");
            check_arg(sv >= prev_s - 1e-12, "schedule: s_N must be non-decreasing on the grid");
            prev_eps = e;
            prev_neps = N * e;
            prev_s = sv;
            prev_n = N;
        }
    }
};

inline void to_json(nlohmann::json& j, const RegularizationSchedule& s) {
    j = nlohmann::json{{"eps_rule", s.eps_rule},
                       {"s_rule", s.s_rule},
                       {"eps_const", s.eps_const},
                       {"s_const", s.s_const}};
}

inline void from_json(const nlohmann::json& j, RegularizationSchedule& s) {
    s.eps_rule = j.value("eps_rule", std::string("cube_root_ratio"));
    s.s_rule = j.value("s_rule", std::string("ceil_sqrt"));
    s.eps_const = j.value("eps_const", 0.5);
    s.s_const = j.value("s_const", 1.0);
}

} // namespace gibbslab
