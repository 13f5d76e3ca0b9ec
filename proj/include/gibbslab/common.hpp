#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gibbslab {

using std::size_t;

// Validation failures (bad user input / config) -> std::invalid_argument.
// Out-of-domain numeric arguments -> std::domain_error.
// Internal invariant violations -> logic_error via check_invariant.

inline void check_arg(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

inline void check_domain(bool ok, const std::string& msg) {
    if (!ok) throw std::domain_error(msg);
}

inline void check_invariant(bool ok, const std::string& msg) {
    if (!ok) throw std::logic_error(msg);
}

inline double sq(double x) { return x * x; }

inline bool in_box(std::span<const double> sigma) {
    for (double x : sigma)
        if (!(std::fabs(x) <= 1.0)) return false;
    return true;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2_squared(std::span<const double> a) { return dot(a, a); }

} // namespace gibbslab
