#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <utility>

#include "mot/errors.hpp"
#include "mot/numerics.hpp"

namespace mot {

/// Sign of the cross derivative C_xyy (generalized Spence-Mirrlees condition).
enum class SmSign { positive, negative, zero, mixed, unknown };

enum class PayoffSymmetry { symmetric, asymmetric, unknown };

inline const char* to_string(SmSign s) {
    switch (s) {
        case SmSign::positive: return "positive";
        case SmSign::negative: return "negative";
        case SmSign::zero: return "zero";
        case SmSign::mixed: return "mixed";
        default: return "unknown";
    }
}

inline SmSign flipped(SmSign s) {
    if (s == SmSign::positive) return SmSign::negative;
    if (s == SmSign::negative) return SmSign::positive;
    return s;
}

/// Two-date payoff C(x, y) on (0, inf)^2 with its metadata.
struct Payoff {
    std::function<double(double, double)> eval;
    double growth_kappa = std::numeric_limits<double>::quiet_NaN();  // |C| <= kappa (1 + x + y)
    bool kappa_approximate = false;
    SmSign sm_sign = SmSign::unknown;
    PayoffSymmetry symmetry = PayoffSymmetry::unknown;
    std::string name;

    double operator()(double x, double y) const { return eval(x, y); }
};

namespace detail {

/// max |C| / (1 + x + y) over a log grid on [lo, hi]^2.
inline double estimate_kappa(const std::function<double(double, double)>& c, double lo = 1e-2,
                             double hi = 1e2, std::size_t n = 81) {
    const auto grid = log_grid(lo, hi, n);
    double k = 0.0;
    for (double x : grid) {
        for (double y : grid) k = std::max(k, std::abs(c(x, y)) / (1.0 + x + y));
    }
    return k;
}

inline std::string fmt_number(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

}  // namespace detail

/// |y - alpha x|
inline Payoff straddle_type_II(double alpha) {
    if (!(alpha > 0.0)) throw DomainError("straddle_type_II: alpha must be positive");
    Payoff p;
    p.eval = [alpha](double x, double y) { return std::abs(y - alpha * x); };
    p.growth_kappa = std::max(1.0, alpha);
    p.sm_sign = SmSign::unknown;
    p.symmetry = PayoffSymmetry::asymmetric;
    p.name = "straddle2:alpha=" + detail::fmt_number(alpha);
    return p;
}

/// |y / x - alpha|
inline Payoff straddle_type_I(double alpha) {
    if (!(alpha > 0.0)) throw DomainError("straddle_type_I: alpha must be positive");
    Payoff p;
    p.eval = [alpha](double x, double y) { return std::abs(y / x - alpha); };
    p.growth_kappa = detail::estimate_kappa(p.eval);
    p.kappa_approximate = true;
    p.sm_sign = SmSign::unknown;
    p.symmetry = PayoffSymmetry::asymmetric;
    p.name = "straddle1:alpha=" + detail::fmt_number(alpha);
    return p;
}

/// x exp(-y); C_xyy = exp(-y) > 0.
inline Payoff x_exp_minus_y() {
    Payoff p;
    p.eval = [](double x, double y) { return x * std::exp(-y); };
    p.growth_kappa = 1.0;
    p.sm_sign = SmSign::positive;
    p.symmetry = PayoffSymmetry::asymmetric;
    p.name = "xexp";
    return p;
}

/// (y - K)^+
inline Payoff call_on_second(double strike) {
    if (!(strike > 0.0)) throw DomainError("call: strike must be positive");
    Payoff p;
    p.eval = [strike](double, double y) { return std::max(y - strike, 0.0); };
    p.growth_kappa = 1.0;
    p.sm_sign = SmSign::zero;
    p.symmetry = PayoffSymmetry::asymmetric;
    p.name = "call:strike=" + detail::fmt_number(strike);
    return p;
}

/// y - x
inline Payoff forward_payoff() {
    Payoff p;
    p.eval = [](double x, double y) { return y - x; };
    p.growth_kappa = 1.0;
    p.sm_sign = SmSign::zero;
    p.symmetry = PayoffSymmetry::asymmetric;
    p.name = "forward";
    return p;
}

/// phi(x) + psi(y) + h(x) (y - x): a semi-statically replicable claim.
inline Payoff hedgeable_payoff(std::function<double(double)> phi, std::function<double(double)> psi,
                               std::function<double(double)> h, std::string name = "hedgeable") {
    Payoff p;
    p.eval = [phi = std::move(phi), psi = std::move(psi), h = std::move(h)](double x, double y) {
        return phi(x) + psi(y) + h(x) * (y - x);
    };
    p.growth_kappa = detail::estimate_kappa(p.eval);
    p.kappa_approximate = true;
    p.sm_sign = SmSign::zero;
    p.name = std::move(name);
    return p;
}

/// a C1 + b C2
inline Payoff linear_combination(double a, const Payoff& c1, double b, const Payoff& c2) {
    Payoff p;
    p.eval = [a, b, e1 = c1.eval, e2 = c2.eval](double x, double y) { return a * e1(x, y) + b * e2(x, y); };
    p.growth_kappa = std::abs(a) * c1.growth_kappa + std::abs(b) * c2.growth_kappa;
    p.kappa_approximate = c1.kappa_approximate || c2.kappa_approximate;
    p.sm_sign = SmSign::unknown;
    p.name = detail::fmt_number(a) + "*(" + c1.name + ")+" + detail::fmt_number(b) + "*(" + c2.name + ")";
    return p;
}

}  // namespace mot
