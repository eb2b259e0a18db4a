#pragma once

// Kernel representations shared by the builders, the numeraire maps and pricing.

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "mot/errors.hpp"
#include "mot/measures.hpp"
#include "mot/numerics.hpp"

namespace mot {

namespace tol {
inline constexpr double martingale = 1e-8;      // |sum w y - x| per kernel row
inline constexpr double kernel_mass = 1e-10;    // |sum w - 1| per kernel row
inline constexpr double marginal_cdf = 1e-4;    // sup CDF error of the second marginal
inline constexpr double atom_match = 1e-12;     // relative tolerance when looking up an atom
}  // namespace tol

struct Atom {
    double y = 0.0;
    double weight = 0.0;
};
using AtomRow = std::vector<Atom>;

/// Y = X almost surely.
struct IdentityKernel {
    Marginal mu;
};

/// Finite base marginal, one row of atoms per base atom.
struct DiscreteKernel {
    Marginal mu;
    std::vector<double> x;
    std::vector<AtomRow> rows;
};

/// Three-point plan: identity outside (a, b), {p, x, q} inside.
struct ThreeBandKernel {
    Marginal mu, nu;
    double a = 0.0, b = 0.0;
    // solved nodes in (a, b)
    std::vector<double> x, p, q, l, u;
    // interpolants on [a, b] including the limits p(a) = a, p(b) = 0, z(a) = 0, z(b) = 1/b
    FunctionTable p_table;
    FunctionTable z_table;  // z = 1/q
    std::vector<double> flagged;  // nodes whose bracket had to be clamped
};

enum class Direction { left, right };

inline const char* to_string(Direction d) { return d == Direction::left ? "left" : "right"; }

/// Two-point plan, split on one side of x_star and identity on the other.
struct TwoBandKernel {
    Direction direction = Direction::left;
    Marginal mu, nu;
    double x_star = 0.0;
    // solved nodes of the split region
    std::vector<double> x, t_d, t_u, prob;
    // interpolants including the anchor T_d = T_u = x_star at x_star
    FunctionTable d_table, u_table;
};

using Kernel = std::variant<IdentityKernel, DiscreteKernel, ThreeBandKernel, TwoBandKernel>;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

inline const Marginal& base_marginal(const Kernel& k) {
    return std::visit([](const auto& v) -> const Marginal& { return v.mu; }, k);
}

inline std::string kernel_name(const Kernel& k) {
    return std::visit(overloaded{[](const IdentityKernel&) { return std::string("identity"); },
                                 [](const DiscreteKernel&) { return std::string("discrete"); },
                                 [](const ThreeBandKernel&) { return std::string("hk"); },
                                 [](const TwoBandKernel& t) { return std::string(to_string(t.direction)); }},
                      k);
}

namespace detail {

[[noreturn]] inline void throw_outside(const char* who, double x, double lo, double hi) {
    std::ostringstream os;
    os << who << ": x = " << x << " outside the tabulated range [" << lo << ", " << hi << "]";
    throw OutOfRange(os.str());
}

// Share of mu's mass at x that moves: (p_mu - p_nu) / p_mu, clipped into [0, 1].
inline double moving_fraction(const Marginal& mu, const Marginal& nu, double x) {
    const double pm = mu.pdf(x);
    if (!(pm > 0.0)) return 0.0;
    return std::clamp((pm - nu.pdf(x)) / pm, 0.0, 1.0);
}

inline AtomRow three_band_row(const ThreeBandKernel& k, double x) {
    if (x <= k.a || x >= k.b) return {{x, 1.0}};
    const double p = k.p_table(x);
    const double z = k.z_table(x);
    const double c = moving_fraction(k.mu, k.nu, x);
    // weights written in z so that q = inf is harmless
    const double den = 1.0 - p * z;
    const double l = c * (1.0 - x * z) / den;
    const double u = c * z * (x - p) / den;
    AtomRow row;
    row.push_back({p, l});
    row.push_back({x, 1.0 - l - u});
    if (z > 0.0) row.push_back({1.0 / z, u});
    return row;
}

inline AtomRow two_point_row(double x, double d, double up) {
    if (!(up > d)) return {{x, 1.0}};
    const double w = std::clamp((x - d) / (up - d), 0.0, 1.0);
    return {{d, 1.0 - w}, {up, w}};
}

inline AtomRow two_band_row(const TwoBandKernel& k, double x) {
    const bool identity = k.direction == Direction::left ? x <= k.x_star : x >= k.x_star;
    if (identity) return {{x, 1.0}};
    if (x < k.d_table.front() || x > k.d_table.back()) {
        throw_outside("kernel_at", x, k.d_table.front(), k.d_table.back());
    }
    return two_point_row(x, k.d_table(x), k.u_table(x));
}

inline AtomRow discrete_row(const DiscreteKernel& k, double x) {
    auto it = std::lower_bound(k.x.begin(), k.x.end(), x);
    for (auto c : {it, it == k.x.begin() ? it : it - 1}) {
        if (c != k.x.end() && std::abs(*c - x) <= tol::atom_match * std::max(1.0, x)) {
            return k.rows[static_cast<std::size_t>(c - k.x.begin())];
        }
    }
    std::ostringstream os;
    os << "kernel_at: x = " << x << " is not an atom of the base marginal";
    throw OutOfRange(os.str());
}

}  // namespace detail

/// Atoms (y, weight) of the kernel at x.
inline AtomRow kernel_at(const Kernel& k, double x) {
    if (!(x > 0.0)) throw OutOfRange("kernel_at: x must be positive");
    return std::visit(overloaded{[x](const IdentityKernel&) { return AtomRow{{x, 1.0}}; },
                                 [x](const DiscreteKernel& d) { return detail::discrete_row(d, x); },
                                 [x](const ThreeBandKernel& h) { return detail::three_band_row(h, x); },
                                 [x](const TwoBandKernel& t) { return detail::two_band_row(t, x); }},
                      k);
}

/// Abscissae where the kernel changes regime; quadrature must split there.
inline std::vector<double> kernel_breakpoints(const Kernel& k) {
    return std::visit(overloaded{[](const IdentityKernel&) { return std::vector<double>{}; },
                                 [](const DiscreteKernel&) { return std::vector<double>{}; },
                                 [](const ThreeBandKernel& h) { return std::vector<double>{h.a, h.b}; },
                                 [](const TwoBandKernel& t) { return std::vector<double>{t.x_star}; }},
                      k);
}

/// Interval on which kernel_at is defined.
inline std::pair<double, double> kernel_domain(const Kernel& k) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    return std::visit(overloaded{[](const IdentityKernel&) { return std::pair{0.0, inf}; },
                                 [](const DiscreteKernel& d) { return std::pair{d.x.front(), d.x.back()}; },
                                 [](const ThreeBandKernel&) { return std::pair{0.0, inf}; },
                                 [](const TwoBandKernel& t) {
                                     return t.direction == Direction::left
                                                ? std::pair{0.0, t.d_table.back()}
                                                : std::pair{t.d_table.front(), inf};
                                 }},
                      k);
}

/// max |sum w - 1| and max |sum w y - x| of one row.
inline std::pair<double, double> row_residuals(const AtomRow& row, double x) {
    double mass = 0.0, first = 0.0;
    for (const auto& a : row) {
        mass += a.weight;
        first += a.weight * a.y;
    }
    return {std::abs(mass - 1.0), std::abs(first - x)};
}

}  // namespace mot
