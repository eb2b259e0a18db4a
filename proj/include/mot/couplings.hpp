#pragma once

// Builders for the three explicit optimal plans and their validation.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mot/errors.hpp"
#include "mot/kernels.hpp"
#include "mot/measures.hpp"
#include "mot/numeraire.hpp"
#include "mot/numerics.hpp"

namespace mot {

namespace tol {
inline constexpr std::size_t default_grid = 512;
inline constexpr double method_agreement = 1e-6;  // reflection vs direct right plan
inline constexpr double tight_root = 1e-300;      // Brent then stops at a few ulps
inline constexpr int bracket_extensions = 200;
}  // namespace tol

namespace detail {

[[noreturn]] inline void numerics_failure(const char* who, double x, const std::string& why) {
    std::ostringstream os;
    os.precision(12);
    os << who << ": pointwise solve failed at x = " << x << ": " << why;
    throw NumericsFailure(os.str());
}

inline double sign_of(double v) { return (v > 0.0) - (v < 0.0); }

/// Solve increasing g(t) = 0 on (0, hi] where g(0+) < 0; returns hi if g(hi) <= 0.
template <typename Fn>
double invert_on_left(Fn&& g, double hi) {
    if (g(hi) <= 0.0) return hi;
    double lo = hi * 0.5;
    int k = 0;
    while (g(lo) >= 0.0) {
        lo *= 0.5;
        if (++k > 2 * tol::bracket_extensions) throw BracketError("invert_on_left: no sign change near 0");
    }
    return find_root_bracketed(g, lo, hi, tol::tight_root);
}

/// Widen lo toward 0 (geometrically) until f(lo) and f(hi) differ in sign.
template <typename Fn>
std::optional<double> extend_lower(Fn&& f, double lo, double hi) {
    const double s_hi = sign_of(f(hi));
    for (int k = 0; k < tol::bracket_extensions; ++k) {
        const double s_lo = sign_of(f(lo));
        if (s_lo != s_hi || s_lo == 0.0) return lo;
        if (lo < 1e-280) break;
        lo = std::min(lo * 0.5, hi * 0.5);
    }
    return std::nullopt;
}

}  // namespace detail

/// Unit means, convex order and a single local maximizer of delta F.
inline DeltaProfile require_assumptions(const Marginal& mu, const Marginal& nu) {
    require_unit_mean(mu, "couplings");
    require_unit_mean(nu, "couplings");
    return delta_profile(mu, nu);
}

/// Interior nodes a (b/a)^(k/(n+1)), k = 1..n.
inline std::vector<double> interior_nodes(double a, double b, std::size_t n) {
    std::vector<double> g(n);
    const double r = std::log(b / a);
    for (std::size_t k = 1; k <= n; ++k) g[k - 1] = a * std::exp(r * static_cast<double>(k) / static_cast<double>(n + 1));
    return g;
}

// ---------------------------------------------------------------------------
// Three-band plan
// ---------------------------------------------------------------------------

struct ThreeBandPoint {
    double p = 0.0;
    double z = 0.0;  // 1/q
    bool clamped = false;
};

/// Solves delta F(q) + delta F(p) = delta F(x), delta G(q) + delta G(p) = delta G(x) at x in (a, b).
inline ThreeBandPoint solve_three_band_point(const Marginal& mu, const Marginal& nu, double a, double b,
                                             double x) {
    auto dF = [&](double t) { return delta_cdf(mu, nu, t); };
    auto dG = [&](double t) { return delta_cumulated_expectation(mu, nu, t); };
    const double t = dF(x), dFa = dF(a), dFb = dF(b), gx = dG(x);

    // q from the first equation, in z = 1/q; z = 0 means q = inf
    auto z_of = [&](double p) {
        const double target = t - dF(p);
        if (target >= 0.0) return 0.0;
        if (target <= dFb) return 1.0 / b;
        auto g = [&](double z) { return (z == 0.0 ? 0.0 : dF(1.0 / z)) - target; };
        return find_root_bracketed(g, 0.0, 1.0 / b, tol::tight_root);
    };
    auto resid = [&](double p) {
        const double z = z_of(p);
        const double dq = z == 0.0 ? 0.0 : dG(1.0 / z);
        return dq + dG(p) - gx;
    };

    // admissible p: delta F(p) in [max(t, 0), min(dF(a), t - dF(b))]
    double p_lo = 0.0;
    if (t > 0.0) p_lo = detail::invert_on_left([&](double s) { return dF(s) - t; }, a);
    double p_hi = a;
    if (t - dFb < dFa) p_hi = detail::invert_on_left([&](double s) { return dF(s) - (t - dFb); }, a);
    if (p_lo <= 0.0) p_lo = std::min(nu.quantile(tol::tail_quantile), mu.quantile(tol::tail_quantile));

    const double r_hi = resid(p_hi);
    double r_lo = resid(p_lo);
    if (detail::sign_of(r_lo) == detail::sign_of(r_hi) && t <= 0.0) {
        if (auto lo = detail::extend_lower(resid, p_lo, p_hi)) {
            p_lo = *lo;
            r_lo = resid(p_lo);
        }
    }
    ThreeBandPoint pt;
    if (r_lo == 0.0) {
        pt.p = p_lo;
    } else if (r_hi == 0.0) {
        pt.p = p_hi;
    } else if (detail::sign_of(r_lo) != detail::sign_of(r_hi)) {
        pt.p = find_root_bracketed(resid, p_lo, p_hi, tol::tight_root);
    } else {
        // no interior root: keep the closer end and flag it
        pt.p = std::abs(r_lo) < std::abs(r_hi) ? p_lo : p_hi;
        pt.clamped = true;
        const double worst = std::min(std::abs(r_lo), std::abs(r_hi));
        if (worst > 1e-8) {
            std::ostringstream os;
            os << "residual of the second equation has one sign on [" << p_lo << ", " << p_hi
               << "] (" << r_lo << ", " << r_hi << ")";
            detail::numerics_failure("build_hk", x, os.str());
        }
    }
    pt.z = z_of(pt.p);
    return pt;
}

inline ThreeBandKernel build_hk(const Marginal& mu, const Marginal& nu, std::size_t n_grid = tol::default_grid) {
    if (n_grid < 2) throw DomainError("build_hk: need at least two grid points");
    const auto prof = require_assumptions(mu, nu);
    ThreeBandKernel k;
    k.mu = mu;
    k.nu = nu;
    k.a = prof.m;
    k.b = prof.m_tilde;
    k.x = interior_nodes(k.a, k.b, n_grid);
    const std::size_t n = k.x.size();
    k.p.resize(n);
    k.q.resize(n);
    k.l.resize(n);
    k.u.resize(n);
    std::vector<double> z(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = k.x[i];
        ThreeBandPoint pt;
        try {
            pt = solve_three_band_point(mu, nu, k.a, k.b, x);
        } catch (const BracketError& e) {
            detail::numerics_failure("build_hk", x, e.what());
        } catch (const NoConvergence& e) {
            detail::numerics_failure("build_hk", x, e.what());
        }
        if (pt.clamped) k.flagged.push_back(x);
        if (!(pt.z > 0.0)) detail::numerics_failure("build_hk", x, "upper atom escaped to infinity");
        const double c = detail::moving_fraction(mu, nu, x);
        const double den = 1.0 - pt.p * pt.z;
        k.p[i] = pt.p;
        z[i] = pt.z;
        k.q[i] = 1.0 / pt.z;
        k.l[i] = c * (1.0 - x * pt.z) / den;
        k.u[i] = c * pt.z * (x - pt.p) / den;
    }
    std::vector<double> ax{k.a}, ap{k.a}, az{0.0};
    ax.insert(ax.end(), k.x.begin(), k.x.end());
    ap.insert(ap.end(), k.p.begin(), k.p.end());
    az.insert(az.end(), z.begin(), z.end());
    ax.push_back(k.b);
    ap.push_back(0.0);
    az.push_back(1.0 / k.b);
    try {
        k.p_table = FunctionTable(ax, ap, Monotonicity::decreasing);
        k.z_table = FunctionTable(std::move(ax), std::move(az), Monotonicity::increasing);
    } catch (const DomainError& e) {
        throw NumericsFailure(std::string("build_hk: solved p, q are not monotone: ") + e.what());
    }
    return k;
}

// ---------------------------------------------------------------------------
// Two-band plans
// ---------------------------------------------------------------------------

struct TwoBandPoint {
    double d = 0.0, u = 0.0;
};

/// Left plan at x > x_star: L_d solves
/// Si_nu(S_mu(x) - dF(l)) = Hi_nu(H_mu(x) - dG(l)), l in (0, min(x_star, ...)).
inline TwoBandPoint solve_left_point(const Marginal& mu, const Marginal& nu, double x_star, double x) {
    auto dF = [&](double t) { return delta_cdf(mu, nu, t); };
    auto dG = [&](double t) { return delta_cumulated_expectation(mu, nu, t); };
    const double s = mu.sf(x), h = mu.upper_expectation(x);
    constexpr double big = std::numeric_limits<double>::max();
    auto resid = [&](double l) {
        const double sa = s - dF(l), ha = h - dG(l);
        if (!(sa > 0.0)) return big;
        if (!(ha > 0.0)) return -big;
        return nu.quantile_upper(sa) - nu.inverse_upper_expectation(ha);
    };
    const double l_f = detail::invert_on_left([&](double t) { return dF(t) - s; }, x_star);
    const double l_g = detail::invert_on_left([&](double t) { return dG(t) - h; }, x_star);
    double hi = std::min({x_star, l_f, l_g});
    // step inside the open end without leaving the representable range
    for (double shrink : {1e-13, 1e-11, 1e-9, 1e-7}) {
        const double cand = hi * (1.0 - shrink);
        if (std::abs(resid(cand)) < big) {
            hi = cand;
            break;
        }
    }
    const double lo0 = std::min(nu.quantile(tol::tail_quantile), hi * 0.5);
    auto lo = detail::extend_lower(resid, lo0, hi);
    if (!lo) detail::numerics_failure("build_left_monotone", x, "no sign change of the residual");
    TwoBandPoint pt;
    pt.d = find_root_bracketed(resid, *lo, hi, tol::tight_root);
    pt.u = nu.quantile_upper(s - dF(pt.d));
    return pt;
}

/// Right plan at x < x_star, solved directly: R_u = r > x_star with
/// Fi_nu(F_mu(x) + dF(r)) = Gi_nu(G_mu(x) + dG(r)); worked in z = 1/r.
inline TwoBandPoint solve_right_point(const Marginal& mu, const Marginal& nu, double x_star, double x) {
    auto dF = [&](double t) { return delta_cdf(mu, nu, t); };
    auto dG = [&](double t) { return delta_cumulated_expectation(mu, nu, t); };
    const double f = mu.cdf(x), g = mu.cumulated_expectation(x);
    constexpr double big = std::numeric_limits<double>::max();
    auto resid = [&](double z) {
        const double r = 1.0 / z;
        const double fa = f + dF(r), ga = g + dG(r);
        if (!(fa > 0.0)) return big;
        if (!(ga > 0.0)) return -big;
        return nu.quantile(fa) - nu.inverse_cumulated_expectation(ga);
    };
    // dF, dG increase from their minimum at x_star to 0: smallest admissible r
    const double zs = 1.0 / x_star;
    const double z_f = detail::invert_on_left([&](double z) { return -f - dF(1.0 / z); }, zs);
    const double z_g = detail::invert_on_left([&](double z) { return -g - dG(1.0 / z); }, zs);
    double hi = std::min({zs, z_f, z_g});
    for (double shrink : {1e-13, 1e-11, 1e-9, 1e-7}) {
        const double cand = hi * (1.0 - shrink);
        if (std::abs(resid(cand)) < big) {
            hi = cand;
            break;
        }
    }
    const double lo0 = std::min(1.0 / nu.quantile_upper(tol::tail_quantile), hi * 0.5);
    auto lo = detail::extend_lower(resid, lo0, hi);
    if (!lo) detail::numerics_failure("build_right_monotone", x, "no sign change of the residual");
    const double z = find_root_bracketed(resid, *lo, hi, tol::tight_root);
    TwoBandPoint pt;
    pt.u = 1.0 / z;
    pt.d = nu.quantile(f + dF(pt.u));
    return pt;
}

namespace detail {

inline TwoBandKernel assemble_two_band(Direction dir, const Marginal& mu, const Marginal& nu, double x_star,
                                       std::vector<double> nodes, const std::vector<TwoBandPoint>& pts) {
    TwoBandKernel k;
    k.direction = dir;
    k.mu = mu;
    k.nu = nu;
    k.x_star = x_star;
    k.x = std::move(nodes);
    for (std::size_t i = 0; i < k.x.size(); ++i) {
        k.t_d.push_back(pts[i].d);
        k.t_u.push_back(pts[i].u);
        k.prob.push_back((k.x[i] - pts[i].d) / (pts[i].u - pts[i].d));
    }
    std::vector<double> ax = k.x, ad = k.t_d, au = k.t_u;
    if (dir == Direction::left) {
        ax.insert(ax.begin(), x_star);
        ad.insert(ad.begin(), x_star);
        au.insert(au.begin(), x_star);
    } else {
        ax.push_back(x_star);
        ad.push_back(x_star);
        au.push_back(x_star);
    }
    const auto d_tag = dir == Direction::left ? Monotonicity::decreasing : Monotonicity::increasing;
    const auto u_tag = dir == Direction::left ? Monotonicity::increasing : Monotonicity::decreasing;
    try {
        k.d_table = FunctionTable(ax, std::move(ad), d_tag);
        k.u_table = FunctionTable(std::move(ax), std::move(au), u_tag);
    } catch (const DomainError& e) {
        throw NumericsFailure(std::string("two-band plan: solved branches are not monotone: ") + e.what());
    }
    return k;
}

template <typename Solve>
std::vector<TwoBandPoint> solve_nodes(const char* who, const std::vector<double>& nodes, Solve&& solve) {
    std::vector<TwoBandPoint> pts;
    pts.reserve(nodes.size());
    for (double x : nodes) {
        try {
            pts.push_back(solve(x));
        } catch (const BracketError& e) {
            numerics_failure(who, x, e.what());
        } catch (const NoConvergence& e) {
            numerics_failure(who, x, e.what());
        } catch (const DomainError& e) {
            numerics_failure(who, x, e.what());
        }
    }
    return pts;
}

}  // namespace detail

/// Left-monotone plan; split region (x_star, hi] with hi the upper end of mu's truncation box.
inline TwoBandKernel build_left_monotone(const Marginal& mu, const Marginal& nu,
                                         std::size_t n_grid = tol::default_grid) {
    if (n_grid < 2) throw DomainError("build_left_monotone: need at least two grid points");
    const auto prof = require_assumptions(mu, nu);
    const double x_star = prof.m;
    const double hi = truncation_box(mu).second;
    if (!(hi > x_star)) throw AssumptionViolated("build_left_monotone: maximizer beyond the truncation box");
    std::vector<double> nodes(n_grid);
    const double r = std::log(hi / x_star);
    for (std::size_t k = 1; k <= n_grid; ++k) {
        nodes[k - 1] = x_star * std::exp(r * static_cast<double>(k) / static_cast<double>(n_grid));
    }
    nodes.back() = hi;
    auto pts = detail::solve_nodes("build_left_monotone", nodes,
                                   [&](double x) { return solve_left_point(mu, nu, x_star, x); });
    return detail::assemble_two_band(Direction::left, mu, nu, x_star, std::move(nodes), pts);
}

enum class RightMethod { reflection, direct };

inline TwoBandKernel build_right_monotone_direct(const Marginal& mu, const Marginal& nu,
                                                std::size_t n_grid = tol::default_grid) {
    if (n_grid < 2) throw DomainError("build_right_monotone: need at least two grid points");
    const auto prof = require_assumptions(mu, nu);
    const double x_star = prof.m_tilde;
    const double lo = truncation_box(mu).first;
    if (!(lo < x_star)) throw AssumptionViolated("build_right_monotone: minimizer below the truncation box");
    std::vector<double> nodes(n_grid);
    const double r = std::log(x_star / lo);
    for (std::size_t k = 0; k < n_grid; ++k) {
        nodes[k] = lo * std::exp(r * static_cast<double>(k) / static_cast<double>(n_grid));
    }
    auto pts = detail::solve_nodes("build_right_monotone", nodes,
                                   [&](double x) { return solve_right_point(mu, nu, x_star, x); });
    return detail::assemble_two_band(Direction::right, mu, nu, x_star, std::move(nodes), pts);
}

/// Right plan as the image of the left plan of (S(mu), S(nu)).
inline TwoBandKernel build_right_monotone_reflection(const Marginal& mu, const Marginal& nu,
                                                    std::size_t n_grid = tol::default_grid) {
    require_unit_mean(mu, "build_right_monotone");
    require_unit_mean(nu, "build_right_monotone");
    const Marginal s_mu = symmetrize_marginal(mu);
    const Marginal s_nu = symmetrize_marginal(nu);
    const Kernel left = build_left_monotone(s_mu, s_nu, n_grid);
    auto out = std::get<TwoBandKernel>(symmetrize_coupling(left, s_mu));
    out.mu = mu;
    out.nu = nu;
    return out;
}

/// Largest gap between two two-band plans, read at the nodes of the first.
inline double two_band_distance(const TwoBandKernel& a, const TwoBandKernel& b) {
    double worst = std::abs(a.x_star - b.x_star);
    for (std::size_t i = 0; i < a.x.size(); ++i) {
        const double x = a.x[i];
        if (x < b.d_table.front() || x > b.d_table.back()) continue;
        worst = std::max({worst, std::abs(a.t_d[i] - b.d_table(x)), std::abs(a.t_u[i] - b.u_table(x))});
        const double pb = (x - b.d_table(x)) / (b.u_table(x) - b.d_table(x));
        worst = std::max(worst, std::abs(a.prob[i] - pb));
    }
    return worst;
}

inline TwoBandKernel build_right_monotone(const Marginal& mu, const Marginal& nu,
                                         std::size_t n_grid = tol::default_grid,
                                         RightMethod method = RightMethod::reflection, bool cross_check = false) {
    auto primary = method == RightMethod::reflection ? build_right_monotone_reflection(mu, nu, n_grid)
                                                     : build_right_monotone_direct(mu, nu, n_grid);
    if (cross_check) {
        const auto other = method == RightMethod::reflection ? build_right_monotone_direct(mu, nu, n_grid)
                                                             : build_right_monotone_reflection(mu, nu, n_grid);
        const double gap = two_band_distance(primary, other);
        if (gap > tol::method_agreement) {
            std::ostringstream os;
            os << "build_right_monotone: reflection and direct constructions differ by " << gap;
            throw MethodMismatch(os.str());
        }
    }
    return primary;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct CouplingReport {
    double marginal_err = 0.0;    // sup over a y-grid of |F_second(y) - F_nu(y)|
    double martingale_err = 0.0;  // max node residual of sum w y - x
    double mass_err = 0.0;        // max node residual of sum w - 1
    double worst_y = 0.0;
    bool ok() const {
        return marginal_err <= tol::marginal_cdf && martingale_err <= tol::martingale && mass_err <= tol::kernel_mass;
    }
};

namespace detail {

// Abscissae in [lo, hi] where the monotone branch `table` crosses level y.
inline void crossings(const FunctionTable& table, double y, double lo, double hi, std::vector<double>& out) {
    const auto& xs = table.abscissae();
    const auto& ys = table.ordinates();
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
        if (xs[i + 1] < lo || xs[i] > hi) continue;
        const double y0 = ys[i] - y, y1 = ys[i + 1] - y;
        if (y0 == 0.0) out.push_back(xs[i]);
        if ((y0 < 0.0) != (y1 < 0.0) && y1 != 0.0) {
            out.push_back(find_root_bracketed([&](double t) { return table(t) - y; }, xs[i], xs[i + 1]));
        }
    }
}

inline std::vector<std::pair<AtomRow, double>> node_rows(const Kernel& k) {
    std::vector<std::pair<AtomRow, double>> out;
    std::visit(overloaded{[&](const IdentityKernel&) {},
                          [&](const DiscreteKernel& d) {
                              for (std::size_t i = 0; i < d.x.size(); ++i) out.emplace_back(d.rows[i], d.x[i]);
                          },
                          [&](const ThreeBandKernel& h) {
                              for (std::size_t i = 0; i < h.x.size(); ++i) {
                                  out.emplace_back(AtomRow{{h.p[i], h.l[i]},
                                                           {h.x[i], 1.0 - h.l[i] - h.u[i]},
                                                           {h.q[i], h.u[i]}},
                                                   h.x[i]);
                              }
                          },
                          [&](const TwoBandKernel& t) {
                              for (std::size_t i = 0; i < t.x.size(); ++i) {
                                  out.emplace_back(AtomRow{{t.t_d[i], 1.0 - t.prob[i]}, {t.t_u[i], t.prob[i]}}, t.x[i]);
                              }
                          }},
               k);
    return out;
}

// Second-marginal CDF at y for a kernel with a density base.
inline double second_marginal_cdf(const Kernel& k, const Marginal& mu, double y, double lo, double hi) {
    std::vector<double> breaks = kernel_breakpoints(k);
    const auto kinks = density_breakpoints(mu);
    breaks.insert(breaks.end(), kinks.begin(), kinks.end());
    breaks.push_back(y);
    std::visit(overloaded{[](const IdentityKernel&) {}, [](const DiscreteKernel&) {},
                          [&](const ThreeBandKernel& h) {
                              crossings(h.p_table, y, lo, hi, breaks);
                              if (y > 0.0) crossings(h.z_table, 1.0 / y, lo, hi, breaks);
                          },
                          [&](const TwoBandKernel& t) {
                              crossings(t.d_table, y, lo, hi, breaks);
                              crossings(t.u_table, y, lo, hi, breaks);
                          }},
               k);
    auto integrand = [&](double x) {
        double mass = 0.0;
        for (const auto& a : kernel_at(k, x)) {
            if (a.y <= y) mass += a.weight;
        }
        return mu.pdf(x) * mass;
    };
    const double body = integrate_adaptive(integrand, lo, hi, 1e-11, breaks).value;
    return mu.cdf(lo) + body;  // lower tail (mass <= eps) counted as below y
}

}  // namespace detail

/// Checks both marginals and the martingale property of a kernel.
inline CouplingReport validate_coupling(const Kernel& k, const Marginal& mu, const Marginal& nu,
                                        std::size_t n_y = 256) {
    CouplingReport rep;
    for (const auto& [row, x] : detail::node_rows(k)) {
        const auto [mass, drift] = row_residuals(row, x);
        rep.mass_err = std::max(rep.mass_err, mass);
        rep.martingale_err = std::max(rep.martingale_err, drift);
    }
    // y-grid on nu quantiles
    std::vector<double> ys;
    for (std::size_t j = 1; j < n_y; ++j) {
        const double p = static_cast<double>(j) / static_cast<double>(n_y);
        ys.push_back(p < 0.5 ? nu.quantile(p) : nu.quantile_upper(1.0 - p));
    }
    if (const auto* d = std::get_if<DiscreteKernel>(&k)) {
        const auto* at = std::get_if<AtomLaw>(&mu.law());
        if (!at) throw DomainError("validate_coupling: discrete kernel needs an atom base marginal");
        for (double y : ys) {
            double f = 0.0;
            for (std::size_t i = 0; i < d->x.size(); ++i) {
                for (const auto& a : d->rows[i]) {
                    if (a.y <= y) f += at->weights[i] * a.weight;
                }
            }
            const double e = std::abs(f - nu.cdf(y));
            if (e > rep.marginal_err) {
                rep.marginal_err = e;
                rep.worst_y = y;
            }
        }
        return rep;
    }
    if (!mu.has_density()) throw DomainError("validate_coupling: continuous kernel needs a density base");
    auto [lo, hi] = truncation_box(mu);
    const auto dom = kernel_domain(k);
    lo = std::max(lo, dom.first);
    hi = std::min(hi, dom.second);
    for (double y : ys) {
        const double f = detail::second_marginal_cdf(k, mu, y, lo, hi);
        const double e = std::abs(f - nu.cdf(y));
        if (e > rep.marginal_err) {
            rep.marginal_err = e;
            rep.worst_y = y;
        }
    }
    return rep;
}

}  // namespace mot
