#pragma once

// Payoff registry, expectations under a plan, straddle lower bounds, the
// cross-derivative sign probe, and model risk through the LP oracle.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mot/couplings.hpp"
#include "mot/errors.hpp"
#include "mot/kernels.hpp"
#include "mot/lp_oracle.hpp"
#include "mot/measures.hpp"
#include "mot/numeraire.hpp"
#include "mot/payoff.hpp"

namespace mot {

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

/// alpha C + (1 - alpha) S*(C); alpha = 1/2 is a fixed point of S*.
inline Payoff alpha_portfolio(const Payoff& c, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("alpha_portfolio: alpha must lie in [0, 1]");
    if (alpha == 1.0) return c;
    const Payoff s = symmetrize_payoff(c);
    Payoff p;
    p.eval = [alpha, e = c.eval, es = s.eval](double x, double y) {
        return alpha * e(x, y) + (1.0 - alpha) * es(x, y);
    };
    p.growth_kappa = detail::estimate_kappa(p.eval);
    p.kappa_approximate = true;
    p.sm_sign = alpha == 0.0 ? s.sm_sign : SmSign::unknown;
    p.symmetry = alpha == 0.5 ? PayoffSymmetry::symmetric : PayoffSymmetry::unknown;
    p.name = "alpha-portfolio:base=" + c.name + ",alpha=" + detail::fmt_number(alpha);
    return p;
}

namespace detail {

inline double spec_value(const std::string& body, const std::string& key, const std::string& spec) {
    if (body.rfind(key + "=", 0) != 0) throw ConfigError("payoff spec '" + spec + "' needs " + key + "=<value>");
    return parse_number(body.substr(key.size() + 1), spec);
}

}  // namespace detail

/// Payoff from its spec string; see the README for the list.
inline Payoff parse_payoff(const std::string& spec) {
    const auto colon = spec.find(':');
    const std::string kind = spec.substr(0, colon);
    const std::string body = colon == std::string::npos ? "" : spec.substr(colon + 1);
    if (kind == "xexp" && body.empty()) return x_exp_minus_y();
    if (kind == "forward" && body.empty()) return forward_payoff();
    if (kind == "straddle1") return straddle_type_I(detail::spec_value(body, "alpha", spec));
    if (kind == "straddle2") return straddle_type_II(detail::spec_value(body, "alpha", spec));
    if (kind == "call") return call_on_second(detail::spec_value(body, "strike", spec));
    if (kind == "sstar") return symmetrize_payoff(parse_payoff(body));
    if (kind == "alpha-portfolio") {
        // base spec may itself contain ',' and '=': split at the last ",alpha="
        const auto cut = body.rfind(",alpha=");
        if (body.rfind("base=", 0) != 0 || cut == std::string::npos) {
            throw ConfigError("payoff spec '" + spec + "' must read alpha-portfolio:base=<spec>,alpha=<a>");
        }
        return alpha_portfolio(parse_payoff(body.substr(5, cut - 5)),
                               detail::parse_number(body.substr(cut + 7), spec));
    }
    throw ConfigError("unknown payoff spec '" + spec + "'");
}

// ---------------------------------------------------------------------------
// Expectation under a plan
// ---------------------------------------------------------------------------

struct PriceResult {
    double value = 0.0;
    double quad_error = 0.0;  // quadrature error estimate
    double tail_bound = 0.0;  // bound on the truncated contribution
};

namespace detail {

inline std::vector<double> kernel_nodes(const Kernel& k) {
    return std::visit(overloaded{[](const ThreeBandKernel& h) { return h.x; },
                                 [](const TwoBandKernel& t) { return t.x; },
                                 [](const auto&) { return std::vector<double>{}; }},
                      k);
}

inline double row_value(const AtomRow& row, const Payoff& c, double x) {
    double v = 0.0;
    for (const auto& a : row) {
        if (a.weight != 0.0) v += a.weight * c(x, a.y);
    }
    return v;
}

}  // namespace detail

/// E[C(X, Y)] with X ~ mu and Y | X drawn from the kernel.
inline PriceResult price(const Kernel& k, const Payoff& c, double quad_tol = tol::quadrature) {
    const Marginal& mu = base_marginal(k);
    PriceResult res;
    if (const auto* at = std::get_if<AtomLaw>(&mu.law())) {
        for (std::size_t i = 0; i < at->points.size(); ++i) {
            const double x = at->points[i];
            res.value += at->weights[i] * detail::row_value(kernel_at(k, x), c, x);
        }
        return res;
    }
    auto [lo, hi] = truncation_box(mu);
    const auto dom = kernel_domain(k);
    lo = std::max(lo, dom.first);
    hi = std::min(hi, dom.second);
    std::vector<double> breaks = kernel_breakpoints(k);
    const auto nodes = detail::kernel_nodes(k);
    breaks.insert(breaks.end(), nodes.begin(), nodes.end());
    const auto kinks = density_breakpoints(mu);
    breaks.insert(breaks.end(), kinks.begin(), kinks.end());
    auto integrand = [&](double x) { return mu.pdf(x) * detail::row_value(kernel_at(k, x), c, x); };
    try {
        const auto q = integrate_adaptive(integrand, lo, hi, quad_tol, breaks);
        res.value = q.value;
        res.quad_error = q.error;
    } catch (const NoConvergence& e) {
        throw NumericsFailure(std::string("price: ") + e.what());
    }
    // |C| <= kappa (1 + x + y) and E[Y | X] = X
    const double tail_mass = mu.cdf(lo) + mu.sf(hi);
    const double tail_moment = mu.cumulated_expectation(lo) + mu.upper_expectation(hi);
    res.tail_bound = c.growth_kappa * (tail_mass + 2.0 * tail_moment);
    if (std::isnan(res.tail_bound)) res.tail_bound = std::numeric_limits<double>::infinity();
    return res;
}

enum class StraddleType { I, II };

struct StraddleBound {
    PriceResult type_I, type_II;
    Kernel kernel;
};

/// Both ATM straddle lower bounds, priced on one three-band plan.
inline StraddleBound lower_bound_straddles(const Marginal& mu, const Marginal& nu,
                                           std::size_t n_grid = tol::default_grid) {
    StraddleBound out;
    require_unit_mean(mu, "lower_bound_straddle");
    require_unit_mean(nu, "lower_bound_straddle");
    // equal laws: the only martingale coupling is the identity
    if (check_convex_order(nu, mu).ok && check_convex_order(mu, nu).ok) {
        out.kernel = IdentityKernel{mu};
    } else {
        out.kernel = build_hk(mu, nu, n_grid);
    }
    out.type_I = price(out.kernel, straddle_type_I(1.0));
    out.type_II = price(out.kernel, straddle_type_II(1.0));
    return out;
}

struct StraddleResult {
    double value = 0.0;
    Kernel kernel;
};

inline StraddleResult lower_bound_straddle(const Marginal& mu, const Marginal& nu, StraddleType type,
                                           std::size_t n_grid = tol::default_grid) {
    auto both = lower_bound_straddles(mu, nu, n_grid);
    return {type == StraddleType::I ? both.type_I.value : both.type_II.value, std::move(both.kernel)};
}

// ---------------------------------------------------------------------------
// Sign of C_xyy
// ---------------------------------------------------------------------------

struct SmProbeReport {
    SmSign sign = SmSign::unknown;
    int positive = 0, negative = 0, zero = 0;
    double max_abs = 0.0;    // largest |C_xyy| estimate
    double max_noise = 0.0;  // largest classification threshold used
};

struct SmProbeOptions {
    double lo = 0.25, hi = 4.0;  // sampling box for x and y
    double rel_step = 1e-4;
    double noise_factor = 10.0;
    std::uint64_t seed = 20240601;
};

namespace detail {

// central differences: d/dx of d2/dy2 with steps hx, hy
inline double cross_third(const Payoff& c, double x, double y, double hx, double hy) {
    auto dyy = [&](double xx) { return (c(xx, y + hy) - 2.0 * c(xx, y) + c(xx, y - hy)) / (hy * hy); };
    return (dyy(x + hx) - dyy(x - hx)) / (2.0 * hx);
}

}  // namespace detail

/// Finite-difference estimate of the sign of C_xyy on random points. A probe, not a proof.
inline SmProbeReport sm_sign_probe(const Payoff& c, std::size_t n_samples = 200, SmProbeOptions opt = {}) {
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> u(std::log(opt.lo), std::log(opt.hi));
    constexpr double eps = std::numeric_limits<double>::epsilon();
    SmProbeReport rep;
    for (std::size_t s = 0; s < n_samples; ++s) {
        const double x = std::exp(u(rng)), y = std::exp(u(rng));
        const double hx = opt.rel_step * x, hy = opt.rel_step * y;
        const double d1 = detail::cross_third(c, x, y, hx, hy);
        const double d2 = detail::cross_third(c, x, y, 2.0 * hx, 2.0 * hy);
        const double rich = (4.0 * d1 - d2) / 3.0;
        double scale = 0.0;
        for (double dx : {-2.0 * hx, 0.0, 2.0 * hx}) {
            for (double dy : {-2.0 * hy, 0.0, 2.0 * hy}) scale = std::max(scale, std::abs(c(x + dx, y + dy)));
        }
        const double roundoff = 8.0 * eps * scale / (hx * hy * hy);
        const double noise = opt.noise_factor * (std::abs(d1 - d2) + roundoff);
        rep.max_noise = std::max(rep.max_noise, noise);
        rep.max_abs = std::max(rep.max_abs, std::abs(rich));
        if (rich > noise) {
            ++rep.positive;
        } else if (rich < -noise) {
            ++rep.negative;
        } else {
            ++rep.zero;
        }
    }
    const int n = static_cast<int>(n_samples);
    if (rep.positive == n) {
        rep.sign = SmSign::positive;
    } else if (rep.negative == n) {
        rep.sign = SmSign::negative;
    } else if (rep.zero == n) {
        rep.sign = SmSign::zero;
    } else {
        rep.sign = SmSign::mixed;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Model risk
// ---------------------------------------------------------------------------

struct LpConfig {
    std::size_t atoms = 100;
    InstanceOptions instance{};
};

struct ModelRisk {
    double lower = 0.0, upper = 0.0;
    double value() const { return upper - lower; }
};

inline ModelRisk model_risk_bounds(const Marginal& mu, const Marginal& nu, const Payoff& c, const LpConfig& cfg = {}) {
    const auto inst = make_instance(mu, nu, c, cfg.atoms, cfg.instance);
    return {solve_bounds(inst, BoundDirection::min).value, solve_bounds(inst, BoundDirection::max).value};
}

/// Spread between the upper and lower model-free bounds on the quantized pair.
inline double model_risk(const Marginal& mu, const Marginal& nu, const Payoff& c, const LpConfig& cfg = {}) {
    return model_risk_bounds(mu, nu, c, cfg).value();
}

}  // namespace mot
