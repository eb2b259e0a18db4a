#pragma once

// Change of numeraire: S on marginals, the coupling map, its adjoint on payoffs,
// and the induced map on semi-static hedges.

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <utility>
#include <vector>

#include "mot/errors.hpp"
#include "mot/kernels.hpp"
#include "mot/measures.hpp"
#include "mot/payoff.hpp"

namespace mot {

/// S(m): the law of 1/X under the measure with density X.
inline Marginal symmetrize_marginal(const Marginal& m) {
    require_unit_mean(m, "symmetrize_marginal");
    return std::visit(
        overloaded{[&](const LogNormalLaw&) { return m; },
                   [](const AtomLaw& a) {
                       std::vector<std::pair<double, double>> atoms;
                       atoms.reserve(a.points.size());
                       for (std::size_t i = 0; i < a.points.size(); ++i) {
                           atoms.emplace_back(1.0 / a.points[i], a.points[i] * a.weights[i]);
                       }
                       return Marginal::atoms(std::move(atoms));
                   },
                   [](const TabulatedLaw& t) { return Marginal(TabulatedLaw{t.data, !t.reflected}); }},
        m.law());
}

/// (x, y) -> y C(1/x, 1/y); flips the sign of C_xyy.
inline Payoff symmetrize_payoff(const Payoff& c) {
    Payoff s;
    s.eval = [e = c.eval](double x, double y) { return y * e(1.0 / x, 1.0 / y); };
    s.growth_kappa = detail::estimate_kappa(s.eval);
    s.kappa_approximate = true;
    s.sm_sign = flipped(c.sm_sign);
    s.symmetry = c.symmetry;
    s.name = "S*(" + c.name + ")";
    return s;
}

struct Hedge {
    std::function<double(double)> phi, psi, h;

    double operator()(double x, double y) const { return phi(x) + psi(y) + h(x) * (y - x); }
};

/// Hedge of S*(C) from a hedge of C.
inline Hedge symmetrize_hedge(const Hedge& hd) {
    Hedge out;
    out.phi = [phi = hd.phi](double x) { return x * phi(1.0 / x); };
    out.psi = [psi = hd.psi](double y) { return y * psi(1.0 / y); };
    out.h = [phi = hd.phi, h = hd.h](double x) { return phi(1.0 / x) - h(1.0 / x) / x; };
    return out;
}

namespace detail {

inline void require_martingale_row(const AtomRow& row, double x) {
    const auto [mass, drift] = row_residuals(row, x);
    if (mass > tol::kernel_mass || drift > tol::martingale) {
        std::ostringstream os;
        os << "symmetrize_coupling: kernel row at x = " << x << " has mass error " << mass
           << " and martingale residual " << drift;
        throw MartingaleViolation(os.str());
    }
}

/// weight w on y at x  ->  weight w y / x on 1/y at 1/x
inline AtomRow reflect_row(const AtomRow& row, double x) {
    AtomRow out;
    out.reserve(row.size());
    for (auto it = row.rbegin(); it != row.rend(); ++it) out.push_back({1.0 / it->y, it->weight * it->y / x});
    return out;
}

inline std::vector<double> reversed_reciprocals(const std::vector<double>& v) {
    std::vector<double> r(v.rbegin(), v.rend());
    for (double& e : r) e = 1.0 / e;
    return r;
}

inline std::vector<double> reversed(const std::vector<double>& v) { return {v.rbegin(), v.rend()}; }

}  // namespace detail

/// The coupling map on kernels over mu; the result lives over S(mu).
inline Kernel symmetrize_coupling(const Kernel& k, const Marginal& mu) {
    const Marginal s_mu = symmetrize_marginal(mu);
    return std::visit(
        overloaded{
            [&](const IdentityKernel&) -> Kernel { return IdentityKernel{s_mu}; },
            [&](const DiscreteKernel& d) -> Kernel {
                DiscreteKernel out;
                out.mu = s_mu;
                for (std::size_t i = d.x.size(); i-- > 0;) {
                    detail::require_martingale_row(d.rows[i], d.x[i]);
                    out.x.push_back(1.0 / d.x[i]);
                    out.rows.push_back(detail::reflect_row(d.rows[i], d.x[i]));
                }
                return out;
            },
            [&](const ThreeBandKernel& h) -> Kernel {
                for (std::size_t i = 0; i < h.x.size(); ++i) {
                    const AtomRow row{{h.p[i], h.l[i]}, {h.x[i], 1.0 - h.l[i] - h.u[i]}, {h.q[i], h.u[i]}};
                    detail::require_martingale_row(row, h.x[i]);
                }
                ThreeBandKernel out;
                out.mu = s_mu;
                out.nu = symmetrize_marginal(h.nu);
                out.a = 1.0 / h.b;
                out.b = 1.0 / h.a;
                out.x = detail::reversed_reciprocals(h.x);
                out.p = detail::reversed_reciprocals(h.q);
                out.q = detail::reversed_reciprocals(h.p);
                const std::size_t n = h.x.size();
                out.l.resize(n);
                out.u.resize(n);
                for (std::size_t j = 0; j < n; ++j) {
                    const std::size_t i = n - 1 - j;
                    out.l[j] = h.u[i] * h.q[i] / h.x[i];
                    out.u[j] = h.l[i] * h.p[i] / h.x[i];
                }
                // 1/q = z and 1/p, reversed
                out.p_table = FunctionTable(detail::reversed_reciprocals(h.z_table.abscissae()),
                                            detail::reversed(h.z_table.ordinates()), Monotonicity::decreasing);
                out.z_table = FunctionTable(detail::reversed_reciprocals(h.p_table.abscissae()),
                                            detail::reversed(h.p_table.ordinates()), Monotonicity::increasing);
                out.flagged = detail::reversed_reciprocals(h.flagged);
                return out;
            },
            [&](const TwoBandKernel& t) -> Kernel {
                for (std::size_t i = 0; i < t.x.size(); ++i) {
                    const AtomRow row{{t.t_d[i], 1.0 - t.prob[i]}, {t.t_u[i], t.prob[i]}};
                    detail::require_martingale_row(row, t.x[i]);
                }
                TwoBandKernel out;
                out.direction = t.direction == Direction::left ? Direction::right : Direction::left;
                out.mu = s_mu;
                out.nu = symmetrize_marginal(t.nu);
                out.x_star = 1.0 / t.x_star;
                out.x = detail::reversed_reciprocals(t.x);
                out.t_d = detail::reversed_reciprocals(t.t_u);
                out.t_u = detail::reversed_reciprocals(t.t_d);
                const std::size_t n = t.x.size();
                out.prob.resize(n);
                for (std::size_t j = 0; j < n; ++j) {
                    const std::size_t i = n - 1 - j;
                    out.prob[j] = (1.0 - t.prob[i]) * t.t_d[i] / t.x[i];
                }
                // x -> 1/f(1/x) keeps the direction of monotonicity
                const auto abs = detail::reversed_reciprocals(t.d_table.abscissae());
                out.d_table = FunctionTable(abs, detail::reversed_reciprocals(t.u_table.ordinates()),
                                            t.u_table.monotonicity());
                out.u_table = FunctionTable(abs, detail::reversed_reciprocals(t.d_table.ordinates()),
                                            t.d_table.monotonicity());
                return out;
            }},
        k);
}

}  // namespace mot
