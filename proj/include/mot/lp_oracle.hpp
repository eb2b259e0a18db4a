#pragma once

// Discrete martingale transport LP: quantization, a revised simplex with an
// explicit basis inverse, dual hedges, and instance text I/O.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <random>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mot/errors.hpp"
#include "mot/measures.hpp"
#include "mot/numeraire.hpp"
#include "mot/payoff.hpp"

namespace mot {

namespace tol {
inline constexpr double pivot = 1e-11;          // smallest accepted pivot magnitude
inline constexpr double optimality = 1e-11;     // reduced-cost threshold
inline constexpr double feasibility = 1e-9;     // phase-one residual accepted as zero
inline constexpr double duality_gap = 1e-8;
inline constexpr double hedge_violation = 1e-8;
inline constexpr double instance_weights = 1e-12;
inline constexpr double instance_mean = 1e-9;
inline constexpr int refactor_every = 250;
}  // namespace tol

// ---------------------------------------------------------------------------
// Generic LP:  min c.x  s.t.  A x = b, x >= 0, with b >= 0
// ---------------------------------------------------------------------------

struct SparseColumn {
    std::vector<std::pair<int, double>> entries;
};

struct LinearProgram {
    int rows = 0;
    std::vector<SparseColumn> columns;
    std::vector<double> cost;
    std::vector<double> rhs;
};

enum class LpStatus { optimal, infeasible, unbounded };

struct LpSolution {
    LpStatus status = LpStatus::optimal;
    double value = 0.0;
    std::vector<double> x;     // primal, structural columns only
    std::vector<double> dual;  // y with y A <= c at optimum
    bool degenerate = false;   // some basic variable sits at zero
    int iterations = 0;
};

/// Revised primal simplex, two phases, Dantzig pricing with a Bland fallback
/// whenever the objective stalls.
class SimplexSolver {
public:
    explicit SimplexSolver(const LinearProgram& lp) : lp_(lp), m_(lp.rows), n_(static_cast<int>(lp.columns.size())) {
        for (double r : lp_.rhs) {
            if (r < 0.0) throw DomainError("SimplexSolver: right-hand side must be nonnegative");
        }
        if (static_cast<int>(lp_.rhs.size()) != m_ || static_cast<int>(lp_.cost.size()) != n_) {
            throw DomainError("SimplexSolver: dimension mismatch");
        }
    }

    LpSolution solve() {
        // artificial j = n_ + r for row r
        basis_.resize(m_);
        in_basis_.assign(n_ + m_, -1);
        for (int r = 0; r < m_; ++r) {
            basis_[r] = n_ + r;
            in_basis_[n_ + r] = r;
        }
        binv_ = Eigen::MatrixXd::Identity(m_, m_);
        // b + A xi with a small random xi > 0: still consistent, but generic
        // enough that ratio-test ties (and the stalling they cause) disappear
        rhs_ = Eigen::Map<const Eigen::VectorXd>(lp_.rhs.data(), m_);
        double scale = 1.0;
        for (double r : lp_.rhs) scale = std::max(scale, std::abs(r));
        {
            std::mt19937_64 rng(0x5eed);
            std::uniform_real_distribution<double> unit(0.5, 1.0);
            const double level = 1e-7 * scale / std::max(1, n_);
            for (int j = 0; j < n_; ++j) {
                const double xi = level * unit(rng);
                for (auto [r, v] : lp_.columns[j].entries) rhs_[r] += xi * v;
            }
        }
        // artificial of row r is sign(b_r) e_r so that it starts nonnegative
        art_sign_.assign(m_, 1.0);
        for (int r = 0; r < m_; ++r) {
            if (rhs_[r] < 0.0) art_sign_[r] = -1.0;
            binv_(r, r) = art_sign_[r];
        }
        xb_ = rhs_.cwiseAbs();
        allow_artificial_ = true;

        std::vector<double> phase1(n_ + m_, 0.0);
        for (int r = 0; r < m_; ++r) phase1[n_ + r] = 1.0;
        run(phase1);
        double infeas = 0.0;
        for (int r = 0; r < m_; ++r) {
            if (basis_[r] >= n_) infeas += xb_[r];
        }
        LpSolution sol;
        sol.iterations = iterations_;
        if (infeas > tol::feasibility * scale) {
            sol.status = LpStatus::infeasible;
            return sol;
        }
        drive_out_artificials();
        allow_artificial_ = false;

        std::vector<double> phase2(n_ + m_, 0.0);
        std::copy(lp_.cost.begin(), lp_.cost.end(), phase2.begin());
        if (!run(phase2)) {
            sol.status = LpStatus::unbounded;
            sol.iterations = iterations_;
            return sol;
        }
        // back to the true right-hand side; the basis stays dual feasible
        rhs_ = Eigen::Map<const Eigen::VectorXd>(lp_.rhs.data(), m_);
        refactor();
        if (!dual_cleanup(phase2)) {
            sol.status = LpStatus::infeasible;
            sol.iterations = iterations_;
            return sol;
        }
        sol.iterations = iterations_;
        sol.x.assign(n_, 0.0);
        for (int r = 0; r < m_; ++r) {
            if (basis_[r] < n_) sol.x[basis_[r]] = std::max(0.0, xb_[r]);
            if (std::abs(xb_[r]) <= 1e-13) sol.degenerate = true;
        }
        sol.value = 0.0;
        for (int j = 0; j < n_; ++j) sol.value += lp_.cost[j] * sol.x[j];
        const Eigen::VectorXd y = duals(phase2);
        sol.dual.assign(y.data(), y.data() + m_);
        return sol;
    }

private:
    Eigen::VectorXd column(int j) const {
        Eigen::VectorXd a = Eigen::VectorXd::Zero(m_);
        if (j >= n_) {
            a[j - n_] = art_sign_[j - n_];
        } else {
            for (auto [r, v] : lp_.columns[j].entries) a[r] += v;
        }
        return a;
    }

    // B^{-1} a_j without forming a_j densely
    Eigen::VectorXd ftran(int j) const {
        if (j >= n_) return art_sign_[j - n_] * binv_.col(j - n_);
        Eigen::VectorXd d = Eigen::VectorXd::Zero(m_);
        for (auto [r, v] : lp_.columns[j].entries) d.noalias() += v * binv_.col(r);
        return d;
    }

    double dot_column(const Eigen::VectorXd& y, int j) const {
        if (j >= n_) return art_sign_[j - n_] * y[j - n_];
        double s = 0.0;
        for (auto [r, v] : lp_.columns[j].entries) s += v * y[r];
        return s;
    }

    Eigen::VectorXd duals(const std::vector<double>& c) const {
        Eigen::VectorXd cb(m_);
        for (int r = 0; r < m_; ++r) cb[r] = c[basis_[r]];
        return binv_.transpose() * cb;
    }

    void refactor() {
        Eigen::MatrixXd b(m_, m_);
        for (int r = 0; r < m_; ++r) b.col(r) = column(basis_[r]);
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(b);
        binv_ = lu.inverse();
        xb_ = binv_ * rhs_;
        since_refactor_ = 0;
    }

    void pivot(int r, int entering, const Eigen::VectorXd& d, bool primal = true) {
        const double t = (primal ? std::max(0.0, xb_[r]) : xb_[r]) / d[r];
        xb_.noalias() -= t * d;
        xb_[r] = t;
        if (primal) {
            for (int i = 0; i < m_; ++i) {
                if (xb_[i] < 0.0 && xb_[i] > -1e-12) xb_[i] = 0.0;
            }
        }
        const Eigen::RowVectorXd pr = binv_.row(r) / d[r];
        Eigen::VectorXd dd = d;
        dd[r] -= 1.0;
        binv_.noalias() -= dd * pr;
        in_basis_[basis_[r]] = -1;
        basis_[r] = entering;
        in_basis_[entering] = r;
        ++iterations_;
        if (++since_refactor_ >= tol::refactor_every) refactor();
    }

    std::vector<double> reduced_costs(const std::vector<double>& c) const {
        const Eigen::VectorXd y = duals(c);
        std::vector<double> rc(n_ + m_, 0.0);
        for (int j = 0; j < n_ + m_; ++j) {
            if (in_basis_[j] < 0) rc[j] = c[j] - dot_column(y, j);
        }
        return rc;
    }

    // Primal simplex with Devex pricing; reduced costs are updated from the
    // pivot row and recomputed at every refactorization. Returns false on
    // unboundedness.
    bool run(const std::vector<double>& c) {
        const int total = n_ + m_;
        const int limit = allow_artificial_ ? total : n_;
        const int cap = 50 * (total + m_) + 10000;
        std::vector<double> rc = reduced_costs(c);
        std::vector<double> weight(total, 1.0);
        std::vector<double> alpha(total);
        int last_refactor = iterations_;
        double best = std::numeric_limits<double>::infinity();
        int stall = 0;
        bool bland = false;
        for (int it = 0; it < cap; ++it) {
            if (since_refactor_ == 0 && iterations_ != last_refactor) {
                rc = reduced_costs(c);
                last_refactor = iterations_;
            }
            int entering = -1;
            double score = 0.0;
            for (int j = 0; j < limit; ++j) {
                if (in_basis_[j] >= 0 || rc[j] >= -tol::optimality) continue;
                if (bland) {
                    entering = j;
                    break;
                }
                const double sc = rc[j] * rc[j] / weight[j];
                if (sc > score) {
                    score = sc;
                    entering = j;
                }
            }
            if (entering < 0) {
                // confirm against freshly computed reduced costs before stopping
                if (since_refactor_ == 0 && iterations_ == last_refactor) return true;
                refactor();
                rc = reduced_costs(c);
                last_refactor = iterations_;
                bool any = false;
                for (int j = 0; j < limit && !any; ++j) any = in_basis_[j] < 0 && rc[j] < -tol::optimality;
                if (!any) return true;
                continue;
            }
            const Eigen::VectorXd d = ftran(entering);
            // Harris two-pass ratio test with a relative pivot floor
            const double piv_floor = std::max(tol::pivot, 1e-9 * d.cwiseAbs().maxCoeff());
            int leave = -1;
            for (int r = 0; r < m_ && !allow_artificial_; ++r) {
                // a zero-level artificial must leave before it can move
                if (basis_[r] >= n_ && std::abs(d[r]) > piv_floor &&
                    (leave < 0 || std::abs(d[r]) > std::abs(d[leave]))) {
                    leave = r;
                }
            }
            if (leave < 0) {
                double bound = std::numeric_limits<double>::infinity();
                for (int r = 0; r < m_; ++r) {
                    if (d[r] > piv_floor) bound = std::min(bound, (std::max(0.0, xb_[r]) + harris_) / d[r]);
                }
                for (int r = 0; r < m_; ++r) {
                    if (d[r] <= piv_floor || std::max(0.0, xb_[r]) / d[r] > bound) continue;
                    if (leave < 0) {
                        leave = r;
                    } else if (bland ? basis_[r] < basis_[leave] : d[r] > d[leave]) {
                        leave = r;
                    }
                }
            }
            if (leave < 0) {
                // stale reduced cost or drifted inverse: refresh once before giving up
                if (since_refactor_ == 0 && iterations_ == last_refactor) return false;
                refactor();
                rc = reduced_costs(c);
                last_refactor = iterations_;
                continue;
            }

            // pivot row of B^{-1} A, then reduced costs and Devex weights
            const Eigen::VectorXd rho = binv_.row(leave).transpose();
            const double piv = d[leave];
            const double theta = rc[entering] / piv;
            const double wq = weight[entering];
            for (int j = 0; j < total; ++j) {
                alpha[j] = dot_column(rho, j);
                if (alpha[j] == 0.0) continue;
                rc[j] -= theta * alpha[j];
                const double ratio_j = alpha[j] / piv;
                weight[j] = std::max(weight[j], ratio_j * ratio_j * wq);
            }
            const int leaving = basis_[leave];
            rc[entering] = 0.0;
            weight[leaving] = std::max(wq / (piv * piv), 1.0);
            pivot(leave, entering, d);
            for (int r = 0; r < m_; ++r) rc[basis_[r]] = 0.0;

            double obj = 0.0;
            for (int r = 0; r < m_; ++r) obj += c[basis_[r]] * xb_[r];
            if (!std::isfinite(best) || obj < best - 4.0 * std::numeric_limits<double>::epsilon() * std::abs(best)) {
                best = obj;
                stall = 0;
                bland = false;
            } else if (++stall > 50) {
                bland = true;
            }
        }
        throw NoConvergence("SimplexSolver: iteration cap reached");
    }

    // Dual simplex passes until the basis is primal feasible for the true rhs.
    bool dual_cleanup(const std::vector<double>& c) {
        for (int it = 0; it < 10 * m_ + 100; ++it) {
            int r = -1;
            double worst = -1e-13;
            for (int i = 0; i < m_; ++i) {
                if (xb_[i] < worst) {
                    worst = xb_[i];
                    r = i;
                }
            }
            if (r < 0) {
                for (int i = 0; i < m_; ++i) xb_[i] = std::max(0.0, xb_[i]);
                return true;
            }
            const Eigen::VectorXd y = duals(c);
            const Eigen::VectorXd row = binv_.row(r).transpose();
            int entering = -1;
            double best = std::numeric_limits<double>::infinity();
            for (int j = 0; j < n_; ++j) {
                if (in_basis_[j] >= 0) continue;
                const double alpha = dot_column(row, j);
                if (alpha >= -tol::pivot) continue;
                const double rc = std::max(0.0, c[j] - dot_column(y, j));
                const double ratio = rc / -alpha;
                if (ratio < best) {
                    best = ratio;
                    entering = j;
                }
            }
            if (entering < 0) return false;
            pivot(r, entering, ftran(entering), false);
        }
        throw NoConvergence("SimplexSolver: dual cleanup did not converge");
    }

    // Replace zero-level artificials by structural columns where possible.
    void drive_out_artificials() {
        for (int r = 0; r < m_; ++r) {
            if (basis_[r] < n_) continue;
            const Eigen::RowVectorXd row = binv_.row(r);
            int best = -1;
            double best_abs = 1e-9;
            for (int j = 0; j < n_; ++j) {
                if (in_basis_[j] >= 0) continue;
                double v = 0.0;
                for (auto [i, a] : lp_.columns[j].entries) v += a * row[i];
                if (std::abs(v) > best_abs) {
                    best_abs = std::abs(v);
                    best = j;
                }
            }
            if (best >= 0) {
                const Eigen::VectorXd d = ftran(best);
                xb_[r] = 0.0;
                pivot(r, best, d);
            }
        }
        refactor();
    }

    const LinearProgram& lp_;
    int m_, n_;
    std::vector<int> basis_, in_basis_;
    Eigen::MatrixXd binv_;
    Eigen::VectorXd xb_, rhs_;
    std::vector<double> art_sign_;
    bool allow_artificial_ = true;
    double harris_ = 1e-12;
    int iterations_ = 0;
    int since_refactor_ = 0;
};

// ---------------------------------------------------------------------------
// Discrete martingale transport
// ---------------------------------------------------------------------------

struct DiscreteMOTInstance {
    std::vector<double> x_atoms, x_weights;
    std::vector<double> y_atoms, y_weights;
    std::vector<std::vector<double>> cost;  // n x m
    std::string cost_spec;                  // provenance only

    std::size_t n() const { return x_atoms.size(); }
    std::size_t m() const { return y_atoms.size(); }
};

struct HedgeTriple {
    std::vector<double> phi, psi, h;
};

enum class BoundDirection { min, max };

inline const char* to_string(BoundDirection d) { return d == BoundDirection::min ? "min" : "max"; }

struct BoundResult {
    double value = 0.0;
    std::vector<std::vector<double>> coupling;  // n x m
    HedgeTriple hedge;                          // from the optimal basis
    double dual_value = 0.0;
    double duality_gap = 0.0;
    bool degenerate = false;
    int iterations = 0;
};

inline double discrete_call(const std::vector<double>& atoms, const std::vector<double>& weights, double k) {
    double s = 0.0;
    for (std::size_t i = 0; i < atoms.size(); ++i) s += weights[i] * std::max(atoms[i] - k, 0.0);
    return s;
}

/// Worst call-price excess of the x-law over the y-law on the union of atoms.
inline double discrete_convex_violation(const std::vector<double>& xa, const std::vector<double>& xw,
                                        const std::vector<double>& ya, const std::vector<double>& yw) {
    double worst = -std::numeric_limits<double>::infinity();
    std::vector<double> ks = xa;
    ks.insert(ks.end(), ya.begin(), ya.end());
    for (double k : ks) worst = std::max(worst, discrete_call(xa, xw, k) - discrete_call(ya, yw, k));
    return worst;
}

/// Throws DomainError naming the first failed invariant.
inline void validate_instance(const DiscreteMOTInstance& inst) {
    auto fail = [](const std::string& m) { throw DomainError("DiscreteMOTInstance: " + m); };
    if (inst.n() == 0 || inst.m() == 0) fail("empty marginal");
    if (inst.x_weights.size() != inst.n() || inst.y_weights.size() != inst.m()) fail("atom/weight length mismatch");
    if (inst.cost.size() != inst.n()) fail("cost has the wrong number of rows");
    for (const auto& row : inst.cost) {
        if (row.size() != inst.m()) fail("cost has the wrong number of columns");
    }
    for (double w : inst.x_weights) if (!(w > 0.0)) fail("x weights must be positive");
    for (double w : inst.y_weights) if (!(w > 0.0)) fail("y weights must be positive");
    const double sx = std::accumulate(inst.x_weights.begin(), inst.x_weights.end(), 0.0);
    const double sy = std::accumulate(inst.y_weights.begin(), inst.y_weights.end(), 0.0);
    if (std::abs(sx - 1.0) > tol::instance_weights || std::abs(sy - 1.0) > tol::instance_weights) {
        fail("weights must sum to 1");
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < inst.n(); ++i) mx += inst.x_atoms[i] * inst.x_weights[i];
    for (std::size_t j = 0; j < inst.m(); ++j) my += inst.y_atoms[j] * inst.y_weights[j];
    if (std::abs(mx - my) > tol::instance_mean) fail("means differ");
}

inline LinearProgram mot_program(const DiscreteMOTInstance& inst, BoundDirection dir) {
    const int n = static_cast<int>(inst.n()), m = static_cast<int>(inst.m());
    LinearProgram lp;
    lp.rows = 2 * n + m;
    lp.columns.resize(static_cast<std::size_t>(n) * m);
    lp.cost.resize(lp.columns.size());
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) {
            const std::size_t k = static_cast<std::size_t>(i) * m + j;
            lp.columns[k].entries = {{i, 1.0}, {n + j, 1.0}, {n + m + i, inst.y_atoms[j] - inst.x_atoms[i]}};
            lp.cost[k] = dir == BoundDirection::min ? inst.cost[i][j] : -inst.cost[i][j];
        }
    }
    lp.rhs.assign(lp.rows, 0.0);
    for (int i = 0; i < n; ++i) lp.rhs[i] = inst.x_weights[i];
    for (int j = 0; j < m; ++j) lp.rhs[n + j] = inst.y_weights[j];
    return lp;
}

/// min or max of sum q_ij cost_ij over discrete martingale couplings.
inline BoundResult solve_bounds(const DiscreteMOTInstance& inst, BoundDirection dir) {
    validate_instance(inst);
    const auto lp = mot_program(inst, dir);
    SimplexSolver solver(lp);
    const auto sol = solver.solve();
    if (sol.status == LpStatus::infeasible) {
        throw Infeasible("solve_bounds: no martingale coupling (discrete convex order fails)");
    }
    if (sol.status == LpStatus::unbounded) throw Unbounded("solve_bounds: internal error, LP reported unbounded");
    const std::size_t n = inst.n(), m = inst.m();
    BoundResult res;
    res.iterations = sol.iterations;
    res.degenerate = sol.degenerate;
    const double sign = dir == BoundDirection::min ? 1.0 : -1.0;
    res.coupling.assign(n, std::vector<double>(m, 0.0));
    res.value = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            res.coupling[i][j] = sol.x[i * m + j];
            res.value += sol.x[i * m + j] * inst.cost[i][j];
        }
    }
    res.hedge.phi.assign(sol.dual.begin(), sol.dual.begin() + n);
    res.hedge.psi.assign(sol.dual.begin() + n, sol.dual.begin() + n + m);
    res.hedge.h.assign(sol.dual.begin() + n + m, sol.dual.end());
    for (auto* v : {&res.hedge.phi, &res.hedge.psi, &res.hedge.h}) {
        for (double& e : *v) e *= sign;
    }
    res.dual_value = 0.0;
    for (std::size_t i = 0; i < n; ++i) res.dual_value += res.hedge.phi[i] * inst.x_weights[i];
    for (std::size_t j = 0; j < m; ++j) res.dual_value += res.hedge.psi[j] * inst.y_weights[j];
    res.duality_gap = std::abs(res.value - res.dual_value);
    return res;
}

inline HedgeTriple extract_dual_hedge(const DiscreteMOTInstance& inst, BoundDirection dir) {
    return solve_bounds(inst, dir).hedge;
}

struct HedgeReport {
    double max_violation = 0.0;
    double value = 0.0;
};

/// Sub-replication (min) or super-replication (max) check on every atom pair.
inline HedgeReport check_hedge(const DiscreteMOTInstance& inst, const HedgeTriple& hd, BoundDirection dir) {
    HedgeReport rep;
    for (std::size_t i = 0; i < inst.n(); ++i) {
        for (std::size_t j = 0; j < inst.m(); ++j) {
            const double v = hd.phi[i] + hd.psi[j] + hd.h[i] * (inst.y_atoms[j] - inst.x_atoms[i]);
            const double excess = dir == BoundDirection::min ? v - inst.cost[i][j] : inst.cost[i][j] - v;
            rep.max_violation = std::max(rep.max_violation, excess);
        }
        rep.value += hd.phi[i] * inst.x_weights[i];
    }
    for (std::size_t j = 0; j < inst.m(); ++j) rep.value += hd.psi[j] * inst.y_weights[j];
    return rep;
}

// ---------------------------------------------------------------------------
// Quantization
// ---------------------------------------------------------------------------

struct Quantized {
    std::vector<double> atoms, weights;
};

namespace detail {

// Conditional means of mass cells of an atom law, splitting atoms across cell boundaries.
inline Quantized quantize_atoms(const AtomLaw& a, const std::vector<double>& cell_mass) {
    Quantized out;
    std::size_t i = 0;
    double left = a.weights.empty() ? 0.0 : a.weights[0];
    for (double cm : cell_mass) {
        double need = cm, mass = 0.0, moment = 0.0;
        while (need > 1e-15 && i < a.points.size()) {
            const double take = std::min(need, left);
            mass += take;
            moment += take * a.points[i];
            need -= take;
            left -= take;
            if (left <= 1e-15) {
                ++i;
                left = i < a.points.size() ? a.weights[i] : 0.0;
            }
        }
        if (mass > 0.0) {
            out.atoms.push_back(moment / mass);
            out.weights.push_back(mass);
        }
    }
    return out;
}

// Cells bounded by `cuts` (interior boundaries, increasing) of a density law.
inline Quantized quantize_cells(const Marginal& m, const std::vector<double>& cuts) {
    Quantized out;
    const std::size_t cells = cuts.size() + 1;
    for (std::size_t k = 0; k < cells; ++k) {
        double mass, moment;
        const bool has_lo = k > 0, has_hi = k < cuts.size();
        const double lo = has_lo ? cuts[k - 1] : 0.0, hi = has_hi ? cuts[k] : 0.0;
        // lower forms left of the median, upper forms right of it
        const bool upper = has_lo && m.cdf(lo) >= 0.5;
        if (upper) {
            mass = m.sf(lo) - (has_hi ? m.sf(hi) : 0.0);
            moment = m.upper_expectation(lo) - (has_hi ? m.upper_expectation(hi) : 0.0);
        } else {
            mass = (has_hi ? m.cdf(hi) : 1.0) - (has_lo ? m.cdf(lo) : 0.0);
            moment = (has_hi ? m.cumulated_expectation(hi) : m.mean()) - (has_lo ? m.cumulated_expectation(lo) : 0.0);
        }
        if (!(mass > 0.0) || !(moment > 0.0)) {
            std::ostringstream os;
            os << "quantize: empty cell " << k << " of " << m.describe();
            throw NumericsFailure(os.str());
        }
        out.atoms.push_back(moment / mass);
        out.weights.push_back(mass);
    }
    return out;
}

}  // namespace detail

/// n equal-probability cells; atom = conditional mean of the cell.
inline Quantized quantize(const Marginal& m, std::size_t n) {
    if (n < 2) throw DomainError("quantize: need n >= 2");
    if (const auto* a = std::get_if<AtomLaw>(&m.law())) {
        if (n >= a->points.size()) return {a->points, a->weights};
        return detail::quantize_atoms(*a, std::vector<double>(n, 1.0 / static_cast<double>(n)));
    }
    std::vector<double> cuts;
    for (std::size_t k = 1; k < n; ++k) {
        const double p = static_cast<double>(k) / static_cast<double>(n);
        cuts.push_back(p <= 0.5 ? m.quantile(p) : m.quantile_upper(1.0 - p));
    }
    auto q = detail::quantize_cells(m, cuts);
    // equal masses by construction; store them exactly
    std::fill(q.weights.begin(), q.weights.end(), 1.0 / static_cast<double>(n));
    return q;
}

/// Cells mirrored under x -> 1/x: boundaries quantile(k/n) below 1 and their
/// reciprocals above. For a law with S(m) = m the result is exactly S-invariant.
inline Quantized quantize_reciprocal(const Marginal& m, std::size_t n) {
    if (n < 2) throw DomainError("quantize_reciprocal: need n >= 2");
    if (!m.has_density()) throw NoDensity("quantize_reciprocal: needs a density");
    std::vector<double> low;
    for (std::size_t k = 1; 2 * k < n; ++k) low.push_back(m.quantile(static_cast<double>(k) / static_cast<double>(n)));
    for (double c : low) {
        if (!(c < 1.0)) throw NumericsFailure("quantize_reciprocal: lower boundaries must lie below 1");
    }
    std::vector<double> cuts = low;
    if (n % 2 == 0) cuts.push_back(1.0);
    for (auto it = low.rbegin(); it != low.rend(); ++it) cuts.push_back(1.0 / *it);
    return detail::quantize_cells(m, cuts);
}

/// Minimal l-inf change of y weights restoring discrete convex order (and equal means).
inline std::vector<double> repair_convex_order(const std::vector<double>& xa, const std::vector<double>& xw,
                                               const std::vector<double>& ya, const std::vector<double>& yw) {
    const int m = static_cast<int>(ya.size());
    double mx = 0.0;
    for (std::size_t i = 0; i < xa.size(); ++i) mx += xa[i] * xw[i];
    std::vector<double> ks = xa;
    ks.insert(ks.end(), ya.begin(), ya.end());
    std::sort(ks.begin(), ks.end());
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
    const int nk = static_cast<int>(ks.size());
    // variables: v (m), t, s_up (m), s_dn (m), s_call (nk)
    LinearProgram lp;
    lp.rows = 2 * m + 2 + nk;
    const int t_col = m;
    lp.columns.resize(static_cast<std::size_t>(m + 1 + 2 * m + nk));
    lp.cost.assign(lp.columns.size(), 0.0);
    lp.cost[t_col] = 1.0;
    lp.rhs.assign(lp.rows, 0.0);
    for (int j = 0; j < m; ++j) {
        auto& e = lp.columns[j].entries;
        e.push_back({j, 1.0});       // v - t + s_up = v0
        e.push_back({m + j, 1.0});   // v + t - s_dn = v0
        e.push_back({2 * m, 1.0});   // sum v = 1
        e.push_back({2 * m + 1, ya[j]});
        for (int k = 0; k < nk; ++k) {
            const double c = std::max(ya[j] - ks[k], 0.0);
            if (c != 0.0) e.push_back({2 * m + 2 + k, c});
        }
        lp.columns[t_col].entries.push_back({j, -1.0});
        lp.columns[t_col].entries.push_back({m + j, 1.0});
        lp.columns[m + 1 + j].entries.push_back({j, 1.0});
        lp.columns[2 * m + 1 + j].entries.push_back({m + j, -1.0});
        lp.rhs[j] = yw[j];
        lp.rhs[m + j] = yw[j];
    }
    lp.rhs[2 * m] = 1.0;
    lp.rhs[2 * m + 1] = mx;
    for (int k = 0; k < nk; ++k) {
        lp.columns[3 * m + 1 + k].entries.push_back({2 * m + 2 + k, -1.0});
        lp.rhs[2 * m + 2 + k] = discrete_call(xa, xw, ks[k]);
    }
    SimplexSolver solver(lp);
    const auto sol = solver.solve();
    if (sol.status != LpStatus::optimal) throw Infeasible("repair_convex_order: no repaired weights exist");
    std::vector<double> v(sol.x.begin(), sol.x.begin() + m);
    const double total = std::accumulate(v.begin(), v.end(), 0.0);
    for (double& e : v) e /= total;
    return v;
}

struct InstanceOptions {
    bool reciprocal_cells = false;  // quantize_reciprocal instead of quantize
    bool repair = true;             // fix discrete convex order if needed
};

/// Quantized instance of (mu, nu, C); drops zero-weight atoms after repair.
inline DiscreteMOTInstance make_instance(const Marginal& mu, const Marginal& nu, const Payoff& c, std::size_t n,
                                         InstanceOptions opt = {}) {
    auto qx = opt.reciprocal_cells ? quantize_reciprocal(mu, n) : quantize(mu, n);
    auto qy = opt.reciprocal_cells ? quantize_reciprocal(nu, n) : quantize(nu, n);
    // exact common mean: shift nothing, just verify
    if (discrete_convex_violation(qx.atoms, qx.weights, qy.atoms, qy.weights) > 1e-13) {
        if (!opt.repair) throw Infeasible("make_instance: discrete convex order fails");
        auto v = repair_convex_order(qx.atoms, qx.weights, qy.atoms, qy.weights);
        Quantized fixed;
        for (std::size_t j = 0; j < v.size(); ++j) {
            if (v[j] > 1e-15) {
                fixed.atoms.push_back(qy.atoms[j]);
                fixed.weights.push_back(v[j]);
            }
        }
        qy = std::move(fixed);
    }
    DiscreteMOTInstance inst;
    inst.x_atoms = std::move(qx.atoms);
    inst.x_weights = std::move(qx.weights);
    inst.y_atoms = std::move(qy.atoms);
    inst.y_weights = std::move(qy.weights);
    inst.cost.assign(inst.n(), std::vector<double>(inst.m()));
    for (std::size_t i = 0; i < inst.n(); ++i) {
        for (std::size_t j = 0; j < inst.m(); ++j) inst.cost[i][j] = c(inst.x_atoms[i], inst.y_atoms[j]);
    }
    inst.cost_spec = c.name;
    return inst;
}

/// Image under the numeraire change: atoms 1/x with weight x w, cost C(x, y) / y.
inline DiscreteMOTInstance symmetrize_instance(const DiscreteMOTInstance& inst) {
    DiscreteMOTInstance out;
    const std::size_t n = inst.n(), m = inst.m();
    for (std::size_t i = n; i-- > 0;) {
        out.x_atoms.push_back(1.0 / inst.x_atoms[i]);
        out.x_weights.push_back(inst.x_atoms[i] * inst.x_weights[i]);
    }
    for (std::size_t j = m; j-- > 0;) {
        out.y_atoms.push_back(1.0 / inst.y_atoms[j]);
        out.y_weights.push_back(inst.y_atoms[j] * inst.y_weights[j]);
    }
    out.cost.assign(n, std::vector<double>(m));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) out.cost[n - 1 - i][m - 1 - j] = inst.cost[i][j] / inst.y_atoms[j];
    }
    out.cost_spec = inst.cost_spec.empty() ? "" : "S*(" + inst.cost_spec + ")";
    return out;
}

/// Hedge of the symmetrized instance, read on the reversed reciprocal atoms u = 1/x, v = 1/y:
/// phi~(u) = u phi(1/u) = phi / x, psi~(v) = psi / y, h~(u) = phi(1/u) - h(1/u) / u = phi - x h.
inline HedgeTriple symmetrize_hedge_triple(const DiscreteMOTInstance& inst, const HedgeTriple& hd) {
    HedgeTriple out;
    for (std::size_t i = inst.n(); i-- > 0;) {
        out.phi.push_back(hd.phi[i] / inst.x_atoms[i]);
        out.h.push_back(hd.phi[i] - inst.x_atoms[i] * hd.h[i]);
    }
    for (std::size_t j = inst.m(); j-- > 0;) out.psi.push_back(hd.psi[j] / inst.y_atoms[j]);
    return out;
}

// ---------------------------------------------------------------------------
// Text I/O
// ---------------------------------------------------------------------------
//
//   # comment
//   x <n>
//   <atom> <weight>      (n lines)
//   y <m>
//   <atom> <weight>      (m lines)
//   cost matrix          followed by n rows of m numbers
//   cost <spec>          alternatively, resolved through a payoff lookup

inline void write_instance(std::ostream& os, const DiscreteMOTInstance& inst) {
    os << std::setprecision(17);
    if (!inst.cost_spec.empty()) os << "# cost " << inst.cost_spec << '\n';
    os << "x " << inst.n() << '\n';
    for (std::size_t i = 0; i < inst.n(); ++i) os << inst.x_atoms[i] << ' ' << inst.x_weights[i] << '\n';
    os << "y " << inst.m() << '\n';
    for (std::size_t j = 0; j < inst.m(); ++j) os << inst.y_atoms[j] << ' ' << inst.y_weights[j] << '\n';
    os << "cost matrix\n";
    for (const auto& row : inst.cost) {
        for (std::size_t j = 0; j < row.size(); ++j) os << (j ? " " : "") << row[j];
        os << '\n';
    }
}

inline DiscreteMOTInstance read_instance(std::istream& is,
                                         const std::function<Payoff(const std::string&)>& lookup = {}) {
    DiscreteMOTInstance inst;
    std::string line;
    auto next = [&]() -> bool {
        while (std::getline(is, line)) {
            const auto pos = line.find_first_not_of(" \t\r");
            if (pos == std::string::npos || line[pos] == '#') continue;
            return true;
        }
        return false;
    };
    auto bad = [](const std::string& m) { throw ConfigError("read_instance: " + m); };
    auto read_block = [&](char tag, std::vector<double>& a, std::vector<double>& w) {
        if (!next()) bad(std::string("missing '") + tag + "' block");
        std::istringstream hs(line);
        char t;
        std::size_t count = 0;
        if (!(hs >> t >> count) || t != tag) bad(std::string("expected '") + tag + " <count>'");
        for (std::size_t k = 0; k < count; ++k) {
            if (!next()) bad("truncated atom block");
            std::istringstream ls(line);
            double x, v;
            if (!(ls >> x >> v)) bad("bad atom line: " + line);
            a.push_back(x);
            w.push_back(v);
        }
    };
    read_block('x', inst.x_atoms, inst.x_weights);
    read_block('y', inst.y_atoms, inst.y_weights);
    if (!next()) bad("missing cost line");
    std::istringstream cs(line);
    std::string word, spec;
    cs >> word >> spec;
    if (word != "cost") bad("expected 'cost'");
    if (spec == "matrix") {
        for (std::size_t i = 0; i < inst.n(); ++i) {
            if (!next()) bad("truncated cost matrix");
            std::istringstream rs(line);
            std::vector<double> row(inst.m());
            for (double& v : row) {
                if (!(rs >> v)) bad("short cost row");
            }
            inst.cost.push_back(std::move(row));
        }
    } else {
        if (!lookup) bad("cost given by spec but no payoff lookup supplied");
        const Payoff c = lookup(spec);
        inst.cost_spec = spec;
        inst.cost.assign(inst.n(), std::vector<double>(inst.m()));
        for (std::size_t i = 0; i < inst.n(); ++i) {
            for (std::size_t j = 0; j < inst.m(); ++j) inst.cost[i][j] = c(inst.x_atoms[i], inst.y_atoms[j]);
        }
    }
    return inst;
}

}  // namespace mot
