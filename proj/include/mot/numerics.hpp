#pragma once

// Scalar numerical kernels shared by the whole library: bracketed root-finding,
// adaptive Gauss-Kronrod quadrature, shape-preserving interpolation tables and
// the standard normal distribution functions.

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <numbers>
#include <queue>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "mot/errors.hpp"

namespace mot {

template <typename F>
concept ScalarFunction = requires(F f, double x) {
    { f(x) } -> std::convertible_to<double>;
};

namespace tol {
inline constexpr double root = 1e-12;        // abscissa tolerance of the root finder
inline constexpr double quadrature = 1e-10;  // absolute quadrature tolerance
inline constexpr double table_monotonicity = 1e-12;
inline constexpr int root_max_iter = 200;
inline constexpr std::size_t quad_max_intervals = 20000;
}  // namespace tol

// ---------------------------------------------------------------------------
// Root finding
// ---------------------------------------------------------------------------

/// Brent's method on a sign-changing bracket [lo, hi].
///
/// Inverse quadratic / secant steps are accepted only while they stay inside
/// the current bracket and shrink it fast enough; otherwise the step falls back
/// to bisection. Iterates until the bracket is narrower than `abs_tol` (plus a
/// few ulps of the iterate) or f vanishes exactly.
template <ScalarFunction F>
double find_root_bracketed(F&& f, double lo, double hi, double abs_tol = tol::root,
                           int max_iter = tol::root_max_iter) {
    if (!(abs_tol > 0.0)) throw DomainError("find_root_bracketed: tolerance must be positive");
    if (lo > hi) std::swap(lo, hi);
    double a = lo, b = hi;
    double fa = f(a), fb = f(b);
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;
    if (std::isnan(fa) || std::isnan(fb)) {
        throw BracketError("find_root_bracketed: function is NaN at a bracket end");
    }
    if ((fa > 0.0) == (fb > 0.0)) {
        std::ostringstream os;
        os << "find_root_bracketed: no sign change on [" << lo << ", " << hi << "] (f = " << fa
           << ", " << fb << ")";
        throw BracketError(os.str());
    }
    double c = a, fc = fa;
    double d = b - a, e = d;
    constexpr double eps = std::numeric_limits<double>::epsilon();
    for (int iter = 0; iter < max_iter; ++iter) {
        if ((fb > 0.0) == (fc > 0.0)) {
            c = a;
            fc = fa;
            d = e = b - a;
        }
        if (std::abs(fc) < std::abs(fb)) {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        const double tol1 = 2.0 * eps * std::abs(b) + 0.5 * abs_tol;
        const double xm = 0.5 * (c - b);
        if (std::abs(xm) <= tol1 || fb == 0.0) return b;
        if (std::abs(e) >= tol1 && std::abs(fa) > std::abs(fb)) {
            double p, q, r;
            const double s = fb / fa;
            if (a == c) {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                q = fa / fc;
                r = fb / fc;
                p = s * (2.0 * xm * q * (q - r) - (b - a) * (r - 1.0));
                q = (q - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if (p > 0.0) q = -q;
            p = std::abs(p);
            const double min1 = 3.0 * xm * q - std::abs(tol1 * q);
            const double min2 = std::abs(e * q);
            if (2.0 * p < std::min(min1, min2)) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += (std::abs(d) > tol1) ? d : std::copysign(tol1, xm);
        fb = f(b);
        if (std::isnan(fb)) throw NumericsFailure("find_root_bracketed: function returned NaN");
    }
    throw NoConvergence("find_root_bracketed: iteration cap reached");
}

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;  // estimated absolute error
    std::size_t intervals = 0;
};

namespace detail {

// 15-point Kronrod extension of the 7-point Gauss rule.
inline constexpr std::array<double, 8> kronrod_nodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kronrod_weights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> gauss_weights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
    double lo, hi, value, error;
    bool operator<(const Segment& other) const { return error < other.error; }
};

template <typename F>
Segment gauss_kronrod_15(F& f, double lo, double hi) {
    const double center = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo);
    const double fc = f(center);
    double kronrod = fc * kronrod_weights[7];
    double gauss = fc * gauss_weights[3];
    for (int j = 0; j < 7; ++j) {
        const double dx = half * kronrod_nodes[j];
        const double sum = f(center - dx) + f(center + dx);
        kronrod += kronrod_weights[j] * sum;
        if (j % 2 == 1) gauss += gauss_weights[j / 2] * sum;
    }
    return {lo, hi, kronrod * half, std::abs((kronrod - gauss) * half)};
}

}  // namespace detail

/// Globally adaptive G7-K15 quadrature on [lo, hi].
///
/// `breakpoints` (any order, points outside (lo, hi) ignored) split the range
/// up front; integrands that change regime at known abscissae must pass them.
template <ScalarFunction F>
QuadratureResult integrate_adaptive(F&& f, double lo, double hi, double abs_tol = tol::quadrature,
                                    std::span<const double> breakpoints = {},
                                    std::size_t max_intervals = tol::quad_max_intervals) {
    if (!(lo < hi)) {
        if (lo == hi) return {};
        throw DomainError("integrate_adaptive: lo must be < hi");
    }
    std::vector<double> cuts{lo};
    for (double bp : breakpoints) {
        if (bp > lo && bp < hi) cuts.push_back(bp);
    }
    cuts.push_back(hi);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    std::priority_queue<detail::Segment> heap;
    double total = 0.0, total_err = 0.0;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        auto seg = detail::gauss_kronrod_15(f, cuts[k], cuts[k + 1]);
        total += seg.value;
        total_err += seg.error;
        heap.push(seg);
    }
    while (total_err > abs_tol) {
        if (heap.size() >= max_intervals) {
            std::ostringstream os;
            os << "integrate_adaptive: subdivision cap reached on [" << lo << ", " << hi
               << "], error estimate " << total_err;
            throw NoConvergence(os.str());
        }
        auto worst = heap.top();
        const double mid = 0.5 * (worst.lo + worst.hi);
        if (!(mid > worst.lo && mid < worst.hi)) {
            // interval at machine resolution: accept what we have
            break;
        }
        heap.pop();
        auto left = detail::gauss_kronrod_15(f, worst.lo, mid);
        auto right = detail::gauss_kronrod_15(f, mid, worst.hi);
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // re-sum to shed accumulated cancellation in the running totals
    double value = 0.0, err = 0.0;
    const std::size_t count = heap.size();
    while (!heap.empty()) {
        value += heap.top().value;
        err += heap.top().error;
        heap.pop();
    }
    return {value, err, count};
}

// ---------------------------------------------------------------------------
// Shape-preserving interpolation
// ---------------------------------------------------------------------------

enum class Monotonicity { increasing, decreasing, none };

/// Tabulated function with a piecewise-cubic Hermite (PCHIP) interpolant.
///
/// Slopes follow Fritsch-Butland weighted harmonic means, so the interpolant is
/// monotone on every cell where the data are, and never leaves the range of the
/// two neighbouring ordinates.
class FunctionTable {
public:
    FunctionTable() = default;

    FunctionTable(std::vector<double> abscissae, std::vector<double> ordinates,
                  Monotonicity tag = Monotonicity::none)
        : x_(std::move(abscissae)), y_(std::move(ordinates)), tag_(tag) {
        if (x_.size() != y_.size()) throw DomainError("FunctionTable: length mismatch");
        if (x_.size() < 2) throw DomainError("FunctionTable: need at least two points");
        for (std::size_t i = 0; i < x_.size(); ++i) {
            if (!std::isfinite(x_[i]) || !std::isfinite(y_[i])) {
                throw DomainError("FunctionTable: non-finite entry");
            }
            if (i > 0 && !(x_[i] > x_[i - 1])) {
                throw DomainError("FunctionTable: abscissae must be strictly increasing");
            }
            if (i > 0 && tag_ == Monotonicity::increasing &&
                y_[i] < y_[i - 1] - tol::table_monotonicity) {
                throw DomainError(violation_message(i, "increasing"));
            }
            if (i > 0 && tag_ == Monotonicity::decreasing &&
                y_[i] > y_[i - 1] + tol::table_monotonicity) {
                throw DomainError(violation_message(i, "decreasing"));
            }
        }
        compute_slopes();
    }

    double operator()(double x) const {
        if (!(x >= x_.front() && x <= x_.back())) {
            std::ostringstream os;
            os << "FunctionTable: x = " << x << " outside [" << x_.front() << ", " << x_.back()
               << "]";
            throw OutOfRange(os.str());
        }
        auto it = std::upper_bound(x_.begin(), x_.end(), x);
        std::size_t k = (it == x_.begin()) ? 0 : static_cast<std::size_t>(it - x_.begin()) - 1;
        if (k + 1 >= x_.size()) k = x_.size() - 2;
        const double h = x_[k + 1] - x_[k];
        const double t = (x - x_[k]) / h;
        const double t2 = t * t, t3 = t2 * t;
        const double h00 = 2 * t3 - 3 * t2 + 1;
        const double h10 = t3 - 2 * t2 + t;
        const double h01 = -2 * t3 + 3 * t2;
        const double h11 = t3 - t2;
        return h00 * y_[k] + h10 * h * d_[k] + h01 * y_[k + 1] + h11 * h * d_[k + 1];
    }

    const std::vector<double>& abscissae() const { return x_; }
    const std::vector<double>& ordinates() const { return y_; }
    Monotonicity monotonicity() const { return tag_; }
    double front() const { return x_.front(); }
    double back() const { return x_.back(); }
    std::size_t size() const { return x_.size(); }
    bool empty() const { return x_.empty(); }

private:
    std::string violation_message(std::size_t i, const char* what) const {
        std::ostringstream os;
        os << "FunctionTable: ordinates not " << what << " at x = " << x_[i] << " (" << y_[i - 1]
           << " -> " << y_[i] << ")";
        return os.str();
    }

    static double end_slope(double h0, double h1, double del0, double del1) {
        double d = ((2 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
        if ((d > 0) != (del0 > 0) || del0 == 0.0) {
            d = 0.0;
        } else if ((del0 > 0) != (del1 > 0) && std::abs(d) > std::abs(3 * del0)) {
            d = 3 * del0;
        }
        return d;
    }

    void compute_slopes() {
        const std::size_t n = x_.size();
        d_.assign(n, 0.0);
        std::vector<double> h(n - 1), del(n - 1);
        for (std::size_t k = 0; k + 1 < n; ++k) {
            h[k] = x_[k + 1] - x_[k];
            del[k] = (y_[k + 1] - y_[k]) / h[k];
        }
        if (n == 2) {
            d_[0] = d_[1] = del[0];
            return;
        }
        for (std::size_t k = 1; k + 1 < n; ++k) {
            if (del[k - 1] == 0.0 || del[k] == 0.0 || (del[k - 1] > 0) != (del[k] > 0)) {
                d_[k] = 0.0;
            } else {
                const double w1 = 2 * h[k] + h[k - 1];
                const double w2 = h[k] + 2 * h[k - 1];
                d_[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
            }
        }
        d_[0] = end_slope(h[0], h[1], del[0], del[1]);
        d_[n - 1] = end_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
    }

    std::vector<double> x_, y_, d_;
    Monotonicity tag_ = Monotonicity::none;
};

inline double interpolate_monotone(const FunctionTable& table, double x) { return table(x); }

/// n points geometrically spaced from lo to hi inclusive.
inline std::vector<double> log_grid(double lo, double hi, std::size_t n) {
    if (!(lo > 0.0 && hi > lo) || n < 2) throw DomainError("log_grid: need 0 < lo < hi, n >= 2");
    std::vector<double> g(n);
    const double step = std::log(hi / lo) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) g[i] = lo * std::exp(step * static_cast<double>(i));
    g.back() = hi;
    return g;
}

// ---------------------------------------------------------------------------
// Standard normal
// ---------------------------------------------------------------------------

inline double normal_pdf(double z) {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Upper tail 1 - Phi(z), accurate far into the right tail.
inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

/// Inverse of normal_cdf. Acklam's rational start, then two Halley steps on erfc.
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        if (p == 0.0) return -std::numeric_limits<double>::infinity();
        if (p == 1.0) return std::numeric_limits<double>::infinity();
        throw DomainError("normal_quantile: p outside [0, 1]");
    }
    // work on the smaller tail so the refinement sees full relative precision
    const bool upper = p > 0.5;
    const double t = upper ? 1.0 - p : p;
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    double z;
    if (t < 0.02425) {
        const double q = std::sqrt(-2.0 * std::log(t));
        z = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else {
        const double q = t - 0.5;
        const double r = q * q;
        z = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    }
    for (int k = 0; k < 2; ++k) {
        const double e = normal_cdf(z) - t;
        const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * z * z);
        z -= u / (1.0 + 0.5 * z * u);
    }
    return upper ? -z : z;
}

/// z with normal_sf(z) = q; stays accurate for tiny q.
inline double normal_quantile_upper(double q) { return -normal_quantile(q); }

}  // namespace mot
