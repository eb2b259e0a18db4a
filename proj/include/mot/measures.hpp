#pragma once

// Probability laws on (0, inf): log-normal, finite atoms and tabulated densities,
// their distribution functionals, and the convex-order / dispersion diagnostics
// that gate the coupling constructions.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "mot/errors.hpp"
#include "mot/numerics.hpp"

namespace mot {

namespace tol {
inline constexpr double mass = 1e-9;          // total mass must be 1 within this
inline constexpr double mean = 1e-6;          // two means are "equal" within this
inline constexpr double unit_mean = 1e-9;     // pricing marginals have mean 1 within this
inline constexpr double tail_quantile = 1e-9; // truncation quantile for scans and pricing
inline constexpr double convex_order = 1e-9;  // allowed call-price excess of mu over nu
inline constexpr std::size_t scan_points = 4096;
}  // namespace tol

/// ln N(-sigma^2/2, sigma^2): the unit-mean log-normal law.
struct LogNormalLaw {
    double sigma;
};

/// Finitely many atoms, sorted by location with duplicates merged.
struct AtomLaw {
    std::vector<double> points;
    std::vector<double> weights;
    std::vector<double> cum_weight;   // P[X <= points[i]]
    std::vector<double> cum_moment;   // E[X; X <= points[i]]
};

/// Piecewise-linear density on a grid, normalized to unit mass and unit mean.
struct TabulatedData {
    std::vector<double> x, density;
    std::vector<double> lower_mass, lower_moment;  // integrals over [x_0, x_k]
    std::vector<double> upper_mass, upper_moment;  // integrals over [x_k, x_N]
    std::string source;
};

struct TabulatedLaw {
    std::shared_ptr<const TabulatedData> data;
    bool reflected = false;  // true: the law of 1/X under X dP
};

enum class MarginalKind { lognormal, atoms, tabulated };

class Marginal {
public:
    using Law = std::variant<LogNormalLaw, AtomLaw, TabulatedLaw>;

    static Marginal lognormal(double sigma) {
        if (!(sigma > 0.0) || !std::isfinite(sigma)) {
            throw DomainError("lognormal: sigma must be positive");
        }
        return Marginal(LogNormalLaw{sigma});
    }

    /// Atoms as (location, weight) pairs. Weights must sum to 1 within tol::mass.
    static Marginal atoms(std::vector<std::pair<double, double>> atoms) {
        if (atoms.empty()) throw DomainError("atoms: empty atom list");
        std::sort(atoms.begin(), atoms.end());
        AtomLaw law;
        double total = 0.0;
        for (auto [x, w] : atoms) {
            if (!(x > 0.0) || !std::isfinite(x)) throw DomainError("atoms: locations must be in (0, inf)");
            if (!(w >= 0.0)) throw DomainError("atoms: weights must be nonnegative");
            if (w == 0.0) continue;
            total += w;
            if (!law.points.empty() && law.points.back() == x) {
                law.weights.back() += w;
            } else {
                law.points.push_back(x);
                law.weights.push_back(w);
            }
        }
        if (std::abs(total - 1.0) > tol::mass) {
            std::ostringstream os;
            os << "atoms: weights sum to " << total << ", expected 1";
            throw DomainError(os.str());
        }
        double cw = 0.0, cm = 0.0;
        for (std::size_t i = 0; i < law.points.size(); ++i) {
            cw += law.weights[i];
            cm += law.weights[i] * law.points[i];
            law.cum_weight.push_back(cw);
            law.cum_moment.push_back(cm);
        }
        return Marginal(std::move(law));
    }

    /// Piecewise-linear density through (grid, density). The table is renormalized
    /// to unit mass, then the abscissae are rescaled by the mean so the law has
    /// unit mean.
    static Marginal tabulated(std::vector<double> grid, std::vector<double> density,
                              std::string source = "inline") {
        if (grid.size() != density.size() || grid.size() < 2) {
            throw DomainError("tabulated: need at least two (x, density) rows of equal length");
        }
        for (std::size_t i = 0; i < grid.size(); ++i) {
            if (!(grid[i] > 0.0) || !std::isfinite(grid[i])) throw DomainError("tabulated: x must be in (0, inf)");
            if (!(density[i] >= 0.0) || !std::isfinite(density[i])) throw DomainError("tabulated: density must be >= 0");
            if (i > 0 && !(grid[i] > grid[i - 1])) throw DomainError("tabulated: x must be strictly increasing");
        }
        auto cell_mass = [&](std::size_t k) {
            return 0.5 * (density[k] + density[k + 1]) * (grid[k + 1] - grid[k]);
        };
        auto cell_moment = [&](std::size_t k) {
            const double h = grid[k + 1] - grid[k];
            return h / 6.0 *
                   (2 * grid[k] * density[k] + grid[k] * density[k + 1] +
                    grid[k + 1] * density[k] + 2 * grid[k + 1] * density[k + 1]);
        };
        double mass = 0.0, moment = 0.0;
        for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
            mass += cell_mass(k);
            moment += cell_moment(k);
        }
        if (!(mass > 0.0)) throw DomainError("tabulated: density has zero mass");
        const double mean = moment / mass;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            grid[i] /= mean;
            density[i] *= mean / mass;
        }
        auto data = std::make_shared<TabulatedData>();
        data->source = std::move(source);
        data->x = std::move(grid);
        data->density = std::move(density);
        const std::size_t n = data->x.size();
        data->lower_mass.assign(n, 0.0);
        data->lower_moment.assign(n, 0.0);
        data->upper_mass.assign(n, 0.0);
        data->upper_moment.assign(n, 0.0);
        const auto& x = data->x;
        const auto& d = data->density;
        auto mass_k = [&](std::size_t k) { return 0.5 * (d[k] + d[k + 1]) * (x[k + 1] - x[k]); };
        auto moment_k = [&](std::size_t k) {
            const double h = x[k + 1] - x[k];
            return h / 6.0 * (2 * x[k] * d[k] + x[k] * d[k + 1] + x[k + 1] * d[k] + 2 * x[k + 1] * d[k + 1]);
        };
        for (std::size_t k = 0; k + 1 < n; ++k) {
            data->lower_mass[k + 1] = data->lower_mass[k] + mass_k(k);
            data->lower_moment[k + 1] = data->lower_moment[k] + moment_k(k);
        }
        for (std::size_t k = n - 1; k-- > 0;) {
            data->upper_mass[k] = data->upper_mass[k + 1] + mass_k(k);
            data->upper_moment[k] = data->upper_moment[k + 1] + moment_k(k);
        }
        return Marginal(TabulatedLaw{std::move(data), false});
    }

    /// Two-column text file: x density, '#' starts a comment.
    static Marginal tabulated_from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open density table '" + path + "'");
        std::vector<double> xs, ds;
        std::string line;
        while (std::getline(in, line)) {
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            for (char& ch : line) {
                if (ch == ',' || ch == ';' || ch == '\t') ch = ' ';
            }
            std::istringstream ls(line);
            double x, d;
            if (!(ls >> x)) continue;
            if (!(ls >> d)) throw ConfigError("density table '" + path + "': malformed row '" + line + "'");
            xs.push_back(x);
            ds.push_back(d);
        }
        return tabulated(std::move(xs), std::move(ds), path);
    }

    /// Point mass at 1.
    Marginal() : Marginal(atoms({{1.0, 1.0}})) {}

    explicit Marginal(Law law) : law_(std::move(law)) { mean_ = compute_mean(); }

    const Law& law() const { return law_; }

    MarginalKind kind() const {
        switch (law_.index()) {
            case 0: return MarginalKind::lognormal;
            case 1: return MarginalKind::atoms;
            default: return MarginalKind::tabulated;
        }
    }

    bool has_density() const { return kind() != MarginalKind::atoms; }
    double mean() const { return mean_; }

    std::string describe() const {
        std::ostringstream os;
        os.precision(12);
        if (auto ln = std::get_if<LogNormalLaw>(&law_)) {
            os << "lognormal:sigma=" << ln->sigma;
        } else if (auto at = std::get_if<AtomLaw>(&law_)) {
            os << "atoms:";
            for (std::size_t i = 0; i < at->points.size(); ++i) {
                os << (i ? "," : "") << at->points[i] << "=" << at->weights[i];
            }
        } else {
            const auto& tab = std::get<TabulatedLaw>(law_);
            os << (tab.reflected ? "reflected(table:" : "table:") << tab.data->source
               << (tab.reflected ? ")" : "");
        }
        return os.str();
    }

    /// Smallest and largest points of the support (0 and inf for the log-normal).
    double support_lower() const {
        if (std::holds_alternative<LogNormalLaw>(law_)) return 0.0;
        if (auto at = std::get_if<AtomLaw>(&law_)) return at->points.front();
        const auto& tab = std::get<TabulatedLaw>(law_);
        return tab.reflected ? 1.0 / tab.data->x.back() : tab.data->x.front();
    }
    double support_upper() const {
        if (std::holds_alternative<LogNormalLaw>(law_)) return std::numeric_limits<double>::infinity();
        if (auto at = std::get_if<AtomLaw>(&law_)) return at->points.back();
        const auto& tab = std::get<TabulatedLaw>(law_);
        return tab.reflected ? 1.0 / tab.data->x.front() : tab.data->x.back();
    }

    double pdf(double x) const {
        check_positive(x, "pdf");
        if (auto ln = std::get_if<LogNormalLaw>(&law_)) {
            const double s = ln->sigma;
            return normal_pdf((std::log(x) + 0.5 * s * s) / s) / (x * s);
        }
        if (std::holds_alternative<AtomLaw>(law_)) throw NoDensity("pdf: atom list has no density");
        const auto& tab = std::get<TabulatedLaw>(law_);
        if (tab.reflected) {
            const double u = 1.0 / x;
            return table_pdf(*tab.data, u) * u * u * u;
        }
        return table_pdf(*tab.data, x);
    }

    /// P[X <= x], right-continuous.
    double cdf(double x) const {
        check_positive(x, "cdf");
        return std::visit([&](const auto& law) { return lower_mass(law, x); }, law_);
    }

    /// P[X > x].
    double sf(double x) const {
        check_positive(x, "sf");
        return std::visit([&](const auto& law) { return upper_mass(law, x); }, law_);
    }

    /// G(x) = E[X; X <= x].
    double cumulated_expectation(double x) const {
        check_positive(x, "cumulated_expectation");
        return std::visit([&](const auto& law) { return lower_moment(law, x); }, law_);
    }

    /// mean - G(x) = E[X; X > x], computed without cancellation.
    double upper_expectation(double x) const {
        check_positive(x, "upper_expectation");
        return std::visit([&](const auto& law) { return upper_moment(law, x); }, law_);
    }

    /// Undiscounted call price E[(X - K)^+].
    double call_price(double strike) const {
        return upper_expectation(strike) - strike * sf(strike);
    }

    /// Generalized inverse: smallest x with F(x) >= p.
    double quantile(double p) const {
        check_probability(p, "quantile");
        return std::visit([&](const auto& law) { return quantile_lower(law, p); }, law_);
    }

    /// Smallest x with P[X > x] <= s; use for upper-tail probabilities.
    double quantile_upper(double s) const {
        check_probability(s, "quantile_upper");
        return std::visit([&](const auto& law) { return quantile_upper_impl(law, s); }, law_);
    }

    /// Smallest x with G(x) >= g, for g in (0, mean).
    double inverse_cumulated_expectation(double g) const {
        check_level(g, "inverse_cumulated_expectation");
        return std::visit([&](const auto& law) { return inv_lower_moment(law, g); }, law_);
    }

    /// Smallest x with E[X; X > x] <= h, for h in (0, mean).
    double inverse_upper_expectation(double h) const {
        check_level(h, "inverse_upper_expectation");
        return std::visit([&](const auto& law) { return inv_upper_moment(law, h); }, law_);
    }

private:
    static void check_positive(double x, const char* what) {
        if (!(x > 0.0)) {
            std::ostringstream os;
            os << what << ": argument " << x << " is not in (0, inf)";
            throw DomainError(os.str());
        }
    }
    static void check_probability(double p, const char* what) {
        if (!(p > 0.0 && p < 1.0)) {
            std::ostringstream os;
            os << what << ": probability " << p << " is not in (0, 1)";
            throw DomainError(os.str());
        }
    }
    void check_level(double g, const char* what) const {
        if (!(g > 0.0 && g < mean_)) {
            std::ostringstream os;
            os << what << ": level " << g << " is not in (0, " << mean_ << ")";
            throw DomainError(os.str());
        }
    }

    double compute_mean() const {
        if (std::holds_alternative<LogNormalLaw>(law_)) return 1.0;
        if (auto at = std::get_if<AtomLaw>(&law_)) return at->cum_moment.back();
        const auto& tab = std::get<TabulatedLaw>(law_);
        // reflected law of a unit-mean table also has unit mean
        return tab.reflected ? tab.data->lower_mass.back() : tab.data->lower_moment.back();
    }

    // --- log-normal -------------------------------------------------------
    static double d_plus(const LogNormalLaw& l, double x) {
        return (std::log(x) + 0.5 * l.sigma * l.sigma) / l.sigma;
    }
    static double d_minus(const LogNormalLaw& l, double x) {
        return (std::log(x) - 0.5 * l.sigma * l.sigma) / l.sigma;
    }
    static double lower_mass(const LogNormalLaw& l, double x) { return normal_cdf(d_plus(l, x)); }
    static double upper_mass(const LogNormalLaw& l, double x) { return normal_sf(d_plus(l, x)); }
    static double lower_moment(const LogNormalLaw& l, double x) { return normal_cdf(d_minus(l, x)); }
    static double upper_moment(const LogNormalLaw& l, double x) { return normal_sf(d_minus(l, x)); }
    static double quantile_lower(const LogNormalLaw& l, double p) {
        return std::exp(l.sigma * normal_quantile(p) - 0.5 * l.sigma * l.sigma);
    }
    static double quantile_upper_impl(const LogNormalLaw& l, double s) {
        return std::exp(l.sigma * normal_quantile_upper(s) - 0.5 * l.sigma * l.sigma);
    }
    static double inv_lower_moment(const LogNormalLaw& l, double g) {
        return std::exp(l.sigma * normal_quantile(g) + 0.5 * l.sigma * l.sigma);
    }
    static double inv_upper_moment(const LogNormalLaw& l, double h) {
        return std::exp(l.sigma * normal_quantile_upper(h) + 0.5 * l.sigma * l.sigma);
    }

    // --- atoms ------------------------------------------------------------
    static std::size_t count_le(const AtomLaw& a, double x) {
        return static_cast<std::size_t>(std::upper_bound(a.points.begin(), a.points.end(), x) - a.points.begin());
    }
    static double lower_mass(const AtomLaw& a, double x) {
        const auto k = count_le(a, x);
        return k == 0 ? 0.0 : a.cum_weight[k - 1];
    }
    static double upper_mass(const AtomLaw& a, double x) {
        double s = 0.0;
        for (std::size_t i = count_le(a, x); i < a.points.size(); ++i) s += a.weights[i];
        return s;
    }
    static double lower_moment(const AtomLaw& a, double x) {
        const auto k = count_le(a, x);
        return k == 0 ? 0.0 : a.cum_moment[k - 1];
    }
    static double upper_moment(const AtomLaw& a, double x) {
        double s = 0.0;
        for (std::size_t i = count_le(a, x); i < a.points.size(); ++i) s += a.weights[i] * a.points[i];
        return s;
    }
    // Sums above are exact for the short atom lists used here; the 1e-14 slack
    // absorbs rounding in cumulative weights.
    static double quantile_lower(const AtomLaw& a, double p) {
        for (std::size_t i = 0; i < a.points.size(); ++i) {
            if (a.cum_weight[i] >= p - 1e-14) return a.points[i];
        }
        return a.points.back();
    }
    static double quantile_upper_impl(const AtomLaw& a, double s) {
        for (std::size_t i = 0; i < a.points.size(); ++i) {
            if (upper_mass(a, a.points[i]) <= s + 1e-14) return a.points[i];
        }
        return a.points.back();
    }
    static double inv_lower_moment(const AtomLaw& a, double g) {
        for (std::size_t i = 0; i < a.points.size(); ++i) {
            if (a.cum_moment[i] >= g - 1e-14) return a.points[i];
        }
        return a.points.back();
    }
    static double inv_upper_moment(const AtomLaw& a, double h) {
        for (std::size_t i = 0; i < a.points.size(); ++i) {
            if (upper_moment(a, a.points[i]) <= h + 1e-14) return a.points[i];
        }
        return a.points.back();
    }

    // --- tabulated --------------------------------------------------------
    static std::size_t cell_of(const TabulatedData& t, double x) {
        auto it = std::upper_bound(t.x.begin(), t.x.end(), x);
        std::size_t k = static_cast<std::size_t>(it - t.x.begin());
        k = (k == 0) ? 0 : k - 1;
        return std::min(k, t.x.size() - 2);
    }
    static double table_pdf(const TabulatedData& t, double x) {
        if (x < t.x.front() || x > t.x.back()) return 0.0;
        const auto k = cell_of(t, x);
        const double w = (x - t.x[k]) / (t.x[k + 1] - t.x[k]);
        return (1 - w) * t.density[k] + w * t.density[k + 1];
    }
    // mass and first moment of the table over [x_k, x] for x inside cell k
    static std::pair<double, double> partial_cell(const TabulatedData& t, std::size_t k, double x) {
        const double h = t.x[k + 1] - t.x[k];
        const double slope = (t.density[k + 1] - t.density[k]) / h;
        const double tau = x - t.x[k];
        const double m = t.density[k] * tau + 0.5 * slope * tau * tau;
        const double g = t.x[k] * t.density[k] * tau + 0.5 * (t.x[k] * slope + t.density[k]) * tau * tau +
                         slope * tau * tau * tau / 3.0;
        return {m, g};
    }
    static double table_lower_mass(const TabulatedData& t, double x) {
        if (x <= t.x.front()) return 0.0;
        if (x >= t.x.back()) return t.lower_mass.back();
        const auto k = cell_of(t, x);
        return t.lower_mass[k] + partial_cell(t, k, x).first;
    }
    static double table_upper_mass(const TabulatedData& t, double x) {
        if (x <= t.x.front()) return t.upper_mass.front();
        if (x >= t.x.back()) return 0.0;
        const auto k = cell_of(t, x);
        const double cell = t.upper_mass[k] - t.upper_mass[k + 1];
        return t.upper_mass[k + 1] + (cell - partial_cell(t, k, x).first);
    }
    static double table_lower_moment(const TabulatedData& t, double x) {
        if (x <= t.x.front()) return 0.0;
        if (x >= t.x.back()) return t.lower_moment.back();
        const auto k = cell_of(t, x);
        return t.lower_moment[k] + partial_cell(t, k, x).second;
    }
    static double table_upper_moment(const TabulatedData& t, double x) {
        if (x <= t.x.front()) return t.upper_moment.front();
        if (x >= t.x.back()) return 0.0;
        const auto k = cell_of(t, x);
        const double cell = t.upper_moment[k] - t.upper_moment[k + 1];
        return t.upper_moment[k + 1] + (cell - partial_cell(t, k, x).second);
    }
    // Inverts a nondecreasing cumulative functional given on the nodes.
    template <typename Fn>
    static double invert_table(const TabulatedData& t, const std::vector<double>& node_values,
                               double level, Fn&& fn) {
        auto it = std::lower_bound(node_values.begin(), node_values.end(), level);
        if (it == node_values.begin()) return t.x.front();
        if (it == node_values.end()) return t.x.back();
        const std::size_t k = static_cast<std::size_t>(it - node_values.begin());
        return find_root_bracketed([&](double x) { return fn(x) - level; }, t.x[k - 1], t.x[k],
                                   1e-15 * t.x[k]);
    }
    template <typename Fn>
    static double invert_table_decreasing(const TabulatedData& t, const std::vector<double>& node_values,
                                          double level, Fn&& fn) {
        // node_values nonincreasing; find the first node with value <= level
        const auto it = std::lower_bound(node_values.begin(), node_values.end(), level, std::greater<double>());
        const auto k = static_cast<std::size_t>(it - node_values.begin());
        if (k == 0) return t.x.front();
        if (k == node_values.size()) return t.x.back();
        return find_root_bracketed([&](double x) { return fn(x) - level; }, t.x[k - 1], t.x[k],
                                   1e-15 * t.x[k]);
    }
    static double table_quantile(const TabulatedData& t, double p) {
        return invert_table(t, t.lower_mass, p, [&](double x) { return table_lower_mass(t, x); });
    }
    static double table_quantile_upper(const TabulatedData& t, double s) {
        return invert_table_decreasing(t, t.upper_mass, s, [&](double x) { return table_upper_mass(t, x); });
    }
    static double table_inv_lower_moment(const TabulatedData& t, double g) {
        return invert_table(t, t.lower_moment, g, [&](double x) { return table_lower_moment(t, x); });
    }
    static double table_inv_upper_moment(const TabulatedData& t, double h) {
        return invert_table_decreasing(t, t.upper_moment, h, [&](double x) { return table_upper_moment(t, x); });
    }

    // A reflected table is S(mu) for the tabulated mu:
    //   F_S(y) = H(1/y), P_S[X > y] = G(1/y), G_S(y) = P[X > 1/y], H_S(y) = F(1/y).
    static double lower_mass(const TabulatedLaw& l, double x) {
        return l.reflected ? table_upper_moment(*l.data, 1.0 / x) : table_lower_mass(*l.data, x);
    }
    static double upper_mass(const TabulatedLaw& l, double x) {
        return l.reflected ? table_lower_moment(*l.data, 1.0 / x) : table_upper_mass(*l.data, x);
    }
    static double lower_moment(const TabulatedLaw& l, double x) {
        return l.reflected ? table_upper_mass(*l.data, 1.0 / x) : table_lower_moment(*l.data, x);
    }
    static double upper_moment(const TabulatedLaw& l, double x) {
        return l.reflected ? table_lower_mass(*l.data, 1.0 / x) : table_upper_moment(*l.data, x);
    }
    static double quantile_lower(const TabulatedLaw& l, double p) {
        return l.reflected ? 1.0 / table_inv_upper_moment(*l.data, p) : table_quantile(*l.data, p);
    }
    static double quantile_upper_impl(const TabulatedLaw& l, double s) {
        return l.reflected ? 1.0 / table_inv_lower_moment(*l.data, s) : table_quantile_upper(*l.data, s);
    }
    static double inv_lower_moment(const TabulatedLaw& l, double g) {
        return l.reflected ? 1.0 / table_quantile_upper(*l.data, g) : table_inv_lower_moment(*l.data, g);
    }
    static double inv_upper_moment(const TabulatedLaw& l, double h) {
        return l.reflected ? 1.0 / table_quantile(*l.data, h) : table_inv_upper_moment(*l.data, h);
    }

    Law law_;
    double mean_ = 1.0;
};

/// Kinks of the density (table nodes of a tabulated law); quadrature splits there.
inline std::vector<double> density_breakpoints(const Marginal& m) {
    const auto* tab = std::get_if<TabulatedLaw>(&m.law());
    if (!tab) return {};
    std::vector<double> out = tab->data->x;
    if (tab->reflected) {
        std::reverse(out.begin(), out.end());
        for (double& v : out) v = 1.0 / v;
    }
    return out;
}

/// Throws MeanMismatch unless the marginal has unit mean.
inline void require_unit_mean(const Marginal& m, const char* who) {
    if (std::abs(m.mean() - 1.0) > tol::unit_mean) {
        std::ostringstream os;
        os << who << ": marginal " << m.describe() << " has mean " << m.mean() << ", expected 1";
        throw MeanMismatch(os.str());
    }
}

// ---------------------------------------------------------------------------
// delta F / delta G
// ---------------------------------------------------------------------------

/// F_nu(x) - F_mu(x), evaluated through survival functions right of the median.
inline double delta_cdf(const Marginal& mu, const Marginal& nu, double x) {
    const double lower = mu.cdf(x);
    if (lower < 0.5) return nu.cdf(x) - lower;
    return mu.sf(x) - nu.sf(x);
}

/// G_nu(x) - G_mu(x); the upper form assumes equal means.
inline double delta_cumulated_expectation(const Marginal& mu, const Marginal& nu, double x) {
    const double lower = mu.cumulated_expectation(x);
    if (lower < 0.5 * mu.mean()) return nu.cumulated_expectation(x) - lower;
    return mu.upper_expectation(x) - nu.upper_expectation(x);
}

/// Quantile-range box [lo, hi] covering both mu and its reflection, so that the
/// box of S(mu) is exactly [1/hi, 1/lo].
inline std::pair<double, double> truncation_box(const Marginal& m, double eps = tol::tail_quantile) {
    double lo = m.quantile(eps);
    double hi = m.quantile_upper(eps);
    if (std::abs(m.mean() - 1.0) <= tol::unit_mean && eps < m.mean()) {
        lo = std::min(lo, m.inverse_cumulated_expectation(eps));
        hi = std::max(hi, m.inverse_upper_expectation(eps));
    }
    return {lo, hi};
}

/// Log-spaced scan grid between the eps and 1-eps quantiles of both laws.
inline std::vector<double> scan_grid(const Marginal& mu, const Marginal& nu,
                                     std::size_t n = tol::scan_points, double eps = tol::tail_quantile) {
    const double lo = std::min(mu.quantile(eps), nu.quantile(eps));
    const double hi = std::max(mu.quantile_upper(eps), nu.quantile_upper(eps));
    if (!(hi > lo)) return {lo};
    return log_grid(lo, hi, n);
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

struct ConvexOrderReport {
    bool ok = false;
    double worst_violation = 0.0;  // max over strikes of C_mu(K) - C_nu(K)
    double location = 0.0;         // strike attaining it
};

/// Call-price dominance C_mu(K) <= C_nu(K) on a log-spaced strike grid (plus all
/// atoms, where the call-price difference has its kinks).
inline ConvexOrderReport check_convex_order(const Marginal& mu, const Marginal& nu,
                                            std::size_t n_grid = 1000) {
    if (std::abs(mu.mean() - nu.mean()) > tol::mean) {
        std::ostringstream os;
        os << "check_convex_order: means differ (" << mu.mean() << " vs " << nu.mean() << ")";
        throw MeanMismatch(os.str());
    }
    std::vector<double> strikes = scan_grid(mu, nu, std::max<std::size_t>(n_grid, 2));
    for (const Marginal* m : {&mu, &nu}) {
        if (auto at = std::get_if<AtomLaw>(&m->law())) {
            strikes.insert(strikes.end(), at->points.begin(), at->points.end());
        }
    }
    ConvexOrderReport report;
    report.worst_violation = -std::numeric_limits<double>::infinity();
    for (double k : strikes) {
        const double v = mu.call_price(k) - nu.call_price(k);
        if (v > report.worst_violation) {
            report.worst_violation = v;
            report.location = k;
        }
    }
    report.ok = report.worst_violation <= tol::convex_order;
    return report;
}

struct DispersionReport {
    bool ok = false;
    int sign_changes = 0;
    double a = 0.0;  // p_mu - p_nu turns positive here
    double b = 0.0;  // and negative again here
};

namespace detail {

struct SignChange {
    double location;
    int to_sign;
};

// Sign changes of f on the grid, each refined to a root. A run of exact zeros
// between opposite signs resolves to the midpoint of the run.
template <typename Fn>
std::vector<SignChange> sign_changes(Fn&& f, const std::vector<double>& grid) {
    std::vector<SignChange> out;
    int last_sign = 0;
    std::size_t last_idx = 0;
    std::size_t zero_run_start = 0;
    bool in_zero_run = false;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double v = f(grid[i]);
        const int s = (v > 0.0) - (v < 0.0);
        if (s == 0) {
            if (!in_zero_run) {
                in_zero_run = true;
                zero_run_start = i;
            }
            continue;
        }
        if (last_sign != 0 && s != last_sign) {
            double loc;
            if (in_zero_run && zero_run_start > last_idx + 1) {
                loc = 0.5 * (grid[zero_run_start] + grid[i - 1]);
            } else if (in_zero_run) {
                loc = grid[zero_run_start];
            } else {
                loc = find_root_bracketed(f, grid[last_idx], grid[i], 1e-15 * grid[i]);
            }
            out.push_back({loc, s});
        }
        last_sign = s;
        last_idx = i;
        in_zero_run = false;
    }
    return out;
}

}  // namespace detail

/// p_mu - p_nu must be negative, then positive on (a, b), then negative again.
inline DispersionReport check_dispersion(const Marginal& mu, const Marginal& nu) {
    if (!mu.has_density() || !nu.has_density()) {
        throw NoDensity("check_dispersion: both marginals need densities");
    }
    const auto grid = scan_grid(mu, nu);
    auto diff = [&](double x) { return mu.pdf(x) - nu.pdf(x); };
    const auto changes = detail::sign_changes(diff, grid);
    DispersionReport report;
    report.sign_changes = static_cast<int>(changes.size());
    if (changes.size() == 2 && changes[0].to_sign > 0 && changes[1].to_sign < 0) {
        report.ok = true;
        report.a = changes[0].location;
        report.b = changes[1].location;
    } else if (!changes.empty()) {
        report.a = changes.front().location;
        report.b = changes.back().location;
    }
    return report;
}

struct DeltaProfile {
    Marginal mu, nu;
    double m = 0.0;        // argmax of delta F
    double m_tilde = 0.0;  // argmin of delta F
    std::vector<double> x, delta_F, delta_G;
};

/// Extremizers of delta F = F_nu - F_mu and a sampled profile of delta F, delta G.
inline DeltaProfile delta_profile(const Marginal& mu, const Marginal& nu) {
    if (!mu.has_density() || !nu.has_density()) {
        throw AssumptionViolated("delta_profile: marginals need densities");
    }
    const auto order = check_convex_order(mu, nu);
    if (!order.ok) {
        std::ostringstream os;
        os << "delta_profile: convex order fails (call-price excess " << order.worst_violation
           << " at K = " << order.location << ")";
        throw AssumptionViolated(os.str());
    }
    const auto disp = check_dispersion(mu, nu);
    if (!disp.ok) {
        std::ostringstream os;
        os << "delta_profile: delta F needs a single local maximizer; density difference has "
           << disp.sign_changes << " sign changes";
        throw AssumptionViolated(os.str());
    }
    DeltaProfile prof{mu, nu, disp.a, disp.b, {}, {}, {}};
    prof.x = scan_grid(mu, nu);
    prof.delta_F.reserve(prof.x.size());
    prof.delta_G.reserve(prof.x.size());
    for (double x : prof.x) {
        prof.delta_F.push_back(delta_cdf(mu, nu, x));
        prof.delta_G.push_back(delta_cumulated_expectation(mu, nu, x));
    }
    return prof;
}

/// Closed-form argmax / argmin of F_nu - F_mu for two unit-mean log-normals.
inline std::pair<double, double> lognormal_extremizer_closed_form(double sigma_mu, double sigma_nu) {
    if (!(sigma_mu > 0.0) || !(sigma_nu > sigma_mu)) {
        throw DomainError("lognormal_extremizer_closed_form: need 0 < sigma_mu < sigma_nu");
    }
    const double vm = sigma_mu * sigma_mu, vn = sigma_nu * sigma_nu;
    const double log_sq = 2.0 * vm * vn / (vn - vm) * std::log(sigma_nu / sigma_mu) + 0.25 * vm * vn;
    const double m = std::exp(-std::sqrt(log_sq));
    return {m, 1.0 / m};
}

namespace detail {

// "2/3" or "0.25"
inline double parse_number(const std::string& text, const std::string& context) {
    const auto slash = text.find('/');
    try {
        std::size_t used = 0;
        if (slash == std::string::npos) {
            const double v = std::stod(text, &used);
            if (used != text.size()) throw std::invalid_argument(text);
            return v;
        }
        const std::string num = text.substr(0, slash), den = text.substr(slash + 1);
        std::size_t u1 = 0, u2 = 0;
        const double a = std::stod(num, &u1), b = std::stod(den, &u2);
        if (u1 != num.size() || u2 != den.size() || b == 0.0) throw std::invalid_argument(text);
        return a / b;
    } catch (const std::logic_error&) {
        throw ConfigError(context + ": cannot read number '" + text + "'");
    }
}

}  // namespace detail

/// Marginal from a spec string: lognormal:sigma=0.2, atoms:0.5=2/3,2=1/3, table:<path>.
/// Atom weights within 1e-3 of unit total are renormalized (rounded decimal input).
inline Marginal parse_marginal(const std::string& spec) {
    const auto colon = spec.find(':');
    if (colon == std::string::npos) throw ConfigError("marginal spec '" + spec + "' lacks a ':'");
    const std::string kind = spec.substr(0, colon), body = spec.substr(colon + 1);
    if (kind == "lognormal") {
        if (body.rfind("sigma=", 0) != 0) throw ConfigError("lognormal spec needs sigma=<value>");
        return Marginal::lognormal(detail::parse_number(body.substr(6), spec));
    }
    if (kind == "atoms") {
        std::vector<std::pair<double, double>> atoms;
        std::istringstream is(body);
        std::string item;
        double total = 0.0;
        while (std::getline(is, item, ',')) {
            const auto eq = item.find('=');
            if (eq == std::string::npos) throw ConfigError("atom '" + item + "' must read point=weight");
            atoms.emplace_back(detail::parse_number(item.substr(0, eq), spec),
                               detail::parse_number(item.substr(eq + 1), spec));
            total += atoms.back().second;
        }
        if (atoms.empty()) throw ConfigError("atoms spec is empty");
        if (std::abs(total - 1.0) > 1e-3) throw ConfigError("atom weights of '" + spec + "' do not sum to 1");
        for (auto& a : atoms) a.second /= total;
        return Marginal::atoms(std::move(atoms));
    }
    if (kind == "table") return Marginal::tabulated_from_file(body);
    throw ConfigError("unknown marginal kind '" + kind + "'");
}

}  // namespace mot
