// mot_cli: profile / build / price / bounds / verify front end.
//
// Exit codes: 0 ok, 2 assumption violated or infeasible, 3 numerics failure
// (including a failed verify check), 4 bad configuration.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mot/couplings.hpp"
#include "mot/fixtures.hpp"
#include "mot/lp_oracle.hpp"
#include "mot/numeraire.hpp"
#include "mot/pricing.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace mot;

namespace {

enum Exit { ok = 0, assumption = 2, numerics = 3, config = 4 };

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct RunConfig {
    std::string mu = "lognormal:sigma=0.2";
    std::string nu = "lognormal:sigma=0.3";
    std::string payoff = "straddle2:alpha=1";
    std::string plan = "hk";
    std::string right_method = "reflection";
    std::string suite = "all";
    std::string instance;  // bounds: read this file instead of quantizing
    std::string out = ".";
    std::size_t grid = tol::default_grid;
    std::size_t atoms = 100;
    std::size_t validate_points = 128;
    double quad_tol = tol::quadrature;
    bool json = false;
    bool hedge = false;
    bool reciprocal = false;
    bool corrupt = false;
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config: '" + key + "' expects a boolean, got '" + v + "'");
}

std::size_t parse_count(const std::string& v, const std::string& key) {
    const double d = detail::parse_number(v, "config key " + key);
    if (!(d >= 1.0) || d != std::floor(d)) throw ConfigError("config: '" + key + "' must be a positive integer");
    return static_cast<std::size_t>(d);
}

// key = value lines under [mu] [nu] [payoff] [run]; '#' and ';' start comments
void load_config(const std::string& path, RunConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find_first_of("#;");
        line = trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("config line " + std::to_string(lineno) + ": bad section");
            section = trim(line.substr(1, line.size() - 2));
            if (section != "mu" && section != "nu" && section != "payoff" && section != "run") {
                throw ConfigError("config: unknown section [" + section + "]");
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        const std::string where = section + "." + key;
        if (section == "mu" || section == "nu") {
            std::string& target = section == "mu" ? cfg.mu : cfg.nu;
            if (key == "spec") {
                target = value;
            } else if (key == "sigma") {
                target = "lognormal:sigma=" + value;
            } else if (key == "table") {
                target = "table:" + value;
            } else {
                throw ConfigError("config: unknown key " + where);
            }
        } else if (section == "payoff") {
            if (key != "spec") throw ConfigError("config: unknown key " + where);
            cfg.payoff = value;
        } else if (section == "run") {
            if (key == "plan") cfg.plan = value;
            else if (key == "right_method") cfg.right_method = value;
            else if (key == "suite") cfg.suite = value;
            else if (key == "instance") cfg.instance = value;
            else if (key == "out") cfg.out = value;
            else if (key == "grid") cfg.grid = parse_count(value, where);
            else if (key == "atoms") cfg.atoms = parse_count(value, where);
            else if (key == "validate_points") cfg.validate_points = parse_count(value, where);
            else if (key == "quad_tol") cfg.quad_tol = detail::parse_number(value, where);
            else if (key == "json") cfg.json = parse_bool(value, where);
            else if (key == "hedge") cfg.hedge = parse_bool(value, where);
            else if (key == "reciprocal") cfg.reciprocal = parse_bool(value, where);
            else throw ConfigError("config: unknown key " + where);
        } else {
            throw ConfigError("config line " + std::to_string(lineno) + ": key outside a section");
        }
    }
}

void check_config(const RunConfig& cfg) {
    if (cfg.plan != "hk" && cfg.plan != "left" && cfg.plan != "right") {
        throw ConfigError("plan must be hk, left or right, got '" + cfg.plan + "'");
    }
    if (cfg.right_method != "reflection" && cfg.right_method != "direct") {
        throw ConfigError("right_method must be reflection or direct");
    }
    if (cfg.suite != "symmetry" && cfg.suite != "coupling" && cfg.suite != "oracle" && cfg.suite != "all") {
        throw ConfigError("suite must be symmetry, coupling, oracle or all");
    }
    if (!(cfg.quad_tol > 0.0)) throw ConfigError("quad_tol must be positive");
    if (cfg.grid < 8) throw ConfigError("grid must be at least 8");
    if (cfg.atoms < 2) throw ConfigError("atoms must be at least 2");
}

// spec strings are parsed up front so a typo is a config error, not a crash later
struct Resolved {
    Marginal mu, nu;
    Payoff payoff;
};

Resolved resolve(const RunConfig& cfg) {
    try {
        return {parse_marginal(cfg.mu), parse_marginal(cfg.nu), parse_payoff(cfg.payoff)};
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
}

// ---------------------------------------------------------------------------
// Output helpers
// ---------------------------------------------------------------------------

fs::path out_file(const RunConfig& cfg, const std::string& name) {
    fs::create_directories(cfg.out);
    return fs::path(cfg.out) / name;
}

class CsvWriter {
public:
    CsvWriter(const fs::path& path, const std::vector<std::string>& header) : f_(std::fopen(path.c_str(), "wb")) {
        if (!f_) throw ConfigError("cannot write '" + path.string() + "'");
        for (std::size_t i = 0; i < header.size(); ++i) std::fprintf(f_, "%s%s", i ? "," : "", header[i].c_str());
        std::fputc('\n', f_);
    }
    ~CsvWriter() { std::fclose(f_); }
    CsvWriter(const CsvWriter&) = delete;
    CsvWriter& operator=(const CsvWriter&) = delete;

    void row(std::initializer_list<double> v) {
        bool first = true;
        for (double d : v) {
            std::fprintf(f_, first ? "%.12g" : ",%.12g", d);
            first = false;
        }
        std::fputc('\n', f_);
    }

private:
    std::FILE* f_;
};

void write_json(const fs::path& path, const json& j) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot write '" + path.string() + "'");
    os << j.dump(2) << '\n';
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Plans
// ---------------------------------------------------------------------------

Kernel build_plan(const RunConfig& cfg, const Marginal& mu, const Marginal& nu) {
    if (cfg.plan == "hk") return build_hk(mu, nu, cfg.grid);
    if (cfg.plan == "left") return build_left_monotone(mu, nu, cfg.grid);
    const auto method = cfg.right_method == "direct" ? RightMethod::direct : RightMethod::reflection;
    return build_right_monotone(mu, nu, cfg.grid, method);
}

CouplingReport require_valid(const Kernel& k, const Marginal& mu, const Marginal& nu, const RunConfig& cfg) {
    const auto rep = validate_coupling(k, mu, nu, cfg.validate_points);
    if (!rep.ok()) {
        std::ostringstream os;
        os << kernel_name(k) << " fails validation: marginal_err " << rep.marginal_err << ", martingale_err "
           << rep.martingale_err << ", mass_err " << rep.mass_err;
        throw NumericsFailure(os.str());
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_profile(const RunConfig& cfg) {
    const auto r = resolve(cfg);
    const auto p = delta_profile(r.mu, r.nu);
    {
        CsvWriter csv(out_file(cfg, "deltaF.csv"), {"x", "deltaF", "deltaG"});
        for (std::size_t i = 0; i < p.x.size(); ++i) csv.row({p.x[i], p.delta_F[i], p.delta_G[i]});
    }
    json j{{"mu", r.mu.describe()}, {"nu", r.nu.describe()}, {"m", p.m}, {"m_tilde", p.m_tilde},
           {"m_times_m_tilde", p.m * p.m_tilde}, {"closed_form", nullptr}};
    // a table has compact support, which stands in for the positive half-line
    j["approximate_support"] = {{"mu", r.mu.kind() == MarginalKind::tabulated},
                                {"nu", r.nu.kind() == MarginalKind::tabulated}};
    const auto* a = std::get_if<LogNormalLaw>(&r.mu.law());
    const auto* b = std::get_if<LogNormalLaw>(&r.nu.law());
    if (a && b) {
        const auto [m, mt] = lognormal_extremizer_closed_form(a->sigma, b->sigma);
        j["closed_form"] = {{"m", m}, {"m_tilde", mt}};
    }
    write_json(out_file(cfg, "extremizers.json"), j);
    if (cfg.json) {
        std::cout << j.dump(2) << '\n';
    } else {
        std::cout << "m        " << num(p.m) << "\nm_tilde  " << num(p.m_tilde) << '\n';
    }
    return ok;
}

int cmd_build(const RunConfig& cfg) {
    const auto r = resolve(cfg);
    const Kernel k = build_plan(cfg, r.mu, r.nu);
    const auto rep = require_valid(k, r.mu, r.nu, cfg);
    std::string file;
    if (const auto* h = std::get_if<ThreeBandKernel>(&k)) {
        file = "hk.csv";
        CsvWriter csv(out_file(cfg, file), {"x", "p", "q", "l", "u"});
        for (std::size_t i = 0; i < h->x.size(); ++i) csv.row({h->x[i], h->p[i], h->q[i], h->l[i], h->u[i]});
    } else {
        const auto& t = std::get<TwoBandKernel>(k);
        const bool left = t.direction == Direction::left;
        file = left ? "left.csv" : "right.csv";
        // identity rows on the unsplit side, then the solved nodes; sorted by x
        const auto [lo, hi] = truncation_box(r.mu);
        const std::size_t n_id = std::max<std::size_t>(cfg.grid / 8, 8);
        std::vector<std::array<double, 4>> rows;
        const auto id = left ? log_grid(lo, t.x_star, n_id + 1) : log_grid(t.x_star, hi, n_id + 1);
        for (std::size_t i = 0; i < n_id; ++i) {
            const double x = left ? id[i] : id[i + 1];
            rows.push_back({x, x, x, 0.0});
        }
        for (std::size_t i = 0; i < t.x.size(); ++i) rows.push_back({t.x[i], t.t_d[i], t.t_u[i], t.prob[i]});
        std::sort(rows.begin(), rows.end());
        CsvWriter csv(out_file(cfg, file),
                      left ? std::vector<std::string>{"x", "Ld", "Lu", "qL"} : std::vector<std::string>{"x", "Rd", "Ru", "qR"});
        for (const auto& row : rows) csv.row({row[0], row[1], row[2], row[3]});
    }
    json j{{"plan", kernel_name(k)}, {"file", file},           {"marginal_err", rep.marginal_err},
           {"martingale_err", rep.martingale_err},          {"mass_err", rep.mass_err}};
    if (cfg.json) {
        std::cout << j.dump(2) << '\n';
    } else {
        std::cout << kernel_name(k) << " -> " << (fs::path(cfg.out) / file).string() << "\nmarginal_err   "
                  << num(rep.marginal_err) << "\nmartingale_err " << num(rep.martingale_err) << '\n';
    }
    return ok;
}

int cmd_price(const RunConfig& cfg) {
    const auto r = resolve(cfg);
    const Kernel k = build_plan(cfg, r.mu, r.nu);
    const auto rep = require_valid(k, r.mu, r.nu, cfg);
    const auto pr = price(k, r.payoff, cfg.quad_tol);
    json j{{"plan", kernel_name(k)},      {"payoff", r.payoff.name},         {"mu", r.mu.describe()},
           {"nu", r.nu.describe()},      {"value", pr.value},               {"quad_error", pr.quad_error},
           {"tail_bound", pr.tail_bound}, {"marginal_err", rep.marginal_err}, {"martingale_err", rep.martingale_err}};
    if (cfg.json) {
        std::cout << j.dump(2) << '\n';
    } else {
        std::cout << "value      " << num(pr.value) << "\nquad_error " << num(pr.quad_error) << "\ntail_bound "
                  << num(pr.tail_bound) << '\n';
    }
    return ok;
}

void write_hedge(const RunConfig& cfg, const DiscreteMOTInstance& inst, const HedgeTriple& hd, BoundDirection dir) {
    const std::string tag = to_string(dir);
    {
        CsvWriter csv(out_file(cfg, "hedge_" + tag + "_x.csv"), {"x", "phi", "h"});
        for (std::size_t i = 0; i < inst.n(); ++i) csv.row({inst.x_atoms[i], hd.phi[i], hd.h[i]});
    }
    CsvWriter csv(out_file(cfg, "hedge_" + tag + "_y.csv"), {"y", "psi"});
    for (std::size_t j = 0; j < inst.m(); ++j) csv.row({inst.y_atoms[j], hd.psi[j]});
}

int cmd_bounds(const RunConfig& cfg) {
    DiscreteMOTInstance inst;
    if (!cfg.instance.empty()) {
        std::ifstream in(cfg.instance);
        if (!in) throw ConfigError("cannot open instance '" + cfg.instance + "'");
        inst = read_instance(in, parse_payoff);
    } else {
        const auto r = resolve(cfg);
        InstanceOptions opt;
        opt.reciprocal_cells = cfg.reciprocal;
        inst = make_instance(r.mu, r.nu, r.payoff, cfg.atoms, opt);
    }
    json j{{"payoff", inst.cost_spec}, {"n", inst.n()}, {"m", inst.m()}};
    bool certified = true;
    double lo = 0.0, hi = 0.0;
    for (auto dir : {BoundDirection::min, BoundDirection::max}) {
        const auto res = solve_bounds(inst, dir);
        const auto hc = check_hedge(inst, res.hedge, dir);
        certified = certified && res.duality_gap <= tol::duality_gap && hc.max_violation <= tol::hedge_violation;
        (dir == BoundDirection::min ? lo : hi) = res.value;
        j[to_string(dir)] = {{"value", res.value},       {"dual_value", res.dual_value},
                             {"duality_gap", res.duality_gap}, {"hedge_violation", hc.max_violation},
                             {"degenerate", res.degenerate},   {"iterations", res.iterations}};
        if (cfg.hedge) write_hedge(cfg, inst, res.hedge, dir);
    }
    j["model_risk"] = hi - lo;
    j["certified"] = certified;
    if (cfg.json) {
        std::cout << j.dump(2) << '\n';
    } else {
        std::cout << "min        " << num(lo) << "  gap " << num(j["min"]["duality_gap"].get<double>()) << "\nmax        "
                  << num(hi) << "  gap " << num(j["max"]["duality_gap"].get<double>()) << "\nmodel_risk "
                  << num(hi - lo) << '\n';
    }
    if (!certified) throw NumericsFailure("bounds: duality gap or hedge violation above tolerance");
    return ok;
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

struct Check {
    std::string name;
    double value = 0.0, tol = 0.0;
    bool pass = false;
    std::string error;
};

class Suite {
public:
    // runs f, which returns the measured error; an exception is a failure
    void check(const std::string& name, double tol, const std::function<double()>& f) {
        Check c{name, 0.0, tol, false, {}};
        try {
            c.value = f();
            c.pass = std::isfinite(c.value) && c.value <= tol;
        } catch (const std::exception& e) {
            c.error = e.what();
        }
        checks_.push_back(std::move(c));
    }

    const std::vector<Check>& checks() const { return checks_; }

private:
    std::vector<Check> checks_;
};

double sup_on_grid(const std::function<double(double)>& f, double lo = 0.05, double hi = 20.0, std::size_t n = 997) {
    double worst = 0.0;
    for (double x : log_grid(lo, hi, n)) worst = std::max(worst, std::abs(f(x)));
    return worst;
}

void suite_symmetry(Suite& s, const Resolved& r, const RunConfig& cfg) {
    const std::vector<std::pair<std::string, Marginal>> laws{
        {"mu", r.mu}, {"nu", r.nu}, {"two-atom", Marginal::atoms({{0.5, 2.0 / 3.0}, {2.0, 1.0 / 3.0}})}};
    for (const auto& [tag, m] : laws) {
        s.check("symmetry." + tag + ".involution", 1e-9, [&, m = m] {
            const auto back = symmetrize_marginal(symmetrize_marginal(m));
            return sup_on_grid([&](double x) { return back.cdf(x) - m.cdf(x); });
        });
        s.check("symmetry." + tag + ".cdf_identity", 1e-9, [&, m = m] {
            const auto sm = symmetrize_marginal(m);
            return sup_on_grid([&](double x) { return sm.cdf(x) - (1.0 - m.cumulated_expectation(1.0 / x)); });
        });
    }
    for (double sigma : {0.1, 0.2, 0.5}) {
        s.check("symmetry.lognormal_fixed_point.sigma=" + num(sigma), 1e-9, [sigma] {
            const auto m = Marginal::lognormal(sigma);
            const auto sm = symmetrize_marginal(m);
            return sup_on_grid([&](double x) { return sm.cdf(x) - m.cdf(x); });
        });
    }
    const auto smu = symmetrize_marginal(r.mu), snu = symmetrize_marginal(r.nu);
    s.check("symmetry.hk_reflection", 1e-6, [&] {
        const auto direct = build_hk(r.mu, r.nu, cfg.grid);
        const auto refl = std::get<ThreeBandKernel>(symmetrize_coupling(build_hk(smu, snu, cfg.grid), smu));
        double err = std::max(std::abs(refl.a - direct.a), std::abs(refl.b - direct.b));
        for (std::size_t i = 0; i < direct.x.size(); ++i) {
            const double x = direct.x[i];
            err = std::max({err, std::abs(refl.p_table(x) - direct.p[i]), std::abs(1.0 / refl.z_table(x) - direct.q[i])});
        }
        return err;
    });
    s.check("symmetry.right_reflection_vs_direct", tol::method_agreement, [&] {
        const auto a = build_right_monotone(r.mu, r.nu, cfg.grid, RightMethod::reflection);
        const auto b = build_right_monotone(r.mu, r.nu, cfg.grid, RightMethod::direct);
        return std::max(two_band_distance(a, b), two_band_distance(b, a));
    });
    s.check("symmetry.right_x_star", 1e-6, [&] {
        const auto right = build_right_monotone(r.mu, r.nu, cfg.grid, RightMethod::direct);
        return std::abs(right.x_star - 1.0 / build_left_monotone(smu, snu, 16).x_star);
    });
    s.check("symmetry.straddle_exchange", 1e-6, [&] {
        const double a = price(build_hk(r.mu, r.nu, cfg.grid), straddle_type_I(1.0)).value;
        const double b = price(build_hk(smu, snu, cfg.grid), straddle_type_II(1.0)).value;
        return std::abs(a - b);
    });
}

void suite_coupling(Suite& s, const Resolved& r, const RunConfig& cfg) {
    std::vector<std::pair<std::string, Kernel>> plans;
    auto hk = build_hk(r.mu, r.nu, cfg.grid);
    if (cfg.corrupt) {
        for (double& q : hk.q) q *= 1.01;
    }
    plans.emplace_back("hk", std::move(hk));
    plans.emplace_back("left", build_left_monotone(r.mu, r.nu, cfg.grid));
    plans.emplace_back("right", build_right_monotone(r.mu, r.nu, cfg.grid));
    for (const auto& [tag, k] : plans) {
        const auto rep = validate_coupling(k, r.mu, r.nu, cfg.validate_points);
        s.check("coupling." + tag + ".marginal", tol::marginal_cdf, [&] { return rep.marginal_err; });
        s.check("coupling." + tag + ".martingale", tol::martingale, [&] { return rep.martingale_err; });
        s.check("coupling." + tag + ".mass", tol::kernel_mass, [&] { return rep.mass_err; });
    }
}

void suite_oracle(Suite& s, const RunConfig& cfg) {
    for (auto fx : fixtures::all()) {
        if (cfg.corrupt && fx.name == "2x2") fx.inst.cost[0][0] += 0.25;
        for (auto dir : {BoundDirection::min, BoundDirection::max}) {
            const std::string tag = "oracle." + fx.name + "." + to_string(dir);
            const double exact = dir == BoundDirection::min ? fx.min_value : fx.max_value;
            std::optional<BoundResult> res;
            s.check(tag + ".value", 1e-9, [&] {
                res = solve_bounds(fx.inst, dir);
                return std::abs(res->value - exact);
            });
            if (!res) continue;
            s.check(tag + ".duality_gap", tol::duality_gap, [&] { return res->duality_gap; });
            s.check(tag + ".hedge", tol::hedge_violation,
                    [&] { return check_hedge(fx.inst, res->hedge, dir).max_violation; });
            s.check(tag + ".numeraire_invariance", 1e-9,
                    [&] { return std::abs(solve_bounds(symmetrize_instance(fx.inst), dir).value - res->value); });
        }
    }
}

int cmd_verify(const RunConfig& cfg) {
    Suite s;
    const bool all = cfg.suite == "all";
    if (all || cfg.suite == "symmetry" || cfg.suite == "coupling") {
        const auto r = resolve(cfg);
        if (all || cfg.suite == "symmetry") suite_symmetry(s, r, cfg);
        if (all || cfg.suite == "coupling") suite_coupling(s, r, cfg);
    }
    if (all || cfg.suite == "oracle") suite_oracle(s, cfg);

    bool passed = true;
    json checks = json::array();
    for (const auto& c : s.checks()) {
        passed = passed && c.pass;
        json jc{{"name", c.name}, {"value", c.value}, {"tol", c.tol}, {"pass", c.pass}};
        if (!c.error.empty()) jc["error"] = c.error;
        checks.push_back(std::move(jc));
    }
    json j{{"suite", cfg.suite}, {"passed", passed}, {"checks", checks}};
    if (cfg.json) {
        std::cout << j.dump(2) << '\n';
    } else {
        for (const auto& c : s.checks()) {
            std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << "  " << num(c.value) << " <= " << num(c.tol);
            if (!c.error.empty()) std::cout << "  (" << c.error << ")";
            std::cout << '\n';
        }
        std::cout << (passed ? "all checks passed" : "some checks FAILED") << '\n';
    }
    return passed ? ok : numerics;
}

int exit_code_for(const Error& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return config;
    if (dynamic_cast<const AssumptionViolated*>(&e) || dynamic_cast<const NoDensity*>(&e) ||
        dynamic_cast<const MeanMismatch*>(&e) || dynamic_cast<const Infeasible*>(&e) ||
        dynamic_cast<const DomainError*>(&e)) {
        return assumption;
    }
    return numerics;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Martingale optimal transport: explicit plans, numeraire symmetry and LP bounds"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::string> mu, nu, payoff, plan, out, instance;
    std::optional<std::size_t> atoms, grid;
    bool json_out = false, hedge = false, reciprocal = false, corrupt = false;
    app.add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
    app.add_option("--mu", mu, "first marginal spec");
    app.add_option("--nu", nu, "second marginal spec");
    app.add_option("--payoff", payoff, "payoff spec");
    app.add_option("--plan", plan, "hk, left or right");
    app.add_option("--atoms", atoms, "atoms per marginal for the LP");
    app.add_option("--grid", grid, "nodes of the plan tables");
    app.add_option("--out", out, "output directory");
    app.add_option("--instance", instance, "bounds: instance file instead of quantizing");
    app.add_flag("--json", json_out, "machine-readable output on stdout");
    app.add_flag("--hedge", hedge, "bounds: dump the dual hedges");
    app.add_flag("--reciprocal", reciprocal, "bounds: reciprocal-symmetric quantization");
    app.add_flag("--corrupt", corrupt, "verify: corrupt the fixtures (negative control)");

    auto* profile = app.add_subcommand("profile", "difference profiles and extremizers");
    auto* build = app.add_subcommand("build", "construct and export a plan");
    auto* price_cmd = app.add_subcommand("price", "price a payoff under a plan");
    auto* bounds = app.add_subcommand("bounds", "LP lower and upper bounds");
    auto* verify = app.add_subcommand("verify", "run a verification suite");
    std::optional<std::string> suite;
    verify->add_option("suite", suite, "symmetry, coupling, oracle or all");
    for (auto* sub : {profile, build, price_cmd, bounds, verify}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? ok : config;
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) load_config(config_path, cfg);
        if (mu) cfg.mu = *mu;
        if (nu) cfg.nu = *nu;
        if (payoff) cfg.payoff = *payoff;
        if (plan) cfg.plan = *plan;
        if (out) cfg.out = *out;
        if (instance) cfg.instance = *instance;
        if (atoms) cfg.atoms = *atoms;
        if (grid) cfg.grid = *grid;
        if (suite) cfg.suite = *suite;
        cfg.json = cfg.json || json_out;
        cfg.hedge = cfg.hedge || hedge;
        cfg.reciprocal = cfg.reciprocal || reciprocal;
        cfg.corrupt = corrupt;
        check_config(cfg);

        if (profile->parsed()) return cmd_profile(cfg);
        if (build->parsed()) return cmd_build(cfg);
        if (price_cmd->parsed()) return cmd_price(cfg);
        if (bounds->parsed()) return cmd_bounds(cfg);
        return cmd_verify(cfg);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e);
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return config;
    }
}
