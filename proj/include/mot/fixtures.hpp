#pragma once
// Tiny discrete instances whose optimal values are known exactly (by vertex
// enumeration of the feasible polytope). Used by the verify command and tests.

#include <string>
#include <vector>

#include "mot/lp_oracle.hpp"
#include "mot/payoff.hpp"

namespace mot {

/// Discrete instance with the cost matrix filled from a payoff.
inline DiscreteMOTInstance tabulate_instance(std::vector<double> xa, std::vector<double> xw, std::vector<double> ya,
                                             std::vector<double> yw, const Payoff& c) {
    DiscreteMOTInstance inst{std::move(xa), std::move(xw), std::move(ya), std::move(yw), {}, c.name};
    inst.cost.assign(inst.n(), std::vector<double>(inst.m()));
    for (std::size_t i = 0; i < inst.n(); ++i) {
        for (std::size_t j = 0; j < inst.m(); ++j) inst.cost[i][j] = c(inst.x_atoms[i], inst.y_atoms[j]);
    }
    return inst;
}

struct ExactFixture {
    std::string name;
    DiscreteMOTInstance inst;
    double min_value, max_value;
};

namespace fixtures {

// a single X atom: the plan is forced
inline ExactFixture point_mass() {
    return {"point-mass", tabulate_instance({1.0}, {1.0}, {0.5, 1.5}, {0.5, 0.5}, straddle_type_II(1.0)), 0.5, 0.5};
}

// two X atoms, two Y atoms: the martingale constraints pin the plan
inline ExactFixture two_by_two() {
    return {"2x2", tabulate_instance({0.5, 1.5}, {0.5, 0.5}, {0.25, 1.75}, {0.5, 0.5}, straddle_type_II(1.0)),
            5.0 / 12.0, 5.0 / 12.0};
}

// one free direction, so min and max differ
inline ExactFixture two_by_three() {
    return {"2x3", tabulate_instance({0.9, 1.1}, {0.5, 0.5}, {0.5, 1.0, 1.5}, {0.25, 0.5, 0.25}, straddle_type_I(1.0)),
            134.0 / 495.0, 146.0 / 495.0};
}

inline std::vector<ExactFixture> all() { return {point_mass(), two_by_two(), two_by_three()}; }

}  // namespace fixtures

}  // namespace mot
