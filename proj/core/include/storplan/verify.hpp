#pragma once

// Solver-independent checks on a solved model: constraint and bound
// residuals, cost reconstruction straight from scenario data, and a forward
// recursion for battery capacity fade.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "storplan/builder.hpp"
#include "storplan/domain.hpp"
#include "storplan/milp.hpp"
#include "storplan/solver.hpp"

namespace storplan::verify {

struct Violation {
    std::string tag;       // constraint tag or variable name
    double amount = 0.0;   // absolute violation
    double allowed = 0.0;  // tol * (1 + |rhs|)
};

struct ResidualReport {
    double tolerance = 1e-6;
    double max_constraint_violation = 0.0;
    double max_bound_violation = 0.0;
    double max_integrality_deviation = 0.0;
    std::vector<Violation> violated_constraints;
    std::vector<Violation> violated_bounds;
    std::vector<Violation> integrality_failures;

    bool ok() const {
        return violated_constraints.empty() && violated_bounds.empty() &&
               integrality_failures.empty();
    }
    std::string to_text() const;
    std::string to_json() const;
};

/// Values in model column order. Throws VerificationError naming the first
/// variable without a value.
std::vector<double> dense_values(const milp::MilpModel &model,
                                 const solver::Solution &solution);

/// Every row and bound is checked against tol * (1 + |rhs|); integer and
/// binary columns against tol.
ResidualReport check_residuals(const milp::MilpModel &model,
                               const solver::Solution &solution, double tol = 1e-6);

struct CostBreakdown {
    double thermal = 0.0;
    double pv = 0.0;
    double wind = 0.0;
    double battery = 0.0;
    double load_curtailment = 0.0;
    double grid = 0.0;

    double total() const { return thermal + pv + wind + battery + load_curtailment + grid; }
    std::map<std::string, double> by_component() const;
};

/// Re-derives every cost component from solution values and scenario
/// parameters without consulting the built model.
CostBreakdown recompute_costs(const Scenario &scenario, const solver::Solution &solution,
                              const VariantOptions &options);

struct CostDiff {
    std::string component;
    double recomputed = 0.0;
    double model = 0.0;
};

struct CostCheck {
    bool ok = true;
    double recomputed_total = 0.0;
    double objective = 0.0;
    double relative_error = 0.0;
    std::vector<CostDiff> diffs;  // filled when the totals disagree
};

/// Compares the recomputed total against the solver objective. When
/// `registry` is given, mismatches are broken down per component against
/// the model's own cost expressions.
CostCheck reconcile_costs(const CostBreakdown &recomputed, const solver::Solution &solution,
                          const milp::MilpModel *model = nullptr,
                          const VariableRegistry *registry = nullptr, double rel_tol = 1e-6);

struct DegradationTrajectory {
    /// Usable capacity per day from the daily recursion taken with equality.
    std::vector<double> e_bd;
    /// End-of-horizon capacity from the whole-horizon closure with equality.
    double closure = 0.0;
    /// Lost capacity on the annualised basis, from the closure.
    double e_bl = 0.0;
};

/// Forward recursion over a per-hour cell-side charging series (length 24*D).
DegradationTrajectory degradation_oracle(std::span<const double> p_c, double e_b,
                                         const BatteryParams &battery, double time_factor);

struct DegradationCheck {
    bool ok = true;
    double max_deviation = 0.0;       // kWh, over all days
    double closure_deviation = 0.0;   // kWh, day D against the closure
    double max_excess = 0.0;          // kWh, E_BD(d) above the recursion
    std::vector<std::string> mismatched_days;
};

/// Compares the solution's E_BD variables with the oracle: days 1..D-1
/// against the recursion, day D against the closure.
DegradationCheck check_degradation(const Scenario &scenario, const solver::Solution &solution,
                                   double rel_tol = 1e-6);

/// Only E_BD(D) is priced, so E_BD(2..D-1) are degenerate at an optimum:
/// any value between what the SOE window needs and the recursion bound is
/// optimal. Returns a copy with those days raised to the recursion values,
/// which keeps every row feasible and the objective unchanged. `max_lift`
/// receives the largest change (kWh).
solver::Solution lift_degradation_chain(const Scenario &scenario, const solver::Solution &solution,
                                        double *max_lift = nullptr);

/// Parses a free-format MPS document (as written by milp::export_mps) back
/// into a model. Honors the objective-constant comment and BV/PL/FX bounds.
milp::MilpModel read_mps(const std::string &text);

} // namespace storplan::verify
