#pragma once

// Experimental protocols on top of build/solve/verify: single verified runs,
// the two-phase carbon-cap protocol, one-dimensional sweeps and KPI reports.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "storplan/builder.hpp"
#include "storplan/domain.hpp"
#include "storplan/milp.hpp"
#include "storplan/solver.hpp"
#include "storplan/verify.hpp"

namespace storplan::experiments {

struct SolverConfig {
    solver::BackendDescriptor backend;
    double gap = 0.001;
    double time_limit = 3600.0;
    double residual_tol = 1e-6;
    double floor_energy_kwh = 1.0;  // lower bound for the E_B estimate
};

struct InstalledCapacity {
    double thermal_kw = 0.0;
    double pv_kw = 0.0;
    double wind_kw = 0.0;
    double battery_kw = 0.0;
    double battery_kwh = 0.0;
};

struct EnergyShares {
    double thermal = 0.0;
    double pv = 0.0;
    double wind = 0.0;
    double grid = 0.0;
    double discharge = 0.0;
    double charge = 0.0;  // negative
    double load_curtailment = 0.0;

    double sum() const {
        return thermal + pv + wind + grid + discharge + charge + load_curtailment;
    }
};

/// Unit metrics are empty when total load is zero; curtailment is empty for
/// a technology with no available energy; duration when no battery power.
struct KpiReport {
    InstalledCapacity installed;
    verify::CostBreakdown costs;
    double total_cost = 0.0;
    double emissions_kg = 0.0;
    std::optional<double> intensity_g_per_kwh;
    std::optional<EnergyShares> shares;  // % of total load
    std::optional<double> pv_curtailment_pct;
    std::optional<double> wind_curtailment_pct;
    std::optional<double> unit_cost_cents_per_kwh;
    std::optional<double> battery_duration_h;
    double total_load_kwh = 0.0;
    std::map<std::string, std::string> metadata;

    std::string to_json() const;
    std::string to_text() const;
};

KpiReport kpi_report(const Scenario &scenario, const solver::Solution &solution,
                     const VariantOptions &options);

/// Total CO2 (kg) of a solution; grid imports count only on-grid.
double emissions_kg(const Scenario &scenario, const solver::Solution &solution,
                    const VariantOptions &options);

struct RunResult {
    VariantOptions options;
    milp::ModelStats stats;
    solver::Solution solution;
    verify::ResidualReport residuals;
    verify::CostCheck cost_check;
    std::optional<verify::DegradationCheck> degradation;
    /// Oracle comparison on the backend's values before the degenerate
    /// E_BD(2..D-1) are lifted to the recursion (variants 3/4).
    std::optional<verify::DegradationCheck> raw_degradation;
    double degradation_lift_kwh = 0.0;
    std::optional<KpiReport> kpi;

    bool verified() const {
        return solution.has_values() && residuals.ok() && cost_check.ok &&
               (!degradation || degradation->ok);
    }
};

std::string options_to_json(const VariantOptions &options);
VariantOptions options_from_json(const std::string &text);

/// Build, export, solve and verify one instance. When `run_dir` is set it
/// receives model.mps, model.map, solver.log, solution.txt, options.json,
/// residuals.json, report.json and dispatch.csv.
RunResult run_single(const Scenario &scenario, const VariantOptions &options,
                     const SolverConfig &config,
                     const std::optional<std::filesystem::path> &run_dir = {});

/// Optimal E_B of variant 1 on the same horizon and grid mode; returns the
/// configured floor if that optimum has no battery energy.
double estimate_energy_capacity(const Scenario &scenario, GridMode grid,
                                const SolverConfig &config,
                                const std::optional<std::filesystem::path> &work_dir = {});

/// Fills `e_b_estimate` for variants 2/4 when missing.
VariantOptions resolve_estimate(const Scenario &scenario, VariantOptions options,
                                const SolverConfig &config,
                                const std::optional<std::filesystem::path> &work_dir = {});

struct TwoPhaseResult {
    RunResult baseline;
    RunResult constrained;
    double baseline_co2 = 0.0;
};

/// Phase 1 without the cap measures CO2; phase 2 rebuilds with
/// gamma * CO2 as the cap. Throws Error if phase 1 has no solution.
TwoPhaseResult run_two_phase(const Scenario &scenario, const VariantOptions &options,
                             double gamma, const SolverConfig &config,
                             const std::optional<std::filesystem::path> &run_dir = {});

enum class SweepDimension { Gamma, PWeight, BatteryCostLevel, Year, GridMode };

std::optional<SweepDimension> dimension_from_string(std::string_view text);
std::string_view to_string(SweepDimension dimension);

struct SweepSpec {
    SweepDimension dimension = SweepDimension::Gamma;
    std::vector<std::string> values;
    Scenario base;
    VariantOptions options;
    /// Two-phase cap applied in non-gamma sweeps when set.
    std::optional<double> gamma;
    /// Scenario per value for the year dimension.
    std::map<std::string, Scenario> year_scenarios;
    std::size_t parallelism = 1;
};

/// Throws ValidationError for empty or out-of-domain values.
void validate_sweep(const SweepSpec &spec);

struct SweepRow {
    std::string value;
    bool ok = false;
    std::string error;
    std::optional<RunResult> result;
    std::optional<double> baseline_co2;
};

struct SweepResult {
    SweepDimension dimension = SweepDimension::Gamma;
    std::vector<SweepRow> rows;  // in spec order

    std::string to_csv() const;
    std::string to_json() const;
};

/// One run per value; each row owns `<out_dir>/<dimension>_<value>`.
/// Failures are recorded per row.
SweepResult sweep(const SweepSpec &spec, const SolverConfig &config,
                  const std::optional<std::filesystem::path> &out_dir = {});

/// `hour,g_T,g_PV,g_W,g_M,e_Bc,e_Bd,SOE,c` for a solved run.
std::string dispatch_csv(const Scenario &scenario, const solver::Solution &solution);

} // namespace storplan::experiments
