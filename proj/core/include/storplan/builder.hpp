#pragma once

// Translates a Scenario into one of the four battery-model variants:
//   1  baseline, constant efficiencies
//   2  baseline + SOC-dependent piecewise losses and power limits
//   3  baseline + cycle/calendar degradation
//   4  2 + 3
// Variables are named `<symbol>_<hour>` (1-based); constraint tags follow
// `eq<id>[_t<hour>][_d<day>][_k<level>]` with `_j`/`_i`/`_m` suffixes for
// curve pieces and tariff months.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "storplan/domain.hpp"
#include "storplan/milp.hpp"

namespace storplan {

enum class GridMode { Off, On };

struct VariantOptions {
    int variant = 1;
    GridMode grid = GridMode::Off;
    std::optional<double> gamma;
    std::optional<double> baseline_co2;  // kg, required with gamma
    std::optional<double> e_b_estimate;  // kWh, required for variants 2/4
    bool no_battery = false;             // fixes c_B = E_B = 0
    bool tariff = false;                 // opt-in monthly grid tariff terms

    bool piecewise() const { return variant == 2 || variant == 4; }
    bool degradation() const { return variant == 3 || variant == 4; }
    bool grid_on() const { return grid == GridMode::On; }
};

/// Throws BuildError when options and scenario are inconsistent.
void validate_options(const Scenario &scenario, const VariantOptions &options);

/// Maps model symbols to variable handles. Per-hour symbols are indexed by
/// hour (0-based storage, 1-based names); absent symbols are empty.
struct VariableRegistry {
    using Id = milp::VarId;

    Id x{}, c_pv{}, c_w{}, c_b{}, e_b{}, soe0{};
    std::vector<Id> g_t, g_pv, g_w, g_m, c, e_bc, e_bd, p_c, p_d, soe, w;
    std::vector<Id> p_c_loss, p_d_loss, beta;
    std::vector<std::vector<Id>> u;                 // [t][k]
    std::vector<std::vector<std::vector<Id>>> v_c;  // [t][k][j]
    std::vector<std::vector<std::vector<Id>>> v_d;  // [t][k][i]
    std::vector<Id> e_bd_day;                       // E_BD(d)
    std::vector<Id> s_month;                        // tariff peak excess

    /// E_BL as an affine expression of E_B and E_BD(D) (variants 3/4).
    std::optional<milp::LinearExpr> e_bl;
    /// Objective split by cost component: C_T, C_PV, C_W, C_B, C_LC, C_M.
    std::map<std::string, milp::LinearExpr> cost_terms;
    /// Hour ranges [begin, end) for each tariff month.
    std::vector<std::pair<std::size_t, std::size_t>> months;

    bool carbon_cap_applied = false;
};

struct BuiltModel {
    milp::MilpModel model;
    VariableRegistry registry;
};

/// Builds the full model for the requested variant, including the carbon cap
/// when `options.gamma` is set and tariff terms when `options.tariff` is set.
BuiltModel build_model(const Scenario &scenario, const VariantOptions &options);

/// Adds sum g_T CO2_T (+ sum g_M CO2_M on-grid) <= gamma * baseline_co2.
void apply_carbon_cap(milp::MilpModel &model, VariableRegistry &registry,
                      const Scenario &scenario, double gamma, double baseline_co2);

/// Monthly customer + demand charges over a peak-excess variable per month.
void build_grid_tariff_terms(milp::MilpModel &model, VariableRegistry &registry,
                             const Scenario &scenario);

/// E_BD(d) recursion, horizon closure and E_BL (variants 3/4).
void build_degradation(milp::MilpModel &model, VariableRegistry &registry,
                       const Scenario &scenario);

/// Hour ranges of each tariff month for the scenario's horizon.
std::vector<std::pair<std::size_t, std::size_t>> month_partition(const Scenario &scenario);

/// Variable name for a per-hour symbol, e.g. ("SOE", 5) -> "SOE_5".
std::string hourly_name(std::string_view symbol, std::size_t hour);

} // namespace storplan
