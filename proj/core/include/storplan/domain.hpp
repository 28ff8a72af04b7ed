#pragma once

// Problem-instance types for the single-node capacity expansion model:
// hourly time series, technology cost sheets, battery parameters, efficiency
// curves, grid options and policy knobs, plus loading and validation.

#include <cstddef>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace storplan {

struct TimeSeriesBundle {
    std::vector<double> load;   // kW
    std::vector<double> af_pv;  // p.u.
    std::vector<double> af_w;   // p.u.
    std::vector<double> af_t;   // p.u.
    std::optional<std::vector<double>> price_m; // $/kWh, grid mode only

    std::size_t hours() const { return load.size(); }
};

struct ThermalParams {
    double sc_t = 50.0;   // unit capacity, kW
    double if_t = 0.0;    // $/kW
    double l_t = 20.0;    // years
    double fom_t = 0.0;   // $/kW-yr
    double vom_t = 0.0;   // $/kWh
    double fuel_t = 0.0;  // $/kWh
    double co2_t = 0.0;   // kg/kWh

    /// Per-kWh dispatch cost; fuel is folded into the variable O&M term.
    double variable_cost() const { return vom_t + fuel_t; }
};

struct RenewableParams {
    double if_x = 0.0;   // $/kW
    double l_x = 25.0;   // years
    double fom_x = 0.0;  // $/kW-yr
    double vom_x = 0.0;  // $/kWh
};

struct BatteryParams {
    double ip_b = 0.0;      // $/kW
    double ie_b = 0.0;      // $/kWh
    double l_b = 10.0;      // years
    double n_cycle = 3500;  // full cycles to end of life
    double fom_b = 0.0;     // $/kW-yr
    double vom_b = 0.0;     // $/kWh throughput
    double p_c_max = 1.0;   // p.u. of power capacity
    double p_d_max = 1.0;
    double soc_min = 0.1;
    double soc_max = 0.9;
    double eta_c = 0.9;
    double eta_d = 0.9;
    double lambda = 0.1;    // wrap-up tolerance
    double eol_loss = 0.3;  // capacity-loss budget at end of life
    double p_weight = 0.5;  // share of cycling in total degradation
};

/// Investment/O&M overrides applied by a battery cost-level sweep.
struct BatteryCostLevel {
    double ip_b = 0.0;
    double ie_b = 0.0;
    double fom_b = 0.0;
    double vom_b = 0.0;
};

struct CurvePiece {
    double cap = 0.0;    // kW per kW of installed battery power
    double slope = 0.0;  // loss per kW through this piece
};

struct CurveLevel {
    std::vector<CurvePiece> charge;
    std::vector<CurvePiece> discharge;
};

/// SOC-dependent piecewise-linear loss curves. `soc_breaks` has one more
/// entry than `levels`; level k covers [soc_breaks[k], soc_breaks[k+1]].
struct EfficiencyCurveSet {
    std::vector<double> soc_breaks;
    std::vector<CurveLevel> levels;

    std::size_t level_count() const { return levels.size(); }
    std::size_t max_charge_pieces() const;
    std::size_t max_discharge_pieces() const;
};

struct GridTariff {
    double customer_charge = 0.0;   // $/month
    double demand_charge = 0.0;     // $/kW-month above the threshold
    double demand_threshold = 0.0;  // kW
    /// Explicit month lengths in days; empty means calendar months
    /// counted from the scenario's first day of year.
    std::vector<int> month_days;
};

struct GridOptions {
    bool enabled = false;
    double cap_kw = std::numeric_limits<double>::infinity(); // max hourly purchase, kW
    double co2_m = 0.0;   // kg/kWh
    std::optional<GridTariff> tariff;
};

struct PolicyAndEconomics {
    double r = 0.1;
    double p_lc = 13.0;                  // $/kWh unserved
    std::optional<double> gamma;
    double big_m_multiplier = 5.0;       // M = multiplier x peak load
    double mip_gap = 0.001;
};

/// Immutable validated problem instance.
struct Scenario {
    std::string name;
    TimeSeriesBundle series;
    ThermalParams thermal;
    RenewableParams pv;
    RenewableParams wind;
    BatteryParams battery;
    std::optional<EfficiencyCurveSet> curves;
    GridOptions grid;
    PolicyAndEconomics policy;
    std::map<std::string, BatteryCostLevel> battery_cost_levels;

    int first_day = 1;          // day of year of hour 1
    std::size_t hours = 0;      // T
    std::size_t days = 0;       // D = T / 24
    double time_factor = 0.0;   // TF = D / 365
    double peak_load = 0.0;

    double big_m() const { return policy.big_m_multiplier * peak_load; }
    double total_load() const;
};

struct CurveDiagnostics {
    bool ok = true;
    std::vector<std::string> messages;
    std::vector<double> max_charge_power;     // sum of charge caps per level
    std::vector<double> max_discharge_power;  // sum of discharge caps per level
};

/// Capital recovery factor r / (1 - (1 + r)^-l). Throws ValidationError for
/// r <= 0 or l < 1.
double annuity_factor(double r, double life_years);

CurveDiagnostics validate_curves(const EfficiencyCurveSet &curves);

/// Checks every type invariant, fills T, D, TF and the peak load, and returns
/// the validated scenario. Throws ValidationError naming the offending field.
Scenario finalize_scenario(Scenario scenario);

/// Parses an hourly CSV with header
/// `hour,load_kw,af_pv,af_wind,af_thermal,price_usd_per_kwh`.
TimeSeriesBundle load_series_csv(const std::filesystem::path &path, bool require_price);
TimeSeriesBundle parse_series_csv(const std::string &text, bool require_price,
                                  const std::string &source = "<series>");

EfficiencyCurveSet load_curves(const std::filesystem::path &path);
EfficiencyCurveSet parse_curves_toml(const std::string &text,
                                     const std::string &source = "<curves>");

/// Loads a TOML configuration and the hourly series into a validated
/// Scenario. A `[curves]` table in the configuration is honoured.
Scenario load_scenario(const std::filesystem::path &config_path,
                       const std::filesystem::path &series_path);
Scenario parse_scenario(const std::string &config_text, TimeSeriesBundle series,
                        const std::string &source = "<config>");

/// Restricts the scenario to days [first, last] (1-based, inclusive) of its
/// current horizon and recomputes the derived quantities.
Scenario slice_days(const Scenario &scenario, std::size_t first, std::size_t last);

/// Applies a named battery cost level from `battery_cost_levels`.
Scenario with_battery_cost_level(const Scenario &scenario, const std::string &level);

/// Lossless JSON snapshot of a scenario, and its inverse.
std::string scenario_to_json(const Scenario &scenario);
Scenario scenario_from_json(const std::string &text);

} // namespace storplan
