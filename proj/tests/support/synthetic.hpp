#pragma once

// Deterministic synthetic inputs shaped like the reference site statistics
// (load peak 573.3 kW / mean 371.2 kW; solar max 0.67 / mean 0.14; wind
// max 1.0 / mean 0.20; price max 0.26 / mean 0.10 $/kWh).

#include <cstdint>
#include <filesystem>
#include <string>

#include "storplan/domain.hpp"

namespace storplan::testing {

struct SeriesShape {
    double load_peak = 573.3;
    double load_mean = 371.2;
    double pv_max = 0.67, pv_mean = 0.14;
    double wind_max = 1.0, wind_mean = 0.20;
    double price_max = 0.26, price_mean = 0.10;
};

TimeSeriesBundle synthetic_series(std::size_t hours, int first_day = 1, std::uint64_t seed = 2020,
                                  bool with_price = true, const SeriesShape &shape = {});

std::string series_csv(const TimeSeriesBundle &series);

/// Directory holding the shipped configuration files.
std::filesystem::path data_dir();

/// Scenario from `data/config_<year>.toml` over a synthetic horizon.
Scenario reference_scenario(const std::string &year, std::size_t hours, std::uint64_t seed = 2020);

/// Single level / single piece curve whose losses equal the constant
/// efficiencies of the baseline model.
EfficiencyCurveSet flat_curve(const BatteryParams &battery);

/// Two SOC levels with two convex pieces per side; reduced power at the
/// ends of the SOC range. Small enough for quick variant-2/4 solves.
EfficiencyCurveSet two_level_curve();

} // namespace storplan::testing
