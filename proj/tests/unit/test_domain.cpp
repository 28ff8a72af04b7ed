#include <doctest.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "storplan/domain.hpp"
#include "storplan/error.hpp"
#include "synthetic.hpp"

using namespace storplan;

namespace {

// Present value of `l` unit payments; the annuity factor is its inverse.
double amortization_oracle(double r, int l) {
    double pv = 0.0, disc = 1.0;
    for (int k = 1; k <= l; ++k) {
        disc /= 1.0 + r;
        pv += disc;
    }
    return 1.0 / pv;
}

std::string header() { return "hour,load_kw,af_pv,af_wind,af_thermal,price_usd_per_kwh\n"; }

std::string csv_rows(std::size_t hours, bool price) {
    std::string s = header();
    for (std::size_t h = 1; h <= hours; ++h) {
        s += std::to_string(h) + ",100,0.5,0.3,1";
        s += price ? ",0.1\n" : ",\n";
    }
    return s;
}

std::string read_config(const std::string &year) {
    std::ifstream in(testing::data_dir() / ("config_" + year + ".toml"));
    return {std::istreambuf_iterator<char>(in), {}};
}

} // namespace

TEST_CASE("annuity factor matches the amortization sum") {
    CHECK(annuity_factor(0.10, 20) == doctest::Approx(0.117459624).epsilon(1e-9));
    CHECK(annuity_factor(0.10, 25) == doctest::Approx(0.1101680722).epsilon(1e-9));
    for (double r : {0.01, 0.05, 0.1, 0.2}) {
        for (int l : {1, 5, 13, 30, 60}) {
            const double a = annuity_factor(r, l);
            CHECK(std::abs(a - amortization_oracle(r, l)) / a < 1e-12);
        }
    }
}

TEST_CASE("annuity factor tends to 1/l as r goes to 0") {
    CHECK(annuity_factor(1e-12, 20) == doctest::Approx(0.05).epsilon(1e-9));
    CHECK(annuity_factor(0.3, 1) == doctest::Approx(1.3));
}

TEST_CASE("annuity factor rejects bad inputs") {
    CHECK_THROWS_AS(annuity_factor(0.0, 20), ValidationError);
    CHECK_THROWS_AS(annuity_factor(-0.1, 20), ValidationError);
    CHECK_THROWS_AS(annuity_factor(0.1, 0.5), ValidationError);
    CHECK_THROWS_AS(annuity_factor(std::nan(""), 10), ValidationError);
}

TEST_CASE("series CSV parses and reports offending rows") {
    auto ts = parse_series_csv(csv_rows(24, true), true, "s.csv");
    CHECK(ts.hours() == 24);
    REQUIRE(ts.price_m);
    CHECK((*ts.price_m)[3] == doctest::Approx(0.1));

    auto noprice = parse_series_csv(csv_rows(24, false), false, "s.csv");
    CHECK_FALSE(noprice.price_m);
    CHECK_THROWS_WITH_AS(parse_series_csv(csv_rows(24, false), true, "s.csv"),
                         doctest::Contains("price_usd_per_kwh is missing"), ValidationError);

    std::string bad = header() + "1,100,0.5,0.3,1,0.1\n2,100,1.2,0.3,1,0.1\n";
    CHECK_THROWS_WITH_AS(parse_series_csv(bad, false, "s.csv"),
                         doctest::Contains("s.csv line 3 (hour 2): af_pv = 1.2 outside [0,1]"),
                         ValidationError);

    std::string skip = header() + "1,100,0.5,0.3,1,0.1\n3,100,0.5,0.3,1,0.1\n";
    CHECK_THROWS_WITH_AS(parse_series_csv(skip, false, "s.csv"),
                         doctest::Contains("out of sequence"), ValidationError);
    CHECK_THROWS_AS(parse_series_csv("a,b,c\n", false), ValidationError);
    CHECK_THROWS_AS(parse_series_csv("", false), ValidationError);
}

TEST_CASE("finalize_scenario derives T, D, TF and the peak") {
    Scenario s;
    s.series = testing::synthetic_series(90 * 24, 1, 7, false);
    auto f = finalize_scenario(s);
    CHECK(f.hours == 2160);
    CHECK(f.days == 90);
    CHECK(f.time_factor == doctest::Approx(0.246575342).epsilon(1e-9));
    CHECK(f.big_m() == doctest::Approx(5.0 * f.peak_load));

    Scenario ragged = s;
    ragged.series.load.resize(100);
    CHECK_THROWS_AS(finalize_scenario(ragged), ValidationError);
    Scenario mismatch = s;
    mismatch.series.af_pv.pop_back();
    CHECK_THROWS_WITH_AS(finalize_scenario(mismatch), doctest::Contains("af_pv"), ValidationError);
    Scenario grid = s;
    grid.grid.enabled = true;
    CHECK_THROWS_WITH_AS(finalize_scenario(grid), doctest::Contains("price_usd_per_kwh"),
                         ValidationError);
    Scenario eol = s;
    eol.battery.eol_loss = 1.0;
    CHECK_THROWS_AS(finalize_scenario(eol), ValidationError);
}

TEST_CASE("shipped configurations load") {
    auto s = load_scenario(testing::data_dir() / "config_2020.toml",
                           testing::data_dir() / "series_2020.csv");
    CHECK(s.hours == 8760);
    CHECK(s.time_factor == doctest::Approx(1.0));
    CHECK(s.peak_load == doctest::Approx(573.3).epsilon(1e-9));
    CHECK(s.total_load() / 8760 == doctest::Approx(371.2).epsilon(1e-3));
    CHECK(s.grid.enabled);
    REQUIRE(s.grid.tariff);
    CHECK(s.grid.tariff->customer_charge == doctest::Approx(84.87));
    CHECK(s.battery.eol_loss == doctest::Approx(0.3));
    CHECK(s.battery.lambda == doctest::Approx(0.1));

    auto s50 = testing::reference_scenario("2050", 168);
    CHECK_FALSE(s50.grid.enabled);
    CHECK(s50.battery_cost_levels.size() == 3);
    auto h = with_battery_cost_level(s50, "H");
    CHECK(h.battery.ie_b >= s50.battery_cost_levels.at("L").ie_b);
    CHECK_THROWS_AS(with_battery_cost_level(s50, "X"), ValidationError);
}

TEST_CASE("configuration errors name the key") {
    auto ts = testing::synthetic_series(24, 1, 1, true);
    std::string text = read_config("2020") + "\n[extra]\nfoo = 1\n";
    CHECK_THROWS_WITH_AS(parse_scenario(text, ts, "c.toml"), doctest::Contains("unknown key"),
                         ValidationError);
    std::string typo = read_config("2020");
    typo.replace(typo.find("cycle_life"), 10, "cycle_lyfe");
    CHECK_THROWS_WITH_AS(parse_scenario(typo, ts, "c.toml"), doctest::Contains("cycle_lyfe"),
                         ValidationError);
    auto noprice = testing::synthetic_series(24, 1, 1, false);
    CHECK_THROWS_AS(parse_scenario(read_config("2020"), noprice, "c.toml"), ValidationError);
}

TEST_CASE("slice_days keeps the requested window") {
    auto s = testing::reference_scenario("2050", 24 * 14);
    auto w = slice_days(s, 3, 9);
    CHECK(w.days == 7);
    CHECK(w.first_day == 3);
    CHECK(w.series.load.front() == s.series.load[48]);
    CHECK(w.time_factor == doctest::Approx(7.0 / 365.0));
    CHECK_THROWS_AS(slice_days(s, 0, 3), ValidationError);
    CHECK_THROWS_AS(slice_days(s, 5, 15), ValidationError);
}

TEST_CASE("curve validation") {
    auto curves = load_curves(testing::data_dir() / "curves_sample.toml");
    CHECK(curves.level_count() == 3);
    CHECK(curves.max_charge_pieces() == 4);
    auto diag = validate_curves(curves);
    CHECK(diag.ok);
    CHECK(diag.max_charge_power[0] == doctest::Approx(1.0));
    CHECK(diag.max_charge_power[2] == doctest::Approx(0.65));

    auto nonconvex = curves;
    std::swap(nonconvex.levels[1].charge[0], nonconvex.levels[1].charge[3]);
    auto d2 = validate_curves(nonconvex);
    CHECK_FALSE(d2.ok);
    CHECK(d2.messages.front().find("convex") != std::string::npos);

    auto breaks = curves;
    breaks.soc_breaks = {0.0, 0.5, 1.0};
    CHECK_FALSE(validate_curves(breaks).ok);
    auto tail = curves;
    tail.soc_breaks.back() = 0.9;
    CHECK_FALSE(validate_curves(tail).ok);
    auto zero = curves;
    zero.levels[0].discharge[0].cap = 0.0;
    CHECK_FALSE(validate_curves(zero).ok);

    auto flat = testing::flat_curve(BatteryParams{});
    CHECK(validate_curves(flat).ok);
}

TEST_CASE("scenario JSON round trip is lossless") {
    auto s = testing::reference_scenario("2020", 48);
    s.curves = load_curves(testing::data_dir() / "curves_sample.toml");
    s.policy.gamma = 0.25;
    const std::string j = scenario_to_json(s);
    auto back = scenario_from_json(j);
    CHECK(scenario_to_json(back) == j);
    CHECK(back.series.load == s.series.load);
    REQUIRE(back.series.price_m);
    CHECK(back.grid.cap_kw == s.grid.cap_kw);
    CHECK(back.battery.eol_loss == s.battery.eol_loss);
    REQUIRE(back.curves);
    CHECK(back.curves->levels.size() == 3);

    auto off = testing::reference_scenario("2050", 24);
    auto off_back = scenario_from_json(scenario_to_json(off));
    CHECK(std::isinf(off_back.grid.cap_kw) == std::isinf(off.grid.cap_kw));
}
