#include "storplan/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "storplan/error.hpp"

namespace storplan::experiments {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_file(const fs::path &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw Error("cannot write " + path.string());
}

double hourly_sum(const solver::Solution &sol, const char *symbol, std::size_t T) {
    double s = 0.0;
    for (std::size_t h = 1; h <= T; ++h) s += sol.value_or(hourly_name(symbol, h), 0.0);
    return s;
}

fs::path scratch_dir() {
    static std::atomic<unsigned> counter{0};
    return fs::temp_directory_path() /
           ("storplan_" + std::to_string(::getpid()) + "_" + std::to_string(counter.fetch_add(1)));
}

json optional_json(const std::optional<double> &v) { return v ? json(*v) : json(nullptr); }

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

std::string csv_cell(const std::optional<double> &v) { return v ? fmt(*v) : std::string(); }

std::string csv_quote(const std::string &s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

json kpi_json(const KpiReport &k) {
    json shares = nullptr;
    if (k.shares) {
        shares = {{"thermal", k.shares->thermal},   {"pv", k.shares->pv},
                  {"wind", k.shares->wind},         {"grid", k.shares->grid},
                  {"discharge", k.shares->discharge}, {"charge", k.shares->charge},
                  {"load_curtailment", k.shares->load_curtailment}};
    }
    return {
        {"installed",
         {{"thermal_kw", k.installed.thermal_kw},
          {"pv_kw", k.installed.pv_kw},
          {"wind_kw", k.installed.wind_kw},
          {"battery_kw", k.installed.battery_kw},
          {"battery_kwh", k.installed.battery_kwh}}},
        {"costs", k.costs.by_component()},
        {"total_cost", k.total_cost},
        {"emissions_kg", k.emissions_kg},
        {"intensity_g_per_kwh", optional_json(k.intensity_g_per_kwh)},
        {"shares_pct", shares},
        {"pv_curtailment_pct", optional_json(k.pv_curtailment_pct)},
        {"wind_curtailment_pct", optional_json(k.wind_curtailment_pct)},
        {"unit_cost_cents_per_kwh", optional_json(k.unit_cost_cents_per_kwh)},
        {"battery_duration_h", optional_json(k.battery_duration_h)},
        {"total_load_kwh", k.total_load_kwh},
        {"metadata", k.metadata},
    };
}

json solution_summary(const solver::Solution &s) {
    return {{"status", std::string(solver::to_string(s.status))},
            {"objective", s.has_values() ? json(s.objective) : json(nullptr)},
            {"achieved_gap", s.has_values() ? json(s.achieved_gap) : json(nullptr)}};
}

json run_json(const RunResult &r) {
    json j = {
        {"options", json::parse(options_to_json(r.options))},
        {"stats",
         {{"n_continuous", r.stats.n_continuous},
          {"n_integer", r.stats.n_integer},
          {"n_binary", r.stats.n_binary},
          {"n_constraints", r.stats.n_constraints},
          {"n_nonzeros", r.stats.n_nonzeros}}},
        {"solution", solution_summary(r.solution)},
        {"verified", r.verified()},
    };
    if (r.solution.has_values()) {
        j["residuals_ok"] = r.residuals.ok();
        json diffs = json::array();
        for (const auto &d : r.cost_check.diffs)
            diffs.push_back({{"component", d.component}, {"recomputed", d.recomputed}, {"model", d.model}});
        j["cost_check"] = {{"ok", r.cost_check.ok},
                           {"recomputed_total", r.cost_check.recomputed_total},
                           {"objective", r.cost_check.objective},
                           {"relative_error", r.cost_check.relative_error},
                           {"diffs", diffs}};
        auto degr = [](const verify::DegradationCheck &d) {
            return json{{"ok", d.ok},
                        {"max_deviation_kwh", d.max_deviation},
                        {"closure_deviation_kwh", d.closure_deviation},
                        {"max_excess_kwh", d.max_excess},
                        {"mismatched", d.mismatched_days}};
        };
        if (r.degradation) j["degradation_check"] = degr(*r.degradation);
        if (r.raw_degradation) j["degradation_check_raw"] = degr(*r.raw_degradation);
        if (r.options.degradation()) j["degradation_lift_kwh"] = r.degradation_lift_kwh;
    }
    if (r.kpi) j["kpi"] = kpi_json(*r.kpi);
    return j;
}

} // namespace

std::string options_to_json(const VariantOptions &o) {
    json j = {{"variant", o.variant},
              {"grid", o.grid_on() ? "on" : "off"},
              {"gamma", optional_json(o.gamma)},
              {"baseline_co2", optional_json(o.baseline_co2)},
              {"e_b_estimate", optional_json(o.e_b_estimate)},
              {"no_battery", o.no_battery},
              {"tariff", o.tariff}};
    return j.dump(2);
}

VariantOptions options_from_json(const std::string &text) {
    try {
        const json j = json::parse(text);
        VariantOptions o;
        o.variant = j.at("variant").get<int>();
        const std::string grid = j.at("grid").get<std::string>();
        if (grid != "on" && grid != "off") throw ValidationError("options: grid must be on or off");
        o.grid = grid == "on" ? GridMode::On : GridMode::Off;
        auto opt = [&](const char *key) -> std::optional<double> {
            if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
            return j.at(key).get<double>();
        };
        o.gamma = opt("gamma");
        o.baseline_co2 = opt("baseline_co2");
        o.e_b_estimate = opt("e_b_estimate");
        o.no_battery = j.value("no_battery", false);
        o.tariff = j.value("tariff", false);
        return o;
    } catch (const json::exception &e) {
        throw ValidationError(std::string("options: ") + e.what());
    }
}

double emissions_kg(const Scenario &s, const solver::Solution &sol, const VariantOptions &options) {
    double kg = s.thermal.co2_t * hourly_sum(sol, "g_T", s.hours);
    if (options.grid_on()) kg += s.grid.co2_m * hourly_sum(sol, "g_M", s.hours);
    return kg;
}

KpiReport kpi_report(const Scenario &s, const solver::Solution &sol, const VariantOptions &options) {
    if (!sol.has_values()) throw Error("KPI report needs a solved instance");
    const std::size_t T = s.hours;
    KpiReport k;
    k.installed.thermal_kw = sol.value("x") * s.thermal.sc_t;
    k.installed.pv_kw = sol.value("c_PV");
    k.installed.wind_kw = sol.value("c_W");
    k.installed.battery_kw = sol.value("c_B");
    k.installed.battery_kwh = sol.value("E_B");
    k.costs = verify::recompute_costs(s, sol, options);
    k.total_cost = k.costs.total();
    k.emissions_kg = emissions_kg(s, sol, options);
    k.total_load_kwh = s.total_load();

    const double g_t = hourly_sum(sol, "g_T", T);
    const double g_pv = hourly_sum(sol, "g_PV", T);
    const double g_w = hourly_sum(sol, "g_W", T);
    const double g_m = options.grid_on() ? hourly_sum(sol, "g_M", T) : 0.0;
    if (k.total_load_kwh > 0.0) {
        const double pct = 100.0 / k.total_load_kwh;
        EnergyShares sh;
        sh.thermal = g_t * pct;
        sh.pv = g_pv * pct;
        sh.wind = g_w * pct;
        sh.grid = g_m * pct;
        sh.discharge = hourly_sum(sol, "e_Bd", T) * pct;
        sh.charge = -hourly_sum(sol, "e_Bc", T) * pct;
        sh.load_curtailment = hourly_sum(sol, "c", T) * pct;
        k.shares = sh;
        k.intensity_g_per_kwh = k.emissions_kg / k.total_load_kwh * 1000.0;
        k.unit_cost_cents_per_kwh = k.total_cost / k.total_load_kwh * 100.0;
    }
    auto curtailment = [&](const std::vector<double> &af, double cap, double used) -> std::optional<double> {
        double avail = 0.0;
        for (double a : af) avail += a * cap;
        if (!(avail > 1e-9)) return std::nullopt;
        return std::clamp((avail - used) / avail * 100.0, 0.0, 100.0);
    };
    k.pv_curtailment_pct = curtailment(s.series.af_pv, k.installed.pv_kw, g_pv);
    k.wind_curtailment_pct = curtailment(s.series.af_w, k.installed.wind_kw, g_w);
    if (k.installed.battery_kw > 1e-9) k.battery_duration_h = k.installed.battery_kwh / k.installed.battery_kw;

    k.metadata["scenario"] = s.name;
    k.metadata["variant"] = std::to_string(options.variant);
    k.metadata["grid"] = options.grid_on() ? "on" : "off";
    k.metadata["hours"] = std::to_string(s.hours);
    if (options.gamma) k.metadata["gamma"] = fmt(*options.gamma);
    if (options.no_battery) k.metadata["no_battery"] = "c_B and E_B fixed to 0 (variable fixing, model size unchanged)";
    if (options.tariff) k.metadata["tariff"] = "monthly customer and demand charges included in C_M";
    return k;
}

std::string KpiReport::to_json() const { return kpi_json(*this).dump(2); }

std::string KpiReport::to_text() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "installed capacity\n"
       << "  thermal      " << installed.thermal_kw << " kW\n"
       << "  pv           " << installed.pv_kw << " kW\n"
       << "  wind         " << installed.wind_kw << " kW\n"
       << "  battery      " << installed.battery_kw << " kW / " << installed.battery_kwh << " kWh\n";
    os << "costs ($)\n";
    for (const auto &[name, v] : costs.by_component()) os << "  " << std::left << std::setw(12) << name << v << "\n";
    os << "  total       " << total_cost << "\n";
    os << "emissions      " << emissions_kg << " kg";
    if (intensity_g_per_kwh) os << " (" << *intensity_g_per_kwh << " g/kWh)";
    os << "\n";
    if (shares) {
        os << "energy share (% of load)\n"
           << "  thermal " << shares->thermal << "  pv " << shares->pv << "  wind " << shares->wind
           << "  grid " << shares->grid << "  discharge " << shares->discharge << "  charge "
           << shares->charge << "  unserved " << shares->load_curtailment << "\n";
    }
    auto opt = [&](const char *label, const std::optional<double> &v, const char *unit) {
        os << label;
        if (v)
            os << *v << unit << "\n";
        else
            os << "n/a\n";
    };
    opt("pv curtailment   ", pv_curtailment_pct, " %");
    opt("wind curtailment ", wind_curtailment_pct, " %");
    opt("unit cost        ", unit_cost_cents_per_kwh, " c/kWh");
    opt("battery duration ", battery_duration_h, " h");
    return os.str();
}

std::string dispatch_csv(const Scenario &s, const solver::Solution &sol) {
    std::ostringstream os;
    os << std::setprecision(12);
    os << "hour,g_T,g_PV,g_W,g_M,e_Bc,e_Bd,SOE,c\n";
    for (std::size_t h = 1; h <= s.hours; ++h) {
        os << h;
        for (const char *sym : {"g_T", "g_PV", "g_W", "g_M", "e_Bc", "e_Bd", "SOE", "c"})
            os << ',' << sol.value_or(hourly_name(sym, h), 0.0);
        os << '\n';
    }
    return os.str();
}

RunResult run_single(const Scenario &scenario, const VariantOptions &options, const SolverConfig &config,
                     const std::optional<fs::path> &run_dir) {
    RunResult result;
    result.options = options;
    BuiltModel built = build_model(scenario, options);
    built.model.freeze();
    result.stats = milp::model_stats(built.model);
    const auto doc = milp::export_mps(built.model);

    fs::path dir = scratch_dir();
    if (run_dir) {
        dir = *run_dir;
        fs::create_directories(dir);
        write_file(dir / "model.map", doc.name_map_text());
        write_file(dir / "options.json", options_to_json(options));
        write_file(dir / "scenario.json", scenario_to_json(scenario));
    }

    solver::SolveRequest req;
    req.model_mps = doc.text;
    req.gap = config.gap;
    req.time_limit = config.time_limit;
    req.backend = config.backend;
    req.workdir = dir;
    req.objective_offset = built.model.objective_constant();
    req.name_map = doc.name_map;
    for (const auto &v : built.model.variables()) req.expected_columns.push_back(v.name);
    result.solution = solver::solve(req);
    if (!run_dir) {
        std::error_code ec;
        fs::remove_all(dir, ec);
    }

    if (result.solution.has_values() && options.degradation()) {
        if (scenario.battery.ie_b > 0.0)
            result.raw_degradation = verify::check_degradation(scenario, result.solution, config.residual_tol);
        result.solution =
            verify::lift_degradation_chain(scenario, result.solution, &result.degradation_lift_kwh);
    }
    if (result.solution.has_values()) {
        result.residuals = verify::check_residuals(built.model, result.solution, config.residual_tol);
        const auto costs = verify::recompute_costs(scenario, result.solution, options);
        result.cost_check = verify::reconcile_costs(costs, result.solution, &built.model, &built.registry,
                                                    config.residual_tol);
        if (options.degradation() && scenario.battery.ie_b > 0.0)
            result.degradation = verify::check_degradation(scenario, result.solution, config.residual_tol);
        result.kpi = kpi_report(scenario, result.solution, options);
    }

    if (run_dir) {
        write_file(dir / "solution.txt", solver::write_solution(result.solution));
        write_file(dir / "report.json", run_json(result).dump(2));
        if (result.solution.has_values()) {
            write_file(dir / "residuals.json", result.residuals.to_json());
            write_file(dir / "dispatch.csv", dispatch_csv(scenario, result.solution));
        }
    }
    return result;
}

double estimate_energy_capacity(const Scenario &scenario, GridMode grid, const SolverConfig &config,
                                const std::optional<fs::path> &work_dir) {
    VariantOptions base;
    base.variant = 1;
    base.grid = grid;
    const auto run = run_single(scenario, base, config, work_dir);
    if (!run.solution.has_values())
        throw Error("battery energy estimate: variant-1 baseline is " +
                    std::string(solver::to_string(run.solution.status)));
    const double e_b = run.solution.value("E_B");
    return e_b > config.floor_energy_kwh ? e_b : config.floor_energy_kwh;
}

VariantOptions resolve_estimate(const Scenario &scenario, VariantOptions options, const SolverConfig &config,
                                const std::optional<fs::path> &work_dir) {
    if (options.piecewise() && !options.e_b_estimate)
        options.e_b_estimate = estimate_energy_capacity(scenario, options.grid, config, work_dir);
    return options;
}

TwoPhaseResult run_two_phase(const Scenario &scenario, const VariantOptions &options, double gamma,
                             const SolverConfig &config, const std::optional<fs::path> &run_dir) {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ValidationError("gamma must be in [0,1]");
    auto sub = [&](const char *name) -> std::optional<fs::path> {
        if (!run_dir) return std::nullopt;
        return *run_dir / name;
    };
    VariantOptions base = resolve_estimate(scenario, options, config, sub("estimate"));
    base.gamma.reset();
    base.baseline_co2.reset();

    TwoPhaseResult out;
    out.baseline = run_single(scenario, base, config, sub("phase1"));
    if (!out.baseline.solution.has_values())
        throw Error("two-phase run: phase 1 (no carbon cap) is " +
                    std::string(solver::to_string(out.baseline.solution.status)));
    out.baseline_co2 = emissions_kg(scenario, out.baseline.solution, base);

    VariantOptions capped = base;
    capped.gamma = gamma;
    capped.baseline_co2 = out.baseline_co2;
    out.constrained = run_single(scenario, capped, config, sub("phase2"));
    if (run_dir) {
        json j = {{"gamma", gamma},
                  {"baseline_co2_kg", out.baseline_co2},
                  {"baseline", run_json(out.baseline)},
                  {"constrained", run_json(out.constrained)}};
        write_file(*run_dir / "two_phase.json", j.dump(2));
    }
    return out;
}

std::optional<SweepDimension> dimension_from_string(std::string_view text) {
    for (auto d : {SweepDimension::Gamma, SweepDimension::PWeight, SweepDimension::BatteryCostLevel,
                   SweepDimension::Year, SweepDimension::GridMode})
        if (text == to_string(d)) return d;
    return std::nullopt;
}

std::string_view to_string(SweepDimension d) {
    switch (d) {
    case SweepDimension::Gamma: return "gamma";
    case SweepDimension::PWeight: return "p_weight";
    case SweepDimension::BatteryCostLevel: return "battery_cost_level";
    case SweepDimension::Year: return "year";
    case SweepDimension::GridMode: return "grid_mode";
    }
    return "?";
}

namespace {

double parse_fraction(const std::string &v, const char *what) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size() || !(x >= 0.0 && x <= 1.0)) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception &) {
        throw ValidationError(std::string(what) + " value '" + v + "' is not a number in [0,1]");
    }
}

} // namespace

void validate_sweep(const SweepSpec &spec) {
    if (spec.values.empty()) throw ValidationError("sweep needs at least one value");
    if (spec.parallelism == 0) throw ValidationError("sweep parallelism must be >= 1");
    for (const auto &v : spec.values) {
        switch (spec.dimension) {
        case SweepDimension::Gamma: parse_fraction(v, "gamma"); break;
        case SweepDimension::PWeight:
            parse_fraction(v, "p_weight");
            if (!spec.options.degradation())
                throw ValidationError("p_weight sweep needs a degradation variant (3 or 4)");
            break;
        case SweepDimension::BatteryCostLevel:
            if (v != "none" && !spec.base.battery_cost_levels.count(v))
                throw ValidationError("unknown battery cost level '" + v + "'");
            break;
        case SweepDimension::Year:
            if (!spec.year_scenarios.count(v)) throw ValidationError("no scenario for year '" + v + "'");
            break;
        case SweepDimension::GridMode:
            if (v != "on" && v != "off") throw ValidationError("grid_mode value must be on or off");
            break;
        }
    }
    if (spec.gamma && !(*spec.gamma >= 0.0 && *spec.gamma <= 1.0))
        throw ValidationError("gamma must be in [0,1]");
}

SweepResult sweep(const SweepSpec &spec, const SolverConfig &config, const std::optional<fs::path> &out_dir) {
    validate_sweep(spec);
    SweepResult result;
    result.dimension = spec.dimension;
    result.rows.resize(spec.values.size());

    auto run_row = [&](std::size_t i) {
        SweepRow &row = result.rows[i];
        row.value = spec.values[i];
        std::optional<fs::path> dir;
        if (out_dir) dir = *out_dir / (std::string(to_string(spec.dimension)) + "_" + row.value);
        try {
            Scenario s = spec.base;
            VariantOptions o = spec.options;
            std::optional<double> gamma = spec.gamma;
            switch (spec.dimension) {
            case SweepDimension::Gamma: gamma = std::stod(row.value); break;
            case SweepDimension::PWeight:
                s.battery.p_weight = std::stod(row.value);
                s = finalize_scenario(std::move(s));
                break;
            case SweepDimension::BatteryCostLevel:
                if (row.value == "none")
                    o.no_battery = true;
                else
                    s = with_battery_cost_level(s, row.value);
                break;
            case SweepDimension::Year: s = spec.year_scenarios.at(row.value); break;
            case SweepDimension::GridMode: o.grid = row.value == "on" ? GridMode::On : GridMode::Off; break;
            }
            if (gamma) {
                auto tp = run_two_phase(s, o, *gamma, config, dir);
                row.baseline_co2 = tp.baseline_co2;
                row.result = std::move(tp.constrained);
            } else {
                o = resolve_estimate(s, o, config, dir ? std::optional(*dir / "estimate") : std::nullopt);
                row.result = run_single(s, o, config, dir);
            }
            row.ok = row.result->verified();
            if (!row.ok) {
                row.error = row.result->solution.has_values()
                                ? "verification failed"
                                : std::string(solver::to_string(row.result->solution.status));
            }
        } catch (const std::exception &e) {
            row.ok = false;
            row.error = e.what();
        }
    };

    const std::size_t workers = std::min(spec.parallelism, spec.values.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < spec.values.size();) run_row(i);
    };
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    }

    if (out_dir) {
        fs::create_directories(*out_dir);
        write_file(*out_dir / "sweep.csv", result.to_csv());
        write_file(*out_dir / "sweep.json", result.to_json());
    }
    return result;
}

std::string SweepResult::to_csv() const {
    std::ostringstream os;
    os << "dimension,value,ok,error,status,objective,achieved_gap,total_cost,C_T,C_PV,C_W,C_B,C_LC,C_M,"
          "thermal_kw,pv_kw,wind_kw,battery_kw,battery_kwh,emissions_kg,intensity_g_per_kwh,"
          "share_thermal,share_pv,share_wind,share_grid,share_discharge,share_charge,share_load_curtailment,"
          "pv_curtailment_pct,wind_curtailment_pct,unit_cost_cents_per_kwh,battery_duration_h,baseline_co2_kg\n";
    for (const auto &r : rows) {
        os << to_string(dimension) << ',' << csv_quote(r.value) << ',' << (r.ok ? "true" : "false") << ','
           << csv_quote(r.error) << ',';
        const bool solved = r.result && r.result->solution.has_values();
        os << (r.result ? std::string(solver::to_string(r.result->solution.status)) : std::string()) << ',';
        if (solved && r.result->kpi) {
            const auto &sol = r.result->solution;
            const auto &k = *r.result->kpi;
            os << fmt(sol.objective) << ',' << fmt(sol.achieved_gap) << ',' << fmt(k.total_cost);
            for (const char *c : {"C_T", "C_PV", "C_W", "C_B", "C_LC", "C_M"}) os << ',' << fmt(k.costs.by_component().at(c));
            os << ',' << fmt(k.installed.thermal_kw) << ',' << fmt(k.installed.pv_kw) << ','
               << fmt(k.installed.wind_kw) << ',' << fmt(k.installed.battery_kw) << ','
               << fmt(k.installed.battery_kwh) << ',' << fmt(k.emissions_kg) << ','
               << csv_cell(k.intensity_g_per_kwh);
            if (k.shares) {
                const auto &s = *k.shares;
                for (double v : {s.thermal, s.pv, s.wind, s.grid, s.discharge, s.charge, s.load_curtailment})
                    os << ',' << fmt(v);
            } else {
                os << ",,,,,,,";
            }
            os << ',' << csv_cell(k.pv_curtailment_pct) << ',' << csv_cell(k.wind_curtailment_pct) << ','
               << csv_cell(k.unit_cost_cents_per_kwh) << ',' << csv_cell(k.battery_duration_h);
        } else {
            os << std::string(26, ',');
        }
        os << ',' << csv_cell(r.baseline_co2) << '\n';
    }
    return os.str();
}

std::string SweepResult::to_json() const {
    json rows_json = json::array();
    for (const auto &r : rows) {
        json j = {{"value", r.value}, {"ok", r.ok}, {"error", r.error},
                  {"baseline_co2_kg", optional_json(r.baseline_co2)}};
        if (r.result) j["run"] = run_json(*r.result);
        rows_json.push_back(std::move(j));
    }
    return json{{"dimension", std::string(to_string(dimension))}, {"rows", rows_json}}.dump(2);
}

} // namespace storplan::experiments
