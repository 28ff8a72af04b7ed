#include "cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "storplan/builder.hpp"
#include "storplan/domain.hpp"
#include "storplan/error.hpp"
#include "storplan/experiments.hpp"
#include "storplan/milp.hpp"
#include "storplan/solver.hpp"
#include "storplan/verify.hpp"

namespace storplan::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::pair<std::size_t, std::size_t> parse_day_range(const std::string &text) {
    const auto dots = text.find("..");
    if (dots == std::string::npos) throw UsageError("--days: expected A..B, got '" + text + "'");
    try {
        std::size_t used_a = 0, used_b = 0;
        const std::string a = text.substr(0, dots), b = text.substr(dots + 2);
        const auto first = std::stoul(a, &used_a);
        const auto last = std::stoul(b, &used_b);
        if (used_a != a.size() || used_b != b.size() || first < 1 || last < first) throw std::invalid_argument(text);
        return {first, last};
    } catch (const std::logic_error &) {
        throw UsageError("--days: expected 1-based A..B with A <= B, got '" + text + "'");
    }
}

std::vector<std::string> split_list(const std::string &text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        while (!item.empty() && item.front() == ' ') item.erase(item.begin());
        while (!item.empty() && item.back() == ' ') item.pop_back();
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string read_text(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text(const fs::path &path, const std::string &text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw Error("cannot write " + path.string());
}

} // namespace

Command parse_args(const std::vector<std::string> &args, std::string *help) {
    Command cmd;
    CLI::App app{"Capacity-expansion MILPs for battery-backed distributed power systems", "storplan"};
    app.require_subcommand(1);

    std::string grid = "off", days, values, backend_args;
    std::vector<std::string> year_configs;

    auto scenario_flags = [&](CLI::App *sub) {
        sub->add_option("--config", cmd.config, "Technology/policy configuration (TOML)")->required();
        sub->add_option("--series", cmd.series, "Hourly series CSV")->required();
        sub->add_option("--curves", cmd.curves, "Efficiency curves (TOML), needed for models 2 and 4");
        sub->add_option("--days", days, "Day range A..B of the series (1-based, inclusive)");
        sub->add_option("--p-weight", cmd.p_weight, "Cycle share p of total degradation")
            ->check(CLI::Range(0.0, 1.0));
        sub->add_option("--big-m-mult", cmd.big_m_mult, "Big-M as a multiple of peak load")
            ->check(CLI::PositiveNumber);
    };
    auto model_flags = [&](CLI::App *sub) {
        sub->add_option("--model", cmd.model, "Battery model variant")->check(CLI::IsMember({1, 2, 3, 4}));
        sub->add_option("--grid", grid, "Grid connection")->check(CLI::IsMember({"on", "off"}));
        sub->add_option("--gamma", cmd.gamma, "Carbon cap as a fraction of baseline emissions")
            ->check(CLI::Range(0.0, 1.0));
        sub->add_option("--baseline-co2", cmd.baseline_co2, "Baseline emissions (kg) for --gamma")
            ->check(CLI::NonNegativeNumber);
        sub->add_option("--e-b-estimate", cmd.e_b_estimate, "Battery energy estimate (kWh) for models 2/4")
            ->check(CLI::PositiveNumber);
        sub->add_flag("--no-battery", cmd.no_battery, "Fix battery power and energy capacity to zero");
        sub->add_flag("--tariff", cmd.tariff, "Add monthly customer and demand charges (grid on)");
    };
    auto solver_flags = [&](CLI::App *sub) {
        sub->add_option("--mip-gap", cmd.mip_gap, "Relative MIP gap target")->check(CLI::Range(1e-9, 0.999999));
        sub->add_option("--time-limit", cmd.time_limit, "Solver time limit (s)")->check(CLI::PositiveNumber);
        sub->add_option("--backend", cmd.backend, "Solver backend")->check(CLI::IsMember({"highs", "cbc"}));
        sub->add_option("--backend-path", cmd.backend_path,
                        "Backend executable (cbc) or driver script (highs)");
        sub->add_option("--backend-args", backend_args,
                        "Argument template with {model} {solution} {gap} {timelimit}");
    };

    auto *build = app.add_subcommand("build", "Build a model and export it as MPS (no solver)");
    scenario_flags(build);
    model_flags(build);
    build->add_option("--out", cmd.out, "MPS output path")->required();

    auto *solve = app.add_subcommand("solve", "Solve an existing MPS file");
    solve->add_option("--mps", cmd.mps, "Model file")->required()->check(CLI::ExistingFile);
    solve->add_option("--out", cmd.out, "Output directory")->required();
    solver_flags(solve);

    auto *run = app.add_subcommand("run", "Build, solve, verify and report one instance");
    scenario_flags(run);
    model_flags(run);
    solver_flags(run);
    run->add_flag("--two-phase", cmd.two_phase, "Measure baseline emissions first, then apply --gamma");
    run->add_option("--out", cmd.out, "Run directory")->required();

    auto *sweep = app.add_subcommand("sweep", "One run per value of a parameter");
    scenario_flags(sweep);
    model_flags(sweep);
    solver_flags(sweep);
    sweep->add_option("--dimension", cmd.dimension, "Swept parameter")
        ->required()
        ->check(CLI::IsMember({"gamma", "p_weight", "battery_cost_level", "year", "grid_mode"}));
    sweep->add_option("--values", values, "Comma-separated values")->required();
    sweep->add_option("--year-config", year_configs, "YEAR=config.toml (year sweeps, repeatable)");
    sweep->add_option("--jobs", cmd.jobs, "Concurrent rows")->check(CLI::PositiveNumber);
    sweep->add_option("--out", cmd.out, "Output directory")->required();

    auto *verify = app.add_subcommand("verify", "Re-verify a run directory offline");
    verify->add_option("--run-dir", cmd.run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);

    auto *report = app.add_subcommand("report", "Print the KPI report of a run directory");
    report->add_option("--run-dir", cmd.run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
    report->add_option("--format", cmd.format, "Output format")->check(CLI::IsMember({"text", "json"}));

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp &) {
        if (help) *help = app.help();
        throw;
    } catch (const CLI::CallForAllHelp &) {
        if (help) *help = app.help("", CLI::AppFormatMode::All);
        throw;
    } catch (const CLI::ParseError &e) {
        throw UsageError(e.what());
    }

    const CLI::App *used = app.get_subcommands().front();
    const std::string name = used->get_name();
    cmd.verb = name == "build"   ? Verb::Build
               : name == "solve" ? Verb::Solve
               : name == "run"   ? Verb::Run
               : name == "sweep" ? Verb::Sweep
               : name == "verify" ? Verb::Verify
                                  : Verb::Report;
    cmd.grid_on = grid == "on";
    if (!days.empty()) cmd.days = parse_day_range(days);
    if (!values.empty()) cmd.values = split_list(values);
    if (!backend_args.empty()) cmd.backend_args = backend_args;
    for (const auto &yc : year_configs) {
        const auto eq = yc.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == yc.size())
            throw UsageError("--year-config: expected YEAR=path, got '" + yc + "'");
        cmd.year_configs.emplace_back(yc.substr(0, eq), yc.substr(eq + 1));
    }

    // Cross-flag requirements.
    const bool has_model = cmd.verb == Verb::Build || cmd.verb == Verb::Run || cmd.verb == Verb::Sweep;
    if (has_model) {
        if ((cmd.model == 2 || cmd.model == 4) && !cmd.curves)
            throw UsageError("--model " + std::to_string(cmd.model) + " requires --curves");
        if (cmd.verb == Verb::Build && (cmd.model == 2 || cmd.model == 4) && !cmd.e_b_estimate)
            throw UsageError("build --model " + std::to_string(cmd.model) +
                             " requires --e-b-estimate (no solver is run)");
        if (cmd.tariff && !cmd.grid_on && cmd.dimension != "grid_mode")
            throw UsageError("--tariff requires --grid on");
        if (cmd.gamma && !cmd.two_phase && !cmd.baseline_co2 && cmd.verb != Verb::Sweep)
            throw UsageError("--gamma requires --two-phase or --baseline-co2");
        if (cmd.two_phase && !cmd.gamma) throw UsageError("--two-phase requires --gamma");
        if (cmd.two_phase && cmd.baseline_co2)
            throw UsageError("--two-phase and --baseline-co2 are mutually exclusive");
        if (cmd.baseline_co2 && !cmd.gamma) throw UsageError("--baseline-co2 requires --gamma");
    }
    if (cmd.verb == Verb::Sweep) {
        if (cmd.values.empty()) throw UsageError("--values: empty list");
        if (cmd.dimension == "year" && cmd.year_configs.empty())
            throw UsageError("--dimension year requires --year-config YEAR=path for each value");
        if (cmd.dimension == "gamma" && cmd.gamma)
            throw UsageError("--gamma conflicts with --dimension gamma");
        if (cmd.baseline_co2) throw UsageError("--baseline-co2 is not supported in sweeps (use --gamma)");
    }
    if (cmd.backend_args && !cmd.backend_path)
        throw UsageError("--backend-args requires --backend-path");
    return cmd;
}

namespace {

struct Failure {
    int code;
    std::string stage;
    std::string message;
};

Scenario load_command_scenario(const Command &cmd, const fs::path &config) {
    Scenario s = load_scenario(config, cmd.series);
    if (cmd.curves) s.curves = load_curves(*cmd.curves);
    if (cmd.days) s = slice_days(s, cmd.days->first, cmd.days->second);
    if (cmd.p_weight) s.battery.p_weight = *cmd.p_weight;
    if (cmd.big_m_mult) s.policy.big_m_multiplier = *cmd.big_m_mult;
    if (cmd.mip_gap) s.policy.mip_gap = *cmd.mip_gap;
    return finalize_scenario(std::move(s));
}

VariantOptions command_options(const Command &cmd) {
    VariantOptions o;
    o.variant = cmd.model;
    o.grid = cmd.grid_on ? GridMode::On : GridMode::Off;
    if (!cmd.two_phase) {
        o.gamma = cmd.gamma;
        o.baseline_co2 = cmd.baseline_co2;
    }
    o.e_b_estimate = cmd.e_b_estimate;
    o.no_battery = cmd.no_battery;
    o.tariff = cmd.tariff;
    return o;
}

solver::BackendDescriptor command_backend(const Command &cmd) {
    solver::BackendDescriptor b;
    if (cmd.backend_args) {
        b.executable = *cmd.backend_path;
        std::istringstream is(*cmd.backend_args);
        for (std::string a; is >> a;) b.args.push_back(a);
        b.format = solver::SolutionFormat::Auto;
        b.label = cmd.backend.empty() ? "custom" : cmd.backend;
        return b;
    }
    if (!cmd.backend.empty()) {
        b = solver::backend_by_name(cmd.backend);
    } else if (auto found = solver::discover_backend()) {
        b = *found;
    } else {
        throw BackendError("no solver backend found (install highspy or set --backend-path)");
    }
    if (cmd.backend_path) {
        if (b.label == "highs")
            b = solver::highs_backend("python3", *cmd.backend_path);
        else
            b.executable = *cmd.backend_path;
    }
    return b;
}

experiments::SolverConfig solver_config(const Command &cmd, const Scenario *scenario) {
    experiments::SolverConfig cfg;
    cfg.backend = command_backend(cmd);
    cfg.gap = cmd.mip_gap ? *cmd.mip_gap : scenario ? scenario->policy.mip_gap : 0.001;
    cfg.time_limit = cmd.time_limit;
    return cfg;
}

int status_code(const solver::Solution &sol) {
    return sol.has_values() ? kOk : kInfeasible;
}

void print_run(std::ostream &out, const std::string &label, const experiments::RunResult &r) {
    out << label << ": status " << solver::to_string(r.solution.status);
    if (r.solution.has_values()) {
        out << ", objective " << milp::format_number(r.solution.objective) << ", gap "
            << r.solution.achieved_gap << ", residuals " << (r.residuals.ok() ? "ok" : "FAIL") << ", costs "
            << (r.cost_check.ok ? "ok" : "FAIL");
        if (r.degradation) out << ", degradation " << (r.degradation->ok ? "ok" : "FAIL");
    }
    out << "\n";
}

int run_code(const experiments::RunResult &r) {
    if (!r.solution.has_values()) return kInfeasible;
    return r.verified() ? kOk : kVerificationFailure;
}

std::vector<std::string> verification_problems(const experiments::RunResult &r) {
    std::vector<std::string> out;
    if (!r.residuals.ok()) out.push_back("residual check failed:\n" + r.residuals.to_text());
    if (!r.cost_check.ok) {
        std::ostringstream os;
        os << "cost reconciliation failed: recomputed " << r.cost_check.recomputed_total << " vs objective "
           << r.cost_check.objective;
        for (const auto &d : r.cost_check.diffs)
            os << "\n  " << d.component << ": " << d.recomputed << " vs " << d.model;
        out.push_back(os.str());
    }
    if (r.degradation && !r.degradation->ok) out.push_back("degradation oracle mismatch");
    return out;
}

int do_build(const Command &cmd, std::ostream &out) {
    const Scenario s = load_command_scenario(cmd, cmd.config);
    BuiltModel built = build_model(s, command_options(cmd));
    built.model.freeze();
    const auto doc = milp::export_mps(built.model);
    write_text(cmd.out, doc.text);
    if (!doc.name_map.empty()) write_text(fs::path(cmd.out).concat(".map"), doc.name_map_text());
    const auto st = milp::model_stats(built.model);
    out << "wrote " << cmd.out.string() << ": " << st.n_continuous << " continuous, " << st.n_binary
        << " binary, " << st.n_integer << " integer, " << st.n_constraints << " constraints, " << st.n_nonzeros
        << " nonzeros\n";
    return kOk;
}

int do_solve(const Command &cmd, std::ostream &out) {
    const std::string text = read_text(cmd.mps);
    const milp::MilpModel model = verify::read_mps(text);
    solver::SolveRequest req;
    req.model_mps = text;
    req.gap = cmd.mip_gap.value_or(0.001);
    req.time_limit = cmd.time_limit;
    req.backend = command_backend(cmd);
    req.workdir = cmd.out;
    req.objective_offset = model.objective_constant();
    for (const auto &v : model.variables()) req.expected_columns.push_back(v.name);
    const auto sol = solver::solve(req);
    write_text(cmd.out / "solution.txt", solver::write_solution(sol));
    out << "status " << solver::to_string(sol.status);
    if (!sol.has_values()) {
        out << "\n";
        return status_code(sol);
    }
    const auto rep = verify::check_residuals(model, sol);
    write_text(cmd.out / "residuals.json", rep.to_json());
    out << ", objective " << milp::format_number(sol.objective) << ", gap " << sol.achieved_gap << "\n"
        << rep.to_text();
    return rep.ok() ? kOk : kVerificationFailure;
}

int do_run(const Command &cmd, std::ostream &out, std::ostream &err) {
    const Scenario s = load_command_scenario(cmd, cmd.config);
    const auto cfg = solver_config(cmd, &s);
    fs::create_directories(cmd.out);
    const VariantOptions opts = command_options(cmd);
    int code = kOk;
    auto report = [&](const std::string &label, const experiments::RunResult &r) {
        print_run(out, label, r);
        for (const auto &p : verification_problems(r)) err << p << "\n";
        code = std::max(code, run_code(r));
    };
    if (cmd.two_phase) {
        const auto tp = experiments::run_two_phase(s, opts, *cmd.gamma, cfg, cmd.out);
        out << "baseline emissions " << tp.baseline_co2 << " kg, cap " << *cmd.gamma * tp.baseline_co2
            << " kg\n";
        report("phase 1", tp.baseline);
        report("phase 2", tp.constrained);
        if (tp.constrained.kpi) out << tp.constrained.kpi->to_text();
    } else {
        const auto resolved = experiments::resolve_estimate(s, opts, cfg, cmd.out / "estimate");
        const auto r = experiments::run_single(s, resolved, cfg, cmd.out);
        report("run", r);
        if (r.kpi) out << r.kpi->to_text();
    }
    return code;
}

int do_sweep(const Command &cmd, std::ostream &out) {
    experiments::SweepSpec spec;
    spec.dimension = *experiments::dimension_from_string(cmd.dimension);
    spec.values = cmd.values;
    spec.base = load_command_scenario(cmd, cmd.config);
    spec.options = command_options(cmd);
    spec.options.gamma.reset();
    spec.gamma = cmd.gamma;
    spec.parallelism = cmd.jobs;
    for (const auto &[year, path] : cmd.year_configs) spec.year_scenarios[year] = load_command_scenario(cmd, path);
    experiments::validate_sweep(spec);
    const auto cfg = solver_config(cmd, &spec.base);
    const auto result = experiments::sweep(spec, cfg, cmd.out);
    int code = kOk;
    for (const auto &row : result.rows) {
        out << cmd.dimension << "=" << row.value << ": " << (row.ok ? "ok" : "FAILED");
        if (row.result && row.result->solution.has_values())
            out << ", objective " << milp::format_number(row.result->solution.objective);
        if (!row.ok) {
            out << " (" << row.error << ")";
            const bool verification = row.result && row.result->solution.has_values();
            code = std::max(code, verification ? int(kVerificationFailure) : int(kInfeasible));
        }
        out << "\n";
    }
    out << "wrote " << (cmd.out / "sweep.csv").string() << "\n";
    return code;
}

struct LoadedRun {
    Scenario scenario;
    VariantOptions options;
    solver::Solution solution;
};

LoadedRun load_run(const fs::path &dir) {
    LoadedRun r;
    r.scenario = scenario_from_json(read_text(dir / "scenario.json"));
    r.options = experiments::options_from_json(read_text(dir / "options.json"));
    r.solution = solver::parse_solution(read_text(dir / "solution.txt"), solver::SolutionFormat::NameValue);
    return r;
}

int do_verify(const Command &cmd, std::ostream &out) {
    const LoadedRun run = load_run(cmd.run_dir);
    BuiltModel built = build_model(run.scenario, run.options);
    built.model.freeze();
    json j;
    bool ok = true;
    if (fs::exists(cmd.run_dir / "model.mps")) {
        const bool same = milp::export_mps(built.model).text == read_text(cmd.run_dir / "model.mps");
        j["model_matches_snapshot"] = same;
        out << "model.mps " << (same ? "matches" : "DIFFERS FROM") << " the rebuilt model\n";
        ok = ok && same;
    }
    if (!run.solution.has_values()) {
        out << "no solution values (status " << solver::to_string(run.solution.status) << ")\n";
        return kInfeasible;
    }
    const auto rep = verify::check_residuals(built.model, run.solution);
    out << rep.to_text();
    j["residuals"] = json::parse(rep.to_json());
    ok = ok && rep.ok();
    const auto costs = verify::recompute_costs(run.scenario, run.solution, run.options);
    const auto chk = verify::reconcile_costs(costs, run.solution, &built.model, &built.registry);
    out << "cost reconciliation: " << (chk.ok ? "PASS" : "FAIL") << " (recomputed " << chk.recomputed_total
        << ", objective " << chk.objective << ", relative error " << chk.relative_error << ")\n";
    for (const auto &d : chk.diffs) out << "  " << d.component << ": " << d.recomputed << " vs " << d.model << "\n";
    j["costs_ok"] = chk.ok;
    ok = ok && chk.ok;
    if (run.options.degradation() && run.scenario.battery.ie_b > 0.0) {
        const auto dc = verify::check_degradation(run.scenario, run.solution);
        out << "degradation oracle: " << (dc.ok ? "PASS" : "FAIL") << " (max deviation " << dc.max_deviation
            << " kWh)\n";
        j["degradation_ok"] = dc.ok;
        ok = ok && dc.ok;
    }
    j["ok"] = ok;
    write_text(cmd.run_dir / "verify.json", j.dump(2));
    return ok ? kOk : kVerificationFailure;
}

int do_report(const Command &cmd, std::ostream &out) {
    const LoadedRun run = load_run(cmd.run_dir);
    if (!run.solution.has_values()) {
        out << "no solution values (status " << solver::to_string(run.solution.status) << ")\n";
        return kInfeasible;
    }
    const auto k = experiments::kpi_report(run.scenario, run.solution, run.options);
    out << (cmd.format == "json" ? k.to_json() + "\n" : k.to_text());
    return kOk;
}

std::optional<fs::path> error_dir(const Command &cmd) {
    switch (cmd.verb) {
    case Verb::Solve:
    case Verb::Run:
    case Verb::Sweep: return cmd.out;
    case Verb::Verify:
    case Verb::Report: return cmd.run_dir;
    case Verb::Build: return std::nullopt;
    }
    return std::nullopt;
}

} // namespace

int execute(const Command &cmd, std::ostream &out, std::ostream &err) {
    std::optional<Failure> failure;
    int code = kOk;
    try {
        switch (cmd.verb) {
        case Verb::Build: code = do_build(cmd, out); break;
        case Verb::Solve: code = do_solve(cmd, out); break;
        case Verb::Run: code = do_run(cmd, out, err); break;
        case Verb::Sweep: code = do_sweep(cmd, out); break;
        case Verb::Verify: code = do_verify(cmd, out); break;
        case Verb::Report: code = do_report(cmd, out); break;
        }
    } catch (const BackendError &e) {
        failure = Failure{kBackendFailure, "solve", e.what()};
    } catch (const VerificationError &e) {
        failure = Failure{kVerificationFailure, "verify", e.what()};
    } catch (const ValidationError &e) {
        failure = Failure{kUsage, "input", e.what()};
    } catch (const BuildError &e) {
        failure = Failure{kUsage, "build", e.what()};
    } catch (const std::exception &e) {
        failure = Failure{kBackendFailure, "run", e.what()};
    }
    if (!failure && code == kInfeasible) failure = Failure{kInfeasible, "solve", "no feasible solution"};
    if (!failure && code == kVerificationFailure)
        failure = Failure{kVerificationFailure, "verify", "verification failed"};
    if (!failure) return code;

    const json j = {{"error", {{"code", failure->code}, {"stage", failure->stage}, {"message", failure->message}}}};
    err << j.dump() << "\n";
    if (auto dir = error_dir(cmd)) {
        try {
            write_text(*dir / "error.json", j.dump(2));
        } catch (const std::exception &) {
        }
    }
    return failure->code;
}

int main(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    Command cmd;
    try {
        std::string help;
        try {
            cmd = parse_args(args, &help);
        } catch (const CLI::Success &) {
            out << help;
            return kOk;
        }
    } catch (const UsageError &e) {
        err << json{{"error", {{"code", int(kUsage)}, {"stage", "usage"}, {"message", e.what()}}}}.dump() << "\n";
        return kUsage;
    }
    return execute(cmd, out, err);
}

} // namespace storplan::cli
