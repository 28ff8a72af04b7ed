#include "storplan/verify.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "storplan/error.hpp"

namespace storplan::verify {

using milp::Sense;
using milp::VarKind;

namespace {

nlohmann::json violations_json(const std::vector<Violation> &list) {
    auto arr = nlohmann::json::array();
    for (const auto &v : list) arr.push_back({{"tag", v.tag}, {"amount", v.amount}, {"allowed", v.allowed}});
    return arr;
}

} // namespace

std::string ResidualReport::to_text() const {
    std::ostringstream os;
    os << "residual check (tol " << tolerance << "): " << (ok() ? "PASS" : "FAIL") << "\n";
    os << "  max constraint violation  " << max_constraint_violation << "\n";
    os << "  max bound violation       " << max_bound_violation << "\n";
    os << "  max integrality deviation " << max_integrality_deviation << "\n";
    auto list = [&](const char *title, const std::vector<Violation> &vs) {
        if (vs.empty()) return;
        os << "  " << title << " (" << vs.size() << "):\n";
        for (const auto &v : vs) os << "    " << v.tag << "  " << v.amount << " > " << v.allowed << "\n";
    };
    list("violated constraints", violated_constraints);
    list("violated bounds", violated_bounds);
    list("integrality failures", integrality_failures);
    return os.str();
}

std::string ResidualReport::to_json() const {
    nlohmann::json j = {
        {"ok", ok()},
        {"tolerance", tolerance},
        {"max_constraint_violation", max_constraint_violation},
        {"max_bound_violation", max_bound_violation},
        {"max_integrality_deviation", max_integrality_deviation},
        {"violated_constraints", violations_json(violated_constraints)},
        {"violated_bounds", violations_json(violated_bounds)},
        {"integrality_failures", violations_json(integrality_failures)},
    };
    return j.dump(2);
}

std::vector<double> dense_values(const milp::MilpModel &model, const solver::Solution &solution) {
    std::vector<double> x;
    x.reserve(model.variables().size());
    for (const auto &v : model.variables()) {
        auto it = solution.values.find(v.name);
        if (it == solution.values.end())
            throw VerificationError("solution has no value for variable '" + v.name + "'");
        x.push_back(it->second);
    }
    return x;
}

ResidualReport check_residuals(const milp::MilpModel &model, const solver::Solution &solution,
                               double tol) {
    if (!(tol > 0.0)) throw VerificationError("residual tolerance must be > 0");
    const auto x = dense_values(model, solution);
    ResidualReport rep;
    rep.tolerance = tol;

    for (const auto &row : model.constraints()) {
        double lhs = 0.0;
        for (const auto &t : row.terms) lhs += t.coef * x[t.var.index];
        double viol = 0.0;
        switch (row.sense) {
        case Sense::LessEqual: viol = lhs - row.rhs; break;
        case Sense::GreaterEqual: viol = row.rhs - lhs; break;
        case Sense::Equal: viol = std::fabs(lhs - row.rhs); break;
        }
        if (!std::isfinite(lhs)) viol = HUGE_VAL;
        viol = std::max(viol, 0.0);
        rep.max_constraint_violation = std::max(rep.max_constraint_violation, viol);
        const double allowed = tol * (1.0 + std::fabs(row.rhs));
        if (viol > allowed) rep.violated_constraints.push_back({row.tag, viol, allowed});
    }

    const auto &vars = model.variables();
    for (std::size_t i = 0; i < vars.size(); ++i) {
        const auto &v = vars[i];
        const double val = x[i];
        double viol = 0.0, ref = 0.0;
        if (!std::isfinite(val)) {
            viol = HUGE_VAL;
        } else if (val < v.lb) {
            viol = v.lb - val;
            ref = v.lb;
        } else if (val > v.ub) {
            viol = val - v.ub;
            ref = v.ub;
        }
        rep.max_bound_violation = std::max(rep.max_bound_violation, viol);
        const double allowed = tol * (1.0 + std::fabs(ref));
        if (viol > allowed) rep.violated_bounds.push_back({v.name, viol, allowed});
        if (v.kind != VarKind::Continuous && std::isfinite(val)) {
            const double dev = std::fabs(val - std::round(val));
            rep.max_integrality_deviation = std::max(rep.max_integrality_deviation, dev);
            if (dev > tol) rep.integrality_failures.push_back({v.name, dev, tol});
        }
    }
    return rep;
}

std::map<std::string, double> CostBreakdown::by_component() const {
    return {{"C_T", thermal}, {"C_PV", pv},  {"C_W", wind},
            {"C_B", battery}, {"C_LC", load_curtailment}, {"C_M", grid}};
}

namespace {

double sum_hourly(const solver::Solution &sol, const char *symbol, std::size_t T) {
    double s = 0.0;
    for (std::size_t h = 1; h <= T; ++h) s += sol.value(hourly_name(symbol, h));
    return s;
}

} // namespace

CostBreakdown recompute_costs(const Scenario &s, const solver::Solution &sol,
                              const VariantOptions &options) {
    if (!sol.has_values()) throw VerificationError("cannot recompute costs without solution values");
    const std::size_t T = s.hours;
    const double tf = s.time_factor;
    const double r = s.policy.r;
    CostBreakdown c;

    const auto &th = s.thermal;
    c.thermal = sol.value("x") * th.sc_t * (th.if_t * annuity_factor(r, th.l_t) + th.fom_t) * tf +
                (th.vom_t + th.fuel_t) * sum_hourly(sol, "g_T", T);
    c.pv = sol.value("c_PV") * (s.pv.if_x * annuity_factor(r, s.pv.l_x) + s.pv.fom_x) * tf +
           s.pv.vom_x * sum_hourly(sol, "g_PV", T);
    c.wind = sol.value("c_W") * (s.wind.if_x * annuity_factor(r, s.wind.l_x) + s.wind.fom_x) * tf +
             s.wind.vom_x * sum_hourly(sol, "g_W", T);

    const auto &b = s.battery;
    const double a_b = annuity_factor(r, b.l_b);
    const double e_b = sol.value("E_B");
    double energy_basis = e_b * tf;
    if (options.degradation()) {
        const double e_end = sol.value(hourly_name("E_BD", s.days));
        energy_basis = (e_b - e_end) * b.l_b / b.eol_loss;
    }
    c.battery = sol.value("c_B") * (b.ip_b * a_b + b.fom_b) * tf + energy_basis * b.ie_b * a_b +
                b.vom_b * (sum_hourly(sol, "e_Bc", T) + sum_hourly(sol, "e_Bd", T));
    c.load_curtailment = s.policy.p_lc * sum_hourly(sol, "c", T);

    if (options.grid_on()) {
        const auto &price = *s.series.price_m;
        for (std::size_t h = 1; h <= T; ++h) c.grid += price[h - 1] * sol.value(hourly_name("g_M", h));
        if (options.tariff && s.grid.tariff) {
            const auto &tar = *s.grid.tariff;
            for (const auto &[begin, end] : month_partition(s)) {
                double peak = 0.0;
                for (std::size_t t = begin; t < end; ++t)
                    peak = std::max(peak, sol.value(hourly_name("g_M", t + 1)));
                c.grid += tar.customer_charge + tar.demand_charge * std::max(0.0, peak - tar.demand_threshold);
            }
        }
    }
    return c;
}

CostCheck reconcile_costs(const CostBreakdown &recomputed, const solver::Solution &solution,
                          const milp::MilpModel *model, const VariableRegistry *registry,
                          double rel_tol) {
    CostCheck chk;
    chk.recomputed_total = recomputed.total();
    chk.objective = solution.objective;
    chk.relative_error = std::fabs(chk.recomputed_total - chk.objective) /
                         std::max(1.0, std::fabs(chk.objective));
    chk.ok = chk.relative_error <= rel_tol;
    if (chk.ok) return chk;
    const auto parts = recomputed.by_component();
    if (model && registry) {
        const auto x = dense_values(*model, solution);
        for (const auto &[name, value] : parts) {
            auto it = registry->cost_terms.find(name);
            const double mv = it == registry->cost_terms.end() ? 0.0 : it->second.evaluate(x);
            chk.diffs.push_back({name, value, mv});
        }
    } else {
        for (const auto &[name, value] : parts) chk.diffs.push_back({name, value, std::nan("")});
    }
    return chk;
}

DegradationTrajectory degradation_oracle(std::span<const double> p_c, double e_b,
                                         const BatteryParams &battery, double time_factor) {
    if (p_c.empty() || p_c.size() % 24 != 0)
        throw ValidationError("degradation oracle: charging series length must be a positive multiple of 24");
    if (!(e_b >= 0.0)) throw ValidationError("degradation oracle: E_B must be >= 0");
    for (std::size_t t = 0; t < p_c.size(); ++t) {
        if (!(p_c[t] >= 0.0))
            throw ValidationError("degradation oracle: negative charging power at hour " +
                                  std::to_string(t + 1));
    }
    const std::size_t D = p_c.size() / 24;
    const double p = battery.p_weight;
    const double cycle = p * battery.eol_loss / battery.n_cycle;
    const double calendar_day = (1.0 - p) * battery.eol_loss / (365.0 * battery.l_b) * e_b;

    DegradationTrajectory out;
    out.e_bd.reserve(D);
    out.e_bd.push_back(e_b);
    double total_charge = 0.0;
    for (std::size_t d = 1; d <= D; ++d) {
        double day_charge = 0.0;
        for (std::size_t t = 24 * (d - 1); t < 24 * d; ++t) day_charge += p_c[t];
        total_charge += day_charge;
        if (d < D) out.e_bd.push_back(out.e_bd.back() - cycle * day_charge - calendar_day);
    }
    out.closure = e_b - cycle * total_charge -
                  (1.0 - p) * time_factor / battery.l_b * battery.eol_loss * e_b;
    out.e_bl = (e_b - out.closure) * battery.l_b / battery.eol_loss;
    return out;
}

namespace {

DegradationTrajectory trajectory_of(const Scenario &s, const solver::Solution &sol) {
    std::vector<double> p_c(s.hours);
    // Solver round-off can leave P_c a hair below zero.
    for (std::size_t h = 1; h <= s.hours; ++h) p_c[h - 1] = std::max(0.0, sol.value(hourly_name("P_c", h)));
    return degradation_oracle(p_c, sol.value("E_B"), s.battery, s.time_factor);
}

} // namespace

DegradationCheck check_degradation(const Scenario &s, const solver::Solution &sol, double rel_tol) {
    DegradationCheck chk;
    const auto traj = trajectory_of(s, sol);
    const double allowed = rel_tol * std::max(1.0, sol.value("E_B"));
    for (std::size_t d = 1; d <= s.days; ++d) {
        const double value = sol.value(hourly_name("E_BD", d));
        const double expected = d < s.days ? traj.e_bd[d - 1] : traj.closure;
        const double dev = std::fabs(value - expected);
        if (d < s.days) chk.max_excess = std::max(chk.max_excess, value - traj.e_bd[d - 1]);
        if (d == s.days) chk.closure_deviation = dev;
        chk.max_deviation = std::max(chk.max_deviation, dev);
        if (dev > allowed) chk.mismatched_days.push_back(hourly_name("E_BD", d));
    }
    chk.ok = chk.mismatched_days.empty();
    return chk;
}

solver::Solution lift_degradation_chain(const Scenario &s, const solver::Solution &sol, double *max_lift) {
    solver::Solution out = sol;
    double lift = 0.0;
    if (sol.has_values() && s.days > 2) {
        const auto traj = trajectory_of(s, sol);
        for (std::size_t d = 2; d < s.days; ++d) {
            double &v = out.values.at(hourly_name("E_BD", d));
            lift = std::max(lift, std::fabs(traj.e_bd[d - 1] - v));
            v = traj.e_bd[d - 1];
        }
    }
    if (max_lift) *max_lift = lift;
    return out;
}

// ------------------------------------------------------------------ MPS reader

namespace {

double to_number(std::string_view s, std::size_t line) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        if (s == "inf" || s == "Inf" || s == "1e+30" || s == "Infinity") return milp::kInf;
        if (s == "-inf" || s == "-Inf" || s == "-Infinity") return -milp::kInf;
        throw VerificationError("MPS line " + std::to_string(line) + ": bad number '" + std::string(s) + "'");
    }
    return v;
}

} // namespace

milp::MilpModel read_mps(const std::string &text) {
    enum class Section { None, Rows, Columns, Rhs, Ranges, Bounds, End };
    Section sec = Section::None;
    std::string name = "storplan";
    std::string objective_row;
    double constant = 0.0;

    struct RowInfo {
        std::string name;
        Sense sense;
        std::vector<std::pair<std::size_t, double>> terms;  // (column, coef)
        double rhs = 0.0;
    };
    struct ColInfo {
        std::string name;
        VarKind kind = VarKind::Continuous;
        double lb = 0.0, ub = milp::kInf;
        bool ub_set = false;
        double obj = 0.0;
    };
    std::vector<RowInfo> rows;
    std::vector<ColInfo> cols;
    std::unordered_map<std::string, std::size_t> row_idx, col_idx;
    bool in_int = false;

    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    auto fail = [&](const std::string &msg) {
        throw VerificationError("MPS line " + std::to_string(lineno) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '*') {
            static const std::string kConst = "* objective constant:";
            if (line.rfind(kConst, 0) == 0) {
                std::istringstream cs(line.substr(kConst.size()));
                std::string tok;
                cs >> tok;
                constant += to_number(tok, lineno);
            }
            continue;
        }
        std::istringstream ls(line);
        std::vector<std::string> tk;
        for (std::string t; ls >> t;) tk.push_back(t);
        if (tk.empty()) continue;
        if (line[0] != ' ' && line[0] != '\t') {
            const std::string &head = tk[0];
            if (head == "NAME") {
                if (tk.size() > 1) name = tk[1];
            } else if (head == "ROWS") {
                sec = Section::Rows;
            } else if (head == "COLUMNS") {
                sec = Section::Columns;
            } else if (head == "RHS") {
                sec = Section::Rhs;
            } else if (head == "RANGES") {
                sec = Section::Ranges;
            } else if (head == "BOUNDS") {
                sec = Section::Bounds;
            } else if (head == "ENDATA") {
                sec = Section::End;
            } else if (head == "OBJSENSE") {
                // Only minimisation is produced by the writer.
            } else {
                fail("unknown section '" + head + "'");
            }
            continue;
        }
        switch (sec) {
        case Section::Rows: {
            if (tk.size() != 2) fail("expected '<type> <row>'");
            if (tk[0] == "N") {
                if (objective_row.empty()) objective_row = tk[1];
                continue;
            }
            Sense sense = tk[0] == "L"   ? Sense::LessEqual
                          : tk[0] == "G" ? Sense::GreaterEqual
                          : tk[0] == "E" ? Sense::Equal
                                         : (fail("bad row type '" + tk[0] + "'"), Sense::Equal);
            if (row_idx.count(tk[1])) fail("duplicate row '" + tk[1] + "'");
            row_idx.emplace(tk[1], rows.size());
            rows.push_back({tk[1], sense, {}, 0.0});
            break;
        }
        case Section::Columns: {
            if (tk.size() >= 3 && tk[1] == "'MARKER'") {
                if (tk[2] == "'INTORG'")
                    in_int = true;
                else if (tk[2] == "'INTEND'")
                    in_int = false;
                else
                    fail("bad marker");
                continue;
            }
            if (tk.size() != 3 && tk.size() != 5) fail("expected '<col> <row> <value> [<row> <value>]'");
            auto [it, inserted] = col_idx.try_emplace(tk[0], cols.size());
            if (inserted) {
                ColInfo c;
                c.name = tk[0];
                if (in_int) {
                    c.kind = VarKind::Integer;
                    // Classic MPS convention: integer columns default to [0,1]
                    // unless a bound says otherwise; the writer always says so.
                }
                cols.push_back(c);
            } else if (it->second + 1 != cols.size()) {
                fail("column '" + tk[0] + "' entries are not contiguous");
            }
            const std::size_t c = it->second;
            for (std::size_t k = 1; k + 1 < tk.size(); k += 2) {
                const double v = to_number(tk[k + 1], lineno);
                if (tk[k] == objective_row) {
                    cols[c].obj += v;
                    continue;
                }
                auto r = row_idx.find(tk[k]);
                if (r == row_idx.end()) fail("unknown row '" + tk[k] + "'");
                rows[r->second].terms.emplace_back(c, v);
            }
            break;
        }
        case Section::Rhs: {
            if (tk.size() != 3 && tk.size() != 5) fail("expected '<set> <row> <value>'");
            for (std::size_t k = 1; k + 1 < tk.size(); k += 2) {
                const double v = to_number(tk[k + 1], lineno);
                if (tk[k] == objective_row) {
                    constant -= v;
                    continue;
                }
                auto r = row_idx.find(tk[k]);
                if (r == row_idx.end()) fail("unknown row '" + tk[k] + "'");
                rows[r->second].rhs = v;
            }
            break;
        }
        case Section::Ranges:
            throw VerificationError("MPS line " + std::to_string(lineno) + ": RANGES are not supported");
        case Section::Bounds: {
            if (tk.size() < 3) fail("expected '<type> <set> <col> [<value>]'");
            auto it = col_idx.find(tk[2]);
            if (it == col_idx.end()) fail("unknown column '" + tk[2] + "'");
            auto &c = cols[it->second];
            const std::string &type = tk[0];
            auto value = [&]() {
                if (tk.size() < 4) fail("bound '" + type + "' needs a value");
                return to_number(tk[3], lineno);
            };
            if (type == "UP") {
                c.ub = value();
                c.ub_set = true;
            } else if (type == "LO") {
                c.lb = value();
            } else if (type == "FX") {
                c.lb = c.ub = value();
                c.ub_set = true;
            } else if (type == "FR") {
                c.lb = -milp::kInf;
                c.ub = milp::kInf;
                c.ub_set = true;
            } else if (type == "MI") {
                c.lb = -milp::kInf;
            } else if (type == "PL") {
                c.ub = milp::kInf;
                c.ub_set = true;
            } else if (type == "BV") {
                c.kind = VarKind::Binary;
                c.lb = 0.0;
                c.ub = 1.0;
                c.ub_set = true;
            } else if (type == "LI") {
                c.kind = VarKind::Integer;
                c.lb = value();
            } else if (type == "UI") {
                c.kind = VarKind::Integer;
                c.ub = value();
                c.ub_set = true;
            } else {
                fail("unknown bound type '" + type + "'");
            }
            break;
        }
        case Section::None:
        case Section::End:
            fail("data outside a section");
        }
    }
    if (sec != Section::End) throw VerificationError("MPS document has no ENDATA");

    milp::MilpModel model(name);
    for (const auto &c : cols) {
        double ub = c.ub;
        if (c.kind == VarKind::Integer && !c.ub_set) ub = 1.0;
        model.add_variable(c.name, c.kind, c.lb, ub);
    }
    for (const auto &r : rows) {
        std::vector<milp::Term> terms;
        terms.reserve(r.terms.size());
        for (const auto &[c, v] : r.terms) terms.push_back({milp::VarId{static_cast<std::uint32_t>(c)}, v});
        model.add_constraint(std::span<const milp::Term>(terms), r.sense, r.rhs, r.name);
    }
    milp::LinearExpr obj;
    for (std::size_t c = 0; c < cols.size(); ++c)
        if (cols[c].obj != 0.0) obj.add(milp::VarId{static_cast<std::uint32_t>(c)}, cols[c].obj);
    obj.add_constant(constant);
    model.add_objective(obj);
    return model;
}

} // namespace storplan::verify
