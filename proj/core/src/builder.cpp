#include "storplan/builder.hpp"

#include <array>
#include <cmath>

#include "storplan/error.hpp"

namespace storplan {

using milp::kInf;
using milp::LinearExpr;
using milp::MilpModel;
using milp::Sense;
using milp::VarId;
using milp::VarKind;

std::string hourly_name(std::string_view symbol, std::size_t hour) {
    return std::string(symbol) + "_" + std::to_string(hour);
}

namespace {

std::string tag(std::string_view eq, std::size_t t = 0, std::size_t d = 0, std::size_t k = 0) {
    std::string s = "eq" + std::string(eq);
    if (t) s += "_t" + std::to_string(t);
    if (d) s += "_d" + std::to_string(d);
    if (k) s += "_k" + std::to_string(k);
    return s;
}

} // namespace

void validate_options(const Scenario &scenario, const VariantOptions &o) {
    if (o.variant < 1 || o.variant > 4)
        throw BuildError("variant must be 1, 2, 3 or 4 (got " + std::to_string(o.variant) + ")");
    if (o.piecewise()) {
        if (!scenario.curves)
            throw BuildError("variant " + std::to_string(o.variant) +
                             " needs efficiency curves but the scenario has none");
        if (!o.e_b_estimate || !(*o.e_b_estimate > 0.0) || !std::isfinite(*o.e_b_estimate))
            throw BuildError("variant " + std::to_string(o.variant) +
                             " needs a positive battery energy estimate");
    }
    if (o.gamma) {
        if (!(*o.gamma >= 0.0 && *o.gamma <= 1.0)) throw BuildError("gamma must be in [0,1]");
        if (!o.baseline_co2) throw BuildError("gamma given without a baseline CO2 total");
    }
    if (o.baseline_co2 && !(*o.baseline_co2 >= 0.0))
        throw BuildError("baseline CO2 must be >= 0");
    if (o.grid_on()) {
        if (!scenario.grid.enabled) throw BuildError("grid mode on but the scenario disables the grid");
        if (!scenario.series.price_m) throw BuildError("grid mode on but no price series");
    }
    if (o.tariff) {
        if (!o.grid_on()) throw BuildError("grid tariff requested in off-grid mode");
        if (!scenario.grid.tariff) throw BuildError("grid tariff requested but not configured");
    }
}

std::vector<std::pair<std::size_t, std::size_t>> month_partition(const Scenario &scenario) {
    static constexpr std::array<int, 12> kMonthDays = {31, 28, 31, 30, 31, 30,
                                                       31, 31, 30, 31, 30, 31};
    std::vector<std::pair<std::size_t, std::size_t>> months;
    const std::size_t days = scenario.hours / 24;
    if (scenario.grid.tariff && !scenario.grid.tariff->month_days.empty()) {
        std::size_t day = 0;
        for (int len : scenario.grid.tariff->month_days) {
            if (day >= days) break;
            const std::size_t end = std::min(days, day + static_cast<std::size_t>(len));
            months.emplace_back(day * 24, end * 24);
            day = end;
        }
        if (day != days)
            throw BuildError("grid.tariff.month_days covers " + std::to_string(day) +
                             " days but the horizon has " + std::to_string(days));
        return months;
    }
    // Calendar months of a non-leap year, wrapping at the year end.
    auto month_of = [&](std::size_t day_index) {
        int doy = (scenario.first_day - 1 + static_cast<int>(day_index)) % 365;
        int m = 0;
        while (doy >= kMonthDays[m]) doy -= kMonthDays[m++];
        return m;
    };
    std::size_t start = 0;
    for (std::size_t d = 1; d <= days; ++d) {
        if (d == days || month_of(d) != month_of(start)) {
            months.emplace_back(start * 24, d * 24);
            start = d;
        }
    }
    return months;
}

namespace {

class ModelAssembler {
public:
    ModelAssembler(const Scenario &s, const VariantOptions &o) : s_(s), o_(o) {}

    BuiltModel build() {
        BuiltModel out{MilpModel("storplan_v" + std::to_string(o_.variant)), {}};
        auto &m = out.model;
        auto &reg = out.registry;
        const std::size_t T = s_.hours;
        const auto &bat = s_.battery;
        const double big_m = s_.big_m();

        reg.x = m.add_variable("x", VarKind::Integer, 0.0, kInf);
        reg.c_pv = m.add_variable("c_PV", VarKind::Continuous);
        reg.c_w = m.add_variable("c_W", VarKind::Continuous);
        reg.c_b = m.add_variable("c_B", VarKind::Continuous);
        reg.e_b = m.add_variable("E_B", VarKind::Continuous);
        reg.soe0 = m.add_variable("SOE_0", VarKind::Continuous);
        if (o_.no_battery) {
            m.set_bounds(reg.c_b, 0.0, 0.0);
            m.set_bounds(reg.e_b, 0.0, 0.0);
        }

        const std::size_t K = o_.piecewise() ? s_.curves->level_count() : 0;
        const double grid_cap = s_.grid.cap_kw;
        for (std::size_t h = 1; h <= T; ++h) {
            reg.g_t.push_back(m.add_variable(hourly_name("g_T", h), VarKind::Continuous));
            reg.g_pv.push_back(m.add_variable(hourly_name("g_PV", h), VarKind::Continuous));
            reg.g_w.push_back(m.add_variable(hourly_name("g_W", h), VarKind::Continuous));
            if (o_.grid_on())
                reg.g_m.push_back(m.add_variable(hourly_name("g_M", h), VarKind::Continuous, 0.0,
                                                 grid_cap));
            reg.c.push_back(m.add_variable(hourly_name("c", h), VarKind::Continuous));
            reg.e_bc.push_back(m.add_variable(hourly_name("e_Bc", h), VarKind::Continuous));
            reg.e_bd.push_back(m.add_variable(hourly_name("e_Bd", h), VarKind::Continuous));
            reg.p_c.push_back(m.add_variable(hourly_name("P_c", h), VarKind::Continuous));
            reg.p_d.push_back(m.add_variable(hourly_name("P_d", h), VarKind::Continuous));
            reg.soe.push_back(m.add_variable(hourly_name("SOE", h), VarKind::Continuous));
            reg.w.push_back(m.add_variable(hourly_name("w", h), VarKind::Binary, 0.0, 1.0));
            if (o_.piecewise()) {
                const auto &curves = *s_.curves;
                reg.p_c_loss.push_back(m.add_variable(hourly_name("P_c_loss", h), VarKind::Continuous));
                reg.p_d_loss.push_back(m.add_variable(hourly_name("P_d_loss", h), VarKind::Continuous));
                reg.beta.push_back(m.add_variable(hourly_name("beta", h), VarKind::Continuous));
                std::vector<VarId> u;
                std::vector<std::vector<VarId>> vc(K), vd(K);
                for (std::size_t k = 1; k <= K; ++k)
                    u.push_back(m.add_variable(hourly_name("u", h) + "_" + std::to_string(k),
                                               VarKind::Binary, 0.0, 1.0));
                for (std::size_t k = 1; k <= K; ++k) {
                    for (std::size_t j = 1; j <= curves.levels[k - 1].charge.size(); ++j)
                        vc[k - 1].push_back(m.add_variable(hourly_name("v_c", h) + "_" +
                                                               std::to_string(k) + "_" +
                                                               std::to_string(j),
                                                           VarKind::Continuous));
                }
                for (std::size_t k = 1; k <= K; ++k) {
                    for (std::size_t i = 1; i <= curves.levels[k - 1].discharge.size(); ++i)
                        vd[k - 1].push_back(m.add_variable(hourly_name("v_d", h) + "_" +
                                                               std::to_string(k) + "_" +
                                                               std::to_string(i),
                                                           VarKind::Continuous));
                }
                reg.u.push_back(std::move(u));
                reg.v_c.push_back(std::move(vc));
                reg.v_d.push_back(std::move(vd));
            }
        }

        const auto &ts = s_.series;
        for (std::size_t t = 0; t < T; ++t) {
            const std::size_t h = t + 1;
            // Energy balance.
            LinearExpr bal;
            bal.add(reg.g_t[t], 1).add(reg.g_pv[t], 1).add(reg.g_w[t], 1).add(reg.e_bd[t], 1);
            if (o_.grid_on()) bal.add(reg.g_m[t], 1);
            bal.add(reg.e_bc[t], -1).add(reg.c[t], 1);
            m.add_constraint(bal, Sense::Equal, ts.load[t], tag("8", h));
            // Availability.
            m.add_constraint(LinearExpr{}.add(reg.g_t[t], 1).add(reg.x, -ts.af_t[t] * s_.thermal.sc_t),
                             Sense::LessEqual, 0.0, tag("9", h));
            m.add_constraint(LinearExpr{}.add(reg.g_pv[t], 1).add(reg.c_pv, -ts.af_pv[t]),
                             Sense::LessEqual, 0.0, tag("10", h));
            m.add_constraint(LinearExpr{}.add(reg.g_w[t], 1).add(reg.c_w, -ts.af_w[t]),
                             Sense::LessEqual, 0.0, tag("11", h));
            if (!o_.piecewise()) {
                m.add_constraint(LinearExpr{}.add(reg.e_bc[t], 1).add(reg.p_c[t], -1.0 / bat.eta_c),
                                 Sense::Equal, 0.0, tag("12", h));
                m.add_constraint(LinearExpr{}.add(reg.e_bd[t], 1).add(reg.p_d[t], -bat.eta_d),
                                 Sense::Equal, 0.0, tag("13", h));
            }
            // Charge/discharge exclusion and power limits.
            m.add_constraint(LinearExpr{}.add(reg.p_c[t], 1).add(reg.w[t], -big_m), Sense::LessEqual, 0.0,
                             tag("24", h));
            m.add_constraint(LinearExpr{}.add(reg.p_c[t], 1).add(reg.c_b, -bat.p_c_max), Sense::LessEqual,
                             0.0, tag("25", h));
            m.add_constraint(LinearExpr{}.add(reg.p_d[t], 1).add(reg.w[t], big_m), Sense::LessEqual, big_m,
                             tag("26", h));
            m.add_constraint(LinearExpr{}.add(reg.p_d[t], 1).add(reg.c_b, -bat.p_d_max), Sense::LessEqual,
                             0.0, tag("27", h));
            // SOE window; the upper bound moves to E_BD(d) with degradation.
            const char *lo_eq = o_.degradation() ? "46a" : "16a";
            m.add_constraint(LinearExpr{}.add(reg.soe[t], 1).add(reg.e_b, -bat.soc_min),
                             Sense::GreaterEqual, 0.0, tag(lo_eq, h));
            if (!o_.degradation())
                m.add_constraint(LinearExpr{}.add(reg.soe[t], 1).add(reg.e_b, -bat.soc_max),
                                 Sense::LessEqual, 0.0, tag("16b", h));
            // SOE dynamics.
            const VarId prev = t == 0 ? reg.soe0 : reg.soe[t - 1];
            m.add_constraint(LinearExpr{}
                                 .add(reg.soe[t], 1)
                                 .add(prev, -1)
                                 .add(reg.p_d[t], 1)
                                 .add(reg.p_c[t], -1),
                             Sense::Equal, 0.0, tag(t == 0 ? "17" : "18", h));
            if (o_.piecewise()) add_piecewise_rows(m, reg, t, prev, big_m);
        }
        m.add_constraint(LinearExpr{}.add(reg.soe0, 1).add(reg.e_b, -bat.soc_min), Sense::Equal, 0.0,
                         tag("19"));
        m.add_constraint(LinearExpr{}.add(reg.soe[T - 1], 1).add(reg.soe0, -(1.0 - bat.lambda)),
                         Sense::GreaterEqual, 0.0, tag("20a"));
        m.add_constraint(LinearExpr{}.add(reg.soe[T - 1], 1).add(reg.soe0, -(1.0 + bat.lambda)),
                         Sense::LessEqual, 0.0, tag("20b"));

        if (o_.degradation()) build_degradation(m, reg, s_);
        add_costs(m, reg);
        if (o_.tariff) build_grid_tariff_terms(m, reg, s_);
        if (o_.gamma) apply_carbon_cap(m, reg, s_, *o_.gamma, *o_.baseline_co2);
        return out;
    }

private:
    void add_piecewise_rows(MilpModel &m, VariableRegistry &reg, std::size_t t, VarId prev,
                            double big_m) {
        const auto &curves = *s_.curves;
        const std::size_t K = curves.level_count();
        const std::size_t h = t + 1;
        const double e_hat = *o_.e_b_estimate;

        m.add_constraint(LinearExpr{}.add(reg.e_bc[t], 1).add(reg.p_c[t], -1).add(reg.p_c_loss[t], -1),
                         Sense::Equal, 0.0, tag("28", h));
        m.add_constraint(LinearExpr{}.add(reg.e_bd[t], 1).add(reg.p_d[t], -1).add(reg.p_d_loss[t], 1),
                         Sense::Equal, 0.0, tag("29", h));
        // Average SOC over the hour against the fixed capacity estimate.
        m.add_constraint(LinearExpr{}.add(reg.beta[t], 2.0 * e_hat).add(prev, -1).add(reg.soe[t], -1),
                         Sense::Equal, 0.0, tag(t == 0 ? "30" : "31", h));

        LinearExpr pc{LinearExpr{}.add(reg.p_c[t], 1)}, pcl{LinearExpr{}.add(reg.p_c_loss[t], 1)};
        LinearExpr pd{LinearExpr{}.add(reg.p_d[t], 1)}, pdl{LinearExpr{}.add(reg.p_d_loss[t], 1)};
        LinearExpr upper{LinearExpr{}.add(reg.beta[t], 1)}, lower{LinearExpr{}.add(reg.beta[t], 1)};
        LinearExpr one_level;
        for (std::size_t k = 0; k < K; ++k) {
            const auto &level = curves.levels[k];
            for (std::size_t j = 0; j < level.charge.size(); ++j) {
                pc.add(reg.v_c[t][k][j], -1);
                pcl.add(reg.v_c[t][k][j], -level.charge[j].slope);
            }
            for (std::size_t i = 0; i < level.discharge.size(); ++i) {
                pd.add(reg.v_d[t][k][i], -1);
                pdl.add(reg.v_d[t][k][i], -level.discharge[i].slope);
            }
            upper.add(reg.u[t][k], -curves.soc_breaks[k + 1]);
            lower.add(reg.u[t][k], -curves.soc_breaks[k]);
            one_level.add(reg.u[t][k], 1);
        }
        m.add_constraint(pc, Sense::Equal, 0.0, tag("32", h));
        m.add_constraint(pcl, Sense::Equal, 0.0, tag("33", h));
        m.add_constraint(pd, Sense::Equal, 0.0, tag("34", h));
        m.add_constraint(pdl, Sense::Equal, 0.0, tag("35", h));
        m.add_constraint(upper, Sense::LessEqual, 0.0, tag("36", h));
        m.add_constraint(lower, Sense::GreaterEqual, 0.0, tag("37", h));

        // Piece caps scale with installed power; activation follows u(t,k).
        for (std::size_t k = 0; k < K; ++k) {
            const auto &level = curves.levels[k];
            LinearExpr act_c, act_d;
            for (std::size_t j = 0; j < level.charge.size(); ++j) {
                m.add_constraint(LinearExpr{}.add(reg.v_c[t][k][j], 1).add(reg.c_b, -level.charge[j].cap),
                                 Sense::LessEqual, 0.0,
                                 tag("38", h, 0, k + 1) + "_j" + std::to_string(j + 1));
                act_c.add(reg.v_c[t][k][j], 1);
            }
            act_c.add(reg.u[t][k], -big_m);
            m.add_constraint(act_c, Sense::LessEqual, 0.0, tag("38", h, 0, k + 1));
            for (std::size_t i = 0; i < level.discharge.size(); ++i) {
                m.add_constraint(
                    LinearExpr{}.add(reg.v_d[t][k][i], 1).add(reg.c_b, -level.discharge[i].cap),
                    Sense::LessEqual, 0.0, tag("39", h, 0, k + 1) + "_i" + std::to_string(i + 1));
                act_d.add(reg.v_d[t][k][i], 1);
            }
            act_d.add(reg.u[t][k], -big_m);
            m.add_constraint(act_d, Sense::LessEqual, 0.0, tag("39", h, 0, k + 1));
        }
        m.add_constraint(one_level, Sense::LessEqual, 1.0, tag("40", h));
    }

    void add_costs(MilpModel &m, VariableRegistry &reg) {
        const double tf = s_.time_factor;
        const double r = s_.policy.r;
        const auto &th = s_.thermal;
        const auto &bat = s_.battery;
        const std::size_t T = s_.hours;

        LinearExpr ct, cpv, cw, cb, clc, cm;
        ct.add(reg.x, th.sc_t * (th.if_t * annuity_factor(r, th.l_t) * tf + th.fom_t * tf));
        cpv.add(reg.c_pv, s_.pv.if_x * annuity_factor(r, s_.pv.l_x) * tf + s_.pv.fom_x * tf);
        cw.add(reg.c_w, s_.wind.if_x * annuity_factor(r, s_.wind.l_x) * tf + s_.wind.fom_x * tf);

        const double a_b = annuity_factor(r, bat.l_b);
        cb.add(reg.c_b, bat.ip_b * a_b * tf + bat.fom_b * tf);
        if (o_.degradation()) {
            cb.add(*reg.e_bl, bat.ie_b * a_b);
        } else {
            cb.add(reg.e_b, bat.ie_b * a_b * tf);
        }
        for (std::size_t t = 0; t < T; ++t) {
            ct.add(reg.g_t[t], th.variable_cost());
            cpv.add(reg.g_pv[t], s_.pv.vom_x);
            cw.add(reg.g_w[t], s_.wind.vom_x);
            cb.add(reg.e_bd[t], bat.vom_b).add(reg.e_bc[t], bat.vom_b);
            clc.add(reg.c[t], s_.policy.p_lc);
            if (o_.grid_on()) cm.add(reg.g_m[t], (*s_.series.price_m)[t]);
        }
        reg.cost_terms["C_T"] = ct.normalized();
        reg.cost_terms["C_PV"] = cpv.normalized();
        reg.cost_terms["C_W"] = cw.normalized();
        reg.cost_terms["C_B"] = cb.normalized();
        reg.cost_terms["C_LC"] = clc.normalized();
        reg.cost_terms["C_M"] = cm.normalized();
        for (const auto &[name, expr] : reg.cost_terms) m.add_objective(expr);
    }

    const Scenario &s_;
    const VariantOptions &o_;
};

} // namespace

void build_degradation(MilpModel &m, VariableRegistry &reg, const Scenario &s) {
    if (reg.soe.size() != s.hours) throw BuildError("build_degradation: base model not built");
    if (!reg.e_bd_day.empty()) throw BuildError("build_degradation: already applied");
    const auto &bat = s.battery;
    if (!(bat.p_weight >= 0.0 && bat.p_weight <= 1.0))
        throw BuildError("build_degradation: cycle weight p must be in [0,1]");
    const std::size_t D = s.days;
    if (s.hours != 24 * D) throw BuildError("build_degradation: horizon is not whole days");

    const double p = bat.p_weight;
    const double cycle = p * bat.eol_loss / bat.n_cycle;              // per kWh charged
    const double calendar_day = (1.0 - p) * bat.eol_loss / (365.0 * bat.l_b);  // per kWh installed
    const double calendar_horizon = (1.0 - p) * s.time_factor / bat.l_b * bat.eol_loss;

    for (std::size_t d = 1; d <= D; ++d)
        reg.e_bd_day.push_back(m.add_variable(hourly_name("E_BD", d), VarKind::Continuous));

    m.add_constraint(LinearExpr{}.add(reg.e_bd_day[0], 1).add(reg.e_b, -1), Sense::Equal, 0.0, tag("43"));
    for (std::size_t d = 2; d <= D; ++d) {
        LinearExpr row;
        row.add(reg.e_bd_day[d - 1], 1).add(reg.e_bd_day[d - 2], -1).add(reg.e_b, calendar_day);
        for (std::size_t t = 24 * (d - 2); t < 24 * (d - 1); ++t) row.add(reg.p_c[t], cycle);
        m.add_constraint(row, Sense::LessEqual, 0.0, tag("44", 0, d));
    }
    LinearExpr closure;
    closure.add(reg.e_bd_day[D - 1], 1).add(reg.e_b, -1.0 + calendar_horizon);
    for (std::size_t t = 0; t < s.hours; ++t) closure.add(reg.p_c[t], cycle);
    m.add_constraint(closure, Sense::LessEqual, 0.0, tag("45"));

    for (std::size_t t = 0; t < s.hours; ++t) {
        const std::size_t d = t / 24;
        m.add_constraint(
            LinearExpr{}.add(reg.soe[t], 1).add(reg.e_bd_day[d], -bat.soc_max), Sense::LessEqual, 0.0,
            tag("46b", t + 1, d + 1));
    }

    const double scale = bat.l_b / bat.eol_loss;
    reg.e_bl = LinearExpr{}.add(reg.e_b, scale).add(reg.e_bd_day[D - 1], -scale);
}

void build_grid_tariff_terms(MilpModel &m, VariableRegistry &reg, const Scenario &s) {
    if (!s.grid.enabled || reg.g_m.empty()) throw BuildError("grid tariff requires grid mode on");
    if (!s.series.price_m) throw BuildError("grid tariff requires a price series");
    if (!s.grid.tariff) throw BuildError("grid tariff parameters missing");
    if (!reg.s_month.empty()) throw BuildError("grid tariff already applied");
    const auto &tar = *s.grid.tariff;
    reg.months = month_partition(s);

    LinearExpr cost;
    for (std::size_t mi = 0; mi < reg.months.size(); ++mi) {
        const auto [b, e] = reg.months[mi];
        const VarId sm = m.add_variable("s_M_" + std::to_string(mi + 1), VarKind::Continuous);
        reg.s_month.push_back(sm);
        for (std::size_t t = b; t < e; ++t) {
            m.add_constraint(LinearExpr{}.add(sm, 1).add(reg.g_m[t], -1), Sense::GreaterEqual,
                             -tar.demand_threshold,
                             tag("7", t + 1) + "_m" + std::to_string(mi + 1));
        }
        cost.add(sm, tar.demand_charge).add_constant(tar.customer_charge);
    }
    m.add_objective(cost);
    auto &cm = reg.cost_terms["C_M"];
    cm.add(cost);
    cm = cm.normalized();
}

void apply_carbon_cap(MilpModel &m, VariableRegistry &reg, const Scenario &s, double gamma,
                      double baseline_co2) {
    if (reg.carbon_cap_applied || m.find_constraint("eq49")) throw BuildError("carbon cap already applied");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw BuildError("gamma must be in [0,1]");
    if (!(baseline_co2 >= 0.0)) throw BuildError("baseline CO2 must be >= 0");
    LinearExpr row;
    for (auto id : reg.g_t) row.add(id, s.thermal.co2_t);
    for (auto id : reg.g_m) row.add(id, s.grid.co2_m);
    m.add_constraint(row, Sense::LessEqual, gamma * baseline_co2, "eq49");
    reg.carbon_cap_applied = true;
}

BuiltModel build_model(const Scenario &scenario, const VariantOptions &options) {
    validate_options(scenario, options);
    return ModelAssembler(scenario, options).build();
}

} // namespace storplan
