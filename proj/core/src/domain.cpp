#include "storplan/domain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <toml++/toml.hpp>

#include "storplan/error.hpp"

namespace storplan {

namespace {

std::string read_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string fmt_num(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

void require(bool cond, const std::string &message) {
    if (!cond) throw ValidationError(message);
}

void require_finite_nonneg(double v, const std::string &field) {
    require(std::isfinite(v) && v >= 0.0, field + " must be finite and >= 0 (got " + fmt_num(v) + ")");
}

} // namespace

std::size_t EfficiencyCurveSet::max_charge_pieces() const {
    std::size_t n = 0;
    for (const auto &level : levels) n = std::max(n, level.charge.size());
    return n;
}

std::size_t EfficiencyCurveSet::max_discharge_pieces() const {
    std::size_t n = 0;
    for (const auto &level : levels) n = std::max(n, level.discharge.size());
    return n;
}

double Scenario::total_load() const {
    return std::accumulate(series.load.begin(), series.load.end(), 0.0);
}

double annuity_factor(double r, double life_years) {
    if (!(r > 0.0) || !std::isfinite(r))
        throw ValidationError("annuity_factor: discount rate must be > 0 (got " + fmt_num(r) + ")");
    if (!(life_years >= 1.0) || !std::isfinite(life_years))
        throw ValidationError("annuity_factor: life must be >= 1 year (got " + fmt_num(life_years) + ")");
    // -expm1(-l*log1p(r)) = 1 - (1+r)^-l without cancellation for small r.
    return r / -std::expm1(-life_years * std::log1p(r));
}

CurveDiagnostics validate_curves(const EfficiencyCurveSet &curves) {
    CurveDiagnostics diag;
    auto fail = [&](std::string msg) {
        diag.ok = false;
        diag.messages.push_back(std::move(msg));
    };

    const auto &b = curves.soc_breaks;
    const std::size_t k = curves.levels.size();
    if (k == 0) fail("curves: at least one SOC level is required");
    if (b.size() != k + 1) {
        fail("curves: soc_breaks has " + std::to_string(b.size()) + " entries, expected levels+1 = " +
             std::to_string(k + 1));
    }
    if (!b.empty()) {
        if (b.front() != 0.0) fail("curves: soc_breaks must start at 0 (got " + fmt_num(b.front()) + ")");
        if (b.back() != 1.0) fail("curves: soc_breaks must end at 1 (got " + fmt_num(b.back()) + ")");
        for (std::size_t i = 1; i < b.size(); ++i) {
            if (!(b[i] > b[i - 1]))
                fail("curves: soc_breaks not strictly increasing at index " + std::to_string(i));
        }
    }

    auto check_pieces = [&](const std::vector<CurvePiece> &pieces, std::size_t level,
                            const char *side) {
        const std::string where = std::string("curves: level ") + std::to_string(level + 1) + " " + side;
        if (pieces.empty()) fail(where + " has no pieces");
        double total = 0.0;
        for (std::size_t p = 0; p < pieces.size(); ++p) {
            const auto &piece = pieces[p];
            if (!(piece.cap > 0.0) || !std::isfinite(piece.cap))
                fail(where + " piece " + std::to_string(p + 1) + " cap must be > 0");
            if (!(piece.slope >= 0.0) || !std::isfinite(piece.slope))
                fail(where + " piece " + std::to_string(p + 1) + " slope must be >= 0");
            if (p > 0 && piece.slope < pieces[p - 1].slope)
                fail(where + " slopes decrease at piece " + std::to_string(p + 1) + " (" +
                     fmt_num(pieces[p - 1].slope) + " -> " + fmt_num(piece.slope) +
                     "); losses must be convex");
            total += piece.cap;
        }
        return total;
    };

    for (std::size_t level = 0; level < k; ++level) {
        diag.max_charge_power.push_back(check_pieces(curves.levels[level].charge, level, "charge"));
        diag.max_discharge_power.push_back(
            check_pieces(curves.levels[level].discharge, level, "discharge"));
    }
    return diag;
}

Scenario finalize_scenario(Scenario s) {
    auto &ts = s.series;
    const std::size_t t = ts.load.size();
    require(t >= 24, "series: at least 24 hours required (got " + std::to_string(t) + ")");
    require(t % 24 == 0, "series: hour count " + std::to_string(t) + " is not a multiple of 24");
    auto check_len = [&](const std::vector<double> &col, const char *name) {
        require(col.size() == t, std::string("series: column ") + name + " has " +
                                     std::to_string(col.size()) + " rows, load has " +
                                     std::to_string(t));
    };
    check_len(ts.af_pv, "af_pv");
    check_len(ts.af_w, "af_wind");
    check_len(ts.af_t, "af_thermal");
    if (ts.price_m) check_len(*ts.price_m, "price_usd_per_kwh");

    for (std::size_t h = 0; h < t; ++h) {
        const std::string row = " at hour " + std::to_string(h + 1);
        require(std::isfinite(ts.load[h]) && ts.load[h] >= 0.0,
                "series: load_kw" + row + " must be >= 0 (got " + fmt_num(ts.load[h]) + ")");
        auto check_af = [&](double v, const char *name) {
            require(std::isfinite(v) && v >= 0.0 && v <= 1.0, std::string("series: ") + name + row +
                                                                  " = " + fmt_num(v) +
                                                                  " outside [0,1]");
        };
        check_af(ts.af_pv[h], "af_pv");
        check_af(ts.af_w[h], "af_wind");
        check_af(ts.af_t[h], "af_thermal");
        if (ts.price_m) {
            require(std::isfinite((*ts.price_m)[h]),
                    "series: price_usd_per_kwh" + row + " is not finite");
        }
    }
    if (s.grid.enabled) {
        require(ts.price_m.has_value(),
                "series: grid mode enabled but column price_usd_per_kwh is missing");
    }

    const auto &th = s.thermal;
    require_finite_nonneg(th.if_t, "thermal.investment_cost");
    require_finite_nonneg(th.fom_t, "thermal.fom_cost");
    require_finite_nonneg(th.vom_t, "thermal.vom_cost");
    require_finite_nonneg(th.fuel_t, "thermal.fuel_cost");
    require_finite_nonneg(th.co2_t, "thermal.unit_co2");
    require(th.sc_t > 0.0 && std::isfinite(th.sc_t), "thermal.unit_capacity must be > 0");
    require(th.l_t >= 1.0, "thermal.life_time must be >= 1");
    for (auto [ren, name] : {std::pair{&s.pv, "pv"}, std::pair{&s.wind, "wind"}}) {
        const std::string n(name);
        require_finite_nonneg(ren->if_x, n + ".investment_cost");
        require_finite_nonneg(ren->fom_x, n + ".fom_cost");
        require_finite_nonneg(ren->vom_x, n + ".vom_cost");
        require(ren->l_x >= 1.0, n + ".life_time must be >= 1");
    }

    const auto &b = s.battery;
    for (auto [v, name] : {std::pair{b.ip_b, "battery.power_investment"},
                           std::pair{b.ie_b, "battery.energy_investment"},
                           std::pair{b.fom_b, "battery.fom_cost"},
                           std::pair{b.vom_b, "battery.vom_cost"},
                           std::pair{b.p_c_max, "battery.max_charging_power"},
                           std::pair{b.p_d_max, "battery.max_discharging_power"}}) {
        require_finite_nonneg(v, name);
    }
    require(b.l_b >= 1.0, "battery.lifetime must be >= 1");
    require(b.n_cycle > 0.0 && std::isfinite(b.n_cycle), "battery.cycle_life must be > 0");
    require(b.soc_min >= 0.0 && b.soc_min < b.soc_max && b.soc_max <= 1.0,
            "battery: require 0 <= soc_lower_limit < soc_upper_limit <= 1");
    require(b.eta_c > 0.0 && b.eta_c <= 1.0, "battery.charge_efficiency must be in (0,1]");
    require(b.eta_d > 0.0 && b.eta_d <= 1.0, "battery.discharge_efficiency must be in (0,1]");
    require(b.eol_loss > 0.0 && b.eol_loss < 1.0,
            "battery: end-of-life loss budget must be in (0,1) (got " + fmt_num(b.eol_loss) + ")");
    require(b.p_weight >= 0.0 && b.p_weight <= 1.0, "battery.cycle_weight must be in [0,1]");
    require(b.lambda >= 0.0 && b.lambda < 1.0, "battery.wrap_up_tolerance must be in [0,1)");

    require(s.grid.cap_kw >= 0.0, "grid.max_purchase_kw must be >= 0");
    require_finite_nonneg(s.grid.co2_m, "grid.unit_co2");
    if (s.grid.tariff) {
        const auto &tar = *s.grid.tariff;
        require_finite_nonneg(tar.customer_charge, "grid.tariff.customer_charge");
        require_finite_nonneg(tar.demand_charge, "grid.tariff.demand_charge");
        require_finite_nonneg(tar.demand_threshold, "grid.tariff.demand_threshold");
        for (int d : tar.month_days) require(d > 0, "grid.tariff.month_days entries must be > 0");
    }

    const auto &pol = s.policy;
    require(pol.r > 0.0 && std::isfinite(pol.r), "grid.discount_rate must be > 0");
    require_finite_nonneg(pol.p_lc, "grid.load_curtailment");
    require(pol.big_m_multiplier > 0.0, "policy.big_m_multiplier must be > 0");
    require(pol.mip_gap > 0.0 && pol.mip_gap < 1.0, "policy.mip_gap must be in (0,1)");
    if (pol.gamma) require(*pol.gamma >= 0.0 && *pol.gamma <= 1.0, "policy.gamma must be in [0,1]");

    if (s.curves) {
        auto diag = validate_curves(*s.curves);
        if (!diag.ok) {
            std::string msg = "invalid efficiency curves:";
            for (const auto &m : diag.messages) msg += "\n  " + m;
            throw ValidationError(msg);
        }
    }
    for (const auto &[name, level] : s.battery_cost_levels) {
        require_finite_nonneg(level.ip_b, "battery.cost_levels." + name + ".power_investment");
        require_finite_nonneg(level.ie_b, "battery.cost_levels." + name + ".energy_investment");
        require_finite_nonneg(level.fom_b, "battery.cost_levels." + name + ".fom_cost");
        require_finite_nonneg(level.vom_b, "battery.cost_levels." + name + ".vom_cost");
    }

    require(s.first_day >= 1 && s.first_day <= 365, "first_day must be in [1,365]");
    s.hours = t;
    s.days = t / 24;
    require(s.days <= 365, "series: horizon longer than 365 days");
    s.time_factor = static_cast<double>(s.days) / 365.0;
    s.peak_load = *std::max_element(ts.load.begin(), ts.load.end());
    return s;
}

// ---------------------------------------------------------------- series CSV

namespace {

std::vector<std::string> split_csv_line(const std::string &line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) {
        auto b = cell.find_first_not_of(" \t\r");
        auto e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_cell(const std::string &cell, const std::string &where) {
    try {
        std::size_t used = 0;
        double v = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
        return v;
    } catch (const std::exception &) {
        throw ValidationError(where + ": cannot parse number '" + cell + "'");
    }
}

} // namespace

TimeSeriesBundle parse_series_csv(const std::string &text, bool require_price,
                                  const std::string &source) {
    static const std::vector<std::string> kHeader = {
        "hour", "load_kw", "af_pv", "af_wind", "af_thermal", "price_usd_per_kwh"};
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    TimeSeriesBundle ts;
    std::vector<double> price;
    std::size_t price_count = 0;

    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        auto cells = split_csv_line(line);
        if (!header_seen) {
            std::vector<std::string> head = cells;
            if (head.size() == 5) head.emplace_back("price_usd_per_kwh");
            if (head != kHeader) {
                throw ValidationError(source + " line " + std::to_string(lineno) +
                                      ": expected header "
                                      "hour,load_kw,af_pv,af_wind,af_thermal,price_usd_per_kwh");
            }
            header_seen = true;
            continue;
        }
        const std::string where = source + " line " + std::to_string(lineno);
        if (cells.size() < 5 || cells.size() > 6)
            throw ValidationError(where + ": expected 5 or 6 columns, got " +
                                  std::to_string(cells.size()));
        const double hour = parse_cell(cells[0], where + " column hour");
        const std::size_t expected = ts.load.size() + 1;
        if (hour != static_cast<double>(expected))
            throw ValidationError(where + ": hour " + cells[0] + " out of sequence, expected " +
                                  std::to_string(expected));
        ts.load.push_back(parse_cell(cells[1], where + " column load_kw"));
        ts.af_pv.push_back(parse_cell(cells[2], where + " column af_pv"));
        ts.af_w.push_back(parse_cell(cells[3], where + " column af_wind"));
        ts.af_t.push_back(parse_cell(cells[4], where + " column af_thermal"));
        if (cells.size() == 6 && !cells[5].empty()) {
            price.push_back(parse_cell(cells[5], where + " column price_usd_per_kwh"));
            ++price_count;
        } else {
            price.push_back(0.0);
        }
        auto af_check = [&](double v, const char *col) {
            if (!(v >= 0.0 && v <= 1.0))
                throw ValidationError(where + " (hour " + std::to_string(expected) + "): " + col +
                                      " = " + fmt_num(v) + " outside [0,1]");
        };
        af_check(ts.af_pv.back(), "af_pv");
        af_check(ts.af_w.back(), "af_wind");
        af_check(ts.af_t.back(), "af_thermal");
        if (!(ts.load.back() >= 0.0))
            throw ValidationError(where + " (hour " + std::to_string(expected) +
                                  "): load_kw must be >= 0");
    }
    if (!header_seen) throw ValidationError(source + ": empty series file");
    if (price_count == ts.load.size() && price_count > 0) {
        ts.price_m = std::move(price);
    } else if (price_count > 0) {
        throw ValidationError(source + ": column price_usd_per_kwh is only partially filled (" +
                              std::to_string(price_count) + " of " +
                              std::to_string(ts.load.size()) + " rows)");
    }
    if (require_price && !ts.price_m)
        throw ValidationError(source + ": grid mode enabled but column price_usd_per_kwh is missing");
    return ts;
}

TimeSeriesBundle load_series_csv(const std::filesystem::path &path, bool require_price) {
    return parse_series_csv(read_file(path), require_price, path.string());
}

// ------------------------------------------------------------------- TOML

namespace {

class TableReader {
public:
    TableReader(const toml::table *table, std::string path, std::string source)
        : table_(table), path_(std::move(path)), source_(std::move(source)) {}

    bool present() const { return table_ != nullptr; }

    template <typename T>
    void read(const char *key, T &out) {
        seen_.insert(key);
        if (!table_) return;
        const toml::node *node = table_->get(key);
        if (!node) return;
        assign(*node, key, out);
    }

    template <typename T>
    void read_opt(const char *key, std::optional<T> &out) {
        seen_.insert(key);
        if (!table_) return;
        const toml::node *node = table_->get(key);
        if (!node) return;
        T v{};
        assign(*node, key, v);
        out = v;
    }

    TableReader sub(const char *key) {
        seen_.insert(key);
        const toml::table *t = nullptr;
        if (table_) {
            if (const toml::node *node = table_->get(key)) {
                t = node->as_table();
                if (!t) fail(key, "must be a table");
            }
        }
        return TableReader(t, qualified(key), source_);
    }

    const toml::table *raw() const { return table_; }
    void mark(const char *key) { seen_.insert(key); }

    /// Rejects keys that were never read.
    void finish() const {
        if (!table_) return;
        for (const auto &[key, node] : *table_) {
            if (!seen_.count(std::string(key.str())))
                throw ValidationError(source_ + ": unknown key '" + qualified(std::string(key.str())) +
                                      "'");
        }
    }

    [[noreturn]] void fail(const std::string &key, const std::string &what) const {
        throw ValidationError(source_ + ": '" + qualified(key) + "' " + what);
    }

    std::string qualified(const std::string &key) const {
        return path_.empty() ? key : path_ + "." + key;
    }

private:
    void assign(const toml::node &node, const char *key, double &out) const {
        if (auto v = node.value<double>()) {
            out = *v;
            return;
        }
        fail(key, "must be a number");
    }
    void assign(const toml::node &node, const char *key, bool &out) const {
        if (auto v = node.value_exact<bool>()) {
            out = *v;
            return;
        }
        fail(key, "must be a boolean");
    }
    void assign(const toml::node &node, const char *key, int &out) const {
        if (auto v = node.value_exact<int64_t>()) {
            out = static_cast<int>(*v);
            return;
        }
        fail(key, "must be an integer");
    }
    void assign(const toml::node &node, const char *key, std::string &out) const {
        if (auto v = node.value_exact<std::string>()) {
            out = *v;
            return;
        }
        fail(key, "must be a string");
    }
    void assign(const toml::node &node, const char *key, std::vector<int> &out) const {
        const toml::array *arr = node.as_array();
        if (!arr) fail(key, "must be an array of integers");
        out.clear();
        for (const auto &el : *arr) {
            auto v = el.value_exact<int64_t>();
            if (!v) fail(key, "must be an array of integers");
            out.push_back(static_cast<int>(*v));
        }
    }
    void assign(const toml::node &node, const char *key, std::vector<double> &out) const {
        const toml::array *arr = node.as_array();
        if (!arr) fail(key, "must be an array of numbers");
        out.clear();
        for (const auto &el : *arr) {
            auto v = el.value<double>();
            if (!v) fail(key, "must be an array of numbers");
            out.push_back(*v);
        }
    }

    const toml::table *table_;
    std::string path_;
    std::string source_;
    std::set<std::string> seen_;
};

toml::table parse_toml(const std::string &text, const std::string &source) {
    try {
        return toml::parse(text, std::string_view(source));
    } catch (const toml::parse_error &err) {
        std::ostringstream os;
        os << source << ":" << err.source().begin.line << ":" << err.source().begin.column << ": "
           << err.description();
        throw ValidationError(os.str());
    }
}

std::vector<CurvePiece> read_pieces(const toml::node &node, const std::string &where) {
    const toml::array *level = node.as_array();
    if (!level) throw ValidationError(where + " must be an array of [cap, slope] pairs");
    std::vector<CurvePiece> pieces;
    for (std::size_t p = 0; p < level->size(); ++p) {
        const toml::array *pair = (*level)[p].as_array();
        if (!pair || pair->size() != 2)
            throw ValidationError(where + " piece " + std::to_string(p + 1) +
                                  " must be a [cap, slope] pair");
        auto cap = (*pair)[0].value<double>();
        auto slope = (*pair)[1].value<double>();
        if (!cap || !slope)
            throw ValidationError(where + " piece " + std::to_string(p + 1) + " must be numeric");
        pieces.push_back({*cap, *slope});
    }
    return pieces;
}

EfficiencyCurveSet read_curves(TableReader &curves, const std::string &source) {
    EfficiencyCurveSet set;
    curves.read("soc_breaks", set.soc_breaks);
    const toml::table *raw = curves.raw();
    auto levels_of = [&](const char *key) {
        curves.mark(key);
        const toml::node *node = raw->get(key);
        if (!node || !node->as_array())
            curves.fail(key, "must be an array with one entry per SOC level");
        std::vector<std::vector<CurvePiece>> out;
        const auto &arr = *node->as_array();
        for (std::size_t k = 0; k < arr.size(); ++k) {
            out.push_back(read_pieces(arr[k], source + ": " + curves.qualified(key) + " level " +
                                                  std::to_string(k + 1)));
        }
        return out;
    };
    auto charge = levels_of("charge");
    auto discharge = levels_of("discharge");
    curves.finish();
    if (charge.size() != discharge.size())
        throw ValidationError(source + ": curves.charge has " + std::to_string(charge.size()) +
                              " levels but curves.discharge has " +
                              std::to_string(discharge.size()));
    for (std::size_t k = 0; k < charge.size(); ++k)
        set.levels.push_back({std::move(charge[k]), std::move(discharge[k])});

    auto diag = validate_curves(set);
    if (!diag.ok) {
        std::string msg = source + ": invalid efficiency curves:";
        for (const auto &m : diag.messages) msg += "\n  " + m;
        throw ValidationError(msg);
    }
    return set;
}

} // namespace

EfficiencyCurveSet parse_curves_toml(const std::string &text, const std::string &source) {
    toml::table root = parse_toml(text, source);
    TableReader top(&root, "", source);
    TableReader curves = top.sub("curves");
    if (!curves.present()) throw ValidationError(source + ": missing [curves] table");
    auto set = read_curves(curves, source);
    top.finish();
    return set;
}

EfficiencyCurveSet load_curves(const std::filesystem::path &path) {
    return parse_curves_toml(read_file(path), path.string());
}

Scenario parse_scenario(const std::string &config_text, TimeSeriesBundle series,
                        const std::string &source) {
    toml::table root = parse_toml(config_text, source);
    TableReader top(&root, "", source);
    Scenario s;
    top.read("name", s.name);
    top.read("first_day", s.first_day);

    {
        TableReader grid = top.sub("grid");
        grid.read("enabled", s.grid.enabled);
        grid.read("load_curtailment", s.policy.p_lc);
        grid.read("discount_rate", s.policy.r);
        grid.read("unit_co2", s.grid.co2_m);
        grid.read("max_purchase_kw", s.grid.cap_kw);
        TableReader tariff = grid.sub("tariff");
        if (tariff.present()) {
            GridTariff t;
            tariff.read("customer_charge", t.customer_charge);
            tariff.read("demand_charge", t.demand_charge);
            tariff.read("demand_threshold", t.demand_threshold);
            tariff.read("month_days", t.month_days);
            tariff.finish();
            s.grid.tariff = t;
        }
        grid.finish();
    }
    {
        TableReader policy = top.sub("policy");
        policy.read_opt("gamma", s.policy.gamma);
        policy.read("big_m_multiplier", s.policy.big_m_multiplier);
        policy.read("mip_gap", s.policy.mip_gap);
        policy.finish();
    }
    {
        TableReader th = top.sub("thermal");
        th.read("unit_capacity", s.thermal.sc_t);
        th.read("investment_cost", s.thermal.if_t);
        th.read("life_time", s.thermal.l_t);
        th.read("fom_cost", s.thermal.fom_t);
        th.read("vom_cost", s.thermal.vom_t);
        th.read("fuel_cost", s.thermal.fuel_t);
        th.read("unit_co2", s.thermal.co2_t);
        th.finish();
    }
    for (auto [key, ren] : {std::pair{"pv", &s.pv}, std::pair{"wind", &s.wind}}) {
        TableReader t = top.sub(key);
        t.read("investment_cost", ren->if_x);
        t.read("life_time", ren->l_x);
        t.read("fom_cost", ren->fom_x);
        t.read("vom_cost", ren->vom_x);
        t.finish();
    }
    {
        TableReader b = top.sub("battery");
        auto &bp = s.battery;
        b.read("max_charging_power", bp.p_c_max);
        b.read("max_discharging_power", bp.p_d_max);
        b.read("wrap_up_tolerance", bp.lambda);
        b.read("soc_upper_limit", bp.soc_max);
        b.read("soc_lower_limit", bp.soc_min);
        b.read("power_investment", bp.ip_b);
        b.read("energy_investment", bp.ie_b);
        b.read("cycle_life", bp.n_cycle);
        b.read("lifetime", bp.l_b);
        b.read("fom_cost", bp.fom_b);
        b.read("vom_cost", bp.vom_b);
        b.read("charge_efficiency", bp.eta_c);
        b.read("discharge_efficiency", bp.eta_d);
        b.read("cycle_weight", bp.p_weight);
        // Remaining-capacity criterion; the model works with the loss budget.
        std::optional<double> eol_remaining;
        b.read_opt("end_of_life_criterion", eol_remaining);
        if (eol_remaining) bp.eol_loss = 1.0 - *eol_remaining;
        TableReader levels = b.sub("cost_levels");
        if (levels.present()) {
            for (const auto &[name, node] : *levels.raw()) {
                const std::string level_name(name.str());
                TableReader lv = levels.sub(level_name.c_str());
                if (!lv.present()) levels.fail(level_name, "must be a table");
                BatteryCostLevel cl{bp.ip_b, bp.ie_b, bp.fom_b, bp.vom_b};
                lv.read("power_investment", cl.ip_b);
                lv.read("energy_investment", cl.ie_b);
                lv.read("fom_cost", cl.fom_b);
                lv.read("vom_cost", cl.vom_b);
                lv.finish();
                s.battery_cost_levels[level_name] = cl;
            }
        }
        b.finish();
    }
    {
        TableReader curves = top.sub("curves");
        if (curves.present()) s.curves = read_curves(curves, source);
    }
    top.finish();

    if (s.grid.enabled && !series.price_m)
        throw ValidationError(source +
                              ": grid.enabled = true but the series has no price_usd_per_kwh column");
    s.series = std::move(series);
    return finalize_scenario(std::move(s));
}

Scenario load_scenario(const std::filesystem::path &config_path,
                       const std::filesystem::path &series_path) {
    const std::string text = read_file(config_path);
    auto series = load_series_csv(series_path, false);
    return parse_scenario(text, std::move(series), config_path.string());
}

Scenario slice_days(const Scenario &scenario, std::size_t first, std::size_t last) {
    if (first < 1 || last < first || last > scenario.days)
        throw ValidationError("day range " + std::to_string(first) + ".." + std::to_string(last) +
                              " outside 1.." + std::to_string(scenario.days));
    Scenario s = scenario;
    const std::size_t b = (first - 1) * 24;
    const std::size_t e = last * 24;
    auto cut = [&](std::vector<double> &v) {
        v = std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(b),
                                v.begin() + static_cast<std::ptrdiff_t>(e));
    };
    cut(s.series.load);
    cut(s.series.af_pv);
    cut(s.series.af_w);
    cut(s.series.af_t);
    if (s.series.price_m) cut(*s.series.price_m);
    s.first_day = static_cast<int>((scenario.first_day - 1 + static_cast<int>(first) - 1) % 365) + 1;
    return finalize_scenario(std::move(s));
}

Scenario with_battery_cost_level(const Scenario &scenario, const std::string &level) {
    auto it = scenario.battery_cost_levels.find(level);
    if (it == scenario.battery_cost_levels.end())
        throw ValidationError("unknown battery cost level '" + level + "'");
    Scenario s = scenario;
    s.battery.ip_b = it->second.ip_b;
    s.battery.ie_b = it->second.ie_b;
    s.battery.fom_b = it->second.fom_b;
    s.battery.vom_b = it->second.vom_b;
    return s;
}

// ------------------------------------------------------------ JSON snapshot

namespace {

using nlohmann::json;

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double from_finite_or_null(const json &j) {
    return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

json pieces_json(const std::vector<CurvePiece> &pieces) {
    json arr = json::array();
    for (const auto &p : pieces) arr.push_back({p.cap, p.slope});
    return arr;
}

std::vector<CurvePiece> pieces_from(const json &arr) {
    std::vector<CurvePiece> out;
    for (const auto &p : arr) out.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    return out;
}

} // namespace

std::string scenario_to_json(const Scenario &s) {
    json j;
    j["name"] = s.name;
    j["first_day"] = s.first_day;
    j["series"] = {{"load", s.series.load},
                   {"af_pv", s.series.af_pv},
                   {"af_wind", s.series.af_w},
                   {"af_thermal", s.series.af_t}};
    if (s.series.price_m) j["series"]["price"] = *s.series.price_m;
    const auto &t = s.thermal;
    j["thermal"] = {{"sc_t", t.sc_t},   {"if_t", t.if_t},     {"l_t", t.l_t},    {"fom_t", t.fom_t},
                    {"vom_t", t.vom_t}, {"fuel_t", t.fuel_t}, {"co2_t", t.co2_t}};
    for (auto [key, ren] : {std::pair{"pv", &s.pv}, std::pair{"wind", &s.wind}}) {
        j[key] = {{"if", ren->if_x}, {"l", ren->l_x}, {"fom", ren->fom_x}, {"vom", ren->vom_x}};
    }
    const auto &b = s.battery;
    j["battery"] = {{"ip_b", b.ip_b},         {"ie_b", b.ie_b},         {"l_b", b.l_b},
                    {"n_cycle", b.n_cycle},   {"fom_b", b.fom_b},       {"vom_b", b.vom_b},
                    {"p_c_max", b.p_c_max},   {"p_d_max", b.p_d_max},   {"soc_min", b.soc_min},
                    {"soc_max", b.soc_max},   {"eta_c", b.eta_c},       {"eta_d", b.eta_d},
                    {"lambda", b.lambda},     {"eol_loss", b.eol_loss}, {"p_weight", b.p_weight}};
    json levels = json::object();
    for (const auto &[name, l] : s.battery_cost_levels)
        levels[name] = {{"ip_b", l.ip_b}, {"ie_b", l.ie_b}, {"fom_b", l.fom_b}, {"vom_b", l.vom_b}};
    j["battery_cost_levels"] = levels;
    if (s.curves) {
        json lv = json::array();
        for (const auto &level : s.curves->levels)
            lv.push_back({{"charge", pieces_json(level.charge)},
                          {"discharge", pieces_json(level.discharge)}});
        j["curves"] = {{"soc_breaks", s.curves->soc_breaks}, {"levels", lv}};
    }
    j["grid"] = {{"enabled", s.grid.enabled},
                 {"cap_kw", finite_or_null(s.grid.cap_kw)},
                 {"co2_m", s.grid.co2_m}};
    if (s.grid.tariff) {
        const auto &tar = *s.grid.tariff;
        j["grid"]["tariff"] = {{"customer_charge", tar.customer_charge},
                               {"demand_charge", tar.demand_charge},
                               {"demand_threshold", tar.demand_threshold},
                               {"month_days", tar.month_days}};
    }
    j["policy"] = {{"r", s.policy.r},
                   {"p_lc", s.policy.p_lc},
                   {"big_m_multiplier", s.policy.big_m_multiplier},
                   {"mip_gap", s.policy.mip_gap}};
    if (s.policy.gamma) j["policy"]["gamma"] = *s.policy.gamma;
    j["derived"] = {{"T", s.hours}, {"D", s.days}, {"TF", s.time_factor}, {"peak_load", s.peak_load}};
    return j.dump(1);
}

Scenario scenario_from_json(const std::string &text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception &e) {
        throw ValidationError(std::string("scenario snapshot: ") + e.what());
    }
    try {
        Scenario s;
        s.name = j.value("name", "");
        s.first_day = j.value("first_day", 1);
        const auto &ser = j.at("series");
        s.series.load = ser.at("load").get<std::vector<double>>();
        s.series.af_pv = ser.at("af_pv").get<std::vector<double>>();
        s.series.af_w = ser.at("af_wind").get<std::vector<double>>();
        s.series.af_t = ser.at("af_thermal").get<std::vector<double>>();
        if (ser.contains("price")) s.series.price_m = ser.at("price").get<std::vector<double>>();
        const auto &t = j.at("thermal");
        s.thermal = {t.at("sc_t"), t.at("if_t"), t.at("l_t"), t.at("fom_t"),
                     t.at("vom_t"), t.at("fuel_t"), t.at("co2_t")};
        for (auto [key, ren] : {std::pair{"pv", &s.pv}, std::pair{"wind", &s.wind}}) {
            const auto &r = j.at(key);
            *ren = {r.at("if"), r.at("l"), r.at("fom"), r.at("vom")};
        }
        const auto &b = j.at("battery");
        auto &bp = s.battery;
        bp.ip_b = b.at("ip_b");
        bp.ie_b = b.at("ie_b");
        bp.l_b = b.at("l_b");
        bp.n_cycle = b.at("n_cycle");
        bp.fom_b = b.at("fom_b");
        bp.vom_b = b.at("vom_b");
        bp.p_c_max = b.at("p_c_max");
        bp.p_d_max = b.at("p_d_max");
        bp.soc_min = b.at("soc_min");
        bp.soc_max = b.at("soc_max");
        bp.eta_c = b.at("eta_c");
        bp.eta_d = b.at("eta_d");
        bp.lambda = b.at("lambda");
        bp.eol_loss = b.at("eol_loss");
        bp.p_weight = b.at("p_weight");
        if (j.contains("battery_cost_levels")) {
            for (const auto &[name, l] : j.at("battery_cost_levels").items())
                s.battery_cost_levels[name] = {l.at("ip_b"), l.at("ie_b"), l.at("fom_b"),
                                               l.at("vom_b")};
        }
        if (j.contains("curves")) {
            EfficiencyCurveSet c;
            c.soc_breaks = j.at("curves").at("soc_breaks").get<std::vector<double>>();
            for (const auto &lv : j.at("curves").at("levels"))
                c.levels.push_back({pieces_from(lv.at("charge")), pieces_from(lv.at("discharge"))});
            s.curves = std::move(c);
        }
        const auto &g = j.at("grid");
        s.grid.enabled = g.at("enabled");
        s.grid.cap_kw = from_finite_or_null(g.at("cap_kw"));
        s.grid.co2_m = g.at("co2_m");
        if (g.contains("tariff")) {
            const auto &tj = g.at("tariff");
            GridTariff tar;
            tar.customer_charge = tj.at("customer_charge");
            tar.demand_charge = tj.at("demand_charge");
            tar.demand_threshold = tj.at("demand_threshold");
            tar.month_days = tj.at("month_days").get<std::vector<int>>();
            s.grid.tariff = tar;
        }
        const auto &p = j.at("policy");
        s.policy.r = p.at("r");
        s.policy.p_lc = p.at("p_lc");
        s.policy.big_m_multiplier = p.at("big_m_multiplier");
        s.policy.mip_gap = p.at("mip_gap");
        if (p.contains("gamma")) s.policy.gamma = p.at("gamma").get<double>();
        return finalize_scenario(std::move(s));
    } catch (const json::exception &e) {
        throw ValidationError(std::string("scenario snapshot: ") + e.what());
    }
}

} // namespace storplan
