#include "storplan/milp.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "storplan/error.hpp"

namespace storplan::milp {

std::string_view to_string(VarKind kind) {
    switch (kind) {
    case VarKind::Continuous: return "continuous";
    case VarKind::Integer: return "integer";
    case VarKind::Binary: return "binary";
    }
    return "?";
}

std::string_view to_string(Sense sense) {
    switch (sense) {
    case Sense::LessEqual: return "<=";
    case Sense::Equal: return "=";
    case Sense::GreaterEqual: return ">=";
    }
    return "?";
}

LinearExpr &LinearExpr::add(const LinearExpr &other, double scale) {
    for (const auto &t : other.terms) terms.push_back({t.var, t.coef * scale});
    constant += other.constant * scale;
    return *this;
}

LinearExpr LinearExpr::normalized() const {
    LinearExpr out;
    out.constant = constant;
    std::unordered_map<std::uint32_t, std::size_t> slot;
    for (const auto &t : terms) {
        auto [it, inserted] = slot.try_emplace(t.var.index, out.terms.size());
        if (inserted)
            out.terms.push_back(t);
        else
            out.terms[it->second].coef += t.coef;
    }
    std::erase_if(out.terms, [](const Term &t) { return t.coef == 0.0; });
    return out;
}

double LinearExpr::evaluate(std::span<const double> values) const {
    double v = constant;
    for (const auto &t : terms) v += t.coef * values[t.var.index];
    return v;
}

void MilpModel::check_mutable() const {
    if (frozen_) throw ModelError("model '" + name_ + "' is frozen");
}

VarId MilpModel::add_variable(std::string name, VarKind kind, double lb, double ub) {
    check_mutable();
    if (name.empty()) throw ModelError("variable name must not be empty");
    if (std::isnan(lb) || std::isnan(ub) || lb > ub)
        throw ModelError("variable '" + name + "': inverted or NaN bounds");
    if (lb == kInf || ub == -kInf) throw ModelError("variable '" + name + "': empty domain");
    if (kind == VarKind::Binary) {
        if (lb < 0.0 || ub > 1.0) throw ModelError("binary variable '" + name + "': bounds outside [0,1]");
    }
    if (var_index_.count(name)) throw ModelError("duplicate variable name '" + name + "'");
    VarId id{static_cast<std::uint32_t>(variables_.size())};
    var_index_.emplace(name, id);
    variables_.push_back({std::move(name), kind, lb, ub});
    objective_.push_back(0.0);
    return id;
}

std::size_t MilpModel::add_constraint(std::span<const Term> terms, Sense sense, double rhs,
                                      std::string tag) {
    check_mutable();
    if (!std::isfinite(rhs)) throw ModelError("constraint '" + tag + "': rhs must be finite");
    if (tag.empty()) tag = "row" + std::to_string(constraints_.size());
    if (tag_index_.count(tag)) throw ModelError("duplicate constraint tag '" + tag + "'");
    LinearConstraint row;
    row.sense = sense;
    row.rhs = rhs;
    row.tag = std::move(tag);
    std::unordered_set<std::uint32_t> seen;
    for (const auto &t : terms) {
        if (!owns(t.var))
            throw ModelError("constraint '" + row.tag + "': unknown variable handle " +
                             std::to_string(t.var.index));
        if (!seen.insert(t.var.index).second)
            throw ModelError("constraint '" + row.tag + "': variable '" +
                             variables_[t.var.index].name + "' appears twice");
        if (!std::isfinite(t.coef))
            throw ModelError("constraint '" + row.tag + "': non-finite coefficient");
        if (t.coef != 0.0) row.terms.push_back(t);
    }
    const std::size_t id = constraints_.size();
    tag_index_.emplace(row.tag, id);
    constraints_.push_back(std::move(row));
    return id;
}

std::size_t MilpModel::add_constraint(const LinearExpr &expr, Sense sense, double rhs,
                                      std::string tag) {
    LinearExpr n = expr.normalized();
    return add_constraint(std::span<const Term>(n.terms), sense, rhs - n.constant, std::move(tag));
}

void MilpModel::add_objective(const LinearExpr &expr) {
    check_mutable();
    for (const auto &t : expr.terms) {
        if (!owns(t.var)) throw ModelError("objective: unknown variable handle");
        if (!std::isfinite(t.coef)) throw ModelError("objective: non-finite coefficient");
        objective_[t.var.index] += t.coef;
    }
    objective_constant_ += expr.constant;
}

void MilpModel::set_bounds(VarId var, double lb, double ub) {
    check_mutable();
    if (!owns(var)) throw ModelError("set_bounds: unknown variable handle");
    auto &v = variables_[var.index];
    if (std::isnan(lb) || std::isnan(ub) || lb > ub)
        throw ModelError("variable '" + v.name + "': inverted or NaN bounds");
    if (v.kind == VarKind::Binary && (lb < 0.0 || ub > 1.0))
        throw ModelError("binary variable '" + v.name + "': bounds outside [0,1]");
    v.lb = lb;
    v.ub = ub;
}

const Variable &MilpModel::variable(VarId id) const {
    if (!owns(id)) throw ModelError("unknown variable handle " + std::to_string(id.index));
    return variables_[id.index];
}

const LinearConstraint &MilpModel::constraint(std::size_t id) const {
    if (id >= constraints_.size()) throw ModelError("unknown constraint id " + std::to_string(id));
    return constraints_[id];
}

std::optional<std::size_t> MilpModel::find_constraint(std::string_view tag) const {
    auto it = tag_index_.find(std::string(tag));
    if (it == tag_index_.end()) return std::nullopt;
    return it->second;
}

std::optional<VarId> MilpModel::find_variable(std::string_view name) const {
    auto it = var_index_.find(std::string(name));
    if (it == var_index_.end()) return std::nullopt;
    return it->second;
}

double MilpModel::evaluate_objective(std::span<const double> values) const {
    double v = objective_constant_;
    for (std::size_t i = 0; i < objective_.size(); ++i) v += objective_[i] * values[i];
    return v;
}

ModelStats model_stats(const MilpModel &model) {
    ModelStats s;
    for (const auto &v : model.variables()) {
        switch (v.kind) {
        case VarKind::Continuous: ++s.n_continuous; break;
        case VarKind::Integer: ++s.n_integer; break;
        case VarKind::Binary: ++s.n_binary; break;
        }
    }
    s.n_constraints = model.constraints().size();
    for (const auto &c : model.constraints()) s.n_nonzeros += c.terms.size();
    return s;
}

std::string format_number(double value) {
    if (value == 0.0) return "0";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

// -------------------------------------------------------------------- MPS

namespace {

bool needs_sanitizing(const std::string &name, std::size_t max_len) {
    if (name.size() > max_len || name.empty()) return true;
    if (name.front() == '$' || name.front() == '*') return true;
    return std::any_of(name.begin(), name.end(),
                       [](unsigned char c) { return c <= ' ' || c >= 127; });
}

class NameTable {
public:
    NameTable(const MilpModel &model, const MpsOptions &options, MpsDocument &doc) {
        std::unordered_set<std::string> used;
        for (const auto &v : model.variables()) used.insert(v.name);
        for (const auto &c : model.constraints()) used.insert(c.tag);
        used.insert(kObjective);
        auto fresh = [&](const char *prefix, std::size_t i) {
            std::string n = std::string(prefix) + std::to_string(i);
            while (used.count(n)) n += "_";
            used.insert(n);
            return n;
        };
        for (std::size_t i = 0; i < model.variables().size(); ++i) {
            const auto &name = model.variables()[i].name;
            if (needs_sanitizing(name, options.max_name_length)) {
                cols_.push_back(fresh("C", i));
                doc.name_map.emplace_back(cols_.back(), name);
            } else {
                cols_.push_back(name);
            }
        }
        for (std::size_t i = 0; i < model.constraints().size(); ++i) {
            const auto &tag = model.constraints()[i].tag;
            if (needs_sanitizing(tag, options.max_name_length)) {
                rows_.push_back(fresh("R", i));
                doc.name_map.emplace_back(rows_.back(), tag);
            } else {
                rows_.push_back(tag);
            }
        }
    }
    const std::string &col(std::size_t i) const { return cols_[i]; }
    const std::string &row(std::size_t i) const { return rows_[i]; }

    static constexpr const char *kObjective = "COST";

private:
    std::vector<std::string> cols_;
    std::vector<std::string> rows_;
};

} // namespace

std::string MpsDocument::name_map_text() const {
    std::string out;
    for (const auto &[emitted, original] : name_map) out += emitted + "\t" + original + "\n";
    return out;
}

MpsDocument export_mps(const MilpModel &model, const MpsOptions &options) {
    if (model.variables().empty()) throw ModelError("export_mps: model has no variables");
    MpsDocument doc;
    NameTable names(model, options, doc);
    const auto &vars = model.variables();
    const auto &rows = model.constraints();

    // Column-major incidence, rows in insertion order within each column.
    std::vector<std::vector<std::pair<std::size_t, double>>> columns(vars.size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (const auto &t : rows[r].terms) columns[t.var.index].emplace_back(r, t.coef);

    std::string out;
    out.reserve(64 * (vars.size() + rows.size()));
    // The FREE marker makes CoinMpsIO-based readers (CBC) switch to free format.
    out += "NAME " + model.name() + " FREE\n";
    out += "* objective constant: " + format_number(model.objective_constant()) + "\n";
    out += "ROWS\n";
    out += " N  " + std::string(NameTable::kObjective) + "\n";
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const char *s = rows[r].sense == Sense::LessEqual ? " L  "
                        : rows[r].sense == Sense::Equal   ? " E  "
                                                          : " G  ";
        out += s + names.row(r) + "\n";
    }
    out += "COLUMNS\n";
    bool in_int = false;
    int marker = 0;
    const auto &obj = model.objective();
    for (std::size_t c = 0; c < vars.size(); ++c) {
        const bool is_int = vars[c].kind != VarKind::Continuous;
        if (is_int != in_int) {
            out += "    MARKER" + std::to_string(marker++) + " 'MARKER' " +
                   (is_int ? "'INTORG'" : "'INTEND'") + "\n";
            in_int = is_int;
        }
        const std::string &cn = names.col(c);
        bool wrote = false;
        if (obj[c] != 0.0) {
            out += "    " + cn + " " + NameTable::kObjective + " " + format_number(obj[c]) + "\n";
            wrote = true;
        }
        for (const auto &[r, coef] : columns[c]) {
            out += "    " + cn + " " + names.row(r) + " " + format_number(coef) + "\n";
            wrote = true;
        }
        if (!wrote) out += "    " + cn + " " + NameTable::kObjective + " 0\n";
    }
    if (in_int) out += "    MARKER" + std::to_string(marker++) + " 'MARKER' 'INTEND'\n";
    out += "RHS\n";
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].rhs != 0.0) out += "    RHS " + names.row(r) + " " + format_number(rows[r].rhs) + "\n";
    }
    out += "BOUNDS\n";
    for (std::size_t c = 0; c < vars.size(); ++c) {
        const auto &v = vars[c];
        const std::string &cn = names.col(c);
        if (v.kind == VarKind::Binary) {
            out += " BV BND " + cn + "\n";
            if (v.lb == v.ub) {
                out += " FX BND " + cn + " " + format_number(v.lb) + "\n";
            } else {
                if (v.lb != 0.0) out += " LO BND " + cn + " " + format_number(v.lb) + "\n";
                if (v.ub != 1.0) out += " UP BND " + cn + " " + format_number(v.ub) + "\n";
            }
            continue;
        }
        if (v.lb == v.ub) {
            out += " FX BND " + cn + " " + format_number(v.lb) + "\n";
            continue;
        }
        if (v.lb == -kInf && v.ub == kInf) {
            out += " FR BND " + cn + "\n";
            continue;
        }
        if (v.lb == -kInf) {
            out += " MI BND " + cn + "\n";
        } else if (v.lb != 0.0) {
            out += " LO BND " + cn + " " + format_number(v.lb) + "\n";
        }
        if (v.ub != kInf) {
            out += " UP BND " + cn + " " + format_number(v.ub) + "\n";
        } else if (v.kind != VarKind::Continuous) {
            // Some readers default unbounded integer columns to [0,1].
            out += " PL BND " + cn + "\n";
        }
    }
    out += "ENDATA\n";
    doc.text = std::move(out);
    return doc;
}

// --------------------------------------------------------------------- LP

std::string export_lp(const MilpModel &model) {
    const auto &vars = model.variables();
    std::ostringstream os;
    auto term = [&](double coef, std::size_t var, bool first) {
        if (coef < 0.0)
            os << (first ? "-" : " - ");
        else if (!first)
            os << " + ";
        os << format_number(std::fabs(coef)) << " " << vars[var].name;
    };
    os << "\\ " << model.name() << "\n";
    os << "\\ objective constant: " << format_number(model.objective_constant()) << "\n";
    os << "Minimize\n COST:";
    bool first = true;
    for (std::size_t i = 0; i < vars.size(); ++i) {
        if (model.objective()[i] == 0.0) continue;
        os << (first ? " " : "");
        term(model.objective()[i], i, first);
        first = false;
    }
    if (first) os << " 0 " << vars.front().name;
    os << "\nSubject To\n";
    for (const auto &c : model.constraints()) {
        os << " " << c.tag << ":";
        bool f = true;
        for (const auto &t : c.terms) {
            os << (f ? " " : "");
            term(t.coef, t.var.index, f);
            f = false;
        }
        if (f) os << " 0 " << vars.front().name;
        os << " " << (c.sense == Sense::LessEqual ? "<=" : c.sense == Sense::Equal ? "=" : ">=") << " "
           << format_number(c.rhs) << "\n";
    }
    os << "Bounds\n";
    for (const auto &v : vars) {
        if (v.lb == -kInf && v.ub == kInf) {
            os << " " << v.name << " free\n";
            continue;
        }
        os << " ";
        if (v.lb == -kInf)
            os << "-inf";
        else
            os << format_number(v.lb);
        os << " <= " << v.name << " <= ";
        if (v.ub == kInf)
            os << "+inf";
        else
            os << format_number(v.ub);
        os << "\n";
    }
    bool any_int = false, any_bin = false;
    for (const auto &v : vars) {
        any_int |= v.kind == VarKind::Integer;
        any_bin |= v.kind == VarKind::Binary;
    }
    if (any_int) {
        os << "General\n";
        for (const auto &v : vars)
            if (v.kind == VarKind::Integer) os << " " << v.name << "\n";
    }
    if (any_bin) {
        os << "Binary\n";
        for (const auto &v : vars)
            if (v.kind == VarKind::Binary) os << " " << v.name << "\n";
    }
    os << "End\n";
    return os.str();
}

} // namespace storplan::milp
