#pragma once

// Solver-neutral sparse MILP container with insertion-ordered variables and
// constraints, model statistics, and deterministic MPS / LP export.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace storplan::milp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class VarKind { Continuous, Integer, Binary };
enum class Sense { LessEqual, Equal, GreaterEqual };

std::string_view to_string(VarKind kind);
std::string_view to_string(Sense sense);

/// Stable index of a variable within one model.
struct VarId {
    std::uint32_t index = 0;
    friend bool operator==(VarId, VarId) = default;
    friend auto operator<=>(VarId, VarId) = default;
};

struct Term {
    VarId var;
    double coef = 0.0;
};

/// Sparse affine expression. Duplicate variables are allowed while
/// composing; `normalized()` merges them.
struct LinearExpr {
    std::vector<Term> terms;
    double constant = 0.0;

    LinearExpr &add(VarId var, double coef) {
        terms.push_back({var, coef});
        return *this;
    }
    LinearExpr &add(const LinearExpr &other, double scale = 1.0);
    LinearExpr &add_constant(double value) {
        constant += value;
        return *this;
    }
    /// Merged, zero-free, sorted by first appearance.
    LinearExpr normalized() const;
    double evaluate(std::span<const double> values) const;
};

struct Variable {
    std::string name;
    VarKind kind = VarKind::Continuous;
    double lb = 0.0;
    double ub = kInf;
};

struct LinearConstraint {
    std::vector<Term> terms;
    Sense sense = Sense::LessEqual;
    double rhs = 0.0;
    std::string tag;
};

struct ModelStats {
    std::size_t n_continuous = 0;
    std::size_t n_integer = 0;
    std::size_t n_binary = 0;
    std::size_t n_constraints = 0;
    std::size_t n_nonzeros = 0;

    std::size_t n_variables() const { return n_continuous + n_integer + n_binary; }
    friend bool operator==(const ModelStats &, const ModelStats &) = default;
};

/// Minimisation model. Single writer while assembling; `freeze()` makes any
/// further mutation throw.
class MilpModel {
public:
    explicit MilpModel(std::string name = "storplan") : name_(std::move(name)) {}

    VarId add_variable(std::string name, VarKind kind, double lb = 0.0, double ub = kInf);
    std::size_t add_constraint(std::span<const Term> terms, Sense sense, double rhs,
                               std::string tag);
    std::size_t add_constraint(const LinearExpr &expr, Sense sense, double rhs,
                               std::string tag);

    /// Adds `expr` to the objective (merging repeated variables).
    void add_objective(const LinearExpr &expr);
    void set_bounds(VarId var, double lb, double ub);
    void freeze() { frozen_ = true; }
    bool frozen() const { return frozen_; }

    const std::string &name() const { return name_; }
    const std::vector<Variable> &variables() const { return variables_; }
    const Variable &variable(VarId id) const;
    const std::vector<LinearConstraint> &constraints() const { return constraints_; }
    const LinearConstraint &constraint(std::size_t id) const;
    std::optional<std::size_t> find_constraint(std::string_view tag) const;
    std::optional<VarId> find_variable(std::string_view name) const;
    bool owns(VarId id) const { return id.index < variables_.size(); }

    /// Dense objective coefficients (index = variable index) plus constant.
    const std::vector<double> &objective() const { return objective_; }
    double objective_constant() const { return objective_constant_; }
    double evaluate_objective(std::span<const double> values) const;

private:
    void check_mutable() const;

    std::string name_;
    std::vector<Variable> variables_;
    std::vector<LinearConstraint> constraints_;
    std::vector<double> objective_;
    double objective_constant_ = 0.0;
    std::unordered_map<std::string, VarId> var_index_;
    std::unordered_map<std::string, std::size_t> tag_index_;
    bool frozen_ = false;
};

ModelStats model_stats(const MilpModel &model);

struct MpsOptions {
    /// Names longer than this, or containing whitespace, are replaced by
    /// generated names and listed in the mapping table.
    std::size_t max_name_length = 255;
};

struct MpsDocument {
    std::string text;
    /// (emitted name, original name) for every sanitized column or row.
    std::vector<std::pair<std::string, std::string>> name_map;

    /// Tab-separated mapping table, one pair per line.
    std::string name_map_text() const;
};

/// Free-format MPS. Column and row order follow insertion order; numbers are
/// written with round-trip precision so identical models give identical bytes.
MpsDocument export_mps(const MilpModel &model, const MpsOptions &options = {});

/// CPLEX LP format with the same ordering and determinism guarantees.
std::string export_lp(const MilpModel &model);

/// Shortest decimal that parses back to exactly `value`.
std::string format_number(double value);

} // namespace storplan::milp
