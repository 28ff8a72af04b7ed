#pragma once

// File-exchange contract with an external MILP engine: write the MPS model,
// run the backend with a templated command line, read back the solution.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace storplan::solver {

enum class Status { Optimal, FeasibleGap, Infeasible, Unbounded, Timeout };

std::string_view to_string(Status status);
std::optional<Status> status_from_string(std::string_view text);

enum class SolutionFormat {
    /// `<name> <value>` lines; `# status ...`, `# objective ...` and
    /// `# gap ...` header lines.
    NameValue,
    /// CBC-style: status line `<Status> - objective value <v>` followed by
    /// `<index> <name> <value> <reduced cost>` rows.
    Columnar,
    /// Sniffed from the first non-empty line.
    Auto,
};

/// Executable plus argument template. Placeholders `{model}`, `{solution}`,
/// `{gap}` and `{timelimit}` are substituted per argument.
struct BackendDescriptor {
    std::string executable;
    std::vector<std::string> args;
    SolutionFormat format = SolutionFormat::Auto;
    std::string label = "custom";
};

/// HiGHS through the bundled Python driver (`tools/highs_backend.py`).
BackendDescriptor highs_backend(std::string python = "python3",
                                std::string script = {});
/// CBC command line (`cbc {model} ratio {gap} sec {timelimit} ...`).
BackendDescriptor cbc_backend(std::string executable = "cbc");

/// Resolves a backend by label (`highs`, `cbc`) honouring the
/// STORPLAN_SOLVER environment override for the executable path.
BackendDescriptor backend_by_name(std::string_view name);

/// First working backend found on this machine, if any.
std::optional<BackendDescriptor> discover_backend();

struct SolveRequest {
    std::string model_mps;
    double gap = 0.001;
    double time_limit = 3600.0;
    BackendDescriptor backend;
    std::filesystem::path workdir;
    /// Objective constant not representable in the MPS file.
    double objective_offset = 0.0;
    /// (emitted name, original name) pairs from the MPS export.
    std::vector<std::pair<std::string, std::string>> name_map;
    /// Column names expected in the solution; missing ones are reported.
    std::vector<std::string> expected_columns;
};

struct Solution {
    Status status = Status::Infeasible;
    double objective = 0.0;
    double achieved_gap = 0.0;
    std::map<std::string, double> values;

    bool has_values() const {
        return status == Status::Optimal || status == Status::FeasibleGap;
    }
    double value(const std::string &name) const;
    double value_or(const std::string &name, double fallback) const;
};

/// Validates the request (gap in (0,1), positive time limit).
void validate_request(const SolveRequest &request);

/// Runs the backend in `request.workdir` and returns the parsed solution.
/// Throws BackendError when the process cannot start, crashes without a
/// solution file, or writes something unparseable.
Solution solve(const SolveRequest &request);

Solution parse_solution(const std::string &text, SolutionFormat format);

/// Writes a solution in the NameValue format (full precision).
std::string write_solution(const Solution &solution);

/// Objective, bound and gap recovered from a backend log when present.
struct LogSummary {
    std::optional<double> objective;
    std::optional<double> bound;
    std::optional<double> gap;
};
LogSummary parse_backend_log(const std::string &log);

std::vector<std::string> expand_arguments(const BackendDescriptor &backend,
                                          const std::filesystem::path &model,
                                          const std::filesystem::path &solution,
                                          double gap, double time_limit);

} // namespace storplan::solver
