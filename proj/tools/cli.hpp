#pragma once

// Command-line front end: argument parsing into a validated Command and its
// execution against the storplan library.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace storplan::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 2,
    kInfeasible = 3,
    kBackendFailure = 4,
    kVerificationFailure = 5,
};

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Verb { Build, Solve, Run, Sweep, Verify, Report };

struct Command {
    Verb verb = Verb::Run;

    std::filesystem::path config;
    std::filesystem::path series;
    std::optional<std::filesystem::path> curves;
    std::optional<std::pair<std::size_t, std::size_t>> days;

    int model = 1;
    bool grid_on = false;
    std::optional<double> gamma;
    std::optional<double> baseline_co2;
    bool two_phase = false;
    std::optional<double> p_weight;
    std::optional<double> e_b_estimate;
    bool no_battery = false;
    bool tariff = false;

    std::optional<double> mip_gap;
    std::optional<double> big_m_mult;
    double time_limit = 3600.0;

    std::string backend;  // empty: auto-detect
    std::optional<std::string> backend_path;
    std::optional<std::string> backend_args;

    std::filesystem::path out;
    std::filesystem::path mps;      // solve
    std::filesystem::path run_dir;  // verify, report
    std::string format = "text";    // report

    std::string dimension;  // sweep
    std::vector<std::string> values;
    std::vector<std::pair<std::string, std::filesystem::path>> year_configs;
    std::size_t jobs = 1;
};

/// Parses `args` (without the program name). Throws UsageError naming the
/// offending flag; `--help` output is returned through `help` when set.
Command parse_args(const std::vector<std::string> &args, std::string *help = nullptr);

/// Runs a parsed command; progress goes to `out`, machine-readable errors
/// to `err` (and `<out>/error.json` when an output directory is known).
int execute(const Command &command, std::ostream &out, std::ostream &err);

/// parse_args + execute with usage errors mapped to exit code 2.
int main(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

} // namespace storplan::cli
