#include "storplan/solver.hpp"

#include <cerrno>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdlib>
#include <cstring>
#include <fcntl.h>
#include <fstream>
#include <regex>
#include <sstream>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>
#include <unordered_map>

#include "storplan/error.hpp"
#include "storplan/milp.hpp"

#ifndef STORPLAN_HIGHS_DRIVER
#define STORPLAN_HIGHS_DRIVER ""
#endif
#ifndef STORPLAN_CBC_DEFAULT
#define STORPLAN_CBC_DEFAULT "cbc"
#endif

namespace storplan::solver {

namespace fs = std::filesystem;

std::string_view to_string(Status status) {
    switch (status) {
    case Status::Optimal: return "optimal";
    case Status::FeasibleGap: return "feasible-gap";
    case Status::Infeasible: return "infeasible";
    case Status::Unbounded: return "unbounded";
    case Status::Timeout: return "timeout";
    }
    return "?";
}

std::optional<Status> status_from_string(std::string_view text) {
    for (Status s : {Status::Optimal, Status::FeasibleGap, Status::Infeasible, Status::Unbounded,
                     Status::Timeout}) {
        if (text == to_string(s)) return s;
    }
    return std::nullopt;
}

double Solution::value(const std::string &name) const {
    auto it = values.find(name);
    if (it == values.end()) throw BackendError("solution has no value for '" + name + "'");
    return it->second;
}

double Solution::value_or(const std::string &name, double fallback) const {
    auto it = values.find(name);
    return it == values.end() ? fallback : it->second;
}

BackendDescriptor highs_backend(std::string python, std::string script) {
    if (script.empty()) script = STORPLAN_HIGHS_DRIVER;
    BackendDescriptor b;
    b.label = "highs";
    b.executable = std::move(python);
    b.args = {script, "{model}", "{solution}", "--gap", "{gap}", "--time-limit", "{timelimit}"};
    b.format = SolutionFormat::NameValue;
    return b;
}

BackendDescriptor cbc_backend(std::string executable) {
    BackendDescriptor b;
    b.label = "cbc";
    b.executable = std::move(executable);
    b.args = {"{model}", "ratio", "{gap}", "sec", "{timelimit}", "threads", "1",
              "printingOptions", "all", "solve", "solu", "{solution}"};
    b.format = SolutionFormat::Columnar;
    return b;
}

BackendDescriptor backend_by_name(std::string_view name) {
    const char *override_path = std::getenv("STORPLAN_SOLVER");
    if (name == "highs") {
        // The override names the driver script for this backend.
        auto b = highs_backend("python3", override_path ? override_path : "");
        return b;
    }
    if (name == "cbc") return cbc_backend(override_path ? override_path : STORPLAN_CBC_DEFAULT);
    throw BackendError("unknown backend '" + std::string(name) + "' (expected highs or cbc)");
}

namespace {

int run_process(const std::string &exe, const std::vector<std::string> &args, const fs::path &cwd,
                const fs::path &log, double wall_limit) {
    pid_t pid = fork();
    if (pid < 0) throw BackendError(std::string("fork failed: ") + std::strerror(errno));
    if (pid == 0) {
        if (!cwd.empty() && chdir(cwd.c_str()) != 0) _exit(126);
        int fd = open(log.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        if (fd >= 0) {
            dup2(fd, STDOUT_FILENO);
            dup2(fd, STDERR_FILENO);
            close(fd);
        }
        std::vector<char *> argv;
        argv.push_back(const_cast<char *>(exe.c_str()));
        for (const auto &a : args) argv.push_back(const_cast<char *>(a.c_str()));
        argv.push_back(nullptr);
        execvp(exe.c_str(), argv.data());
        _exit(127);
    }
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::duration<double>(wall_limit);
    int status = 0;
    auto delay = std::chrono::milliseconds(1);
    while (true) {
        pid_t r = waitpid(pid, &status, WNOHANG);
        if (r == pid) break;
        if (r < 0 && errno != EINTR) throw BackendError("waitpid failed");
        if (std::chrono::steady_clock::now() > deadline) {
            kill(pid, SIGKILL);
            waitpid(pid, &status, 0);
            return -SIGKILL;
        }
        std::this_thread::sleep_for(delay);
        if (delay < std::chrono::milliseconds(50)) delay *= 2;
    }
    if (WIFSIGNALED(status)) return -WTERMSIG(status);
    return WEXITSTATUS(status);
}

std::string read_text(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

double parse_double(const std::string &tok, const std::string &context) {
    try {
        std::size_t used = 0;
        double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception &) {
        if (tok == "inf" || tok == "+inf" || tok == "Infinity") return HUGE_VAL;
        if (tok == "-inf" || tok == "-Infinity") return -HUGE_VAL;
        throw BackendError("unparseable number '" + tok + "' in " + context);
    }
}

std::vector<std::string> tokens(const std::string &line) {
    std::istringstream is(line);
    std::vector<std::string> out;
    std::string t;
    while (is >> t) out.push_back(t);
    return out;
}

Solution parse_name_value(const std::string &text) {
    Solution sol;
    std::optional<Status> status;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto tk = tokens(line);
        if (tk.empty()) continue;
        const std::string ctx = "solution line " + std::to_string(lineno);
        if (tk[0] == "#") {
            if (tk.size() < 3) continue;
            if (tk[1] == "status") {
                status = status_from_string(tk[2]);
                if (!status) throw BackendError(ctx + ": unknown status '" + tk[2] + "'");
            } else if (tk[1] == "objective") {
                sol.objective = parse_double(tk[2], ctx);
            } else if (tk[1] == "gap") {
                sol.achieved_gap = parse_double(tk[2], ctx);
            }
            continue;
        }
        if (tk.size() != 2) throw BackendError(ctx + ": expected '<name> <value>'");
        sol.values[tk[0]] = parse_double(tk[1], ctx);
    }
    if (!status) throw BackendError("solution file has no '# status' line");
    sol.status = *status;
    return sol;
}

Solution parse_columnar(const std::string &text) {
    Solution sol;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++lineno;
        auto tk = tokens(line);
        if (tk.empty()) continue;
        if (!header) {
            header = true;
            const auto pos = line.find("objective value");
            std::string head = line.substr(0, line.find(" - "));
            while (!head.empty() && head.front() == ' ') head.erase(head.begin());
            if (pos != std::string::npos) {
                auto rest = tokens(line.substr(pos + std::strlen("objective value")));
                if (!rest.empty()) sol.objective = parse_double(rest[0], "status line");
            }
            if (head.rfind("Optimal", 0) == 0) {
                sol.status = Status::Optimal;
            } else if (head.find("nfeasible") != std::string::npos) {
                sol.status = Status::Infeasible;
            } else if (head.find("nbounded") != std::string::npos) {
                sol.status = Status::Unbounded;
            } else if (head.rfind("Stopped", 0) == 0) {
                sol.status = std::fabs(sol.objective) >= 1e49 ? Status::Timeout : Status::FeasibleGap;
            } else {
                throw BackendError("unrecognised solution status line: '" + line + "'");
            }
            continue;
        }
        std::size_t i = 0;
        if (tk[0] == "**") i = 1;
        if (tk.size() < i + 3) throw BackendError("solution line " + std::to_string(lineno) +
                                                  ": expected '<index> <name> <value> ...'");
        sol.values[tk[i + 1]] = parse_double(tk[i + 2], "solution line " + std::to_string(lineno));
    }
    if (!header) throw BackendError("empty solution file");
    if (sol.status == Status::Timeout) sol.values.clear();
    return sol;
}

} // namespace

Solution parse_solution(const std::string &text, SolutionFormat format) {
    if (format == SolutionFormat::Auto) {
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) {
            auto tk = tokens(line);
            if (tk.empty()) continue;
            format = tk[0] == "#" ? SolutionFormat::NameValue : SolutionFormat::Columnar;
            break;
        }
        if (format == SolutionFormat::Auto) throw BackendError("empty solution file");
    }
    return format == SolutionFormat::NameValue ? parse_name_value(text) : parse_columnar(text);
}

std::string write_solution(const Solution &solution) {
    std::string out = "# status " + std::string(to_string(solution.status)) + "\n";
    if (solution.has_values()) {
        out += "# objective " + milp::format_number(solution.objective) + "\n";
        out += "# gap " + milp::format_number(solution.achieved_gap) + "\n";
        for (const auto &[name, v] : solution.values) out += name + " " + milp::format_number(v) + "\n";
    }
    return out;
}

LogSummary parse_backend_log(const std::string &log) {
    LogSummary s;
    static const std::regex kObjective(R"(Objective value:\s*([-+0-9.eE]+))");
    static const std::regex kBound(R"((?:Lower bound|Dual bound):\s*([-+0-9.eE]+))");
    static const std::regex kGap(R"(Gap:\s*([-+0-9.eE]+))");
    std::smatch m;
    auto last = [&](const std::regex &re) -> std::optional<double> {
        std::optional<double> v;
        for (auto it = std::sregex_iterator(log.begin(), log.end(), re); it != std::sregex_iterator();
             ++it) {
            try {
                v = std::stod((*it)[1].str());
            } catch (const std::exception &) {
            }
        }
        return v;
    };
    s.objective = last(kObjective);
    s.bound = last(kBound);
    s.gap = last(kGap);
    if (!s.gap && s.objective && s.bound) {
        s.gap = std::fabs(*s.objective - *s.bound) / std::max(std::fabs(*s.objective), 1e-10);
    }
    return s;
}

std::vector<std::string> expand_arguments(const BackendDescriptor &backend, const fs::path &model,
                                          const fs::path &solution, double gap, double time_limit) {
    const std::unordered_map<std::string, std::string> subst = {
        {"{model}", model.string()},
        {"{solution}", solution.string()},
        {"{gap}", milp::format_number(gap)},
        {"{timelimit}", milp::format_number(time_limit)},
    };
    std::vector<std::string> out;
    for (std::string arg : backend.args) {
        for (const auto &[key, value] : subst) {
            for (auto pos = arg.find(key); pos != std::string::npos; pos = arg.find(key, pos + value.size()))
                arg.replace(pos, key.size(), value);
        }
        out.push_back(std::move(arg));
    }
    return out;
}

void validate_request(const SolveRequest &request) {
    if (!(request.gap > 0.0 && request.gap < 1.0)) throw ValidationError("MIP gap must be in (0,1)");
    if (!(request.time_limit > 0.0)) throw ValidationError("time limit must be > 0");
    if (request.backend.executable.empty()) throw BackendError("backend executable not set");
    if (request.model_mps.empty()) throw BackendError("empty model document");
}

Solution solve(const SolveRequest &request) {
    validate_request(request);
    fs::path dir = request.workdir;
    if (dir.empty()) {
        dir = fs::temp_directory_path() / ("storplan_" + std::to_string(getpid()) + "_" +
                                           std::to_string(std::chrono::steady_clock::now()
                                                              .time_since_epoch()
                                                              .count()));
    }
    fs::create_directories(dir);
    dir = fs::absolute(dir);
    const fs::path model = dir / "model.mps";
    const fs::path solution_path = dir / "solution.raw";
    const fs::path log = dir / "solver.log";
    {
        std::ofstream out(model, std::ios::binary);
        out << request.model_mps;
        if (!out) throw BackendError("cannot write " + model.string());
    }
    fs::remove(solution_path);

    const auto args =
        expand_arguments(request.backend, model, solution_path, request.gap, request.time_limit);
    const int rc = run_process(request.backend.executable, args, dir, log,
                               request.time_limit * 1.5 + 60.0);
    const std::string log_text = read_text(log);
    if (rc == 127)
        throw BackendError("backend executable '" + request.backend.executable + "' could not be started");
    if (!fs::exists(solution_path)) {
        std::string tail = log_text.size() > 2000 ? log_text.substr(log_text.size() - 2000) : log_text;
        throw BackendError("backend '" + request.backend.label + "' exited with status " +
                           std::to_string(rc) + " without writing a solution\n" + tail);
    }
    if (rc < 0)
        throw BackendError("backend '" + request.backend.label + "' killed by signal " +
                           std::to_string(-rc));

    Solution sol = parse_solution(read_text(solution_path), request.backend.format);

    if (!request.name_map.empty() && !sol.values.empty()) {
        std::map<std::string, double> renamed;
        std::unordered_map<std::string, std::string> map(request.name_map.begin(), request.name_map.end());
        for (auto &[name, v] : sol.values) {
            auto it = map.find(name);
            renamed[it == map.end() ? name : it->second] = v;
        }
        sol.values = std::move(renamed);
    }
    if (sol.has_values()) {
        const bool columnar = request.backend.format == SolutionFormat::Columnar ||
                              (request.backend.format == SolutionFormat::Auto &&
                               read_text(solution_path).rfind("#", 0) != 0);
        for (const auto &name : request.expected_columns) {
            if (sol.values.count(name)) continue;
            // Columnar writers may omit zero-valued columns.
            if (columnar)
                sol.values[name] = 0.0;
            else
                throw BackendError("solution has no value for column '" + name + "'");
        }
        if (columnar) {
            auto summary = parse_backend_log(log_text);
            if (sol.status == Status::FeasibleGap && summary.gap) sol.achieved_gap = *summary.gap;
            if (sol.status == Status::Optimal) sol.achieved_gap = summary.gap.value_or(0.0);
        }
        sol.objective += request.objective_offset;
        if (sol.status == Status::FeasibleGap && sol.achieved_gap <= request.gap)
            sol.status = Status::Optimal;
    }
    return sol;
}

std::optional<BackendDescriptor> discover_backend() {
    if (const char *env = std::getenv("STORPLAN_BACKEND")) {
        try {
            return backend_by_name(env);
        } catch (const BackendError &) {
            return std::nullopt;
        }
    }
    auto works = [](const BackendDescriptor &b, const std::vector<std::string> &probe) {
        const fs::path log = fs::temp_directory_path() / ("storplan_probe_" + std::to_string(getpid()));
        int rc = -1;
        try {
            rc = run_process(b.executable, probe, {}, log, 60.0);
        } catch (const BackendError &) {
        }
        std::error_code ec;
        fs::remove(log, ec);
        return rc == 0;
    };
    auto highs = backend_by_name("highs");
    if (!highs.args.empty() && !highs.args[0].empty() && fs::exists(highs.args[0]) &&
        works(highs, {highs.args[0], "--check"}))
        return highs;
    auto cbc = backend_by_name("cbc");
    if (works(cbc, {"-quit"})) return cbc;
    return std::nullopt;
}

} // namespace storplan::solver
