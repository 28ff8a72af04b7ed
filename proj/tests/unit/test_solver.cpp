#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "storplan/error.hpp"
#include "storplan/milp.hpp"
#include "storplan/solver.hpp"

using namespace storplan;
using namespace storplan::solver;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string &name) {
    auto p = fs::temp_directory_path() / ("storplan_test_solver_" + name);
    fs::remove_all(p);
    return p;
}

// min 3x + 2y  s.t.  x >= 3, x + y >= 4.5, y integer.
milp::MilpModel tiny(bool infeasible = false) {
    milp::MilpModel m("tiny");
    auto x = m.add_variable("x", milp::VarKind::Continuous, 0.0, 10.0);
    auto y = m.add_variable("y", milp::VarKind::Integer, 0.0, 5.0);
    m.add_constraint(milp::LinearExpr{}.add(x, 1), milp::Sense::GreaterEqual, 3.0, "lo");
    m.add_constraint(milp::LinearExpr{}.add(x, 1).add(y, 1), milp::Sense::GreaterEqual, 4.5, "sum");
    if (infeasible)
        m.add_constraint(milp::LinearExpr{}.add(x, 1), milp::Sense::LessEqual, 2.0, "hi");
    m.add_objective(milp::LinearExpr{}.add(x, 3).add(y, 2));
    return m;
}

SolveRequest request_for(const milp::MilpModel &m, BackendDescriptor backend, const std::string &dir) {
    auto doc = milp::export_mps(m);
    SolveRequest r;
    r.model_mps = doc.text;
    r.name_map = doc.name_map;
    r.backend = std::move(backend);
    r.workdir = scratch(dir);
    r.time_limit = 60;
    for (const auto &v : m.variables()) r.expected_columns.push_back(v.name);
    return r;
}

} // namespace

TEST_CASE("status strings round trip") {
    for (Status s : {Status::Optimal, Status::FeasibleGap, Status::Infeasible, Status::Unbounded,
                     Status::Timeout})
        CHECK(status_from_string(to_string(s)) == s);
    CHECK_FALSE(status_from_string("bogus"));
}

TEST_CASE("name/value solution files") {
    auto s = parse_solution("# status optimal\n# objective 12.5\n# gap 0.0001\nx 3\ny 0.75\n",
                            SolutionFormat::NameValue);
    CHECK(s.status == Status::Optimal);
    CHECK(s.objective == 12.5);
    CHECK(s.achieved_gap == 0.0001);
    CHECK(s.value("y") == 0.75);
    CHECK(s.value_or("z", -1) == -1);
    CHECK_THROWS_AS(s.value("z"), BackendError);
    CHECK_THROWS_AS(parse_solution("x 3\n", SolutionFormat::NameValue), BackendError);
    CHECK_THROWS_AS(parse_solution("# status optimal\nx three\n", SolutionFormat::NameValue),
                    BackendError);
    auto again = parse_solution(write_solution(s), SolutionFormat::Auto);
    CHECK(again.values == s.values);
    CHECK(again.objective == s.objective);
}

TEST_CASE("columnar solution files") {
    const std::string opt = "Optimal - objective value 9.00000000\n"
                            "      0 x                      3                       0\n"
                            "      1 y                      3                       2\n";
    auto s = parse_solution(opt, SolutionFormat::Auto);
    CHECK(s.status == Status::Optimal);
    CHECK(s.objective == 9.0);
    CHECK(s.value("y") == 3.0);

    auto inf = parse_solution("Infeasible - objective value 0.00000000\n"
                              "**    0 x                      2                       0\n",
                              SolutionFormat::Columnar);
    CHECK(inf.status == Status::Infeasible);
    CHECK(inf.value("x") == 2.0);

    auto stop = parse_solution("Stopped on time - objective value 1e+50\n", SolutionFormat::Columnar);
    CHECK(stop.status == Status::Timeout);
    auto gap = parse_solution("Stopped on time - objective value 12.5\n      0 x 1 0\n",
                              SolutionFormat::Columnar);
    CHECK(gap.status == Status::FeasibleGap);
    CHECK_THROWS_AS(parse_solution("Weird - thing\n", SolutionFormat::Columnar), BackendError);
    CHECK_THROWS_AS(parse_solution("", SolutionFormat::Columnar), BackendError);
}

TEST_CASE("backend logs and argument templates") {
    auto log = parse_backend_log("...\nObjective value:                9.00000000\n"
                                 "Lower bound:                    8.99\nGap:                            0.0011\n");
    CHECK(log.objective == 9.0);
    CHECK(log.bound == 8.99);
    CHECK(log.gap == 0.0011);
    CHECK_FALSE(parse_backend_log("nothing here").objective);

    BackendDescriptor b{"solver", {"-m", "{model}", "--out={solution}", "{gap}", "{timelimit}"}};
    auto args = expand_arguments(b, "/w/model.mps", "/w/sol.txt", 0.001, 30);
    REQUIRE(args.size() == 5);
    CHECK(args[1] == "/w/model.mps");
    CHECK(args[2] == "--out=/w/sol.txt");
    CHECK(args[3] == "0.001");
    CHECK(args[4] == "30");
    CHECK(cbc_backend("/x/cbc").args.front() == "{model}");
}

TEST_CASE("request validation") {
    SolveRequest r;
    r.backend = BackendDescriptor{"true", {}};
    r.gap = 0.0;
    CHECK_THROWS_AS(validate_request(r), ValidationError);
    r.gap = 0.001;
    r.time_limit = 0;
    CHECK_THROWS_AS(validate_request(r), ValidationError);
}

TEST_CASE("process failures surface as BackendError") {
    auto m = tiny();
    auto missing = request_for(m, BackendDescriptor{"/nonexistent/solver-binary", {"{model}"}}, "missing");
    CHECK_THROWS_WITH_AS(solve(missing), doctest::Contains("could not be started"), BackendError);
    auto failing = request_for(m, BackendDescriptor{"/bin/false", {}}, "false");
    CHECK_THROWS_WITH_AS(solve(failing), doctest::Contains("without writing a solution"), BackendError);
    auto garbage = request_for(m, BackendDescriptor{"/bin/sh", {"-c", "echo junk > {solution}"}}, "junk");
    CHECK_THROWS_AS(solve(garbage), BackendError);
}

TEST_CASE("tiny MILP with every available backend") {
    auto discovered = discover_backend();
    if (!discovered) {
        WARN_MESSAGE(false, "no MILP backend available; skipping solve tests");
        return;
    }
    std::vector<BackendDescriptor> backends;
    for (const char *name : {"highs", "cbc"}) {
        try {
            auto b = backend_by_name(name);
            auto probe = request_for(tiny(), b, std::string("probe_") + name);
            solve(probe);
            backends.push_back(b);
        } catch (const Error &) {
        }
    }
    REQUIRE_FALSE(backends.empty());
    for (const auto &b : backends) {
        CAPTURE(b.label);
        auto m = tiny();
        m.add_objective(milp::LinearExpr{}.add_constant(100.0));
        auto req = request_for(m, b, "tiny_" + b.label);
        req.objective_offset = m.objective_constant();
        auto sol = solve(req);
        CHECK(sol.status == Status::Optimal);
        CHECK(sol.value("x") == doctest::Approx(3.5));
        CHECK(sol.value("y") == doctest::Approx(1.0));
        CHECK(sol.objective == doctest::Approx(112.5));
        CHECK(fs::exists(req.workdir / "solver.log"));

        auto inf = solve(request_for(tiny(true), b, "inf_" + b.label));
        CHECK(inf.status == Status::Infeasible);
        CHECK_FALSE(inf.has_values());
    }
}

TEST_CASE("long names are mapped back") {
    auto b = discover_backend();
    if (!b) return;
    milp::MilpModel m;
    auto x = m.add_variable("a name with spaces", milp::VarKind::Continuous, 0, 4);
    m.add_constraint(milp::LinearExpr{}.add(x, 1), milp::Sense::GreaterEqual, 2.0, "lower bound row");
    m.add_objective(milp::LinearExpr{}.add(x, 1));
    auto req = request_for(m, *b, "names");
    REQUIRE(req.name_map.size() == 2);
    auto sol = solve(req);
    CHECK(sol.value("a name with spaces") == doctest::Approx(2.0));
}
