#include <doctest.h>

#include <string>
#include <vector>

#include "storplan/error.hpp"
#include "storplan/milp.hpp"
#include "storplan/verify.hpp"

using namespace storplan;
using namespace storplan::milp;

namespace {

MilpModel small_model() {
    MilpModel m("small");
    auto x = m.add_variable("x", VarKind::Continuous, 0.0, 10.0);
    auto y = m.add_variable("y", VarKind::Integer, 0.0, kInf);
    auto z = m.add_variable("z", VarKind::Binary, 0.0, 1.0);
    auto f = m.add_variable("free", VarKind::Continuous, -kInf, kInf);
    m.add_constraint(LinearExpr{}.add(x, 1).add(y, 2), Sense::GreaterEqual, 3.0, "cover");
    m.add_constraint(LinearExpr{}.add(x, 1).add(z, -10), Sense::LessEqual, 0.0, "link");
    m.add_constraint(LinearExpr{}.add(f, 1).add(x, -1), Sense::Equal, 0.5, "def");
    m.add_objective(LinearExpr{}.add(x, 1.5).add(y, 2).add(z, 0.1).add_constant(7.25));
    return m;
}

} // namespace

TEST_CASE("variables and constraints are stored in insertion order") {
    MilpModel m;
    auto a = m.add_variable("a", VarKind::Continuous);
    auto b = m.add_variable("b", VarKind::Binary, 0, 1);
    CHECK(a.index == 0);
    CHECK(b.index == 1);
    CHECK(m.find_variable("b") == b);
    CHECK_FALSE(m.find_variable("nope"));

    const Term terms[] = {{a, 1.0}, {b, -2.0}};
    auto r = m.add_constraint(terms, Sense::LessEqual, 4.0, "eq1_t1");
    CHECK(m.find_constraint("eq1_t1") == r);
    CHECK(m.constraint(r).terms.size() == 2);
}

TEST_CASE("model misuse raises ModelError") {
    MilpModel m;
    auto a = m.add_variable("a", VarKind::Continuous);
    CHECK_THROWS_AS(m.add_variable("a", VarKind::Continuous), ModelError);
    CHECK_THROWS_AS(m.add_variable("", VarKind::Continuous), ModelError);
    CHECK_THROWS_AS(m.add_variable("bad", VarKind::Continuous, 2.0, 1.0), ModelError);
    CHECK_THROWS_AS(m.add_variable("bin", VarKind::Binary, 0.0, 2.0), ModelError);

    const Term dup[] = {{a, 1.0}, {a, 1.0}};
    CHECK_THROWS_WITH_AS(m.add_constraint(dup, Sense::Equal, 0.0, "d"),
                         doctest::Contains("appears twice"), ModelError);

    MilpModel other;
    for (int i = 0; i < 5; ++i) other.add_variable("v" + std::to_string(i), VarKind::Continuous);
    const Term foreign[] = {{VarId{4}, 1.0}};
    CHECK_THROWS_WITH_AS(m.add_constraint(foreign, Sense::Equal, 0.0, "f"),
                         doctest::Contains("unknown variable handle"), ModelError);

    const Term ok[] = {{a, 1.0}};
    m.add_constraint(ok, Sense::Equal, 0.0, "t");
    CHECK_THROWS_WITH_AS(m.add_constraint(ok, Sense::Equal, 0.0, "t"),
                         doctest::Contains("duplicate constraint tag"), ModelError);
    CHECK_THROWS_AS(m.add_constraint(ok, Sense::Equal, std::numeric_limits<double>::infinity(), "i"),
                    ModelError);

    m.freeze();
    CHECK_THROWS_AS(m.add_variable("late", VarKind::Continuous), ModelError);
    CHECK_THROWS_AS(m.add_constraint(ok, Sense::Equal, 0.0, "late"), ModelError);
}

TEST_CASE("expressions normalize and evaluate") {
    LinearExpr e;
    e.add(VarId{1}, 2.0).add(VarId{0}, 1.0).add(VarId{1}, -2.0).add(VarId{0}, 0.5).add_constant(3);
    auto n = e.normalized();
    REQUIRE(n.terms.size() == 1);
    CHECK(n.terms[0].var == VarId{0});
    CHECK(n.terms[0].coef == 1.5);
    const std::vector<double> vals = {2.0, 100.0};
    CHECK(e.evaluate(vals) == doctest::Approx(6.0));
}

TEST_CASE("stats count kinds, rows and nonzeros") {
    auto m = small_model();
    auto s = model_stats(m);
    CHECK(s.n_continuous == 2);
    CHECK(s.n_integer == 1);
    CHECK(s.n_binary == 1);
    CHECK(s.n_constraints == 3);
    CHECK(s.n_nonzeros == 6);
    CHECK(s.n_variables() == 4);
    CHECK(m.objective_constant() == 7.25);
}

TEST_CASE("MPS export is deterministic and complete") {
    auto a = export_mps(small_model());
    auto b = export_mps(small_model());
    CHECK(a.text == b.text);
    CHECK(a.name_map.empty());
    CHECK(a.text.find("'MARKER'") != std::string::npos);
    CHECK(a.text.find(" BV BND z") != std::string::npos);
    CHECK(a.text.find(" FR BND free") != std::string::npos);
    CHECK(a.text.find(" PL BND y") != std::string::npos);
    CHECK(a.text.find("* objective constant: 7.25") != std::string::npos);
    CHECK(export_lp(small_model()) == export_lp(small_model()));
    CHECK_THROWS_AS(export_mps(MilpModel{}), ModelError);
}

TEST_CASE("long or blank names are replaced and mapped") {
    MilpModel m;
    auto x = m.add_variable("has space", VarKind::Continuous);
    auto y = m.add_variable(std::string(40, 'y'), VarKind::Continuous);
    m.add_constraint(LinearExpr{}.add(x, 1).add(y, 1), Sense::GreaterEqual, 1, "row one");
    auto doc = export_mps(m, MpsOptions{16});
    CHECK(doc.name_map.size() == 3);
    CHECK(doc.name_map[0] == std::pair<std::string, std::string>{"C0", "has space"});
    CHECK(doc.text.find("has space") == std::string::npos);
    CHECK(doc.name_map_text().find("C0\thas space\n") != std::string::npos);
}

TEST_CASE("numbers round-trip through text") {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, 573.3, -2.5e17}) {
        CHECK(std::stod(format_number(v)) == v);
    }
    CHECK(format_number(3.0) == "3");
}

TEST_CASE("read_mps recovers the exported model") {
    auto m = small_model();
    auto back = verify::read_mps(export_mps(m).text);
    CHECK(model_stats(back) == model_stats(m));
    CHECK(back.objective() == m.objective());
    CHECK(back.objective_constant() == m.objective_constant());
    for (std::size_t i = 0; i < m.variables().size(); ++i) {
        CHECK(back.variables()[i].name == m.variables()[i].name);
        CHECK(back.variables()[i].kind == m.variables()[i].kind);
        CHECK(back.variables()[i].lb == m.variables()[i].lb);
        CHECK(back.variables()[i].ub == m.variables()[i].ub);
    }
    for (std::size_t r = 0; r < m.constraints().size(); ++r) {
        CHECK(back.constraints()[r].tag == m.constraints()[r].tag);
        CHECK(back.constraints()[r].sense == m.constraints()[r].sense);
        CHECK(back.constraints()[r].rhs == m.constraints()[r].rhs);
    }
    CHECK(export_mps(back).text == export_mps(m).text);
    CHECK_THROWS_AS(verify::read_mps("NAME x\nRANGES\n"), Error);
}
