/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include <cmath>
#include <random>

#include <doctest.h>

#include "nmodl/odetransform.hpp"
#include "nmodl/parser.hpp"
#include "nmodl/passes.hpp"
#include "nmodl/printer.hpp"

using namespace nmodl;
using codegen::emit_nmodl;
using symalg::SymExpr;
using symalg::variable;

namespace {

ast::Node annotated(const std::string& source) {
    return symtab::build_symbol_tables(parser::parse_source(source));
}

ast::Node derivative_of_kinetic(const std::string& source) {
    auto p = annotated(source);
    const auto* kin = ast::find_block(p, ast::Kind::KineticBlock);
    return ode::kinetic_to_derivative(*kin, symtab::global_table(p));
}

SymExpr rhs_of(const ast::Node& block, const std::string& state) {
    for (const auto& s: block.body()->children) {
        if (s.is(ast::Kind::DiffEq) && ast::variable_text(s.children[0]) == state) {
            return symalg::from_ast(s.children[1]);
        }
    }
    FAIL("no equation for " << state);
    return nullptr;
}

SymExpr c(double v) {
    return symalg::constant(v);
}

/// Value assigned to `name` by straight-line statements, evaluated in order.
double run(const std::vector<ast::Node>& statements, std::map<std::string, double> env, const std::string& name) {
    for (const auto& s: statements) {
        REQUIRE(s.is(ast::Kind::Assign));
        env[ast::variable_text(s.children[0])] = symalg::evaluate(symalg::from_ast(s.children[1]), env);
    }
    return env.at(name);
}

const char* ab_source = R"(
NEURON { SUFFIX ab }
PARAMETER { kf = 2 kb = 1 }
STATE { A B }
BREAKPOINT { SOLVE scheme METHOD sparse }
KINETIC scheme {
    ~ A <-> B (kf, kb)
    CONSERVE A + B = 1
}
)";

}  // namespace

TEST_CASE("mass action for A <-> B") {
    auto d = derivative_of_kinetic(ab_source);
    CHECK(d.is(ast::Kind::DerivativeBlock));
    auto A = variable("A"), B = variable("B"), kf = variable("kf"), kb = variable("kb");
    CHECK(symalg::equal(rhs_of(d, "A"), -kf * A + kb * B));
    CHECK(symalg::equal(rhs_of(d, "B"), kf * A - kb * B));
}

TEST_CASE("mass action with stoichiometry two") {
    auto d = derivative_of_kinetic(R"(
NEURON { SUFFIX dimer }
PARAMETER { kf = 2 kb = 1 }
STATE { A B }
KINETIC scheme { ~ 2A <-> B (kf, kb) }
)");
    auto A = variable("A"), B = variable("B"), kf = variable("kf"), kb = variable("kb");
    SymExpr flux = kf * symalg::power(A, c(2)) - kb * B;
    CHECK(symalg::equal(rhs_of(d, "A"), c(-2) * kf * symalg::power(A, c(2)) + c(2) * kb * B));
    CHECK(symalg::equal(rhs_of(d, "B"), flux));
    // -2*(kf*A^2 - kb*B) evaluated by hand
    std::map<std::string, double> env{{"A", 0.3}, {"B", 0.7}, {"kf", 2.0}, {"kb", 1.0}};
    CHECK(symalg::evaluate(rhs_of(d, "A"), env) == doctest::Approx(-2 * (2 * 0.09 - 0.7)));
}

TEST_CASE("empty kinetic block") {
    auto d = derivative_of_kinetic("NEURON { SUFFIX e }\nSTATE { A }\nKINETIC scheme { }\n");
    CHECK(d.is(ast::Kind::DerivativeBlock));
    CHECK(d.body()->children.empty());
}

TEST_CASE("non-integer stoichiometry is rejected") {
    CHECK_THROWS_WITH(derivative_of_kinetic("NEURON { SUFFIX e }\nSTATE { A B }\nKINETIC s { ~ 1.5 A <-> B (1, 1) }\n"),
                      doctest::Contains("non-integer stoichiometry"));
}

TEST_CASE("classify the cat channel as cnexp") {
    auto p = symtab::build_symbol_tables(parser::parse_file(std::string(CORPUS_DIR) + "/cat.mod"));
    const auto* block = ast::find_block(p, ast::Kind::DerivativeBlock);
    auto system = ode::ode_system(*block, symtab::global_table(p));
    REQUIRE(system.states == std::vector<std::string>{"m", "h"});
    auto plan = ode::classify(system, ode::Method::Cnexp);
    REQUIRE(plan.cnexp.size() == 2);
    auto mtau = variable("mtau");
    CHECK(symalg::equal(plan.cnexp[0].a, variable("minf") / mtau));
    CHECK(symalg::equal(plan.cnexp[0].b, c(-1) / mtau));
}

TEST_CASE("cnexp rejects nonlinear and coupled equations") {
    auto nonlinear = annotated("NEURON { SUFFIX n }\nSTATE { y }\nDERIVATIVE s { y' = -y^2 }\n");
    auto sys = ode::ode_system(*ast::find_block(nonlinear, ast::Kind::DerivativeBlock), symtab::global_table(nonlinear));
    CHECK_THROWS_WITH(ode::classify(sys, ode::Method::Cnexp), doctest::Contains("derivimplicit"));
    CHECK_THROWS_WITH(ode::classify(sys, ode::Method::Sparse), doctest::Contains("not linear"));
    CHECK_NOTHROW(ode::classify(sys, ode::Method::Derivimplicit));

    auto coupled = annotated("NEURON { SUFFIX n }\nSTATE { x y }\nDERIVATIVE s { x' = y\n y' = -x }\n");
    auto sys2 = ode::ode_system(*ast::find_block(coupled, ast::Kind::DerivativeBlock), symtab::global_table(coupled));
    CHECK_THROWS_WITH(ode::classify(sys2, ode::Method::Cnexp), doctest::Contains("coupled"));
    CHECK_NOTHROW(ode::classify(sys2, ode::Method::Sparse));
}

TEST_CASE("state-dependent assignments are substituted") {
    auto p = annotated("NEURON { SUFFIX n }\nPARAMETER { k = 1 }\nSTATE { A B }\n"
                       "DERIVATIVE s { LOCAL r\n r = k*A\n A' = -r\n B' = r }\n");
    auto sys = ode::ode_system(*ast::find_block(p, ast::Kind::DerivativeBlock), symtab::global_table(p));
    CHECK(symalg::equal(sys.derivatives[1], variable("k") * variable("A")));
    CHECK_THROWS_WITH(ode::classify(sys, ode::Method::Cnexp), doctest::Contains("coupled"));
}

TEST_CASE("equations inside control flow are rejected") {
    auto p = annotated("NEURON { SUFFIX n }\nSTATE { y }\nDERIVATIVE s { IF (1) { y' = 1 } }\n");
    CHECK_THROWS_WITH(ode::ode_system(*ast::find_block(p, ast::Kind::DerivativeBlock), symtab::global_table(p)),
                      doctest::Contains("control flow"));
}

TEST_CASE("cnexp update values") {
    auto y = variable("y"), tau = variable("tau"), yinf = variable("yinf");
    ode::CnexpTerm term{"y", yinf / tau, c(-1) / tau};
    std::map<std::string, double> env{{"y", 0.0}, {"yinf", 1.0}, {"tau", 1.0}, {"dt", 0.025}};

    auto exact = ode::solve_cnexp(term, false);
    CHECK(exact.locals.empty());
    // 1 - exp(-0.025)
    CHECK(run(exact.statements, env, "y") == doctest::Approx(0.024690087971667385).epsilon(1e-15));

    auto pade = ode::solve_cnexp(term, true);
    CHECK(pade.locals == std::vector<std::string>{"pade_x_y", "pade_e_y"});
    REQUIRE(pade.statements.size() == 3);
    // evaluate the rational branch by hand: 1 - (2 - 0.025)/(2 + 0.025)
    double x = symalg::evaluate(symalg::from_ast(pade.statements[0].children[1]), env);
    CHECK(x == -0.025);
    env["pade_e_y"] = (2 + x) / (2 - x);
    CHECK(symalg::evaluate(symalg::from_ast(pade.statements[2].children[1]), env) ==
          doctest::Approx(0.024691358024691357).epsilon(1e-15));

    ode::CnexpTerm forward{"y", c(2), c(0)};
    auto euler = ode::solve_cnexp(forward, false);
    CHECK(run(euler.statements, {{"y", 1.0}, {"dt", 0.1}}, "y") == doctest::Approx(1.2));
}

TEST_CASE("implicit euler residuals") {
    ode::OdeSystem decay{{"y"}, {c(-1) * variable("k") * variable("y")}, {}};
    auto sys = ode::implicit_euler_system(decay);
    REQUIRE(sys.old_values.size() == 1);
    CHECK(sys.old_values[0].second == "y_old");
    auto y = variable("y"), dt = variable("dt"), k = variable("k");
    CHECK(symalg::equal(sys.residuals[0], y - variable("y_old") + dt * k * y));

    auto p = annotated(ab_source);
    auto d = ode::kinetic_to_derivative(*ast::find_block(p, ast::Kind::KineticBlock), symtab::global_table(p));
    auto ab = ode::ode_system(d, symtab::global_table(p));
    auto with_conserve = ode::implicit_euler_system(ab);
    CHECK(symalg::equal(with_conserve.residuals[1], variable("A") + variable("B") - c(1)));

    ode::OdeSystem uncoupled{{"x", "y"}, {c(-1) * variable("x"), c(-2) * variable("y")}, {}};
    auto u = ode::implicit_euler_system(uncoupled);
    CHECK(symalg::differentiate(u.residuals[0], "y")->is_constant(0));
    CHECK(symalg::differentiate(u.residuals[1], "x")->is_constant(0));
}

TEST_CASE("sparse lowering: symbolic for small systems, LU node otherwise") {
    Diagnostics diags;
    auto small = ode::lower(parser::parse_source(ab_source), {}, diags);
    auto text = emit_nmodl(small);
    CHECK(text.find("LINEAR") == std::string::npos);
    CHECK(text.find("SOLVE scheme\n") != std::string::npos);
    CHECK(text.find("DERIVATIVE scheme") != std::string::npos);
    CHECK(ast::structurally_equal(parser::parse_source(text), small));

    auto chain = ode::lower(parser::parse_source(R"(
NEURON { SUFFIX chain }
PARAMETER { k1 = 2 k2 = 1 }
STATE { A B C D }
BREAKPOINT { SOLVE scheme METHOD sparse }
KINETIC scheme {
    ~ A <-> B (k1, k2)
    ~ B <-> C (k1, k2)
    ~ C <-> D (k1, k2)
}
)"),
                            {}, diags);
    auto chain_text = emit_nmodl(chain);
    CHECK(chain_text.find("LINEAR (A, B, C, D) {") != std::string::npos);
    CHECK(ast::structurally_equal(parser::parse_source(chain_text), chain));
}

TEST_CASE("symbolic elimination with and without CSE agree") {
    ode::OdeSystem tri{{"A", "B", "C"},
                       {c(-2) * variable("A") + variable("B"),
                        c(2) * variable("A") - c(3) * variable("B") + variable("k") * variable("C"),
                        c(2) * variable("B") - variable("k") * variable("C")},
                       {}};
    auto sys = ode::implicit_euler_system(tri);
    int counter = 0;
    ode::LoweringOptions with;
    auto cse = ode::lower_sparse(sys, with, {}, counter);
    CHECK(counter > 0);
    CHECK(std::find(cse.locals.begin(), cse.locals.end(), "tmp_0") != cse.locals.end());
    ode::LoweringOptions without;
    without.solver_cse = false;
    int none = 0;
    auto plain = ode::lower_sparse(sys, without, {}, none);
    CHECK(none == 0);

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.1, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::map<std::string, double> env{{"A", u(rng)}, {"B", u(rng)}, {"C", u(rng)}, {"k", u(rng)}, {"dt", 0.1}};
        for (const char* x: {"A", "B", "C"}) {
            double a = run(cse.statements, env, x);
            double b = run(plain.statements, env, x);
            CHECK(std::fabs(a - b) <= 1e-14 * std::fabs(b));
        }
        // the solution satisfies the residual equations
        auto after = env;
        for (const auto& s: plain.statements) {
            after[ast::variable_text(s.children[0])] = symalg::evaluate(symalg::from_ast(s.children[1]), after);
        }
        for (const auto& f: sys.residuals) {
            CHECK(std::fabs(symalg::evaluate(f, after)) < 1e-12);
        }
    }
}

TEST_CASE("derivimplicit builds a Newton node with exact Jacobian") {
    Diagnostics diags;
    auto out = ode::lower(parser::parse_source(R"(
NEURON { SUFFIX nl }
PARAMETER { k = 1 }
STATE { y }
BREAKPOINT { SOLVE states METHOD derivimplicit }
DERIVATIVE states { y' = -k*y }
)"),
                          {}, diags);
    const ast::Node* solver = nullptr;
    ast::traverse(out, [&](const ast::Node& n) {
        if (n.is(ast::Kind::NewtonSolve)) {
            solver = &n;
        }
    });
    REQUIRE(solver != nullptr);
    auto system = ode::solver_system(*solver);
    REQUIRE(system.jacobian.size() == 1);
    auto dt = variable("dt"), k = variable("k");
    CHECK(symalg::equal(system.jacobian[0][0], c(1) + dt * k));
}

TEST_CASE("lower the cat channel") {
    Diagnostics diags;
    auto out = ode::lower(parser::parse_file(std::string(CORPUS_DIR) + "/cat.mod"), {}, diags);
    auto text = emit_nmodl(out);
    CHECK(text.find("m = -minf * expm1(-dt / mtau) + m * exp(-dt / mtau)") != std::string::npos);
    CHECK(text.find("METHOD") == std::string::npos);
    CHECK(text.find("m'") == std::string::npos);
    // lowering is idempotent
    CHECK(ast::structurally_equal(ode::lower(out, {}, diags), out));
}

TEST_CASE("lower rejects unknown methods") {
    Diagnostics diags;
    CHECK_THROWS_WITH(ode::lower(parser::parse_source("NEURON { SUFFIX n }\nSTATE { y }\n"
                                                      "BREAKPOINT { SOLVE s METHOD runge }\nDERIVATIVE s { y' = 1 }\n"),
                                 {}, diags),
                      doctest::Contains("unsupported METHOD runge"));
}

TEST_CASE("derived conductance") {
    Diagnostics diags;
    const char* head = "NEURON { SUFFIX c\n USEION ca READ eca WRITE ica\n NONSPECIFIC_CURRENT i }\n"
                       "PARAMETER { gca = 0.1\n g = 0.2\n e = -60 }\nASSIGNED { v\n eca\n ica\n i }\n";
    auto ohmic = ode::derive_conductance(parser::parse_source(std::string(head) + "BREAKPOINT { ica = gca*(v-eca) }"),
                                         diags);
    auto text = emit_nmodl(ohmic);
    CHECK(text.find("g_ca_auto = gca\n") != std::string::npos);
    CHECK(text.find("CONDUCTANCE g_ca_auto USEION ca") != std::string::npos);
    CHECK(text.find("LOCAL g_ca_auto") != std::string::npos);

    auto quadratic = ode::derive_conductance(parser::parse_source(std::string(head) + "BREAKPOINT { i = g*(v-e)^2 }"),
                                             diags);
    CHECK(emit_nmodl(quadratic).find("CONDUCTANCE") == std::string::npos);

    auto user = parser::parse_source(std::string(head) +
                                     "BREAKPOINT { LOCAL gg\n gg = gca\n ica = gca*(v-eca)\n CONDUCTANCE gg USEION ca }");
    auto kept = ode::derive_conductance(user, diags);
    CHECK(emit_nmodl(kept).find("g_ca_auto") == std::string::npos);

    auto via_local = ode::derive_conductance(
        parser::parse_source(std::string(head) + "BREAKPOINT { LOCAL gx\n gx = g*2\n i = gx*(v-e) }"), diags);
    CHECK(emit_nmodl(via_local).find("g_i_auto = 2 * g\n") != std::string::npos);
}
