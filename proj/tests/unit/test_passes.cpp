/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include <doctest.h>

#include "nmodl/parser.hpp"
#include "nmodl/passes.hpp"
#include "nmodl/printer.hpp"

using namespace nmodl;
using codegen::emit_nmodl;

namespace {

const char* header = R"(
NEURON {
    SUFFIX t
    USEION ca READ eca WRITE ica
    RANGE y, g
}
PARAMETER {
    N = 3
    gbar = 0.1
}
ASSIGNED {
    v
    eca
    ica
    y
    g
    a[4]
}
)";

ast::Node program(const std::string& body) {
    return parser::parse_source(std::string(header) + body);
}

std::string block_text(const ast::Node& p, ast::Kind kind) {
    ast::Node only(ast::Kind::Program);
    only.children.push_back(*ast::find_block(p, kind));
    return emit_nmodl(only);
}

bool has_message(const Diagnostics& diags, const std::string& part) {
    for (const auto& d: diags) {
        if (d.message.find(part) != std::string::npos) {
            return true;
        }
    }
    return false;
}

ast::Node cat() {
    return parser::parse_file(std::string(CORPUS_DIR) + "/cat.mod");
}

}  // namespace

TEST_CASE("fold literal arithmetic") {
    Diagnostics diags;
    passes::PassReport report;
    auto out = passes::constant_fold(program("BREAKPOINT { y = 2+3*4 }"), diags, &report);
    CHECK(block_text(out, ast::Kind::BreakpointBlock).find("y = 14\n") != std::string::npos);
    CHECK(report.nodes_changed == 2);
}

TEST_CASE("fold leaves symbolic expressions alone") {
    Diagnostics diags;
    auto in = program("BREAKPOINT { y = g+0*v }");
    auto out = passes::constant_fold(in, diags);
    CHECK(block_text(out, ast::Kind::BreakpointBlock).find("y = g + 0 * v") != std::string::npos);
    CHECK(ast::structurally_equal(in, out));
}

TEST_CASE("fold substitutes constant parameters in loop bounds") {
    Diagnostics diags;
    passes::PassReport report;
    auto out = passes::constant_fold(program("BREAKPOINT { LOCAL i\n FROM i = 0 TO N-1 { a[i] = 0 } }"), diags,
                                     &report);
    CHECK(block_text(out, ast::Kind::BreakpointBlock).find("FROM i = 0 TO 2 {") != std::string::npos);
    REQUIRE(report.symbols.size() == 1);
    CHECK(report.symbols[0] == "N");
}

TEST_CASE("fold keeps assigned parameters symbolic") {
    Diagnostics diags;
    auto out = passes::constant_fold(
        program("INITIAL { N = 2 }\nBREAKPOINT { LOCAL i\n FROM i = 0 TO N-1 { a[i] = 0 } }"), diags);
    CHECK(block_text(out, ast::Kind::BreakpointBlock).find("TO N - 1") != std::string::npos);
}

TEST_CASE("fold does not divide by literal zero") {
    Diagnostics diags;
    auto out = passes::constant_fold(program("BREAKPOINT { y = 1/0 }"), diags);
    CHECK(block_text(out, ast::Kind::BreakpointBlock).find("y = 1 / 0") != std::string::npos);
    CHECK(has_message(diags, "division by literal zero"));
}

TEST_CASE("fold relational and builtin calls") {
    Diagnostics diags;
    auto out = passes::constant_fold(program("BREAKPOINT { y = (2 < 3) + exp(0) - -(-4) }"), diags);
    CHECK(block_text(out, ast::Kind::BreakpointBlock).find("y = -2\n") != std::string::npos);
}

TEST_CASE("unroll literal loop") {
    Diagnostics diags;
    passes::PassReport report;
    auto out = passes::unroll_loops(program("BREAKPOINT { LOCAL i\n FROM i = 0 TO 2 { a[i] = i*2 } }"), diags,
                                    &report);
    auto text = block_text(out, ast::Kind::BreakpointBlock);
    CHECK(text.find("a[0] = 0\n") != std::string::npos);
    CHECK(text.find("a[1] = 2\n") != std::string::npos);
    CHECK(text.find("a[2] = 4\n") != std::string::npos);
    CHECK(text.find("FROM") == std::string::npos);
    // i is a LOCAL never read after the loop
    CHECK(text.find("i = 3") == std::string::npos);
    CHECK(report.nodes_changed == 1);
}

TEST_CASE("unroll keeps final loop variable value when it is read later") {
    Diagnostics diags;
    auto out = passes::unroll_loops(
        program("BREAKPOINT { LOCAL i\n FROM i = 1 TO 2 { a[i] = 1 }\n y = i }"), diags);
    auto text = block_text(out, ast::Kind::BreakpointBlock);
    CHECK(text.find("i = 3\n") != std::string::npos);
}

TEST_CASE("unroll renames body locals per copy") {
    Diagnostics diags;
    auto out = passes::unroll_loops(
        program("BREAKPOINT { LOCAL i\n FROM i = 0 TO 1 { LOCAL q\n q = i\n a[i] = q } }"), diags);
    auto text = block_text(out, ast::Kind::BreakpointBlock);
    CHECK(text.find("LOCAL q_0") != std::string::npos);
    CHECK(text.find("LOCAL q_1") != std::string::npos);
    CHECK(text.find("a[1] = q_1") != std::string::npos);
}

TEST_CASE("unroll reports non-literal bounds") {
    Diagnostics diags;
    auto out = passes::unroll_loops(program("BREAKPOINT { LOCAL i\n FROM i = 0 TO y { a[0] = i } }"), diags);
    CHECK(has_message(diags, "cannot unroll"));
    CHECK(block_text(out, ast::Kind::BreakpointBlock).find("FROM i = 0 TO y") != std::string::npos);
}

TEST_CASE("unroll nested loops") {
    Diagnostics diags;
    auto out = passes::unroll_loops(
        program("BREAKPOINT { LOCAL i, j\n FROM i = 0 TO 1 { FROM j = 0 TO 1 { a[i*2+j] = j } } }"), diags);
    auto text = block_text(out, ast::Kind::BreakpointBlock);
    CHECK(text.find("a[3] = 1") != std::string::npos);
    CHECK(text.find("a[2] = 0") != std::string::npos);
}

TEST_CASE("inline function call") {
    Diagnostics diags;
    passes::PassReport report;
    auto out = passes::inline_calls(program("FUNCTION f(x) { f = x*2 }\nBREAKPOINT { y = f(3)+1 }"), diags,
                                    &report);
    auto text = emit_nmodl(out);
    CHECK(text.find("LOCAL f_in_0\n") != std::string::npos);
    CHECK(text.find("f_in_0 = 3 * 2\n") != std::string::npos);
    CHECK(text.find("y = f_in_0 + 1\n") != std::string::npos);
    CHECK(text.find("FUNCTION") == std::string::npos);
    CHECK(report.nodes_changed == 1);
}

TEST_CASE("inline copies arguments that the callee writes") {
    Diagnostics diags;
    auto out = passes::inline_calls(
        program("PROCEDURE p(x) { x = x+1\n g = x }\nBREAKPOINT { p(y) }"), diags);
    auto text = block_text(out, ast::Kind::BreakpointBlock);
    CHECK(text.find("x_p_in_0 = y\n") != std::string::npos);
    CHECK(text.find("x_p_in_0 = x_p_in_0 + 1\n") != std::string::npos);
    CHECK(text.find("g = x_p_in_0\n") != std::string::npos);
}

TEST_CASE("inline keeps recursive calls") {
    Diagnostics diags;
    auto out = passes::inline_calls(
        program("FUNCTION f(x) { IF (x > 0) { f = f(x-1) } ELSE { f = 0 } }\nBREAKPOINT { y = f(2) }"), diags);
    CHECK(has_message(diags, "recursive"));
    CHECK(emit_nmodl(out).find("y = f(2)") != std::string::npos);
}

TEST_CASE("inline skips ELSE IF conditions and short circuit operands") {
    Diagnostics diags;
    auto out = passes::inline_calls(
        program("FUNCTION f(x) { f = x }\nBREAKPOINT { IF (v > 0) { y = 1 } ELSE IF (f(v) > 1) { y = 2 }\n"
                "IF (v > 0 && f(1) > 0) { y = 3 } }"),
        diags);
    auto text = emit_nmodl(out);
    CHECK(text.find("ELSE IF (f(v) > 1)") != std::string::npos);
    CHECK(text.find("v > 0 && f(1) > 0") != std::string::npos);
    CHECK(text.find("FUNCTION f") != std::string::npos);
}

TEST_CASE("inline rates into cat") {
    Diagnostics diags;
    auto out = passes::inline_calls(cat(), diags);
    auto text = emit_nmodl(out);
    CHECK(text.find("PROCEDURE") == std::string::npos);
    auto deriv = block_text(out, ast::Kind::DerivativeBlock);
    CHECK(deriv.find("LOCAL phi_m, phi_h, a") != std::string::npos);
    CHECK(deriv.find("a = v + shift") != std::string::npos);
    CHECK(deriv.find("m' = (minf - m) / mtau") != std::string::npos);
    // re-parse of the emitted text gives the same tree
    CHECK(ast::structurally_equal(parser::parse_source(text), out));
}

TEST_CASE("inline disabled by VERBATIM") {
    Diagnostics diags;
    auto out = passes::inline_calls(
        program("FUNCTION f(x) { f = x }\nVERBATIM\n/**/\nENDVERBATIM\nBREAKPOINT { y = f(1) }"), diags);
    CHECK(has_message(diags, "VERBATIM"));
    CHECK(emit_nmodl(out).find("y = f(1)") != std::string::npos);
}

TEST_CASE("usage analysis through IF branches") {
    auto both = passes::usage_analysis(
        program("BREAKPOINT { IF (v > 0) { g = 1 } ELSE { g = 2 }\n ica = g*(v-eca) }"));
    CHECK(both.at("g").defined_before_use.at("BREAKPOINT"));
    auto one = passes::usage_analysis(program("BREAKPOINT { IF (v > 0) { g = 1 }\n ica = g*(v-eca) }"));
    CHECK_FALSE(one.at("g").defined_before_use.at("BREAKPOINT"));
    const auto& events = one.at("g").events;
    REQUIRE(events.size() == 2);
    CHECK(events[0].kind == passes::DuEvent::Kind::Def);
    CHECK(events[0].path == "0.then.0");
    CHECK(events[1].kind == passes::DuEvent::Kind::Use);
    CHECK(events[1].path == "1");
}

TEST_CASE("usage analysis ignores shadowing locals") {
    auto usage = passes::usage_analysis(program("BREAKPOINT { LOCAL g\n g = 1\n y = g }"));
    CHECK(usage.at("g").events.empty());
    CHECK(usage.at("y").events.size() == 1);
}

TEST_CASE("localize cat after inlining") {
    Diagnostics diags;
    auto inlined = passes::inline_calls(cat(), diags);
    auto usage = passes::usage_analysis(inlined);
    passes::PassReport report;
    auto out = passes::localize(inlined, usage, {}, diags, &report);
    std::set<std::string> localized(report.symbols.begin(), report.symbols.end());
    CHECK(localized.count("minf") == 1);
    CHECK(localized.count("mtau") == 1);
    CHECK(localized.count("ica") == 0);
    auto text = emit_nmodl(out);
    CHECK(text.find("RANGE gcatbar, ica\n") != std::string::npos);
    auto deriv = block_text(out, ast::Kind::DerivativeBlock);
    CHECK(deriv.find("LOCAL phi_m, phi_h, a, hinf, htau, minf, mtau") != std::string::npos);
    const auto& global = symtab::global_table(out);
    CHECK(global.find_local("minf") == nullptr);
}

TEST_CASE("localize needs inlining and respects observe") {
    Diagnostics diags;
    auto p = cat();
    passes::PassReport report;
    passes::localize(p, passes::usage_analysis(p), {}, diags, &report);
    CHECK(report.symbols.empty());

    auto inlined = passes::inline_calls(p, diags);
    passes::localize(inlined, passes::usage_analysis(inlined), {"minf"}, diags, &report);
    std::set<std::string> localized(report.symbols.begin(), report.symbols.end());
    CHECK(localized.count("minf") == 0);
    CHECK(localized.count("mtau") == 1);
}
