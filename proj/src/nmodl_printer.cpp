/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include "nmodl/printer.hpp"

#include <fmt/format.h>

namespace nmodl::codegen {

using ast::Kind;
using ast::Node;

namespace {

constexpr int prec_unary = 6;
constexpr int prec_power = 7;
constexpr int prec_primary = 8;

std::string number_text(const Node& n) {
    return n.text.empty() ? ast::format_number(n.value) : n.text;
}

std::string wrap(const Node& e, bool parens) {
    std::string s = print_expression(e);
    return parens ? "(" + s + ")" : s;
}

class NmodlPrinter {
  public:
    std::string run(const Node& program) {
        bool first = true;
        for (const auto& block: program.children) {
            if (!first) {
                out_ += '\n';
            }
            first = false;
            top_level(block);
        }
        return out_;
    }

  private:
    std::string out_;
    int indent_ = 0;

    void line(const std::string& text) {
        out_.append(static_cast<std::size_t>(indent_) * 4, ' ');
        out_ += text;
        out_ += '\n';
    }

    static std::string name_list(const std::vector<Node>& names) {
        std::string s;
        for (const auto& n: names) {
            if (!s.empty()) {
                s += ", ";
            }
            s += n.name;
        }
        return s;
    }

    void top_level(const Node& block) {
        switch (block.kind) {
        case Kind::Title:
            line("TITLE " + block.text);
            break;
        case Kind::Verbatim:
            line("VERBATIM" + block.text + "ENDVERBATIM");
            break;
        case Kind::NeuronBlock:
            line("NEURON {");
            ++indent_;
            for (const auto& stmt: block.children) {
                neuron_statement(stmt);
            }
            --indent_;
            line("}");
            break;
        case Kind::UnitsBlock:
            line("UNITS {" + block.text + "}");
            break;
        case Kind::ParamBlock:
        case Kind::AssignedBlock:
        case Kind::StateBlock:
            line(block.is(Kind::ParamBlock)      ? "PARAMETER {"
                 : block.is(Kind::AssignedBlock) ? "ASSIGNED {"
                                                 : "STATE {");
            ++indent_;
            for (const auto& decl: block.children) {
                declaration(decl);
            }
            --indent_;
            line("}");
            break;
        case Kind::BreakpointBlock:
            statement_block("BREAKPOINT", *block.body());
            break;
        case Kind::InitialBlock:
            statement_block("INITIAL", *block.body());
            break;
        case Kind::DerivativeBlock:
            statement_block("DERIVATIVE " + block.name, *block.body());
            break;
        case Kind::KineticBlock:
            statement_block("KINETIC " + block.name, *block.body());
            break;
        case Kind::LinearBlock:
            statement_block("LINEAR " + block.name, *block.body());
            break;
        case Kind::NonLinearBlock:
            statement_block("NONLINEAR " + block.name, *block.body());
            break;
        case Kind::ProcedureBlock:
        case Kind::FunctionBlock: {
            std::string head = block.is(Kind::ProcedureBlock) ? "PROCEDURE " : "FUNCTION ";
            head += block.name + "(";
            bool first = true;
            for (const auto& arg: block.children) {
                if (!arg.is(Kind::Argument)) {
                    continue;
                }
                if (!first) {
                    head += ", ";
                }
                first = false;
                head += arg.name;
                if (!arg.unit.empty()) {
                    head += " (" + arg.unit + ")";
                }
            }
            head += ")";
            if (!block.unit.empty()) {
                head += " (" + block.unit + ")";
            }
            statement_block(head, *block.body());
            break;
        }
        default:
            throw CompileError(fmt::format("cannot print {} at top level", ast::kind_name(block.kind)),
                               block.span);
        }
    }

    void neuron_statement(const Node& stmt) {
        switch (stmt.kind) {
        case Kind::Suffix:
            line(stmt.text + " " + stmt.name);
            break;
        case Kind::UseIon: {
            std::string s = "USEION " + stmt.name;
            for (std::string mode: {"READ", "WRITE"}) {
                std::string names;
                for (const auto& n: stmt.children) {
                    if (n.is(Kind::Name) && n.text == mode) {
                        names += (names.empty() ? "" : ", ") + n.name;
                    }
                }
                if (!names.empty()) {
                    s += " " + mode + " " + names;
                }
            }
            for (const auto& n: stmt.children) {
                if (n.is(Kind::Number)) {
                    s += " VALENCE " + number_text(n);
                }
            }
            line(s);
            break;
        }
        case Kind::Range:
            line("RANGE " + name_list(stmt.children));
            break;
        case Kind::Global:
            line("GLOBAL " + name_list(stmt.children));
            break;
        case Kind::NonspecificCurrent:
            line("NONSPECIFIC_CURRENT " + name_list(stmt.children));
            break;
        default:
            throw CompileError("cannot print NEURON statement", stmt.span);
        }
    }

    void declaration(const Node& decl) {
        std::string s = decl.name;
        if (decl.length > 0) {
            s += fmt::format("[{}]", decl.length);
        }
        if (!decl.children.empty()) {
            s += " = " + number_text(decl.children[0]);
        }
        if (!decl.unit.empty()) {
            s += " (" + decl.unit + ")";
        }
        if (!decl.limits.empty()) {
            s += " <" + decl.limits + ">";
        }
        line(s);
    }

    void statement_block(const std::string& head, const Node& block) {
        line(head + " {");
        body(block);
        line("}");
    }

    void body(const Node& block) {
        ++indent_;
        for (const auto& stmt: block.children) {
            statement(stmt);
        }
        --indent_;
    }

    void if_chain(const Node& node, const std::string& prefix) {
        line(prefix + "IF (" + print_expression(node.children[0]) + ") {");
        body(node.children[1]);
        if (node.children.size() > 2) {
            const Node& alt = node.children[2];
            if (alt.is(Kind::If)) {
                if_chain(alt, "} ELSE ");
                return;
            }
            line("} ELSE {");
            body(alt);
        }
        line("}");
    }

    static std::string reactants(const Node& list) {
        std::string s;
        for (const auto& r: list.children) {
            if (!s.empty()) {
                s += " + ";
            }
            if (r.value != 1) {
                s += ast::format_number(r.value) + " ";
            }
            s += r.name;
            if (!r.children.empty()) {
                s += "[" + print_expression(r.children[0]) + "]";
            }
        }
        return s;
    }

    void statement(const Node& stmt) {
        switch (stmt.kind) {
        case Kind::Verbatim:
            line("VERBATIM" + stmt.text + "ENDVERBATIM");
            break;
        case Kind::LocalDecl: {
            std::string s;
            for (const auto& n: stmt.children) {
                s += (s.empty() ? "" : ", ") + n.name;
                if (n.length > 0) {
                    s += fmt::format("[{}]", n.length);
                }
            }
            line("LOCAL " + s);
            break;
        }
        case Kind::Assign:
            line(print_expression(stmt.children[0]) + " = " + print_expression(stmt.children[1]));
            break;
        case Kind::DiffEq: {
            const Node& prime = stmt.children[0];
            std::string lhs = prime.name;
            if (!prime.children.empty()) {
                lhs += "[" + print_expression(prime.children[0]) + "]";
            }
            lhs.append(static_cast<std::size_t>(prime.value), '\'');
            line(lhs + " = " + print_expression(stmt.children[1]));
            break;
        }
        case Kind::ExprStatement:
            line(print_expression(stmt.children[0]));
            break;
        case Kind::Solve:
            line("SOLVE " + stmt.name + (stmt.text.empty() ? "" : " METHOD " + stmt.text));
            break;
        case Kind::Conductance:
            line("CONDUCTANCE " + stmt.name + (stmt.text.empty() ? "" : " USEION " + stmt.text));
            break;
        case Kind::If:
            if_chain(stmt, "");
            break;
        case Kind::While:
            line("WHILE (" + print_expression(stmt.children[0]) + ") {");
            body(stmt.children[1]);
            line("}");
            break;
        case Kind::FromLoop:
            line(fmt::format("FROM {} = {} TO {} {{",
                             stmt.name,
                             print_expression(stmt.children[0]),
                             print_expression(stmt.children[1])));
            body(stmt.children[2]);
            line("}");
            break;
        case Kind::Reaction:
            line(fmt::format("~ {} <-> {} ({}, {})",
                             reactants(stmt.children[0]),
                             reactants(stmt.children[1]),
                             print_expression(stmt.children[2]),
                             print_expression(stmt.children[3])));
            break;
        case Kind::Conserve:
            line("CONSERVE " + print_expression(stmt.children[0]) + " = " +
                 print_expression(stmt.children[1]));
            break;
        case Kind::LinEq:
            line("~ " + print_expression(stmt.children[0]) + " = " +
                 print_expression(stmt.children[1]));
            break;
        case Kind::LinearSolve:
        case Kind::NewtonSolve: {
            std::vector<Node> unknowns;
            for (const auto& c: stmt.children) {
                if (c.is(Kind::Name)) {
                    unknowns.push_back(c);
                }
            }
            line(std::string(stmt.is(Kind::LinearSolve) ? "LINEAR (" : "NONLINEAR (") +
                 name_list(unknowns) + ") {");
            ++indent_;
            for (const auto& c: stmt.children) {
                if (c.is(Kind::LinEq)) {
                    statement(c);
                }
            }
            --indent_;
            line("}");
            break;
        }
        case Kind::StatementBlock:
            line("{");
            body(stmt);
            line("}");
            break;
        default:
            throw CompileError(fmt::format("cannot print {} as a statement", ast::kind_name(stmt.kind)),
                               stmt.span);
        }
    }
};

}  // namespace

int precedence(const Node& expr) {
    if (expr.is(Kind::Binary)) {
        const std::string& op = expr.name;
        if (op == "||") {
            return 1;
        }
        if (op == "&&") {
            return 2;
        }
        if (op == "+" || op == "-") {
            return 4;
        }
        if (op == "*" || op == "/") {
            return 5;
        }
        if (op == "^") {
            return prec_power;
        }
        return 3;
    }
    if (expr.is(Kind::Unary)) {
        return prec_unary;
    }
    if (expr.is(Kind::Number) && expr.value < 0) {
        return prec_unary;
    }
    return prec_primary;
}

std::string print_expression(const Node& expr) {
    switch (expr.kind) {
    case Kind::Number:
        return number_text(expr);
    case Kind::Identifier:
        return expr.name;
    case Kind::Indexed:
        return expr.name + "[" + print_expression(expr.children[0]) + "]";
    case Kind::Call: {
        std::string s = expr.name + "(";
        for (std::size_t i = 0; i < expr.children.size(); ++i) {
            if (i > 0) {
                s += ", ";
            }
            s += print_expression(expr.children[i]);
        }
        return s + ")";
    }
    case Kind::Unary: {
        const Node& operand = expr.children[0];
        return expr.name + wrap(operand, precedence(operand) < prec_unary);
    }
    case Kind::Binary: {
        int p = precedence(expr);
        const Node& lhs = expr.children[0];
        const Node& rhs = expr.children[1];
        if (expr.name == "^") {
            // base is a primary, exponent a unary expression
            return wrap(lhs, precedence(lhs) < prec_primary) + "^" +
                   wrap(rhs, precedence(rhs) < prec_unary);
        }
        return wrap(lhs, precedence(lhs) < p) + " " + expr.name + " " +
               wrap(rhs, precedence(rhs) <= p);
    }
    default:
        throw CompileError(fmt::format("cannot print {} as an expression", ast::kind_name(expr.kind)),
                           expr.span);
    }
}

std::string emit_nmodl(const Node& program) {
    return NmodlPrinter().run(program);
}

}  // namespace nmodl::codegen
