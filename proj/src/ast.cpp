/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include "nmodl/ast.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

namespace nmodl {

Span Span::merge(const Span& a, const Span& b) noexcept {
    if (!a.valid()) {
        return b;
    }
    if (!b.valid()) {
        return a;
    }
    const Span& first = a.offset <= b.offset ? a : b;
    std::size_t end = std::max(a.offset + a.length, b.offset + b.length);
    Span result = first;
    result.length = end - first.offset;
    return result;
}

std::string Diagnostic::format(const std::string& file) const {
    return fmt::format("{}:{}:{}: {}: {}",
                       file,
                       span.line,
                       span.column,
                       severity == Severity::Error ? "error" : "warning",
                       message);
}

bool has_errors(const Diagnostics& diagnostics) {
    for (const auto& d: diagnostics) {
        if (d.severity == Severity::Error) {
            return true;
        }
    }
    return false;
}

namespace ast {

std::string_view kind_name(Kind kind) noexcept {
    switch (kind) {
    case Kind::Program:
        return "Program";
    case Kind::Title:
        return "Title";
    case Kind::Verbatim:
        return "Verbatim";
    case Kind::NeuronBlock:
        return "NeuronBlock";
    case Kind::UnitsBlock:
        return "UnitsBlock";
    case Kind::ParamBlock:
        return "ParamBlock";
    case Kind::AssignedBlock:
        return "AssignedBlock";
    case Kind::StateBlock:
        return "StateBlock";
    case Kind::BreakpointBlock:
        return "BreakpointBlock";
    case Kind::InitialBlock:
        return "InitialBlock";
    case Kind::DerivativeBlock:
        return "DerivativeBlock";
    case Kind::KineticBlock:
        return "KineticBlock";
    case Kind::LinearBlock:
        return "LinearBlock";
    case Kind::NonLinearBlock:
        return "NonLinearBlock";
    case Kind::ProcedureBlock:
        return "ProcedureBlock";
    case Kind::FunctionBlock:
        return "FunctionBlock";
    case Kind::Suffix:
        return "Suffix";
    case Kind::UseIon:
        return "UseIon";
    case Kind::Range:
        return "Range";
    case Kind::Global:
        return "Global";
    case Kind::NonspecificCurrent:
        return "NonspecificCurrent";
    case Kind::ParamDecl:
        return "ParamDecl";
    case Kind::AssignedDecl:
        return "AssignedDecl";
    case Kind::StateDecl:
        return "StateDecl";
    case Kind::Argument:
        return "Argument";
    case Kind::Name:
        return "Name";
    case Kind::StatementBlock:
        return "StatementBlock";
    case Kind::LocalDecl:
        return "LocalDecl";
    case Kind::Assign:
        return "Assign";
    case Kind::DiffEq:
        return "DiffEq";
    case Kind::ExprStatement:
        return "ExprStatement";
    case Kind::Solve:
        return "Solve";
    case Kind::Conductance:
        return "Conductance";
    case Kind::If:
        return "If";
    case Kind::While:
        return "While";
    case Kind::FromLoop:
        return "FromLoop";
    case Kind::Reaction:
        return "Reaction";
    case Kind::ReactantList:
        return "ReactantList";
    case Kind::Reactant:
        return "Reactant";
    case Kind::Conserve:
        return "Conserve";
    case Kind::LinEq:
        return "LinEq";
    case Kind::LinearSolve:
        return "LinearSolve";
    case Kind::NewtonSolve:
        return "NewtonSolve";
    case Kind::Number:
        return "Number";
    case Kind::Identifier:
        return "Identifier";
    case Kind::Indexed:
        return "Indexed";
    case Kind::Prime:
        return "Prime";
    case Kind::Binary:
        return "Binary";
    case Kind::Unary:
        return "Unary";
    case Kind::Call:
        return "Call";
    }
    return "?";
}

bool Node::is_expression() const noexcept {
    switch (kind) {
    case Kind::Number:
    case Kind::Identifier:
    case Kind::Indexed:
    case Kind::Prime:
    case Kind::Binary:
    case Kind::Unary:
    case Kind::Call:
        return true;
    default:
        return false;
    }
}

bool Node::is_statement() const noexcept {
    switch (kind) {
    case Kind::LocalDecl:
    case Kind::Assign:
    case Kind::DiffEq:
    case Kind::ExprStatement:
    case Kind::Solve:
    case Kind::Conductance:
    case Kind::If:
    case Kind::While:
    case Kind::FromLoop:
    case Kind::Reaction:
    case Kind::Conserve:
    case Kind::LinEq:
    case Kind::LinearSolve:
    case Kind::NewtonSolve:
    case Kind::Verbatim:
        return true;
    default:
        return false;
    }
}

const Node* Node::body() const noexcept {
    return const_cast<Node*>(this)->body();
}

Node* Node::body() noexcept {
    switch (kind) {
    case Kind::BreakpointBlock:
    case Kind::InitialBlock:
    case Kind::DerivativeBlock:
    case Kind::KineticBlock:
    case Kind::LinearBlock:
    case Kind::NonLinearBlock:
    case Kind::ProcedureBlock:
    case Kind::FunctionBlock:
    case Kind::FromLoop:
    case Kind::While:
        if (!children.empty() && children.back().is(Kind::StatementBlock)) {
            return &children.back();
        }
        return nullptr;
    case Kind::If:
        return children.size() > 1 ? &children[1] : nullptr;
    default:
        return nullptr;
    }
}

Node make_number(double value) {
    Node n(Kind::Number);
    n.value = value;
    n.text = format_number(value);
    return n;
}

Node make_number(double value, std::string text) {
    Node n(Kind::Number);
    n.value = value;
    n.text = std::move(text);
    return n;
}

Node make_constant(double value) {
    if (value < 0 || (value == 0 && std::signbit(value))) {
        return make_unary("-", make_number(-value));
    }
    return make_number(value);
}

Node make_identifier(std::string name) {
    return Node(Kind::Identifier, std::move(name));
}

Node make_binary(std::string op, Node lhs, Node rhs) {
    return Node(Kind::Binary, std::move(op), {std::move(lhs), std::move(rhs)});
}

Node make_unary(std::string op, Node operand) {
    return Node(Kind::Unary, std::move(op), {std::move(operand)});
}

Node make_call(std::string name, std::vector<Node> args) {
    return Node(Kind::Call, std::move(name), std::move(args));
}

Node make_assign(Node lhs, Node rhs) {
    return Node(Kind::Assign, {}, {std::move(lhs), std::move(rhs)});
}

Node make_local(const std::vector<std::string>& names) {
    Node local(Kind::LocalDecl);
    for (const auto& n: names) {
        local.children.emplace_back(Kind::Name, n);
    }
    return local;
}

Node make_block(std::vector<Node> statements) {
    return Node(Kind::StatementBlock, {}, std::move(statements));
}

std::string format_number(double value) {
    char buffer[64];
    auto [end, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
    if (ec != std::errc{}) {
        return fmt::format("{}", value);
    }
    return std::string(buffer, end);
}

std::optional<double> literal_value(const Node& node) {
    if (node.is(Kind::Number)) {
        return node.value;
    }
    if (node.is(Kind::Unary) && node.name == "-" && node.children.size() == 1) {
        if (auto inner = literal_value(node.children[0])) {
            return -*inner;
        }
    }
    return std::nullopt;
}

namespace {

std::string index_text(const Node& index) {
    if (auto v = literal_value(index)) {
        return format_number(*v);
    }
    if (index.is(Kind::Identifier)) {
        return index.name;
    }
    if (index.is(Kind::Binary) && index.children.size() == 2) {
        return index_text(index.children[0]) + index.name + index_text(index.children[1]);
    }
    return "?";
}

}  // namespace

std::string variable_text(const Node& node) {
    switch (node.kind) {
    case Kind::Identifier:
    case Kind::Name:
        return node.name;
    case Kind::Indexed:
        return node.name + "[" + index_text(node.children.at(0)) + "]";
    case Kind::Prime:
    case Kind::Reactant:
        if (!node.children.empty()) {
            return node.name + "[" + index_text(node.children[0]) + "]";
        }
        return node.name;
    default:
        return node.name;
    }
}

void traverse(const Node& node, const std::function<void(const Node&)>& visit, Order order) {
    if (order == Order::Pre) {
        visit(node);
    }
    for (const auto& child: node.children) {
        traverse(child, visit, order);
    }
    if (order == Order::Post) {
        visit(node);
    }
}

Node transform(const Node& node, const std::function<Node(Node)>& rewrite) {
    Node copy;
    copy.kind = node.kind;
    copy.name = node.name;
    copy.text = node.text;
    copy.value = node.value;
    copy.length = node.length;
    copy.unit = node.unit;
    copy.limits = node.limits;
    copy.span = node.span;
    copy.scope = node.scope;
    copy.children.reserve(node.children.size());
    for (const auto& child: node.children) {
        copy.children.push_back(transform(child, rewrite));
    }
    return rewrite(std::move(copy));
}

std::size_t count_nodes(const Node& node) {
    std::size_t total = 1;
    for (const auto& child: node.children) {
        total += count_nodes(child);
    }
    return total;
}

bool structurally_equal(const Node& a, const Node& b) {
    if (a.kind != b.kind || a.name != b.name || a.length != b.length || a.unit != b.unit ||
        a.limits != b.limits || a.children.size() != b.children.size()) {
        return false;
    }
    if (a.is(Kind::Number)) {
        if (a.value != b.value) {
            return false;
        }
    } else if (a.text != b.text || a.value != b.value) {
        return false;
    }
    for (std::size_t i = 0; i < a.children.size(); ++i) {
        if (!structurally_equal(a.children[i], b.children[i])) {
            return false;
        }
    }
    return true;
}

namespace {

void dump_text_impl(const Node& node, int depth, std::ostringstream& out) {
    out << std::string(static_cast<std::size_t>(depth) * 2, ' ') << kind_name(node.kind);
    if (!node.name.empty()) {
        out << " name=" << node.name;
    }
    if (!node.text.empty() && !node.is(Kind::Verbatim) && !node.is(Kind::UnitsBlock)) {
        out << " text=" << node.text;
    }
    if (node.length > 0) {
        out << " length=" << node.length;
    }
    if (!node.unit.empty()) {
        out << " unit=(" << node.unit << ")";
    }
    out << '\n';
    for (const auto& child: node.children) {
        dump_text_impl(child, depth + 1, out);
    }
}

nlohmann::ordered_json to_json(const Node& node) {
    nlohmann::ordered_json j;
    j["kind"] = std::string(kind_name(node.kind));
    nlohmann::ordered_json attrs = nlohmann::ordered_json::object();
    if (!node.name.empty()) {
        attrs["name"] = node.name;
    }
    if (!node.text.empty()) {
        attrs["text"] = node.text;
    }
    if (node.is(Kind::Number) || node.is(Kind::Reactant)) {
        attrs["value"] = node.value;
    }
    if (node.length > 0) {
        attrs["length"] = node.length;
    }
    if (!node.unit.empty()) {
        attrs["unit"] = node.unit;
    }
    if (!node.limits.empty()) {
        attrs["limits"] = node.limits;
    }
    j["attrs"] = attrs;
    auto children = nlohmann::ordered_json::array();
    for (const auto& child: node.children) {
        children.push_back(to_json(child));
    }
    j["children"] = children;
    return j;
}

}  // namespace

std::string dump_text(const Node& node) {
    std::ostringstream out;
    dump_text_impl(node, 0, out);
    return out.str();
}

std::string dump_json(const Node& node) {
    return to_json(node).dump(2);
}

std::vector<const Node*> find_blocks(const Node& program, Kind kind) {
    std::vector<const Node*> result;
    for (const auto& child: program.children) {
        if (child.is(kind)) {
            result.push_back(&child);
        }
    }
    return result;
}

const Node* find_block(const Node& program, Kind kind, std::string_view name) {
    for (const auto& child: program.children) {
        if (child.is(kind) && (name.empty() || child.name == name)) {
            return &child;
        }
    }
    return nullptr;
}

Node* find_block(Node& program, Kind kind, std::string_view name) {
    return const_cast<Node*>(find_block(static_cast<const Node&>(program), kind, name));
}

}  // namespace ast
}  // namespace nmodl
