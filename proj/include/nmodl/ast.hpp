/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

/**
 * \file
 * \brief Abstract syntax tree for the supported NMODL subset
 *
 * The tree is a value type: a `Node` owns its children, copying a node deep
 * copies the subtree and rewriting traversals build new trees. Symbol tables
 * are attached through a shared, immutable pointer so copies share them.
 */

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nmodl/diagnostic.hpp"

namespace nmodl {

namespace symtab {
class SymbolTable;
}

namespace ast {

enum class Kind {
    Program,
    // top level
    Title,
    Verbatim,
    NeuronBlock,
    UnitsBlock,
    ParamBlock,
    AssignedBlock,
    StateBlock,
    BreakpointBlock,
    InitialBlock,
    DerivativeBlock,
    KineticBlock,
    LinearBlock,
    NonLinearBlock,
    ProcedureBlock,
    FunctionBlock,
    // NEURON block statements
    Suffix,
    UseIon,
    Range,
    Global,
    NonspecificCurrent,
    // declarations
    ParamDecl,
    AssignedDecl,
    StateDecl,
    Argument,
    Name,
    // statements
    StatementBlock,
    LocalDecl,
    Assign,
    DiffEq,
    ExprStatement,
    Solve,
    Conductance,
    If,
    While,
    FromLoop,
    Reaction,
    ReactantList,
    Reactant,
    Conserve,
    LinEq,
    LinearSolve,
    NewtonSolve,
    // expressions
    Number,
    Identifier,
    Indexed,
    Prime,
    Binary,
    Unary,
    Call,
};

std::string_view kind_name(Kind kind) noexcept;

/**
 * \brief One AST node
 *
 * Payload fields are shared across kinds; which ones are meaningful depends
 * on `kind`:
 *
 * | kind                  | name            | text              | children                         |
 * |-----------------------|-----------------|-------------------|----------------------------------|
 * | Number                |                 | literal lexeme    |                                  |
 * | Identifier            | variable        |                   |                                  |
 * | Indexed               | array           |                   | index expr                       |
 * | Prime                 | state           |                   | optional index expr              |
 * | Binary / Unary        | operator        |                   | operands                         |
 * | Call                  | function        |                   | arguments                        |
 * | Suffix                | mechanism       | SUFFIX/POINT_PROCESS |                               |
 * | UseIon                | ion             |                   | Name (text READ/WRITE), Number?  |
 * | *Decl, Argument       | variable        |                   | Number default (ParamDecl)       |
 * | *Block with body      | block name      |                   | [Argument...] StatementBlock     |
 * | Solve                 | block           | method            |                                  |
 * | Conductance           | variable        | ion               |                                  |
 * | FromLoop              | loop variable   |                   | from, to, StatementBlock         |
 * | Reaction              |                 |                   | ReactantList x2, kf, kb          |
 * | Reactant              | species         |                   | optional index expr              |
 * | Linear/NewtonSolve    |                 |                   | Name unknowns..., LinEq...       |
 */
struct Node {
    Kind kind = Kind::Program;
    std::string name;
    std::string text;
    /// Numeric payload: literal value, stoichiometry, prime order, valence.
    double value = 0.0;
    /// Declared array length, 0 for scalars.
    int length = 0;
    std::string unit;
    std::string limits;
    std::vector<Node> children;
    Span span;
    std::shared_ptr<const symtab::SymbolTable> scope;

    Node() = default;
    Node(Kind k, std::string n = {}, std::vector<Node> c = {})
        : kind(k)
        , name(std::move(n))
        , children(std::move(c)) {}

    bool is(Kind k) const noexcept {
        return kind == k;
    }

    bool is_expression() const noexcept;
    bool is_statement() const noexcept;

    /// Body of a block-like node, or nullptr.
    const Node* body() const noexcept;
    Node* body() noexcept;
};

// ---------------------------------------------------------------------------
// constructors used by the transformations

Node make_number(double value);
Node make_number(double value, std::string text);
/// Literal expression; negative values become unary minus of a Number so
/// that printed and reparsed trees agree.
Node make_constant(double value);
Node make_identifier(std::string name);
Node make_binary(std::string op, Node lhs, Node rhs);
Node make_unary(std::string op, Node operand);
Node make_call(std::string name, std::vector<Node> args);
Node make_assign(Node lhs, Node rhs);
Node make_local(const std::vector<std::string>& names);
Node make_block(std::vector<Node> statements);

/// Shortest decimal text that round-trips to `value`.
std::string format_number(double value);

/// Value of a literal-only expression (Number or unary minus of Number).
std::optional<double> literal_value(const Node& node);

/// Identifier, Indexed or Prime rendered as a flat name, e.g. "x[2]".
std::string variable_text(const Node& node);

// ---------------------------------------------------------------------------
// traversal

enum class Order { Pre, Post };

/// Calls `visit` once for every node of the tree in the requested order.
void traverse(const Node& node, const std::function<void(const Node&)>& visit, Order order = Order::Pre);

/**
 * \brief Rewriting traversal
 *
 * Children are rewritten first, then `rewrite` is applied to the node with
 * its rewritten children. The input is never modified; the result shares no
 * nodes with it.
 */
Node transform(const Node& node, const std::function<Node(Node)>& rewrite);

/// Number of nodes in the subtree.
std::size_t count_nodes(const Node& node);

/// Kinds, attributes and children compared recursively; spans, scopes and
/// literal spelling ignored.
bool structurally_equal(const Node& a, const Node& b);

/// Indented debug dump.
std::string dump_text(const Node& node);

/// JSON debug dump: {kind, attrs, children}.
std::string dump_json(const Node& node);

/// Top level blocks of the given kind in source order.
std::vector<const Node*> find_blocks(const Node& program, Kind kind);
const Node* find_block(const Node& program, Kind kind, std::string_view name = {});
Node* find_block(Node& program, Kind kind, std::string_view name = {});

}  // namespace ast
}  // namespace nmodl
