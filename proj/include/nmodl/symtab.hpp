/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "nmodl/ast.hpp"
#include "nmodl/diagnostic.hpp"

namespace nmodl::symtab {

enum class Property : std::uint32_t {
    Range = 1u << 0,
    Global = 1u << 1,
    Parameter = 1u << 2,
    Assigned = 1u << 3,
    State = 1u << 4,
    Local = 1u << 5,
    FunctionName = 1u << 6,
    ProcedureName = 1u << 7,
    Ion = 1u << 8,
    Argument = 1u << 9,
    /// Membrane current written by the mechanism (ion or nonspecific).
    Current = 1u << 10,
    /// Simulator-provided name: v, t, dt, celsius and the math library.
    Builtin = 1u << 11,
};

class PropertySet {
  public:
    constexpr PropertySet() = default;
    constexpr PropertySet(Property p)  // NOLINT(google-explicit-constructor)
        : bits_(static_cast<std::uint32_t>(p)) {}

    constexpr bool has(Property p) const noexcept {
        return (bits_ & static_cast<std::uint32_t>(p)) != 0;
    }
    constexpr bool any(PropertySet other) const noexcept {
        return (bits_ & other.bits_) != 0;
    }
    constexpr bool empty() const noexcept {
        return bits_ == 0;
    }
    constexpr PropertySet& operator|=(PropertySet other) noexcept {
        bits_ |= other.bits_;
        return *this;
    }
    constexpr PropertySet operator|(PropertySet other) const noexcept {
        PropertySet r = *this;
        r |= other;
        return r;
    }
    void remove(Property p) noexcept {
        bits_ &= ~static_cast<std::uint32_t>(p);
    }
    constexpr bool operator==(const PropertySet&) const = default;

    /// e.g. "Parameter,Range"
    std::string to_string() const;

  private:
    std::uint32_t bits_ = 0;
};

constexpr PropertySet operator|(Property a, Property b) noexcept {
    return PropertySet(a) | PropertySet(b);
}

struct Symbol {
    std::string name;
    PropertySet properties;
    Span definition;
    /// Declared array length, 0 for scalars.
    int length = 0;
    /// Literal default for PARAMETER declarations.
    std::optional<double> default_value;
    int read_count = 0;
    int write_count = 0;
};

/// Names owned by one scope, resolved innermost-first through the parent chain.
class SymbolTable {
  public:
    SymbolTable(ast::Kind owner_kind,
                std::string owner_name,
                std::shared_ptr<const SymbolTable> parent = nullptr)
        : owner_kind_(owner_kind)
        , owner_name_(std::move(owner_name))
        , parent_(std::move(parent)) {}

    /// Adds a symbol; returns false if the name already exists in this table.
    bool insert(Symbol symbol);
    Symbol* find_local(std::string_view name);
    const Symbol* find_local(std::string_view name) const;
    const Symbol* lookup(std::string_view name) const;
    /// Table that defines `name`, searching through parents.
    const SymbolTable* defining_table(std::string_view name) const;

    const std::vector<Symbol>& symbols() const noexcept {
        return symbols_;
    }
    const SymbolTable* parent() const noexcept {
        return parent_.get();
    }
    ast::Kind owner_kind() const noexcept {
        return owner_kind_;
    }
    const std::string& owner_name() const noexcept {
        return owner_name_;
    }

  private:
    ast::Kind owner_kind_;
    std::string owner_name_;
    std::shared_ptr<const SymbolTable> parent_;
    std::vector<Symbol> symbols_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

/// Built-in math functions callable from NMODL.
bool is_builtin_function(std::string_view name) noexcept;

/// Names provided by the simulator: v, t, dt, celsius.
bool is_builtin_variable(std::string_view name) noexcept;

/**
 * \brief Attach scoped symbol tables to a program
 *
 * The Program node receives the global table (whose parent holds the
 * builtins). Every top-level block with a body receives a table holding its
 * arguments and the LOCALs of its body; nested statement blocks receive
 * their own table. Undeclared identifiers and redeclarations are reported in
 * `diagnostics`. Ion variables implied by USEION are added to the global
 * table with property Ion.
 */
ast::Node build_symbol_tables(const ast::Node& program, Diagnostics& diagnostics);

/// Convenience overload that throws the first error.
ast::Node build_symbol_tables(const ast::Node& program);

/// Global table of an annotated program.
const SymbolTable& global_table(const ast::Node& program);

/**
 * \brief Walk a subtree keeping track of the innermost scope
 *
 * `visit(node, scope)` is called in pre-order; `scope` is the table of the
 * nearest enclosing node that carries one (starting from `scope`).
 */
void walk_scoped(const ast::Node& node,
                 const SymbolTable* scope,
                 const std::function<void(const ast::Node&, const SymbolTable*)>& visit);

/// Variable names implied by "USEION <ion>": e<ion>, i<ion>, <ion>i, <ion>o.
std::vector<std::string> ion_variables(const std::string& ion);

}  // namespace nmodl::symtab
