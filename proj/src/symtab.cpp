/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include "nmodl/symtab.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace nmodl::symtab {

using ast::Kind;
using ast::Node;

namespace {

constexpr std::string_view builtin_functions[] = {
    "exp", "expm1", "log", "log10", "sqrt", "fabs", "pow", "sin", "cos", "tan", "tanh", "floor", "ceil"};

constexpr std::string_view builtin_variables[] = {"v", "t", "dt", "celsius"};

constexpr std::pair<Property, std::string_view> property_names[] = {
    {Property::Range, "Range"},
    {Property::Global, "Global"},
    {Property::Parameter, "Parameter"},
    {Property::Assigned, "Assigned"},
    {Property::State, "State"},
    {Property::Local, "Local"},
    {Property::FunctionName, "FunctionName"},
    {Property::ProcedureName, "ProcedureName"},
    {Property::Ion, "Ion"},
    {Property::Argument, "Argument"},
    {Property::Current, "Current"},
    {Property::Builtin, "Builtin"},
};

std::shared_ptr<const SymbolTable> builtin_table() {
    static const std::shared_ptr<const SymbolTable> table = [] {
        auto t = std::make_shared<SymbolTable>(Kind::Program, "builtin");
        for (auto name: builtin_variables) {
            t->insert(Symbol{std::string(name), Property::Builtin});
        }
        for (auto name: builtin_functions) {
            t->insert(Symbol{std::string(name), Property::Builtin | Property::FunctionName});
        }
        return t;
    }();
    return table;
}

class TableBuilder {
  public:
    explicit TableBuilder(Diagnostics& diagnostics)
        : diagnostics_(diagnostics) {}

    Node run(const Node& input) {
        Node program = input;
        auto global = std::make_shared<SymbolTable>(Kind::Program, "global", builtin_table());
        declare_globals(program, *global);
        program.scope = global;
        for (auto& block: program.children) {
            if (block.body() != nullptr) {
                annotate_block(block, global);
            }
        }
        std::vector<std::string> block_names;
        for (const auto& block: program.children) {
            if (block.body() != nullptr && !block.is(Kind::ProcedureBlock) &&
                !block.is(Kind::FunctionBlock)) {
                block_names.push_back(block.name);
            }
        }
        for (const auto& block: program.children) {
            if (block.body() != nullptr) {
                resolve(block, global.get(), block_names);
            }
        }
        return program;
    }

  private:
    Diagnostics& diagnostics_;

    void error(std::string message, Span span) {
        diagnostics_.push_back(Diagnostic{Severity::Error, std::move(message), span});
    }

    void declare(SymbolTable& table, Symbol symbol) {
        Span span = symbol.definition;
        std::string name = symbol.name;
        if (!table.insert(std::move(symbol))) {
            error(fmt::format("redeclaration of '{}'", name), span);
        }
    }

    void declare_globals(const Node& program, SymbolTable& table) {
        for (const auto& block: program.children) {
            switch (block.kind) {
            case Kind::ParamBlock:
            case Kind::AssignedBlock:
            case Kind::StateBlock: {
                Property p = block.is(Kind::ParamBlock)      ? Property::Parameter
                             : block.is(Kind::AssignedBlock) ? Property::Assigned
                                                             : Property::State;
                for (const auto& decl: block.children) {
                    Symbol s{decl.name, p, decl.span, decl.length};
                    if (!decl.children.empty()) {
                        s.default_value = decl.children[0].value;
                    }
                    declare(table, std::move(s));
                }
                break;
            }
            case Kind::ProcedureBlock:
                declare(table, Symbol{block.name, Property::ProcedureName, block.span});
                break;
            case Kind::FunctionBlock:
                declare(table, Symbol{block.name, Property::FunctionName, block.span});
                break;
            default:
                break;
            }
        }
        for (const auto& block: program.children) {
            if (!block.is(Kind::NeuronBlock)) {
                continue;
            }
            for (const auto& stmt: block.children) {
                if (stmt.is(Kind::UseIon)) {
                    for (const auto& name: ion_variables(stmt.name)) {
                        if (auto* s = table.find_local(name)) {
                            s->properties |= Property::Ion;
                        } else {
                            table.insert(Symbol{name, Property::Ion, stmt.span});
                        }
                    }
                    for (const auto& name: stmt.children) {
                        if (!name.is(Kind::Name)) {
                            continue;
                        }
                        Symbol* s = table.find_local(name.name);
                        if (s == nullptr) {
                            table.insert(Symbol{name.name, Property::Ion, name.span});
                            s = table.find_local(name.name);
                        }
                        s->properties |= Property::Ion;
                        if (name.text == "WRITE" && name.name == "i" + stmt.name) {
                            s->properties |= Property::Current;
                        }
                    }
                }
            }
            for (const auto& stmt: block.children) {
                Property p;
                if (stmt.is(Kind::Range)) {
                    p = Property::Range;
                } else if (stmt.is(Kind::Global)) {
                    p = Property::Global;
                } else if (stmt.is(Kind::NonspecificCurrent)) {
                    p = Property::Current;
                } else {
                    continue;
                }
                for (const auto& name: stmt.children) {
                    if (auto* s = table.find_local(name.name)) {
                        s->properties |= p;
                    } else {
                        error(fmt::format("'{}' listed in NEURON block is not declared", name.name),
                              name.span);
                    }
                }
            }
        }
    }

    void collect_locals(const Node& block, SymbolTable& table) {
        for (const auto& stmt: block.children) {
            if (stmt.is(Kind::LocalDecl)) {
                for (const auto& name: stmt.children) {
                    declare(table, Symbol{name.name, Property::Local, name.span, name.length});
                }
            }
        }
    }

    void annotate_nested(Node& node, const std::shared_ptr<const SymbolTable>& parent) {
        for (auto& child: node.children) {
            if (child.is(Kind::StatementBlock)) {
                auto table = std::make_shared<SymbolTable>(Kind::StatementBlock, "", parent);
                collect_locals(child, *table);
                child.scope = table;
                annotate_nested(child, table);
            } else {
                annotate_nested(child, parent);
            }
        }
    }

    void annotate_block(Node& block, const std::shared_ptr<const SymbolTable>& global) {
        auto table = std::make_shared<SymbolTable>(block.kind, block.name, global);
        for (const auto& child: block.children) {
            if (child.is(Kind::Argument)) {
                declare(*table, Symbol{child.name, Property::Argument, child.span});
            }
        }
        Node* body = block.body();
        collect_locals(*body, *table);
        block.scope = table;
        // the body shares the block's table
        annotate_nested(*body, table);
    }

    void expect_variable(const Node& node, const SymbolTable* scope) {
        const Symbol* s = scope->lookup(node.name);
        if (s == nullptr) {
            error(fmt::format("undeclared identifier '{}'", node.name), node.span);
        } else if (s->properties.has(Property::ProcedureName) ||
                   (s->properties.has(Property::FunctionName) &&
                    s->properties.has(Property::Builtin))) {
            error(fmt::format("'{}' is not a variable", node.name), node.span);
        }
    }

    void resolve(const Node& block, const SymbolTable* global, const std::vector<std::string>& blocks) {
        walk_scoped(block, global, [&](const Node& node, const SymbolTable* scope) {
            switch (node.kind) {
            case Kind::Identifier:
            case Kind::Indexed:
            case Kind::Prime:
            case Kind::Reactant:
                expect_variable(node, scope);
                break;
            case Kind::FromLoop:
                expect_variable(node, scope);
                break;
            case Kind::Conductance:
                expect_variable(node, scope);
                break;
            case Kind::Name:
                // unknowns of solver nodes; LOCAL names are declarations
                break;
            case Kind::LinearSolve:
            case Kind::NewtonSolve:
                for (const auto& child: node.children) {
                    if (child.is(Kind::Name)) {
                        // unknowns may be array elements such as x[2]
                        Node base = child;
                        base.name = child.name.substr(0, child.name.find('['));
                        expect_variable(base, scope);
                    }
                }
                break;
            case Kind::Call: {
                const Symbol* s = scope->lookup(node.name);
                if (s == nullptr || !(s->properties.has(Property::FunctionName) ||
                                      s->properties.has(Property::ProcedureName))) {
                    error(fmt::format("call to undefined function '{}'", node.name), node.span);
                }
                break;
            }
            case Kind::Solve:
                if (std::find(blocks.begin(), blocks.end(), node.name) == blocks.end()) {
                    error(fmt::format("SOLVE of unknown block '{}'", node.name), node.span);
                }
                break;
            default:
                break;
            }
        });
    }
};

}  // namespace

std::string PropertySet::to_string() const {
    std::string out;
    for (const auto& [p, name]: property_names) {
        if (has(p)) {
            if (!out.empty()) {
                out += ',';
            }
            out += name;
        }
    }
    return out;
}

bool SymbolTable::insert(Symbol symbol) {
    if (index_.count(symbol.name) != 0) {
        return false;
    }
    index_.emplace(symbol.name, symbols_.size());
    symbols_.push_back(std::move(symbol));
    return true;
}

Symbol* SymbolTable::find_local(std::string_view name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &symbols_[it->second];
}

const Symbol* SymbolTable::find_local(std::string_view name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &symbols_[it->second];
}

const Symbol* SymbolTable::lookup(std::string_view name) const {
    for (const SymbolTable* t = this; t != nullptr; t = t->parent()) {
        if (const Symbol* s = t->find_local(name)) {
            return s;
        }
    }
    return nullptr;
}

const SymbolTable* SymbolTable::defining_table(std::string_view name) const {
    for (const SymbolTable* t = this; t != nullptr; t = t->parent()) {
        if (t->find_local(name) != nullptr) {
            return t;
        }
    }
    return nullptr;
}

bool is_builtin_function(std::string_view name) noexcept {
    return std::find(std::begin(builtin_functions), std::end(builtin_functions), name) !=
           std::end(builtin_functions);
}

bool is_builtin_variable(std::string_view name) noexcept {
    return std::find(std::begin(builtin_variables), std::end(builtin_variables), name) !=
           std::end(builtin_variables);
}

std::vector<std::string> ion_variables(const std::string& ion) {
    return {"e" + ion, "i" + ion, ion + "i", ion + "o"};
}

Node build_symbol_tables(const Node& program, Diagnostics& diagnostics) {
    return TableBuilder(diagnostics).run(program);
}

Node build_symbol_tables(const Node& program) {
    Diagnostics diagnostics;
    Node result = build_symbol_tables(program, diagnostics);
    for (const auto& d: diagnostics) {
        if (d.severity == Severity::Error) {
            throw CompileError(d);
        }
    }
    return result;
}

const SymbolTable& global_table(const Node& program) {
    if (!program.scope) {
        throw CompileError("program has no symbol table");
    }
    return *program.scope;
}

void walk_scoped(const Node& node,
                 const SymbolTable* scope,
                 const std::function<void(const Node&, const SymbolTable*)>& visit) {
    const SymbolTable* current = node.scope ? node.scope.get() : scope;
    visit(node, current);
    for (const auto& child: node.children) {
        walk_scoped(child, current, visit);
    }
}

}  // namespace nmodl::symtab
