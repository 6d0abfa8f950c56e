/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include "nmodl/layout.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <fmt/format.h>

#include "nmodl/passes.hpp"
#include "nmodl/symtab.hpp"

namespace nmodl::codegen {

using ast::Kind;
using ast::Node;
using symtab::Property;

std::string_view role_name(Role role) noexcept {
    switch (role) {
    case Role::Parameter:
        return "parameter";
    case Role::Assigned:
        return "assigned";
    case Role::State:
        return "state";
    case Role::Ion:
        return "ion";
    }
    return "?";
}

const LayoutVariable* MechanismLayout::find(const std::string& name) const {
    for (const auto& v: variables) {
        if (v.name == name) {
            return &v;
        }
    }
    return nullptr;
}

bool MechanismLayout::analytic_conductance() const {
    if (currents.empty()) {
        return false;
    }
    return std::all_of(currents.begin(), currents.end(), [&](const Current& c) {
        return std::any_of(conductances.begin(), conductances.end(), [&](const Conductance& g) {
            return g.ion == c.ion;
        });
    });
}

std::string MechanismLayout::slot_name(std::size_t slot) const {
    for (const auto& v: variables) {
        std::size_t width = v.length > 0 ? static_cast<std::size_t>(v.length) : 1;
        if (slot >= v.slot && slot < v.slot + width) {
            return v.length > 0 ? fmt::format("{}[{}]", v.name, slot - v.slot) : v.name;
        }
    }
    return fmt::format("slot{}", slot);
}

namespace {

std::set<std::string> referenced_names(const Node& program) {
    std::set<std::string> names;
    for (const auto& block: program.children) {
        if (!passes::is_kernel_block(block) && !block.is(Kind::ProcedureBlock) && !block.is(Kind::FunctionBlock)) {
            continue;
        }
        ast::traverse(block, [&](const Node& n) {
            switch (n.kind) {
            case Kind::Identifier:
            case Kind::Indexed:
            case Kind::Prime:
            case Kind::Reactant:
            case Kind::Conductance:
                names.insert(n.name);
                break;
            case Kind::Name:
                names.insert(n.name.substr(0, n.name.find('[')));
                break;
            default:
                break;
            }
        });
    }
    return names;
}

std::set<std::string> written_names(const Node& program) {
    std::set<std::string> names;
    for (const auto& block: program.children) {
        ast::traverse(block, [&](const Node& n) {
            if (n.is(Kind::Assign)) {
                names.insert(n.children[0].name);
            }
            if (n.is(Kind::LinearSolve) || n.is(Kind::NewtonSolve)) {
                for (const auto& c: n.children) {
                    if (c.is(Kind::Name)) {
                        names.insert(c.name.substr(0, c.name.find('[')));
                    }
                }
            }
        });
    }
    return names;
}

}  // namespace

MechanismLayout build_layout(const Node& program) {
    Diagnostics ignored;
    Node p = program.scope ? program : passes::ensure_tables(program, ignored);
    const auto& global = symtab::global_table(p);
    MechanismLayout layout;
    for (const auto* neuron: ast::find_blocks(p, Kind::NeuronBlock)) {
        for (const auto& stmt: neuron->children) {
            if (stmt.is(Kind::Suffix)) {
                layout.mechanism = stmt.name;
                layout.point_process = stmt.text == "POINT_PROCESS";
            }
        }
    }
    std::map<std::string, Quantity> quantities;
    for (const auto* neuron: ast::find_blocks(p, Kind::NeuronBlock)) {
        for (const auto& stmt: neuron->children) {
            if (stmt.is(Kind::UseIon)) {
                quantities["e" + stmt.name] = Quantity::Potential;
                quantities[stmt.name + "i"] = Quantity::Concentration;
                quantities[stmt.name + "o"] = Quantity::Concentration;
            }
        }
    }
    auto referenced = referenced_names(p);
    auto written = written_names(p);

    layout.globals = {{"celsius", default_celsius}, {"dt", default_dt}, {"t", 0.0}};
    std::size_t slot = 0;
    for (const auto& sym: global.symbols()) {
        const auto props = sym.properties;
        if (symtab::is_builtin_variable(sym.name) || referenced.count(sym.name) == 0 ||
            props.any(Property::FunctionName | Property::ProcedureName)) {
            continue;
        }
        std::optional<Role> role;
        if (props.has(Property::State)) {
            role = Role::State;
        } else if (props.has(Property::Ion)) {
            role = Role::Ion;
        } else if (props.has(Property::Parameter)) {
            if (props.has(Property::Range)) {
                role = Role::Parameter;
            } else {
                layout.globals.push_back({sym.name, sym.default_value.value_or(0.0)});
            }
        } else if (props.has(Property::Assigned) || props.has(Property::Range)) {
            role = Role::Assigned;
        }
        if (!role) {
            continue;
        }
        LayoutVariable v{sym.name, *role, sym.length, slot, sym.default_value};
        if (auto q = quantities.find(sym.name); q != quantities.end()) {
            v.quantity = q->second;
        }
        slot += sym.length > 0 ? static_cast<std::size_t>(sym.length) : 1;
        layout.variables.push_back(std::move(v));

        if (props.has(Property::Current)) {
            bool ion = props.has(Property::Ion);
            layout.currents.push_back({sym.name, ion ? sym.name.substr(1) : std::string()});
            if (ion && std::find(layout.ions.begin(), layout.ions.end(), sym.name.substr(1)) == layout.ions.end()) {
                layout.ions.push_back(sym.name.substr(1));
            }
        } else if (props.has(Property::Ion) && written.count(sym.name) != 0) {
            layout.written_ion_variables.push_back(sym.name);
        }
    }
    layout.slot_count = slot;
    std::sort(layout.globals.begin(), layout.globals.end(), [](const auto& a, const auto& b) {
        return a.name < b.name;
    });
    if (const auto* bp = ast::find_block(p, Kind::BreakpointBlock)) {
        for (const auto& stmt: bp->body()->children) {
            if (stmt.is(Kind::Conductance)) {
                layout.conductances.push_back({stmt.name, stmt.text});
            }
        }
    }
    return layout;
}

Kernels build_kernels(const Node& program) {
    Kernels k{ast::make_block({}), ast::make_block({}), ast::make_block({})};
    if (const auto* init = ast::find_block(program, Kind::InitialBlock)) {
        k.initialize = *init->body();
    }
    const auto* bp = ast::find_block(program, Kind::BreakpointBlock);
    if (bp == nullptr) {
        return k;
    }
    for (const auto& stmt: bp->body()->children) {
        if (stmt.is(Kind::Solve)) {
            for (const auto& block: program.children) {
                if (passes::is_kernel_block(block) && block.name == stmt.name) {
                    Node body = *block.body();
                    body.scope = block.scope;
                    k.state_update.children.push_back(std::move(body));
                    break;
                }
            }
        } else if (!stmt.is(Kind::Conductance)) {
            k.current_update.children.push_back(stmt);
        }
    }
    k.current_update.scope = bp->scope;
    return k;
}

std::vector<std::string> observed_variables(const MechanismLayout& layout) {
    std::vector<std::string> names;
    for (const auto& v: layout.variables) {
        if (v.role == Role::State) {
            names.push_back(v.name);
        }
    }
    for (const auto& c: layout.currents) {
        names.push_back(c.name);
    }
    for (const auto& w: layout.written_ion_variables) {
        if (std::find(names.begin(), names.end(), w) == names.end()) {
            names.push_back(w);
        }
    }
    return names;
}

}  // namespace nmodl::codegen
