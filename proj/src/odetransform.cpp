/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include "nmodl/odetransform.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

#include "nmodl/passes.hpp"

namespace nmodl::ode {

using ast::Kind;
using ast::Node;
using symalg::SymExpr;
using symtab::Property;

namespace {

std::string sanitize(const std::string& name) {
    std::string out;
    for (char c: name) {
        if (c == '[') {
            out += '_';
        } else if (c != ']') {
            out += c;
        }
    }
    return out;
}

std::string fresh(const std::string& base, std::set<std::string>& taken) {
    std::string name = base;
    int extra = 0;
    while (taken.count(name) != 0) {
        name = fmt::format("{}_{}", base, ++extra);
    }
    taken.insert(name);
    return name;
}

std::set<std::string> all_names(const Node& program) {
    std::set<std::string> names;
    ast::traverse(program, [&](const Node& n) {
        if (n.is(Kind::Identifier) || n.is(Kind::Name) || n.is(Kind::Indexed) || n.is(Kind::Argument) ||
            n.is(Kind::ParamDecl) || n.is(Kind::AssignedDecl) || n.is(Kind::StateDecl)) {
            names.insert(n.name);
        }
    });
    return names;
}

bool depends_on_any(const SymExpr& e, const std::vector<std::string>& names) {
    return std::any_of(names.begin(), names.end(), [&](const std::string& n) {
        return symalg::depends_on(e, n);
    });
}

bool mentions_any(const Node& node, const std::set<std::string>& names) {
    bool found = false;
    ast::traverse(node, [&](const Node& n) {
        if ((n.is(Kind::Identifier) || n.is(Kind::Indexed) || n.is(Kind::Prime)) &&
            (names.count(n.name) != 0 || names.count(ast::variable_text(n)) != 0)) {
            found = true;
        }
    });
    return found;
}

Node assign(const std::string& name, Node value) {
    return ast::make_assign(variable_node(name), std::move(value));
}

void add_locals(Node& block, const std::vector<std::string>& names) {
    if (names.empty()) {
        return;
    }
    Node* body = block.body();
    if (body->children.empty() || !body->children[0].is(Kind::LocalDecl)) {
        body->children.insert(body->children.begin(), Node(Kind::LocalDecl));
    }
    auto& decl = body->children[0];
    for (const auto& n: names) {
        bool present = std::any_of(decl.children.begin(), decl.children.end(), [&](const Node& c) {
            return c.name == n;
        });
        if (!present) {
            decl.children.emplace_back(Kind::Name, n);
        }
    }
}

Node solver_node(Kind kind, const ImplicitSystem& system) {
    Node node(kind);
    for (const auto& u: system.unknowns) {
        node.children.emplace_back(Kind::Name, u);
    }
    for (const auto& f: system.residuals) {
        node.children.push_back(Node(Kind::LinEq, {}, {symalg::to_ast(f), ast::make_number(0)}));
    }
    return node;
}

void old_value_statements(const ImplicitSystem& system, Lowered& out) {
    for (const auto& [state, old]: system.old_values) {
        out.locals.push_back(old);
        out.statements.push_back(assign(old, variable_node(state)));
    }
}

bool contains_reaction(const Node& node) {
    if (node.is(Kind::Reaction)) {
        return true;
    }
    return std::any_of(node.children.begin(), node.children.end(), contains_reaction);
}

}  // namespace

std::optional<Method> parse_method(std::string_view name) {
    if (name == "cnexp") {
        return Method::Cnexp;
    }
    if (name == "sparse") {
        return Method::Sparse;
    }
    if (name == "derivimplicit") {
        return Method::Derivimplicit;
    }
    return std::nullopt;
}

Node variable_node(const std::string& name) {
    auto open = name.find('[');
    if (open == std::string::npos) {
        return ast::make_identifier(name);
    }
    double index = std::strtod(name.c_str() + open + 1, nullptr);
    return Node(Kind::Indexed, name.substr(0, open), {ast::make_constant(index)});
}

std::vector<std::string> state_names(const symtab::SymbolTable& global) {
    std::vector<std::string> names;
    for (const auto& sym: global.symbols()) {
        if (!sym.properties.has(Property::State)) {
            continue;
        }
        if (sym.length == 0) {
            names.push_back(sym.name);
        } else {
            for (int i = 0; i < sym.length; ++i) {
                names.push_back(fmt::format("{}[{}]", sym.name, i));
            }
        }
    }
    return names;
}

symalg::ConversionOptions conversion_options(const Node& program) {
    symalg::ConversionOptions options;
    for (const auto& block: program.children) {
        if (block.is(Kind::FunctionBlock)) {
            options.opaque_functions.insert(block.name);
        }
    }
    for (const char* f: {"log10", "sin", "cos", "tan", "tanh", "floor", "ceil"}) {
        options.opaque_functions.insert(f);
    }
    return options;
}

Node kinetic_to_derivative(const Node& kinetic,
                           const symtab::SymbolTable& global,
                           const symalg::ConversionOptions& options) {
    Node out = kinetic;
    out.kind = Kind::DerivativeBlock;
    auto states = state_names(global);
    std::set<std::string> state_set(states.begin(), states.end());
    std::map<std::string, std::vector<SymExpr>> rates;

    auto species_power = [&](const Node& list) {
        std::vector<SymExpr> factors;
        for (const auto& r: list.children) {
            if (r.value <= 0 || std::trunc(r.value) != r.value) {
                throw CompileError(
                    fmt::format("non-integer stoichiometry {} for '{}'", ast::format_number(r.value), r.name),
                    r.span);
            }
            factors.push_back(symalg::power(symalg::variable(ast::variable_text(r)), symalg::constant(r.value)));
        }
        return symalg::product(std::move(factors));
    };

    Node* body = out.body();
    std::vector<Node> kept;
    std::optional<std::size_t> position;
    for (auto& stmt: body->children) {
        if (!stmt.is(Kind::Reaction)) {
            if (contains_reaction(stmt)) {
                throw CompileError("reaction inside control flow is not supported", stmt.span);
            }
            kept.push_back(std::move(stmt));
            continue;
        }
        SymExpr kf = symalg::from_ast(stmt.children[2], options);
        SymExpr kb = symalg::from_ast(stmt.children[3], options);
        std::vector<SymExpr> flux{kf * species_power(stmt.children[0]),
                                  symalg::constant(-1) * kb * species_power(stmt.children[1])};
        for (int side = 0; side < 2; ++side) {
            for (const auto& r: stmt.children[static_cast<std::size_t>(side)].children) {
                std::string name = ast::variable_text(r);
                if (state_set.count(name) == 0) {
                    continue;
                }
                double sign = side == 0 ? -r.value : r.value;
                for (const auto& term: flux) {
                    rates[name].push_back(symalg::constant(sign) * term);
                }
            }
        }
        position = kept.size();
    }
    if (position) {
        std::vector<Node> equations;
        for (const auto& s: states) {
            auto it = rates.find(s);
            if (it == rates.end()) {
                continue;
            }
            Node var = variable_node(s);
            Node prime(Kind::Prime, var.name);
            prime.value = 1;
            if (var.is(Kind::Indexed)) {
                prime.children.push_back(var.children[0]);
            }
            Node rhs = symalg::to_ast(symalg::sum(it->second));
            equations.push_back(Node(Kind::DiffEq, {}, {std::move(prime), std::move(rhs)}));
        }
        kept.insert(kept.begin() + static_cast<std::ptrdiff_t>(*position), equations.begin(), equations.end());
    }
    body->children = std::move(kept);
    return out;
}

OdeSystem ode_system(const Node& block, const symtab::SymbolTable& global, const symalg::ConversionOptions& options) {
    auto all_states = state_names(global);
    std::set<std::string> state_set(all_states.begin(), all_states.end());
    std::map<std::string, SymExpr> env;
    std::map<std::string, SymExpr> derivatives;
    OdeSystem ode;

    auto convert = [&](const Node& expr) {
        std::map<std::string, SymExpr> bindings(env.begin(), env.end());
        return symalg::substitute(symalg::from_ast(expr, options), bindings);
    };
    auto state_dependent = [&](const Node& expr) {
        std::set<std::string> watched = state_set;
        for (const auto& [name, _]: env) {
            watched.insert(name);
        }
        return mentions_any(expr, watched);
    };

    for (const auto& stmt: block.body()->children) {
        switch (stmt.kind) {
        case Kind::Assign: {
            const Node& lhs = stmt.children[0];
            if (lhs.is(Kind::Indexed) && !ast::literal_value(lhs.children[0])) {
                if (state_dependent(stmt.children[1])) {
                    throw CompileError("state-dependent assignment with a variable index", stmt.span);
                }
                continue;
            }
            std::string name = ast::variable_text(lhs);
            if (state_set.count(name) != 0) {
                throw CompileError(fmt::format("STATE '{}' assigned inside a solved block", name), stmt.span);
            }
            if (!state_dependent(stmt.children[1])) {
                env.erase(name);
                continue;
            }
            env[name] = convert(stmt.children[1]);
            break;
        }
        case Kind::DiffEq: {
            const Node& prime = stmt.children[0];
            std::string name = ast::variable_text(prime);
            if (prime.value != 1) {
                throw CompileError(fmt::format("higher order derivative of '{}' is not supported", name),
                                   stmt.span);
            }
            if (state_set.count(name) == 0) {
                throw CompileError(fmt::format("'{}' is not a STATE", name), stmt.span);
            }
            if (derivatives.count(name) != 0) {
                throw CompileError(fmt::format("second equation for '{}'", name), stmt.span);
            }
            derivatives[name] = convert(stmt.children[1]);
            break;
        }
        case Kind::Conserve: {
            ConserveLaw law;
            law.residual = convert(stmt.children[0]) - convert(stmt.children[1]);
            for (const auto& s: all_states) {
                if (symalg::depends_on(law.residual, s)) {
                    law.species.push_back(s);
                }
            }
            ode.conserve.push_back(std::move(law));
            break;
        }
        case Kind::If:
        case Kind::While:
        case Kind::FromLoop: {
            bool has_equation = false;
            std::set<std::string> assigned;
            ast::traverse(stmt, [&](const Node& n) {
                if (n.is(Kind::DiffEq) || n.is(Kind::Conserve)) {
                    has_equation = true;
                }
                if (n.is(Kind::Assign)) {
                    assigned.insert(ast::variable_text(n.children[0]));
                    assigned.insert(n.children[0].name);
                }
            });
            if (has_equation) {
                throw CompileError("differential equation inside control flow is not supported", stmt.span);
            }
            if (state_dependent(stmt)) {
                throw CompileError("state-dependent control flow in a solved block is not supported", stmt.span);
            }
            for (const auto& name: assigned) {
                env.erase(name);
            }
            break;
        }
        default:
            break;
        }
    }
    for (const auto& s: all_states) {
        auto it = derivatives.find(s);
        if (it != derivatives.end()) {
            ode.states.push_back(s);
            ode.derivatives.push_back(it->second);
        }
    }
    return ode;
}

Plan classify(const OdeSystem& ode, Method method, const symalg::ConversionOptions& options) {
    Plan plan;
    plan.method = method;
    if (method == Method::Derivimplicit) {
        return plan;
    }
    for (std::size_t i = 0; i < ode.states.size(); ++i) {
        const SymExpr& f = ode.derivatives[i];
        const std::string& y = ode.states[i];
        if (method == Method::Cnexp) {
            for (std::size_t j = 0; j < ode.states.size(); ++j) {
                if (j != i && symalg::depends_on(f, ode.states[j])) {
                    throw CompileError(fmt::format("cnexp: equation for '{}' is coupled to '{}'; "
                                                   "use METHOD sparse or derivimplicit",
                                                   y,
                                                   ode.states[j]));
                }
            }
            SymExpr b;
            try {
                b = symalg::differentiate(f, y, options);
            } catch (const CompileError&) {
                throw CompileError(
                    fmt::format("cnexp: equation for '{}' is not linear; use METHOD derivimplicit", y));
            }
            if (symalg::depends_on(b, y)) {
                throw CompileError(
                    fmt::format("cnexp: equation for '{}' is not linear; use METHOD derivimplicit", y));
            }
            SymExpr a = symalg::substitute(f, {{y, symalg::constant(0)}});
            plan.cnexp.push_back(CnexpTerm{y, a, b});
            continue;
        }
        for (const auto& x: ode.states) {
            SymExpr d;
            try {
                d = symalg::differentiate(f, x, options);
            } catch (const CompileError&) {
                d = nullptr;
            }
            if (d == nullptr || depends_on_any(d, ode.states)) {
                throw CompileError(fmt::format(
                    "sparse: equation for '{}' is not linear in the states; use METHOD derivimplicit", y));
            }
        }
    }
    return plan;
}

Lowered solve_cnexp(const CnexpTerm& term, bool pade) {
    Lowered out;
    SymExpr y = symalg::variable(term.state);
    SymExpr dt = symalg::variable("dt");
    if (term.b->is_constant(0)) {
        out.statements.push_back(assign(term.state, symalg::to_ast(y + dt * term.a)));
        return out;
    }
    SymExpr ratio = term.a / term.b;
    if (!pade) {
        // y*E + (a/b)*(E - 1); both terms share the sign of y and -a/b
        SymExpr x = term.b * dt;
        SymExpr update = symalg::sum({symalg::product({y, symalg::call("exp", {x})}),
                                      symalg::product({ratio, symalg::call("expm1", {x})})});
        out.statements.push_back(assign(term.state, symalg::to_ast(update)));
        return out;
    }
    SymExpr growth;
    {
        std::string s = sanitize(term.state);
        std::string x = "pade_x_" + s;
        std::string e = "pade_e_" + s;
        out.locals = {x, e};
        out.statements.push_back(assign(x, symalg::to_ast(term.b * dt)));
        auto id = [](const std::string& n) { return ast::make_identifier(n); };
        auto two = [] { return ast::make_number(2); };
        Node guard = ast::make_binary(
            "<", ast::make_call("fabs", {ast::make_binary("-", two(), id(x))}), ast::make_number(1e-9));
        Node exact = ast::make_block({assign(e, ast::make_call("exp", {id(x)}))});
        Node rational = ast::make_block({assign(
            e, ast::make_binary("/", ast::make_binary("+", two(), id(x)), ast::make_binary("-", two(), id(x))))});
        out.statements.push_back(Node(Kind::If, {}, {std::move(guard), std::move(exact), std::move(rational)}));
        growth = symalg::variable(e);
    }
    SymExpr update = symalg::sum({-ratio, symalg::product({y + ratio, growth})});
    out.statements.push_back(assign(term.state, symalg::to_ast(update)));
    return out;
}

ImplicitSystem implicit_euler_system(const OdeSystem& ode, const std::set<std::string>& taken) {
    ImplicitSystem system;
    std::set<std::string> names = taken;
    SymExpr dt = symalg::variable("dt");
    for (std::size_t i = 0; i < ode.states.size(); ++i) {
        const std::string& x = ode.states[i];
        std::string old = fresh(sanitize(x) + "_old", names);
        system.unknowns.push_back(x);
        system.old_values.emplace_back(x, old);
        system.residuals.push_back(symalg::variable(x) - symalg::variable(old) - dt * ode.derivatives[i]);
    }
    std::set<std::size_t> replaced;
    for (const auto& law: ode.conserve) {
        for (auto it = system.unknowns.rbegin(); it != system.unknowns.rend(); ++it) {
            auto index = static_cast<std::size_t>(std::distance(it, system.unknowns.rend()) - 1);
            bool in_law = std::find(law.species.begin(), law.species.end(), *it) != law.species.end();
            if (in_law && replaced.count(index) == 0) {
                system.residuals[index] = law.residual;
                replaced.insert(index);
                break;
            }
        }
    }
    return system;
}

Lowered lower_sparse(const ImplicitSystem& system,
                     const LoweringOptions& options,
                     const std::set<std::string>& taken,
                     int& tmp_counter,
                     const symalg::ConversionOptions& conversion) {
    Lowered out;
    old_value_statements(system, out);
    for (const auto& f: system.residuals) {
        for (const auto& u: system.unknowns) {
            SymExpr d = symalg::differentiate(f, u, conversion);
            if (depends_on_any(d, system.unknowns)) {
                throw CompileError("sparse: system is not linear in its unknowns; use METHOD derivimplicit");
            }
        }
    }
    if (system.unknowns.size() > options.symbolic_limit) {
        out.statements.push_back(solver_node(Kind::LinearSolve, system));
        return out;
    }
    auto linear = symalg::linear_system_from_residuals(system.residuals, system.unknowns);
    auto solution = symalg::solve_linear_symbolic(linear);
    if (options.solver_cse) {
        std::set<std::string> reserved = taken;
        for (const auto& [_, old]: system.old_values) {
            reserved.insert(old);
        }
        auto result = symalg::cse(solution, "tmp_", tmp_counter, reserved);
        for (const auto& [name, expr]: result.bindings) {
            out.locals.push_back(name);
            out.statements.push_back(assign(name, symalg::to_ast(expr)));
            ++tmp_counter;
        }
        solution = result.rewritten;
    }
    for (std::size_t i = 0; i < solution.size(); ++i) {
        out.statements.push_back(assign(system.unknowns[i], symalg::to_ast(solution[i])));
    }
    return out;
}

Lowered lower_derivimplicit(const ImplicitSystem& system, const symalg::ConversionOptions& conversion) {
    Lowered out;
    old_value_statements(system, out);
    for (const auto& f: system.residuals) {
        for (const auto& u: system.unknowns) {
            symalg::differentiate(f, u, conversion);
        }
    }
    out.statements.push_back(solver_node(Kind::NewtonSolve, system));
    return out;
}

SolverSystem solver_system(const Node& solver, const symalg::ConversionOptions& options) {
    SolverSystem system;
    for (const auto& c: solver.children) {
        if (c.is(Kind::Name)) {
            system.unknowns.push_back(c.name);
        } else if (c.is(Kind::LinEq)) {
            system.residuals.push_back(symalg::from_ast(c.children[0], options) -
                                       symalg::from_ast(c.children[1], options));
        }
    }
    if (system.residuals.size() != system.unknowns.size()) {
        throw CompileError(fmt::format("solver has {} equations for {} unknowns",
                                       system.residuals.size(),
                                       system.unknowns.size()),
                           solver.span);
    }
    for (const auto& f: system.residuals) {
        std::vector<SymExpr> row;
        for (const auto& u: system.unknowns) {
            row.push_back(symalg::differentiate(f, u, options));
        }
        system.jacobian.push_back(std::move(row));
    }
    return system;
}

Node derive_conductance(const Node& program, Diagnostics& diagnostics) {
    Node p = passes::ensure_tables(program, diagnostics);
    Node* bp = ast::find_block(p, Kind::BreakpointBlock);
    if (bp == nullptr) {
        return p;
    }
    const auto& global = symtab::global_table(p);
    auto options = conversion_options(p);
    Node* body = bp->body();

    std::set<std::string> user_ions;
    bool user_nonspecific = false;
    for (const auto& stmt: body->children) {
        if (stmt.is(Kind::Conductance)) {
            if (stmt.text.empty()) {
                user_nonspecific = true;
            } else {
                user_ions.insert(stmt.text);
            }
        }
    }
    // globals written by callables reachable from BREAKPOINT count as opaque
    std::set<std::string> opaque_writes;
    std::set<std::string> called;
    ast::traverse(*body, [&](const Node& n) {
        if (n.is(Kind::Call)) {
            called.insert(n.name);
        }
    });
    for (bool grew = true; grew;) {
        grew = false;
        for (const auto& block: p.children) {
            if ((block.is(Kind::ProcedureBlock) || block.is(Kind::FunctionBlock)) && called.count(block.name)) {
                ast::traverse(block, [&](const Node& n) {
                    if (n.is(Kind::Call) && called.insert(n.name).second) {
                        grew = true;
                    }
                    if (n.is(Kind::Assign)) {
                        opaque_writes.insert(n.children[0].name);
                    }
                });
            }
        }
    }

    std::set<std::string> control_flow;
    std::map<std::string, int> top_assignments;
    for (const auto& stmt: body->children) {
        if (stmt.is(Kind::Assign)) {
            top_assignments[stmt.children[0].name]++;
        } else {
            ast::traverse(stmt, [&](const Node& n) {
                if (n.is(Kind::Assign)) {
                    control_flow.insert(n.children[0].name);
                }
            });
        }
    }

    std::vector<std::string> locals;
    std::vector<Node> conductances;
    std::map<std::string, SymExpr> env;
    std::vector<Node> out;
    std::set<std::string> taken = all_names(p);
    for (auto& stmt: body->children) {
        out.push_back(stmt);
        if (!stmt.is(Kind::Assign) || !stmt.children[0].is(Kind::Identifier)) {
            continue;
        }
        const std::string& name = stmt.children[0].name;
        SymExpr value;
        try {
            value = symalg::substitute(symalg::from_ast(stmt.children[1], options), env);
        } catch (const CompileError&) {
            env.erase(name);
            continue;
        }
        env[name] = value;
        const auto* sym = global.lookup(name);
        if (sym == nullptr || !sym->properties.has(Property::Current) || top_assignments[name] != 1 ||
            control_flow.count(name) != 0 || bp->scope->find_local(name) != nullptr) {
            continue;
        }
        bool ion = sym->properties.has(Property::Ion);
        std::string ion_name = ion ? name.substr(1) : std::string();
        if ((ion && user_ions.count(ion_name) != 0) || (!ion && user_nonspecific)) {
            continue;
        }
        auto free = symalg::free_variables(value);
        bool unsafe = std::any_of(free.begin(), free.end(), [&](const std::string& v) {
            return control_flow.count(v) != 0 || opaque_writes.count(v) != 0;
        });
        if (unsafe) {
            continue;
        }
        SymExpr g;
        try {
            g = symalg::differentiate(value, "v", options);
        } catch (const CompileError&) {
            continue;
        }
        if (symalg::depends_on(g, "v")) {
            continue;
        }
        std::string gname = fresh(fmt::format("g_{}_auto", ion ? ion_name : name), taken);
        locals.push_back(gname);
        out.push_back(assign(gname, symalg::to_ast(g)));
        Node c(Kind::Conductance, gname);
        c.text = ion_name;
        conductances.push_back(std::move(c));
    }
    if (locals.empty()) {
        return p;
    }
    for (auto& c: conductances) {
        out.push_back(std::move(c));
    }
    body->children = std::move(out);
    add_locals(*bp, locals);
    return passes::ensure_tables(p, diagnostics);
}

Node lower(const Node& program, const LoweringOptions& options, Diagnostics& diagnostics) {
    Node p = passes::ensure_tables(program, diagnostics);
    Node* bp = ast::find_block(p, Kind::BreakpointBlock);
    if (bp == nullptr) {
        return p;
    }
    auto conversion = conversion_options(p);
    std::set<std::string> taken = all_names(p);
    int tmp_counter = 0;
    std::set<std::string> done;

    for (auto& stmt: bp->body()->children) {
        if (!stmt.is(Kind::Solve)) {
            continue;
        }
        Node* block = nullptr;
        for (auto& b: p.children) {
            if (passes::is_kernel_block(b) && b.name == stmt.name) {
                block = &b;
            }
        }
        if (block == nullptr) {
            throw CompileError(fmt::format("SOLVE of unknown block '{}'", stmt.name), stmt.span);
        }
        if (!done.insert(stmt.name).second) {
            stmt.text.clear();
            continue;
        }
        bool pending = false;
        for (const auto& s: block->body()->children) {
            ast::traverse(s, [&](const Node& n) {
                if (n.is(Kind::DiffEq) || n.is(Kind::Reaction) || n.is(Kind::LinEq) || n.is(Kind::Conserve)) {
                    pending = true;
                }
            });
        }
        if (!pending) {
            stmt.text.clear();
            continue;
        }
        const auto& global = symtab::global_table(p);
        passes::fold_and_unroll_block(*block, p, diagnostics);
        if (block->is(Kind::KineticBlock)) {
            *block = kinetic_to_derivative(*block, global, conversion);
        }

        Node* body = block->body();
        Lowered lowered;
        std::vector<Node> rest;
        std::optional<std::size_t> position;
        auto drop = [&](Kind kind) {
            for (auto& s: body->children) {
                if (s.is(kind) || s.is(Kind::Conserve)) {
                    if (!position) {
                        position = rest.size();
                    }
                    continue;
                }
                rest.push_back(std::move(s));
            }
        };

        if (block->is(Kind::DerivativeBlock)) {
            auto method = parse_method(stmt.text);
            if (stmt.text.empty()) {
                throw CompileError(fmt::format("SOLVE {} needs a METHOD", stmt.name), stmt.span);
            }
            if (!method) {
                throw CompileError(fmt::format("unsupported METHOD {}", stmt.text), stmt.span);
            }
            OdeSystem ode = ode_system(*block, global, conversion);
            Plan plan = classify(ode, *method, conversion);
            if (*method == Method::Cnexp) {
                if (!ode.conserve.empty()) {
                    diagnostics.push_back(
                        Diagnostic{Severity::Warning, "CONSERVE has no effect with METHOD cnexp", stmt.span});
                }
                std::map<std::string, Lowered> updates;
                for (const auto& term: plan.cnexp) {
                    updates[term.state] = solve_cnexp(term, options.pade);
                }
                for (auto& s: body->children) {
                    if (s.is(Kind::Conserve)) {
                        continue;
                    }
                    if (!s.is(Kind::DiffEq)) {
                        rest.push_back(std::move(s));
                        continue;
                    }
                    auto& update = updates[ast::variable_text(s.children[0])];
                    lowered.locals.insert(lowered.locals.end(), update.locals.begin(), update.locals.end());
                    for (auto& u: update.statements) {
                        rest.push_back(std::move(u));
                    }
                }
            } else {
                auto system = implicit_euler_system(ode, taken);
                for (const auto& [_, old]: system.old_values) {
                    taken.insert(old);
                }
                lowered = *method == Method::Sparse
                              ? lower_sparse(system, options, taken, tmp_counter, conversion)
                              : lower_derivimplicit(system, conversion);
                drop(Kind::DiffEq);
            }
        } else {
            // LINEAR / NONLINEAR: unknowns are the states the equations mention
            std::set<std::string> mentioned;
            ImplicitSystem system;
            for (const auto& s: body->children) {
                if (!s.is(Kind::LinEq)) {
                    continue;
                }
                ast::traverse(s, [&](const Node& n) {
                    if (n.is(Kind::Identifier) || n.is(Kind::Indexed)) {
                        mentioned.insert(ast::variable_text(n));
                    }
                });
                system.residuals.push_back(symalg::from_ast(s.children[0], conversion) -
                                           symalg::from_ast(s.children[1], conversion));
            }
            for (const auto& x: state_names(global)) {
                if (mentioned.count(x) != 0) {
                    system.unknowns.push_back(x);
                }
            }
            if (system.unknowns.size() != system.residuals.size()) {
                throw CompileError(fmt::format("{} block '{}' has {} equations for {} states",
                                               block->is(Kind::LinearBlock) ? "LINEAR" : "NONLINEAR",
                                               block->name,
                                               system.residuals.size(),
                                               system.unknowns.size()),
                                   block->span);
            }
            lowered = block->is(Kind::LinearBlock)
                          ? lower_sparse(system, options, taken, tmp_counter, conversion)
                          : lower_derivimplicit(system, conversion);
            drop(Kind::LinEq);
        }
        if (position) {
            rest.insert(rest.begin() + static_cast<std::ptrdiff_t>(*position),
                        std::make_move_iterator(lowered.statements.begin()),
                        std::make_move_iterator(lowered.statements.end()));
        }
        body->children = std::move(rest);
        add_locals(*block, lowered.locals);
        for (const auto& l: lowered.locals) {
            taken.insert(l);
        }
        stmt.text.clear();
    }
    return passes::ensure_tables(p, diagnostics);
}

}  // namespace nmodl::ode
