/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include "nmodl/passes.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include <fmt/format.h>

#include "nmodl/builtins.hpp"

namespace nmodl::passes {

using ast::Kind;
using ast::Node;
using symtab::Property;
using symtab::SymbolTable;

namespace {

void warn(Diagnostics& diagnostics, std::string message, Span span = {}) {
    diagnostics.push_back(Diagnostic{Severity::Warning, std::move(message), span});
}

bool contains_kind(const Node& node, Kind kind) {
    if (node.is(kind)) {
        return true;
    }
    return std::any_of(node.children.begin(), node.children.end(), [&](const Node& c) {
        return contains_kind(c, kind);
    });
}

bool is_callable(const Node& block) {
    return block.is(Kind::ProcedureBlock) || block.is(Kind::FunctionBlock);
}

/// Variable names appearing as assignment targets anywhere below `node`.
std::set<std::string> assigned_names(const Node& node) {
    std::set<std::string> names;
    ast::traverse(node, [&](const Node& n) {
        if (n.is(Kind::Assign)) {
            names.insert(n.children[0].name);
        }
        if (n.is(Kind::FromLoop)) {
            names.insert(n.name);
        }
    });
    return names;
}

/// Names declared by LOCAL statements and arguments anywhere below `node`.
std::set<std::string> declared_names(const Node& node) {
    std::set<std::string> names;
    ast::traverse(node, [&](const Node& n) {
        if (n.is(Kind::LocalDecl)) {
            for (const auto& name: n.children) {
                names.insert(name.name);
            }
        } else if (n.is(Kind::Argument)) {
            names.insert(n.name);
        }
    });
    return names;
}

/// True if `name` as seen from `scope` is the program-level symbol.
bool resolves_global(const SymbolTable* scope, const std::string& name) {
    const SymbolTable* t = scope != nullptr ? scope->defining_table(name) : nullptr;
    return t != nullptr && t->owner_kind() == Kind::Program && t->owner_name() == "global";
}

std::optional<double> apply_binary(const std::string& op, double a, double b) {
    if (op == "+") {
        return a + b;
    }
    if (op == "-") {
        return a - b;
    }
    if (op == "*") {
        return a * b;
    }
    if (op == "/") {
        return a / b;
    }
    if (op == "^") {
        return std::pow(a, b);
    }
    if (op == "<") {
        return a < b ? 1.0 : 0.0;
    }
    if (op == "<=") {
        return a <= b ? 1.0 : 0.0;
    }
    if (op == ">") {
        return a > b ? 1.0 : 0.0;
    }
    if (op == ">=") {
        return a >= b ? 1.0 : 0.0;
    }
    if (op == "==") {
        return a == b ? 1.0 : 0.0;
    }
    if (op == "!=") {
        return a != b ? 1.0 : 0.0;
    }
    if (op == "&&") {
        return (a != 0 && b != 0) ? 1.0 : 0.0;
    }
    if (op == "||") {
        return (a != 0 || b != 0) ? 1.0 : 0.0;
    }
    return std::nullopt;
}

Node literal(double value, const Span& span) {
    Node n = ast::make_constant(value);
    n.span = span;
    for (auto& c: n.children) {
        c.span = span;
    }
    return n;
}

/// Parameters usable as compile-time constants in loop bounds.
std::map<std::string, double> constant_parameters(const Node& program) {
    std::map<std::string, double> params;
    std::set<std::string> written;
    for (const auto& block: program.children) {
        if (block.body() != nullptr) {
            auto names = assigned_names(block);
            written.insert(names.begin(), names.end());
        }
    }
    for (const auto& sym: symtab::global_table(program).symbols()) {
        if (sym.properties.has(Property::Parameter) && sym.default_value && sym.length == 0 &&
            written.count(sym.name) == 0) {
            params[sym.name] = *sym.default_value;
        }
    }
    return params;
}

void substitute_loop_bounds(Node& node,
                            const SymbolTable* scope,
                            const std::map<std::string, double>& params,
                            std::set<std::string>& used) {
    const SymbolTable* current = node.scope ? node.scope.get() : scope;
    if (node.is(Kind::FromLoop)) {
        for (int i = 0; i < 2; ++i) {
            node.children[static_cast<std::size_t>(i)] =
                ast::transform(node.children[static_cast<std::size_t>(i)], [&](Node n) {
                    if (n.is(Kind::Identifier) && params.count(n.name) != 0 &&
                        resolves_global(current, n.name)) {
                        used.insert(n.name);
                        return literal(params.at(n.name), n.span);
                    }
                    return n;
                });
        }
    }
    for (auto& child: node.children) {
        substitute_loop_bounds(child, current, params, used);
    }
}

Node fold_block_body(const Node& body,
                     const std::map<std::string, double>& params,
                     Diagnostics& diagnostics,
                     int& changed,
                     std::set<std::string>& used,
                     const SymbolTable* scope) {
    Node copy = body;
    substitute_loop_bounds(copy, scope, params, used);
    Node folded = fold_expression(copy, diagnostics, &changed);
    return folded;
}

// ------------------------------------------------------------------ unroll

class Unroller {
  public:
    Unroller(Diagnostics& diagnostics, const Node& top)
        : diagnostics_(diagnostics)
        , top_(top) {}

    int changed = 0;

    void block(Node& statements) {
        std::vector<Node> out;
        for (auto& stmt: statements.children) {
            if (stmt.is(Kind::FromLoop)) {
                unroll(stmt, out);
                continue;
            }
            nested(stmt);
            out.push_back(std::move(stmt));
        }
        statements.children = std::move(out);
    }

  private:
    Diagnostics& diagnostics_;
    const Node& top_;

    void nested(Node& stmt) {
        for (auto& child: stmt.children) {
            if (child.is(Kind::StatementBlock)) {
                block(child);
            } else if (child.is(Kind::If)) {
                nested(child);
            }
        }
    }

    static bool integral(const std::optional<double>& v) {
        return v && std::isfinite(*v) && std::trunc(*v) == *v && std::fabs(*v) < 1e6;
    }

    /// Loop variable read outside loops that bind it.
    static bool read_outside_loops(const Node& node, const std::string& var) {
        if (node.is(Kind::FromLoop) && node.name == var) {
            return read_outside_loops(node.children[0], var) ||
                   read_outside_loops(node.children[1], var);
        }
        if (node.is(Kind::Identifier) && node.name == var) {
            return true;
        }
        return std::any_of(node.children.begin(), node.children.end(), [&](const Node& c) {
            return read_outside_loops(c, var);
        });
    }

    static Node substitute(const Node& node, const std::string& var, double value) {
        if (node.is(Kind::StatementBlock) && node.scope && node.scope->find_local(var) != nullptr) {
            return node;
        }
        if (node.is(Kind::Identifier) && node.name == var) {
            return literal(value, node.span);
        }
        Node copy = node;
        for (auto& c: copy.children) {
            c = substitute(c, var, value);
        }
        return copy;
    }

    void unroll(Node& loop, std::vector<Node>& out) {
        auto lo = ast::literal_value(loop.children[0]);
        auto hi = ast::literal_value(loop.children[1]);
        Node& body = loop.children[2];
        if (!integral(lo) || !integral(hi) || assigned_names(body).count(loop.name) != 0) {
            warn(diagnostics_,
                 fmt::format("cannot unroll loop over '{}': bounds are not integer literals",
                             loop.name),
                 loop.span);
            block(body);
            out.push_back(std::move(loop));
            return;
        }
        ++changed;
        auto locals = declared_names(body);
        for (auto k = static_cast<long>(*lo); k <= static_cast<long>(*hi); ++k) {
            Node copy = substitute(body, loop.name, static_cast<double>(k));
            copy = fold_expression(copy, diagnostics_);
            if (!locals.empty()) {
                rename_locals(copy, locals, k);
            }
            block(copy);
            for (auto& stmt: copy.children) {
                out.push_back(std::move(stmt));
            }
        }
        bool is_local = top_.scope && top_.scope->find_local(loop.name) != nullptr &&
                        top_.scope->find_local(loop.name)->properties.has(Property::Local);
        if (!is_local || read_outside_loops(*top_.body(), loop.name)) {
            double after = std::max(*lo, *hi + 1);
            Node assign = ast::make_assign(ast::make_identifier(loop.name), literal(after, loop.span));
            assign.span = loop.span;
            out.push_back(std::move(assign));
        }
    }

    static void rename_locals(Node& body, const std::set<std::string>& locals, long k) {
        for (auto& stmt: body.children) {
            stmt = ast::transform(stmt, [&](Node n) {
                if ((n.is(Kind::Identifier) || n.is(Kind::Indexed) || n.is(Kind::Name)) &&
                    locals.count(n.name) != 0) {
                    n.name = fmt::format("{}_{}", n.name, k);
                }
                return n;
            });
        }
    }
};

// ------------------------------------------------------------------ inline

class Inliner {
  public:
    Inliner(Node& program, Diagnostics& diagnostics)
        : program_(program)
        , diagnostics_(diagnostics) {}

    int inlined = 0;
    std::set<std::string> inlined_callees;

    void run() {
        for (std::size_t i = 0; i < program_.children.size(); ++i) {
            if (is_callable(program_.children[i])) {
                callables_[program_.children[i].name] = i;
            }
        }
        find_cycles();
        std::vector<std::string> order;
        std::set<std::string> seen;
        for (const auto& [name, _]: callables_) {
            post_order(name, seen, order);
        }
        for (const auto& name: order) {
            process_block(program_.children[callables_[name]]);
        }
        for (auto& block: program_.children) {
            if (is_kernel_block(block)) {
                process_block(block);
            }
        }
    }

  private:
    Node& program_;
    Diagnostics& diagnostics_;
    std::map<std::string, std::size_t> callables_;
    std::set<std::string> cyclic_;
    int counter_ = 0;

    // per caller block
    std::set<std::string> taken_;
    std::set<std::string> caller_declared_;
    std::vector<Node> hoisted_;

    std::set<std::string> callees_of(const Node& block) const {
        std::set<std::string> out;
        ast::traverse(block, [&](const Node& n) {
            if (n.is(Kind::Call) && callables_.count(n.name) != 0) {
                out.insert(n.name);
            }
        });
        return out;
    }

    void find_cycles() {
        // a callable is cyclic if it can reach itself
        for (const auto& [name, index]: callables_) {
            std::set<std::string> visited;
            std::function<bool(const std::string&)> reach = [&](const std::string& from) -> bool {
                for (const auto& callee: callees_of(program_.children[callables_.at(from)])) {
                    if (callee == name) {
                        return true;
                    }
                    if (visited.insert(callee).second && reach(callee)) {
                        return true;
                    }
                }
                return false;
            };
            if (reach(name)) {
                cyclic_.insert(name);
                warn(diagnostics_,
                     fmt::format("recursive call chain through '{}'; calls are not inlined", name),
                     program_.children[index].span);
            }
        }
    }

    void post_order(const std::string& name, std::set<std::string>& seen, std::vector<std::string>& order) {
        if (!seen.insert(name).second) {
            return;
        }
        for (const auto& callee: callees_of(program_.children[callables_[name]])) {
            post_order(callee, seen, order);
        }
        order.push_back(name);
    }

    bool inlinable(const Node& call) const {
        return call.is(Kind::Call) && callables_.count(call.name) != 0 && cyclic_.count(call.name) == 0;
    }

    std::string fresh(const std::string& base) {
        std::string name = base;
        int extra = 0;
        while (taken_.count(name) != 0) {
            name = fmt::format("{}_{}", base, ++extra);
        }
        taken_.insert(name);
        return name;
    }

    void process_block(Node& block) {
        taken_.clear();
        hoisted_.clear();
        for (const auto& sym: symtab::global_table(program_).symbols()) {
            taken_.insert(sym.name);
        }
        for (const auto* t = program_.scope->parent(); t != nullptr; t = t->parent()) {
            for (const auto& sym: t->symbols()) {
                taken_.insert(sym.name);
            }
        }
        caller_declared_ = declared_names(block);
        taken_.insert(caller_declared_.begin(), caller_declared_.end());
        ast::traverse(block, [&](const Node& n) {
            if (n.is(Kind::Identifier)) {
                taken_.insert(n.name);
            }
        });

        Node* body = block.body();
        statements(*body);
        if (!hoisted_.empty()) {
            if (!body->children.empty() && body->children[0].is(Kind::LocalDecl)) {
                for (auto& n: hoisted_) {
                    body->children[0].children.push_back(std::move(n));
                }
            } else {
                Node decl(Kind::LocalDecl, {}, std::move(hoisted_));
                body->children.insert(body->children.begin(), std::move(decl));
            }
            hoisted_.clear();
        }
    }

    void hoist(const std::string& name, int length = 0) {
        Node n(Kind::Name, name);
        n.length = length;
        hoisted_.push_back(std::move(n));
    }

    void statements(Node& block) {
        std::vector<Node> out;
        for (auto& stmt: block.children) {
            std::vector<Node> prelude;
            if (stmt.is(Kind::ExprStatement) && inlinable(stmt.children[0])) {
                Node call = std::move(stmt.children[0]);
                for (auto& arg: call.children) {
                    arg = expression(std::move(arg), prelude);
                }
                if (!expand(call, prelude)) {
                    stmt.children[0] = std::move(call);
                    prelude.push_back(std::move(stmt));
                }
                for (auto& p: prelude) {
                    out.push_back(std::move(p));
                }
                continue;
            }
            statement(stmt, prelude);
            for (auto& p: prelude) {
                out.push_back(std::move(p));
            }
            out.push_back(std::move(stmt));
        }
        block.children = std::move(out);
    }

    void statement(Node& stmt, std::vector<Node>& prelude) {
        switch (stmt.kind) {
        case Kind::If:
            stmt.children[0] = expression(std::move(stmt.children[0]), prelude);
            branches(stmt);
            break;
        case Kind::While:
            statements(stmt.children[1]);
            break;
        case Kind::FromLoop:
            stmt.children[0] = expression(std::move(stmt.children[0]), prelude);
            stmt.children[1] = expression(std::move(stmt.children[1]), prelude);
            statements(stmt.children[2]);
            break;
        case Kind::Assign:
        case Kind::DiffEq:
        case Kind::ExprStatement:
        case Kind::Conserve:
        case Kind::LinEq:
        case Kind::Reaction:
            for (auto& child: stmt.children) {
                child = expression(std::move(child), prelude);
            }
            break;
        default:
            break;
        }
    }

    /// Bodies of an IF chain; ELSE IF conditions keep their calls.
    void branches(Node& node) {
        statements(node.children[1]);
        if (node.children.size() > 2) {
            if (node.children[2].is(Kind::If)) {
                branches(node.children[2]);
            } else {
                statements(node.children[2]);
            }
        }
    }

    Node expression(Node expr, std::vector<Node>& prelude) {
        if (expr.is(Kind::Binary) && (expr.name == "&&" || expr.name == "||")) {
            expr.children[0] = expression(std::move(expr.children[0]), prelude);
            return expr;
        }
        for (auto& child: expr.children) {
            child = expression(std::move(child), prelude);
        }
        if (inlinable(expr)) {
            Node call = expr;
            if (auto result = expand(call, prelude)) {
                return *result;
            }
        }
        return expr;
    }

    static Node rename(const Node& node, const std::map<std::string, Node>& bindings) {
        if (node.is(Kind::StatementBlock) && node.scope) {
            bool shadowed = std::any_of(bindings.begin(), bindings.end(), [&](const auto& b) {
                return node.scope->find_local(b.first) != nullptr;
            });
            if (shadowed) {
                std::map<std::string, Node> inner;
                for (const auto& [name, value]: bindings) {
                    if (node.scope->find_local(name) == nullptr) {
                        inner.emplace(name, value);
                    }
                }
                return rename(node, inner);
            }
        }
        if (node.is(Kind::Identifier)) {
            auto it = bindings.find(node.name);
            if (it != bindings.end()) {
                Node r = it->second;
                r.span = node.span;
                return r;
            }
            return node;
        }
        Node copy = node;
        if (copy.is(Kind::Indexed) || copy.is(Kind::Name)) {
            auto it = bindings.find(copy.name);
            if (it != bindings.end() && it->second.is(Kind::Identifier)) {
                copy.name = it->second.name;
            }
        }
        for (auto& c: copy.children) {
            c = rename(c, bindings);
        }
        return copy;
    }

    /// Emits the callee body for `call`; returns the result expression.
    std::optional<Node> expand(const Node& call, std::vector<Node>& prelude) {
        const Node& callee = program_.children[callables_.at(call.name)];
        const SymbolTable* callee_scope = callee.scope.get();
        std::vector<const Node*> formals;
        for (const auto& c: callee.children) {
            if (c.is(Kind::Argument)) {
                formals.push_back(&c);
            }
        }
        if (formals.size() != call.children.size()) {
            warn(diagnostics_,
                 fmt::format("call to '{}' has {} arguments, expected {}; not inlined",
                             call.name,
                             call.children.size(),
                             formals.size()),
                 call.span);
            return std::nullopt;
        }
        // globals read by the callee must not be captured by caller locals
        bool capture = false;
        symtab::walk_scoped(*callee.body(), callee_scope, [&](const Node& n, const SymbolTable* scope) {
            if ((n.is(Kind::Identifier) || n.is(Kind::Indexed)) && resolves_global(scope, n.name) &&
                caller_declared_.count(n.name) != 0) {
                capture = true;
            }
        });
        if (capture) {
            warn(diagnostics_,
                 fmt::format("call to '{}' not inlined: caller LOCAL shadows a global it uses", call.name),
                 call.span);
            return std::nullopt;
        }

        int n = counter_++;
        std::string suffix = fmt::format("_{}_in_{}", call.name, n);
        Node body = *callee.body();
        auto written = assigned_names(body);
        auto declared = declared_names(*callee.body());
        std::map<std::string, Node> bindings;
        std::vector<Node> setup;

        for (std::size_t i = 0; i < formals.size(); ++i) {
            const Node& actual = call.children[i];
            const std::string& formal = formals[i]->name;
            bool direct = written.count(formal) == 0 &&
                          (ast::literal_value(actual).has_value() ||
                           (actual.is(Kind::Identifier) && written.count(actual.name) == 0 &&
                            declared.count(actual.name) == 0));
            if (direct) {
                bindings[formal] = actual;
            } else {
                std::string local = fresh(formal + suffix);
                hoist(local);
                setup.push_back(ast::make_assign(ast::make_identifier(local), actual));
                bindings[formal] = ast::make_identifier(local);
            }
        }
        std::vector<Node> kept;
        for (auto& stmt: body.children) {
            if (!stmt.is(Kind::LocalDecl)) {
                kept.push_back(std::move(stmt));
                continue;
            }
            for (const auto& local: stmt.children) {
                std::string name = local.name;
                if (taken_.count(name) != 0) {
                    name = fresh(local.name + suffix);
                    bindings[local.name] = ast::make_identifier(name);
                } else {
                    taken_.insert(name);
                }
                hoist(name, local.length);
            }
        }
        body.children = std::move(kept);
        // a PROCEDURE used as a value yields 0
        std::optional<Node> result = literal(0.0, call.span);
        if (callee.is(Kind::FunctionBlock)) {
            std::string ret = fresh(fmt::format("{}_in_{}", call.name, n));
            hoist(ret);
            bindings[call.name] = ast::make_identifier(ret);
            result = ast::make_identifier(ret);
        }
        Node renamed = rename(body, bindings);
        for (auto& s: setup) {
            prelude.push_back(std::move(s));
        }
        for (auto& s: renamed.children) {
            prelude.push_back(std::move(s));
        }
        ++inlined;
        inlined_callees.insert(call.name);
        return result;
    }
};

// ------------------------------------------------------------------- usage

class UsageAnalyzer {
  public:
    explicit UsageAnalyzer(UsageMap& usage)
        : usage_(usage) {}

    void kernel(const Node& block) {
        kernel_ = kernel_name(block);
        std::set<std::string> defined;
        statements(*block.body(), block.scope.get(), defined, "");
    }

    void callable(const Node& block) {
        symtab::walk_scoped(block, nullptr, [&](const Node& n, const SymbolTable* scope) {
            if ((n.is(Kind::Identifier) || n.is(Kind::Indexed) || n.is(Kind::Reactant)) &&
                resolves_global(scope, n.name)) {
                auto it = usage_.find(n.name);
                if (it != usage_.end()) {
                    it->second.callables.insert(block.name);
                    it->second.symbol.read_count++;
                }
            }
            if (n.is(Kind::Assign) && resolves_global(scope, n.children[0].name)) {
                auto it = usage_.find(n.children[0].name);
                if (it != usage_.end()) {
                    it->second.symbol.write_count++;
                    it->second.symbol.read_count--;
                }
            }
        });
    }

  private:
    UsageMap& usage_;
    std::string kernel_;

    DuChain* chain(const std::string& name, const SymbolTable* scope) {
        if (!resolves_global(scope, name)) {
            return nullptr;
        }
        auto it = usage_.find(name);
        return it == usage_.end() ? nullptr : &it->second;
    }

    void use(const Node& expr, const SymbolTable* scope, const std::set<std::string>& defined,
             const std::string& path) {
        ast::traverse(expr, [&](const Node& n) {
            if (!(n.is(Kind::Identifier) || n.is(Kind::Indexed) || n.is(Kind::Reactant) ||
                  n.is(Kind::Name))) {
                return;
            }
            if (DuChain* c = chain(n.name, scope)) {
                c->events.push_back(DuEvent{DuEvent::Kind::Use, kernel_, path, n.span});
                c->symbol.read_count++;
                auto [it, inserted] = c->defined_before_use.emplace(kernel_, true);
                if (defined.count(n.name) == 0) {
                    it->second = false;
                }
            }
        });
    }

    void def(const Node& target, const SymbolTable* scope, std::set<std::string>& defined,
             const std::string& path) {
        if (target.is(Kind::Indexed)) {
            use(target.children[0], scope, defined, path);
        }
        if (DuChain* c = chain(target.name, scope)) {
            c->events.push_back(DuEvent{DuEvent::Kind::Def, kernel_, path, target.span});
            c->symbol.write_count++;
            c->defined_before_use.emplace(kernel_, true);
            if (target.is(Kind::Identifier)) {
                defined.insert(target.name);
            }
        }
    }

    void statements(const Node& block, const SymbolTable* scope, std::set<std::string>& defined,
                    const std::string& prefix) {
        const SymbolTable* inner = block.scope ? block.scope.get() : scope;
        for (std::size_t i = 0; i < block.children.size(); ++i) {
            statement(block.children[i], inner, defined, prefix + std::to_string(i));
        }
    }

    void statement(const Node& s, const SymbolTable* scope, std::set<std::string>& defined,
                   const std::string& path) {
        switch (s.kind) {
        case Kind::Assign:
            use(s.children[1], scope, defined, path);
            def(s.children[0], scope, defined, path);
            break;
        case Kind::If: {
            use(s.children[0], scope, defined, path);
            std::set<std::string> then_set = defined;
            statements(s.children[1], scope, then_set, path + ".then.");
            std::set<std::string> else_set = defined;
            if (s.children.size() > 2) {
                if (s.children[2].is(Kind::If)) {
                    statement(s.children[2], scope, else_set, path + ".else");
                } else {
                    statements(s.children[2], scope, else_set, path + ".else.");
                }
            }
            std::set<std::string> both;
            std::set_intersection(then_set.begin(), then_set.end(), else_set.begin(), else_set.end(),
                                  std::inserter(both, both.begin()));
            defined = std::move(both);
            break;
        }
        case Kind::While: {
            use(s.children[0], scope, defined, path);
            std::set<std::string> body = defined;
            statements(s.children[1], scope, body, path + ".body.");
            break;
        }
        case Kind::FromLoop: {
            use(s.children[0], scope, defined, path);
            use(s.children[1], scope, defined, path);
            std::set<std::string> body = defined;
            Node var = ast::make_identifier(s.name);
            var.span = s.span;
            def(var, scope, body, path);
            statements(s.children[2], scope, body, path + ".body.");
            def(var, scope, defined, path);
            break;
        }
        case Kind::Conductance: {
            Node var = ast::make_identifier(s.name);
            var.span = s.span;
            use(var, scope, defined, path);
            break;
        }
        case Kind::LinearSolve:
        case Kind::NewtonSolve:
            for (const auto& c: s.children) {
                use(c, scope, defined, path);
            }
            for (const auto& c: s.children) {
                if (c.is(Kind::Name)) {
                    def(ast::make_identifier(c.name), scope, defined, path);
                }
            }
            break;
        case Kind::DiffEq:
        case Kind::ExprStatement:
        case Kind::Reaction:
        case Kind::Conserve:
        case Kind::LinEq:
            for (const auto& c: s.children) {
                use(c, scope, defined, path);
            }
            break;
        default:
            break;
        }
    }
};

}  // namespace

bool is_kernel_block(const Node& block) noexcept {
    switch (block.kind) {
    case Kind::InitialBlock:
    case Kind::BreakpointBlock:
    case Kind::DerivativeBlock:
    case Kind::KineticBlock:
    case Kind::LinearBlock:
    case Kind::NonLinearBlock:
        return true;
    default:
        return false;
    }
}

std::string kernel_name(const Node& block) {
    switch (block.kind) {
    case Kind::InitialBlock:
        return "INITIAL";
    case Kind::BreakpointBlock:
        return "BREAKPOINT";
    case Kind::DerivativeBlock:
        return "DERIVATIVE " + block.name;
    case Kind::KineticBlock:
        return "KINETIC " + block.name;
    case Kind::LinearBlock:
        return "LINEAR " + block.name;
    case Kind::NonLinearBlock:
        return "NONLINEAR " + block.name;
    case Kind::ProcedureBlock:
        return "PROCEDURE " + block.name;
    case Kind::FunctionBlock:
        return "FUNCTION " + block.name;
    default:
        return std::string(ast::kind_name(block.kind));
    }
}

Node ensure_tables(const Node& program, Diagnostics& diagnostics) {
    Diagnostics local;
    Node annotated = symtab::build_symbol_tables(program, local);
    for (auto& d: local) {
        if (d.severity == Severity::Error) {
            throw CompileError(d);
        }
        diagnostics.push_back(std::move(d));
    }
    return annotated;
}

Node fold_expression(const Node& expr, Diagnostics& diagnostics, int* changed) {
    return ast::transform(expr, [&](Node n) {
        if (n.is(Kind::Binary)) {
            auto a = ast::literal_value(n.children[0]);
            auto b = ast::literal_value(n.children[1]);
            if (!a || !b) {
                return n;
            }
            if (n.name == "/" && *b == 0) {
                warn(diagnostics, "division by literal zero is not folded", n.span);
                return n;
            }
            auto r = apply_binary(n.name, *a, *b);
            if (!r || !std::isfinite(*r)) {
                return n;
            }
            if (changed != nullptr) {
                ++*changed;
            }
            return literal(*r, n.span);
        }
        if (n.is(Kind::Unary)) {
            auto a = ast::literal_value(n.children[0]);
            if (!a) {
                return n;
            }
            if (n.name == "!") {
                if (changed != nullptr) {
                    ++*changed;
                }
                return literal(*a == 0 ? 1.0 : 0.0, n.span);
            }
            if (!n.children[0].is(Kind::Number)) {
                if (changed != nullptr) {
                    ++*changed;
                }
                return literal(-*a, n.span);
            }
            return n;
        }
        if (n.is(Kind::Call) && !n.children.empty() && symtab::is_builtin_function(n.name)) {
            std::vector<double> args;
            for (const auto& c: n.children) {
                auto v = ast::literal_value(c);
                if (!v) {
                    return n;
                }
                args.push_back(*v);
            }
            auto r = eval_builtin(n.name, args);
            if (!r || !std::isfinite(*r)) {
                return n;
            }
            if (changed != nullptr) {
                ++*changed;
            }
            return literal(*r, n.span);
        }
        return n;
    });
}

Node constant_fold(const Node& program, Diagnostics& diagnostics, PassReport* report) {
    Node p = ensure_tables(program, diagnostics);
    auto params = constant_parameters(p);
    int changed = 0;
    std::set<std::string> used;
    for (auto& block: p.children) {
        if (Node* body = block.body()) {
            *body = fold_block_body(*body, params, diagnostics, changed, used, block.scope.get());
        }
    }
    if (report != nullptr) {
        report->pass = "fold";
        report->nodes_changed = changed;
        report->symbols.assign(used.begin(), used.end());
    }
    return ensure_tables(p, diagnostics);
}

void fold_and_unroll_block(Node& block, const Node& program, Diagnostics& diagnostics) {
    auto params = constant_parameters(program);
    int changed = 0;
    std::set<std::string> used;
    *block.body() = fold_block_body(*block.body(), params, diagnostics, changed, used, block.scope.get());
    Unroller unroller(diagnostics, block);
    unroller.block(*block.body());
}

Node unroll_loops(const Node& program, Diagnostics& diagnostics, PassReport* report) {
    Node p = ensure_tables(program, diagnostics);
    int changed = 0;
    std::set<std::string> vars;
    for (auto& block: p.children) {
        if (Node* body = block.body()) {
            ast::traverse(*body, [&](const Node& n) {
                if (n.is(Kind::FromLoop)) {
                    vars.insert(n.name);
                }
            });
            Unroller unroller(diagnostics, block);
            unroller.block(*body);
            changed += unroller.changed;
        }
    }
    if (report != nullptr) {
        report->pass = "unroll";
        report->nodes_changed = changed;
        if (changed > 0) {
            report->symbols.assign(vars.begin(), vars.end());
        }
    }
    return ensure_tables(p, diagnostics);
}

Node inline_calls(const Node& program, Diagnostics& diagnostics, PassReport* report) {
    Node p = ensure_tables(program, diagnostics);
    if (report != nullptr) {
        report->pass = "inline";
    }
    if (contains_kind(p, Kind::Verbatim)) {
        warn(diagnostics, "VERBATIM block present: inlining disabled");
        return p;
    }
    Inliner inliner(p, diagnostics);
    inliner.run();
    // drop callables that no longer have call sites
    std::set<std::string> still_called;
    for (const auto& block: p.children) {
        ast::traverse(block, [&](const Node& n) {
            if (n.is(Kind::Call)) {
                still_called.insert(n.name);
            }
        });
    }
    std::vector<Node> kept;
    for (auto& block: p.children) {
        if (is_callable(block) && inliner.inlined_callees.count(block.name) != 0 &&
            still_called.count(block.name) == 0) {
            continue;
        }
        kept.push_back(std::move(block));
    }
    p.children = std::move(kept);
    if (report != nullptr) {
        report->nodes_changed = inliner.inlined;
        report->symbols.assign(inliner.inlined_callees.begin(), inliner.inlined_callees.end());
    }
    return ensure_tables(p, diagnostics);
}

UsageMap usage_analysis(const Node& program) {
    Diagnostics ignored;
    Node p = program.scope ? program : ensure_tables(program, ignored);
    UsageMap usage;
    for (const auto& sym: symtab::global_table(p).symbols()) {
        if (sym.properties.has(Property::ProcedureName) || sym.properties.has(Property::FunctionName)) {
            continue;
        }
        DuChain chain;
        chain.symbol = sym;
        usage.emplace(sym.name, std::move(chain));
    }
    UsageAnalyzer analyzer(usage);
    for (const auto& block: p.children) {
        if (is_kernel_block(block)) {
            analyzer.kernel(block);
        } else if (is_callable(block)) {
            analyzer.callable(block);
        }
    }
    return usage;
}

Node localize(const Node& program,
              const UsageMap& usage,
              const std::set<std::string>& observe,
              Diagnostics& diagnostics,
              PassReport* report) {
    Node p = ensure_tables(program, diagnostics);
    if (report != nullptr) {
        report->pass = "localize";
    }
    if (contains_kind(p, Kind::Verbatim)) {
        warn(diagnostics, "VERBATIM block present: localization disabled");
        return p;
    }
    const auto& global = symtab::global_table(p);
    std::vector<std::string> chosen;
    for (const auto& [name, chain]: usage) {
        const auto* sym = global.find_local(name);
        if (sym == nullptr) {
            continue;
        }
        const auto props = sym->properties;
        if (!props.has(Property::Assigned) || sym->length > 0 || symtab::is_builtin_variable(name) ||
            observe.count(name) != 0 || !chain.callables.empty() || chain.events.empty()) {
            continue;
        }
        if (props.any(Property::State | Property::Parameter | Property::Ion | Property::Current |
                      Property::Global | Property::Builtin)) {
            continue;
        }
        bool ok = std::all_of(chain.defined_before_use.begin(), chain.defined_before_use.end(),
                              [](const auto& kv) { return kv.second; });
        if (ok) {
            chosen.push_back(name);
        }
    }
    std::set<std::string> chosen_set(chosen.begin(), chosen.end());
    for (auto& block: p.children) {
        if (block.is(Kind::NeuronBlock)) {
            std::vector<Node> statements;
            for (auto& stmt: block.children) {
                if (stmt.is(Kind::Range)) {
                    auto& names = stmt.children;
                    names.erase(std::remove_if(names.begin(), names.end(),
                                               [&](const Node& n) { return chosen_set.count(n.name) != 0; }),
                                names.end());
                    if (names.empty()) {
                        continue;
                    }
                }
                statements.push_back(std::move(stmt));
            }
            block.children = std::move(statements);
        } else if (block.is(Kind::AssignedBlock)) {
            auto& decls = block.children;
            decls.erase(std::remove_if(decls.begin(), decls.end(),
                                       [&](const Node& n) { return chosen_set.count(n.name) != 0; }),
                        decls.end());
        } else if (is_kernel_block(block)) {
            std::string kernel = kernel_name(block);
            std::vector<Node> names;
            for (const auto& name: chosen) {
                if (usage.at(name).defined_before_use.count(kernel) != 0) {
                    names.emplace_back(Kind::Name, name);
                }
            }
            if (names.empty()) {
                continue;
            }
            Node* body = block.body();
            if (!body->children.empty() && body->children[0].is(Kind::LocalDecl)) {
                for (auto& n: names) {
                    body->children[0].children.push_back(std::move(n));
                }
            } else {
                body->children.insert(body->children.begin(), Node(Kind::LocalDecl, {}, std::move(names)));
            }
        }
    }
    if (report != nullptr) {
        report->nodes_changed = static_cast<int>(chosen.size());
        report->symbols = chosen;
    }
    return ensure_tables(p, diagnostics);
}

}  // namespace nmodl::passes
