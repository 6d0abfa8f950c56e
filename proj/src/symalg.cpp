/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include "nmodl/symalg.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include <fmt/format.h>

#include "nmodl/parser.hpp"

namespace nmodl::symalg {

namespace {

constexpr const char* builtin_calls[] = {"exp", "expm1", "log", "sqrt", "fabs"};

bool is_builtin(const std::string& name) {
    return std::find(std::begin(builtin_calls), std::end(builtin_calls), name) !=
           std::end(builtin_calls);
}

bool is_integer(double v) {
    return std::isfinite(v) && std::trunc(v) == v;
}

SymExpr make(Op op, double value, std::string name, std::vector<SymExpr> args) {
    auto e = std::make_shared<Expr>();
    e->op = op;
    e->value = value;
    e->name = std::move(name);
    e->size = 1;
    for (const auto& a: args) {
        e->size += a->size;
    }
    e->args = std::move(args);
    return e;
}

void sort_args(std::vector<SymExpr>& args) {
    std::stable_sort(args.begin(), args.end(), Less{});
}

/// Exponent k of a Power rendered as |k| repeated multiplications, else 0.
int repeated_power(const SymExpr& e) {
    if (!e->is(Op::Power) || !e->args[1]->is(Op::Constant)) {
        return 0;
    }
    double k = std::fabs(e->args[1]->value);
    return is_integer(k) && k >= 2 && k <= 4 ? static_cast<int>(k) : 0;
}

void check_size(const SymExpr& e, const char* what) {
    if (e->size > max_expression_size) {
        throw CompileError(fmt::format("expression too large in {} ({} nodes, limit {})",
                                       what,
                                       e->size,
                                       max_expression_size));
    }
}

SymExpr rebuild(const SymExpr& e, std::vector<SymExpr> args) {
    switch (e->op) {
    case Op::Power:
        return power(args[0], args[1]);
    case Op::Product:
        return product(std::move(args));
    case Op::Sum:
        return sum(std::move(args));
    case Op::Call:
        return call(e->name, std::move(args));
    default:
        return e;
    }
}

}  // namespace

// ------------------------------------------------------------ construction

SymExpr constant(double value) {
    if (!std::isfinite(value)) {
        throw CompileError(fmt::format("non-finite constant {}", value));
    }
    if (value == 0) {
        value = 0;  // drop the sign of -0
    }
    return make(Op::Constant, value, {}, {});
}

SymExpr variable(const std::string& name) {
    return make(Op::Variable, 0, name, {});
}

SymExpr sum(std::vector<SymExpr> terms) {
    std::vector<SymExpr> flat;
    for (auto& t: terms) {
        if (t->is(Op::Sum)) {
            flat.insert(flat.end(), t->args.begin(), t->args.end());
        } else {
            flat.push_back(std::move(t));
        }
    }
    double c = 0;
    std::vector<std::pair<SymExpr, double>> groups;
    for (const auto& t: flat) {
        if (t->is(Op::Constant)) {
            c += t->value;
            continue;
        }
        SymExpr rest = t;
        double coefficient = 1;
        if (t->is(Op::Product) && t->args[0]->is(Op::Constant)) {
            coefficient = t->args[0]->value;
            rest = product(std::vector<SymExpr>(t->args.begin() + 1, t->args.end()));
        }
        auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) {
            return equal(g.first, rest);
        });
        if (it == groups.end()) {
            groups.emplace_back(rest, coefficient);
        } else {
            it->second += coefficient;
        }
    }
    std::vector<SymExpr> out;
    for (const auto& [rest, coefficient]: groups) {
        if (coefficient == 0) {
            continue;
        }
        out.push_back(coefficient == 1 ? rest : product({constant(coefficient), rest}));
    }
    if (c != 0 || out.empty()) {
        out.push_back(constant(c));
    }
    if (out.size() == 1) {
        return out[0];
    }
    sort_args(out);
    return make(Op::Sum, 0, {}, std::move(out));
}

SymExpr product(std::vector<SymExpr> factors) {
    std::vector<SymExpr> flat;
    for (auto& f: factors) {
        if (f->is(Op::Product)) {
            flat.insert(flat.end(), f->args.begin(), f->args.end());
        } else {
            flat.push_back(std::move(f));
        }
    }
    double c = 1;
    std::vector<std::pair<SymExpr, std::vector<SymExpr>>> groups;
    for (const auto& f: flat) {
        if (f->is(Op::Constant)) {
            c *= f->value;
            continue;
        }
        SymExpr base = f;
        SymExpr exponent = constant(1);
        if (f->is(Op::Power)) {
            base = f->args[0];
            exponent = f->args[1];
        }
        auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) {
            return equal(g.first, base);
        });
        if (it == groups.end()) {
            groups.push_back({base, {exponent}});
        } else {
            it->second.push_back(exponent);
        }
    }
    if (c == 0) {
        return constant(0);
    }
    std::vector<SymExpr> out;
    bool renormalize = false;
    for (auto& [base, exponents]: groups) {
        SymExpr p = exponents.size() == 1 ? power(base, exponents[0]) : power(base, sum(exponents));
        if (p->is(Op::Constant)) {
            c *= p->value;
        } else {
            renormalize = renormalize || p->is(Op::Product);
            out.push_back(std::move(p));
        }
    }
    if (!std::isfinite(c)) {
        throw CompileError("constant overflow in product");
    }
    if (renormalize) {
        out.push_back(constant(c));
        return product(std::move(out));
    }
    if (c == 0) {
        return constant(0);
    }
    if (c != 1 || out.empty()) {
        out.push_back(constant(c));
    }
    if (out.size() == 1) {
        return out[0];
    }
    sort_args(out);
    return make(Op::Product, 0, {}, std::move(out));
}

SymExpr power(SymExpr base, SymExpr exponent) {
    if (exponent->is(Op::Constant)) {
        double e = exponent->value;
        if (e == 0) {
            return constant(1);
        }
        if (e == 1) {
            return base;
        }
        if (base->is(Op::Constant)) {
            double b = base->value;
            double r = std::pow(b, e);
            if (std::isfinite(r) && (b > 0 || is_integer(e))) {
                return constant(r);
            }
        }
        if (is_integer(e) && base->is(Op::Power)) {
            return power(base->args[0], product({base->args[1], exponent}));
        }
        if (is_integer(e) && base->is(Op::Product)) {
            std::vector<SymExpr> factors;
            for (const auto& f: base->args) {
                factors.push_back(power(f, exponent));
            }
            return product(std::move(factors));
        }
    }
    if (base->is_constant(1)) {
        return constant(1);
    }
    if (base->is_constant(0) && exponent->is(Op::Constant) && exponent->value > 0) {
        return constant(0);
    }
    return make(Op::Power, 0, {}, {std::move(base), std::move(exponent)});
}

SymExpr call(const std::string& name, std::vector<SymExpr> args) {
    bool all_constant = std::all_of(args.begin(), args.end(), [](const SymExpr& a) {
        return a->is(Op::Constant);
    });
    if (all_constant && args.size() == 1 && is_builtin(name)) {
        double x = args[0]->value;
        double r = name == "exp"      ? std::exp(x)
                   : name == "expm1" ? std::expm1(x)
                   : name == "log"  ? std::log(x)
                   : name == "sqrt" ? std::sqrt(x)
                                    : std::fabs(x);
        if (std::isfinite(r)) {
            return constant(r);
        }
    }
    return make(Op::Call, 0, name, std::move(args));
}

SymExpr operator+(const SymExpr& a, const SymExpr& b) {
    return sum({a, b});
}

SymExpr operator-(const SymExpr& a, const SymExpr& b) {
    return sum({a, product({constant(-1), b})});
}

SymExpr operator*(const SymExpr& a, const SymExpr& b) {
    return product({a, b});
}

SymExpr operator/(const SymExpr& a, const SymExpr& b) {
    return product({a, power(b, constant(-1))});
}

SymExpr operator-(const SymExpr& a) {
    return product({constant(-1), a});
}

// ---------------------------------------------------------------- queries

int compare(const SymExpr& a, const SymExpr& b) {
    if (a.get() == b.get()) {
        return 0;
    }
    if (a->op != b->op) {
        return static_cast<int>(a->op) < static_cast<int>(b->op) ? -1 : 1;
    }
    switch (a->op) {
    case Op::Constant:
        return a->value < b->value ? -1 : (a->value > b->value ? 1 : 0);
    case Op::Variable:
        return a->name.compare(b->name) < 0 ? -1 : (a->name == b->name ? 0 : 1);
    case Op::Call:
        if (a->name != b->name) {
            return a->name < b->name ? -1 : 1;
        }
        [[fallthrough]];
    default: {
        std::size_t n = std::min(a->args.size(), b->args.size());
        for (std::size_t i = 0; i < n; ++i) {
            if (int c = compare(a->args[i], b->args[i])) {
                return c;
            }
        }
        if (a->args.size() != b->args.size()) {
            return a->args.size() < b->args.size() ? -1 : 1;
        }
        return 0;
    }
    }
}

bool equal(const SymExpr& a, const SymExpr& b) {
    return compare(a, b) == 0;
}

bool depends_on(const SymExpr& e, const std::string& name) {
    if (e->is(Op::Variable)) {
        return e->name == name;
    }
    return std::any_of(e->args.begin(), e->args.end(), [&](const SymExpr& a) {
        return depends_on(a, name);
    });
}

std::set<std::string> free_variables(const SymExpr& e) {
    std::set<std::string> names;
    std::function<void(const SymExpr&)> visit = [&](const SymExpr& x) {
        if (x->is(Op::Variable)) {
            names.insert(x->name);
        }
        for (const auto& a: x->args) {
            visit(a);
        }
    };
    visit(e);
    return names;
}

std::string to_string(const SymExpr& e) {
    auto join = [](const std::vector<SymExpr>& args) {
        std::string s;
        for (const auto& a: args) {
            s += (s.empty() ? "" : ", ") + to_string(a);
        }
        return s;
    };
    switch (e->op) {
    case Op::Constant:
        return ast::format_number(e->value);
    case Op::Variable:
        return e->name;
    case Op::Power:
        return "Power(" + to_string(e->args[0]) + "," + to_string(e->args[1]) + ")";
    case Op::Product:
        return "Product[" + join(e->args) + "]";
    case Op::Sum:
        return "Sum[" + join(e->args) + "]";
    case Op::Call:
        return e->name + "(" + join(e->args) + ")";
    }
    return {};
}

double evaluate(const SymExpr& e, const std::map<std::string, double>& env) {
    switch (e->op) {
    case Op::Constant:
        return e->value;
    case Op::Variable: {
        auto it = env.find(e->name);
        if (it == env.end()) {
            throw CompileError(fmt::format("unbound variable '{}'", e->name));
        }
        return it->second;
    }
    case Op::Power:
        return std::pow(evaluate(e->args[0], env), evaluate(e->args[1], env));
    case Op::Product: {
        double r = 1;
        for (const auto& a: e->args) {
            r *= evaluate(a, env);
        }
        return r;
    }
    case Op::Sum: {
        double r = 0;
        for (const auto& a: e->args) {
            r += evaluate(a, env);
        }
        return r;
    }
    case Op::Call: {
        if (!is_builtin(e->name) || e->args.size() != 1) {
            throw CompileError(fmt::format("cannot evaluate call to '{}'", e->name));
        }
        double x = evaluate(e->args[0], env);
        if (e->name == "exp") {
            return std::exp(x);
        }
        if (e->name == "expm1") {
            return std::expm1(x);
        }
        if (e->name == "log") {
            return std::log(x);
        }
        if (e->name == "sqrt") {
            return std::sqrt(x);
        }
        return std::fabs(x);
    }
    }
    return 0;
}

SymExpr substitute(const SymExpr& e, const std::map<std::string, SymExpr>& bindings) {
    if (e->is(Op::Variable)) {
        auto it = bindings.find(e->name);
        return it == bindings.end() ? e : it->second;
    }
    if (e->args.empty()) {
        return e;
    }
    std::vector<SymExpr> args;
    args.reserve(e->args.size());
    for (const auto& a: e->args) {
        args.push_back(substitute(a, bindings));
    }
    return rebuild(e, std::move(args));
}

// ------------------------------------------------------- AST conversion

SymExpr from_ast(const ast::Node& expr, const ConversionOptions& options) {
    using ast::Kind;
    auto sub = [&](std::size_t i) { return from_ast(expr.children.at(i), options); };
    switch (expr.kind) {
    case Kind::Number:
        return constant(expr.value);
    case Kind::Identifier:
        return variable(expr.name);
    case Kind::Indexed:
        if (!ast::literal_value(expr.children[0])) {
            throw CompileError(fmt::format("non-constant index of '{}'", expr.name), expr.span);
        }
        return variable(ast::variable_text(expr));
    case Kind::Unary:
        if (expr.name == "-") {
            if (auto v = ast::literal_value(expr)) {
                return constant(*v);
            }
            return product({constant(-1), sub(0)});
        }
        break;
    case Kind::Binary: {
        const std::string& op = expr.name;
        if (op == "+") {
            return sum({sub(0), sub(1)});
        }
        if (op == "-") {
            return sum({sub(0), product({constant(-1), sub(1)})});
        }
        if (op == "*") {
            return product({sub(0), sub(1)});
        }
        if (op == "/") {
            return product({sub(0), power(sub(1), constant(-1))});
        }
        if (op == "^") {
            return power(sub(0), sub(1));
        }
        throw CompileError(fmt::format("unsupported operator '{}' in algebraic expression", op),
                           expr.span);
    }
    case Kind::Call: {
        std::vector<SymExpr> args;
        for (std::size_t i = 0; i < expr.children.size(); ++i) {
            args.push_back(sub(i));
        }
        if (expr.name == "pow" && args.size() == 2) {
            return power(args[0], args[1]);
        }
        if (is_builtin(expr.name) && args.size() == 1) {
            return call(expr.name, std::move(args));
        }
        if (options.opaque_functions.count(expr.name) != 0) {
            return make(Op::Call, 0, expr.name, std::move(args));
        }
        throw CompileError(fmt::format("unsupported function {}", expr.name), expr.span);
    }
    default:
        break;
    }
    throw CompileError(fmt::format("unsupported {} in algebraic expression", ast::kind_name(expr.kind)),
                       expr.span);
}

namespace {

ast::Node variable_ast(const std::string& name) {
    if (name.find('[') != std::string::npos) {
        return parser::parse_expression(name);
    }
    return ast::make_identifier(name);
}

ast::Node multiply_chain(std::vector<ast::Node> factors) {
    ast::Node acc = std::move(factors[0]);
    for (std::size_t i = 1; i < factors.size(); ++i) {
        acc = ast::make_binary("*", std::move(acc), std::move(factors[i]));
    }
    return acc;
}

ast::Node positive_power_ast(const SymExpr& base, const SymExpr& exponent) {
    if (exponent->is_constant(1)) {
        return to_ast(base);
    }
    if (exponent->is(Op::Constant) && is_integer(exponent->value) && exponent->value >= 2 &&
        exponent->value <= 4) {
        std::vector<ast::Node> factors(static_cast<std::size_t>(exponent->value), to_ast(base));
        return multiply_chain(std::move(factors));
    }
    return ast::make_binary("^", to_ast(base), to_ast(exponent));
}

bool negative_denominator(const SymExpr& f) {
    return f->is(Op::Power) && f->args[1]->is(Op::Constant) && f->args[1]->value < 0;
}

ast::Node product_ast(const SymExpr& e) {
    double c = 1;
    std::vector<ast::Node> num;
    std::vector<ast::Node> den;
    for (const auto& f: e->args) {
        if (f->is(Op::Constant)) {
            c = f->value;
        } else if (negative_denominator(f)) {
            den.push_back(positive_power_ast(f->args[0], constant(-f->args[1]->value)));
        } else {
            num.push_back(to_ast(f));
        }
    }
    if (std::fabs(c) != 1 || num.empty()) {
        num.insert(num.begin(), ast::make_constant(c));
    } else if (c < 0) {
        num[0] = ast::make_unary("-", std::move(num[0]));
    }
    ast::Node node = multiply_chain(std::move(num));
    if (!den.empty()) {
        node = ast::make_binary("/", std::move(node), multiply_chain(std::move(den)));
    }
    return node;
}

bool negative_term(const SymExpr& t) {
    if (t->is(Op::Constant)) {
        return t->value < 0;
    }
    return t->is(Op::Product) && t->args[0]->is(Op::Constant) && t->args[0]->value < 0;
}

}  // namespace

ast::Node to_ast(const SymExpr& e) {
    switch (e->op) {
    case Op::Constant:
        return ast::make_constant(e->value);
    case Op::Variable:
        return variable_ast(e->name);
    case Op::Call: {
        std::vector<ast::Node> args;
        for (const auto& a: e->args) {
            args.push_back(to_ast(a));
        }
        return ast::make_call(e->name, std::move(args));
    }
    case Op::Power:
        if (negative_denominator(e)) {
            return ast::make_binary("/",
                                    ast::make_number(1),
                                    positive_power_ast(e->args[0], constant(-e->args[1]->value)));
        }
        return positive_power_ast(e->args[0], e->args[1]);
    case Op::Product:
        return product_ast(e);
    case Op::Sum: {
        ast::Node acc = to_ast(e->args[0]);
        for (std::size_t i = 1; i < e->args.size(); ++i) {
            const SymExpr& t = e->args[i];
            if (negative_term(t)) {
                acc = ast::make_binary("-", std::move(acc), to_ast(-t));
            } else {
                acc = ast::make_binary("+", std::move(acc), to_ast(t));
            }
        }
        return acc;
    }
    }
    return {};
}

// -------------------------------------------------------------- algebra

SymExpr simplify(const SymExpr& e) {
    check_size(e, "simplify");
    if (e->args.empty()) {
        return e;
    }
    std::vector<SymExpr> args;
    for (const auto& a: e->args) {
        args.push_back(simplify(a));
    }
    SymExpr r = rebuild(e, std::move(args));
    check_size(r, "simplify");
    return r;
}

namespace {

SymExpr derive(const SymExpr& e, const std::string& x, const ConversionOptions& options) {
    if (!depends_on(e, x)) {
        return constant(0);
    }
    switch (e->op) {
    case Op::Constant:
        return constant(0);
    case Op::Variable:
        return constant(1);
    case Op::Sum: {
        std::vector<SymExpr> terms;
        for (const auto& t: e->args) {
            terms.push_back(derive(t, x, options));
        }
        return sum(std::move(terms));
    }
    case Op::Product: {
        std::vector<SymExpr> terms;
        for (std::size_t i = 0; i < e->args.size(); ++i) {
            if (!depends_on(e->args[i], x)) {
                continue;
            }
            std::vector<SymExpr> factors;
            for (std::size_t j = 0; j < e->args.size(); ++j) {
                factors.push_back(i == j ? derive(e->args[j], x, options) : e->args[j]);
            }
            terms.push_back(product(std::move(factors)));
        }
        return sum(std::move(terms));
    }
    case Op::Power: {
        const SymExpr& b = e->args[0];
        const SymExpr& p = e->args[1];
        bool base_varies = depends_on(b, x);
        bool exponent_varies = depends_on(p, x);
        if (!exponent_varies) {
            // p * b^(p-1) * b'
            return product({p, power(b, sum({p, constant(-1)})), derive(b, x, options)});
        }
        if (!base_varies) {
            return product({e, call("log", {b}), derive(p, x, options)});
        }
        // d(b^p) = b^p * (p' log b + p b'/b)
        return product({e,
                        sum({product({derive(p, x, options), call("log", {b})}),
                             product({p, derive(b, x, options), power(b, constant(-1))})})});
    }
    case Op::Call: {
        if (e->name == "fabs") {
            throw CompileError("fabs is non-differentiable");
        }
        if (!is_builtin(e->name)) {
            throw CompileError(fmt::format("cannot differentiate call to '{}'", e->name));
        }
        const SymExpr& u = e->args[0];
        SymExpr du = derive(u, x, options);
        if (e->name == "exp") {
            return product({e, du});
        }
        if (e->name == "expm1") {
            return product({call("exp", {u}), du});
        }
        if (e->name == "log") {
            return product({du, power(u, constant(-1))});
        }
        // sqrt
        return product({du, power(product({constant(2), e}), constant(-1))});
    }
    }
    return constant(0);
}

}  // namespace

SymExpr differentiate(const SymExpr& e, const std::string& wrt, const ConversionOptions& options) {
    check_size(e, "differentiate");
    SymExpr d = derive(e, wrt, options);
    check_size(d, "differentiate");
    return simplify(d);
}

std::vector<SymExpr> solve_linear_symbolic(const LinearSystem& system) {
    std::size_t n = system.unknowns.size();
    if (system.A.size() != n || system.b.size() != n) {
        throw CompileError("linear system dimensions do not agree");
    }
    auto A = system.A;
    auto b = system.b;
    for (const auto& row: A) {
        if (row.size() != n) {
            throw CompileError("linear system dimensions do not agree");
        }
    }
    std::vector<std::size_t> perm(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t pivot = n;
        for (std::size_t i = k; i < n; ++i) {
            if (A[i][k]->is(Op::Constant) && A[i][k]->value != 0) {
                pivot = i;
                break;
            }
        }
        if (pivot == n) {
            for (std::size_t i = k; i < n; ++i) {
                if (!A[i][k]->is_constant(0)) {
                    pivot = i;
                    break;
                }
            }
        }
        if (pivot == n) {
            throw CompileError(fmt::format("singular system (no pivot for '{}')", system.unknowns[k]));
        }
        std::swap(A[k], A[pivot]);
        std::swap(b[k], b[pivot]);
        for (std::size_t i = k + 1; i < n; ++i) {
            if (A[i][k]->is_constant(0)) {
                continue;
            }
            SymExpr factor = A[i][k] / A[k][k];
            for (std::size_t j = k; j < n; ++j) {
                A[i][j] = j == k ? constant(0) : A[i][j] - factor * A[k][j];
            }
            b[i] = b[i] - factor * b[k];
        }
    }
    std::vector<SymExpr> x(n);
    for (std::size_t k = n; k-- > 0;) {
        std::vector<SymExpr> terms{b[k]};
        for (std::size_t j = k + 1; j < n; ++j) {
            terms.push_back(-(A[k][j] * x[j]));
        }
        x[k] = simplify(sum(std::move(terms)) / A[k][k]);
        check_size(x[k], "solve_linear_symbolic");
    }
    return x;
}

LinearSystem linear_system_from_residuals(const std::vector<SymExpr>& residuals,
                                          const std::vector<std::string>& unknowns) {
    LinearSystem system;
    system.unknowns = unknowns;
    std::map<std::string, SymExpr> zero;
    for (const auto& u: unknowns) {
        zero[u] = constant(0);
    }
    for (const auto& f: residuals) {
        std::vector<SymExpr> row;
        for (const auto& u: unknowns) {
            SymExpr a = differentiate(f, u);
            for (const auto& w: unknowns) {
                if (depends_on(a, w)) {
                    throw CompileError(fmt::format("equation is not linear in '{}'", w));
                }
            }
            row.push_back(a);
        }
        system.A.push_back(std::move(row));
        system.b.push_back(-substitute(f, zero));
    }
    return system;
}

CseResult cse(const std::vector<SymExpr>& exprs,
              const std::string& prefix,
              int first_index,
              const std::set<std::string>& reserved) {
    std::map<SymExpr, int, Less> counts;
    std::vector<SymExpr> order;
    std::function<void(const SymExpr&, int)> count = [&](const SymExpr& e, int times) {
        if (e->args.empty()) {
            return;
        }
        int repeat = repeated_power(e);
        for (std::size_t i = 0; i < e->args.size(); ++i) {
            count(e->args[i], i == 0 && repeat > 0 ? repeat : 1);
        }
        if (e->is(Op::Power) && e->args[1]->is(Op::Constant) && e->args[1]->value < 0) {
            return;  // x / y must stay a division; the base y can still be bound
        }
        auto [it, inserted] = counts.emplace(e, 0);
        it->second += times;
        if (inserted) {
            order.push_back(e);
        }
    };
    for (const auto& e: exprs) {
        count(e, 1);
    }

    CseResult result;
    std::map<SymExpr, SymExpr, Less> names;
    int index = first_index;
    for (const auto& e: order) {
        if (counts[e] < 2) {
            continue;
        }
        std::string name;
        do {
            name = prefix + std::to_string(index++);
        } while (reserved.count(name) != 0);
        names.emplace(e, variable(name));
    }

    std::map<SymExpr, SymExpr, Less> memo;
    std::function<SymExpr(const SymExpr&)> rewrite = [&](const SymExpr& e) -> SymExpr {
        if (e->args.empty()) {
            return e;
        }
        auto found = names.find(e);
        if (found != names.end() && memo.count(e) != 0) {
            return found->second;
        }
        std::vector<SymExpr> args;
        for (const auto& a: e->args) {
            args.push_back(rewrite(a));
        }
        // operand order is kept so that the bound form rounds like the original
        auto copy = std::make_shared<Expr>(*e);
        copy->size = 1;
        for (const auto& a: args) {
            copy->size += a->size;
        }
        copy->args = std::move(args);
        SymExpr r = copy;
        if (found != names.end()) {
            memo.emplace(e, r);
            result.bindings.emplace_back(found->second->name, r);
            return found->second;
        }
        return r;
    };
    for (const auto& e: exprs) {
        result.rewritten.push_back(rewrite(e));
    }
    std::sort(result.bindings.begin(), result.bindings.end(), [&](const auto& a, const auto& b) {
        auto number = [&](const std::string& s) { return std::stoi(s.substr(prefix.size())); };
        return number(a.first) < number(b.first);
    });
    return result;
}

}  // namespace nmodl::symalg
