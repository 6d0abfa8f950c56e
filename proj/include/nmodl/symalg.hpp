/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

/**
 * \file
 * \brief Small computer-algebra engine
 *
 * Expressions are immutable and shared. Every constructor returns the
 * canonical form: sums and products are flattened and sorted by a fixed
 * total order, constants are folded, like terms and equal bases are merged.
 * Division is a Power with exponent -1, subtraction a Product with -1.
 */

#include <cstddef>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "nmodl/ast.hpp"

namespace nmodl::symalg {

enum class Op { Constant, Variable, Power, Product, Sum, Call };

class Expr;
using SymExpr = std::shared_ptr<const Expr>;

class Expr {
  public:
    Op op;
    double value = 0.0;
    std::string name;
    std::vector<SymExpr> args;
    /// Number of nodes in the expression tree.
    std::size_t size = 1;

    bool is(Op o) const noexcept {
        return op == o;
    }
    bool is_constant(double v) const noexcept {
        return op == Op::Constant && value == v;
    }
};

/// Upper bound on tree size accepted by simplify and differentiate.
constexpr std::size_t max_expression_size = 100000;

// ------------------------------------------------------------ construction

SymExpr constant(double value);
SymExpr variable(const std::string& name);
SymExpr sum(std::vector<SymExpr> terms);
SymExpr product(std::vector<SymExpr> factors);
SymExpr power(SymExpr base, SymExpr exponent);
SymExpr call(const std::string& name, std::vector<SymExpr> args);

SymExpr operator+(const SymExpr& a, const SymExpr& b);
SymExpr operator-(const SymExpr& a, const SymExpr& b);
SymExpr operator*(const SymExpr& a, const SymExpr& b);
SymExpr operator/(const SymExpr& a, const SymExpr& b);
SymExpr operator-(const SymExpr& a);

// ---------------------------------------------------------------- queries

/// Fixed total order: Constant < Variable < Power < Product < Sum < Call,
/// then recursively by payload and arguments.
int compare(const SymExpr& a, const SymExpr& b);
bool equal(const SymExpr& a, const SymExpr& b);

struct Less {
    bool operator()(const SymExpr& a, const SymExpr& b) const {
        return compare(a, b) < 0;
    }
};

bool depends_on(const SymExpr& e, const std::string& name);
std::set<std::string> free_variables(const SymExpr& e);

/// e.g. "Product[Power(mtau,-1), Sum[10, v]]"
std::string to_string(const SymExpr& e);

/// Numeric value with variables taken from `env`; throws for unbound names.
double evaluate(const SymExpr& e, const std::map<std::string, double>& env);

/// Replace variables by expressions.
SymExpr substitute(const SymExpr& e, const std::map<std::string, SymExpr>& bindings);

// ------------------------------------------------------- AST conversion

struct ConversionOptions {
    /// Functions kept as opaque calls (user FUNCTIONs).
    std::set<std::string> opaque_functions;
};

/**
 * \brief Expression AST to SymExpr
 *
 * Supported builtins are exp, expm1, log, pow (mapped to Power), sqrt and fabs.
 * Indexed names with literal indices become variables such as "x[2]".
 * Throws CompileError "unsupported function NAME" otherwise.
 */
SymExpr from_ast(const ast::Node& expr, const ConversionOptions& options = {});

/// SymExpr to expression AST; small integer powers become repeated products.
ast::Node to_ast(const SymExpr& e);

// -------------------------------------------------------------- algebra

/// Rebuilds the expression through the canonical constructors.
SymExpr simplify(const SymExpr& e);

/// Exact derivative with respect to variable `wrt`, simplified.
SymExpr differentiate(const SymExpr& e, const std::string& wrt,
                      const ConversionOptions& options = {});

struct LinearSystem {
    std::vector<std::vector<SymExpr>> A;
    std::vector<SymExpr> b;
    std::vector<std::string> unknowns;
};

/// Gaussian elimination preferring constant pivots; throws "singular system".
std::vector<SymExpr> solve_linear_symbolic(const LinearSystem& system);

/// Linear system A x = b from residuals F(x) = 0 that are affine in x.
LinearSystem linear_system_from_residuals(const std::vector<SymExpr>& residuals,
                                          const std::vector<std::string>& unknowns);

struct CseResult {
    std::vector<std::pair<std::string, SymExpr>> bindings;
    std::vector<SymExpr> rewritten;
};

/**
 * \brief Common subexpression elimination
 *
 * Every composite subexpression occurring at least twice is bound to a
 * fresh name `<prefix><n>`, numbered by first occurrence in post-order, so
 * the bindings are topologically ordered. Names in `reserved` are skipped.
 */
CseResult cse(const std::vector<SymExpr>& exprs,
              const std::string& prefix = "tmp_",
              int first_index = 0,
              const std::set<std::string>& reserved = {});

}  // namespace nmodl::symalg
