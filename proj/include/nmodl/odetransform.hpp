/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

/**
 * \file
 * \brief Lowering of SOLVE blocks to explicit updates and solver nodes
 *
 * KINETIC schemes become DERIVATIVE blocks by mass action. DERIVATIVE
 * blocks are then solved according to their METHOD:
 *
 *  - cnexp: closed-form update of independent linear equations
 *  - sparse: implicit Euler, symbolic elimination for up to three unknowns,
 *    a LINEAR solver node otherwise
 *  - derivimplicit: implicit Euler with a NONLINEAR (Newton) solver node
 *
 * LINEAR and NONLINEAR blocks are lowered the same way. After lowering the
 * SOLVE statement no longer carries a METHOD.
 */

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nmodl/ast.hpp"
#include "nmodl/diagnostic.hpp"
#include "nmodl/symalg.hpp"
#include "nmodl/symtab.hpp"

namespace nmodl::ode {

enum class Method { Cnexp, Sparse, Derivimplicit };

std::optional<Method> parse_method(std::string_view name);

struct ConserveLaw {
    /// lhs - rhs of the CONSERVE statement.
    symalg::SymExpr residual;
    std::vector<std::string> species;
};

struct OdeSystem {
    std::vector<std::string> states;
    std::vector<symalg::SymExpr> derivatives;
    std::vector<ConserveLaw> conserve;
};

/// y' = a + b*y
struct CnexpTerm {
    std::string state;
    symalg::SymExpr a;
    symalg::SymExpr b;
};

struct Plan {
    Method method = Method::Cnexp;
    std::vector<CnexpTerm> cnexp;
};

struct LoweringOptions {
    bool pade = false;
    bool solver_cse = true;
    /// Largest linear system eliminated symbolically.
    std::size_t symbolic_limit = 3;
};

/// Statements produced by a lowering step plus the LOCALs they need.
struct Lowered {
    std::vector<std::string> locals;
    std::vector<ast::Node> statements;
};

struct ImplicitSystem {
    std::vector<std::string> unknowns;
    std::vector<symalg::SymExpr> residuals;
    /// (state, local holding the value at the start of the step)
    std::vector<std::pair<std::string, std::string>> old_values;
};

/// Functions kept opaque by the algebra engine: user FUNCTIONs and
/// builtins without algebraic rules.
symalg::ConversionOptions conversion_options(const ast::Node& program);

/// Mass-action lowering of a (folded, unrolled) KINETIC block.
ast::Node kinetic_to_derivative(const ast::Node& kinetic,
                                const symtab::SymbolTable& global,
                                const symalg::ConversionOptions& options = {});

/**
 * \brief ODE system of a DERIVATIVE block
 *
 * Straight-line assignments whose value depends on a state are substituted
 * into the right-hand sides. Equations inside control flow are rejected.
 */
OdeSystem ode_system(const ast::Node& block,
                     const symtab::SymbolTable& global,
                     const symalg::ConversionOptions& options = {});

/// Checks that `method` can solve `ode`; throws CompileError otherwise.
Plan classify(const OdeSystem& ode, Method method, const symalg::ConversionOptions& options = {});

/// y = y*exp(b*dt) + (a/b)*expm1(b*dt); with the Pade approximant
/// y = -a/b + (y + a/b)*E(b*dt). y = y + dt*a when b is zero.
Lowered solve_cnexp(const CnexpTerm& term, bool pade);

/// F_i = X_i - X_i_old - dt*f_i(X), CONSERVE laws replacing one equation each.
ImplicitSystem implicit_euler_system(const OdeSystem& ode, const std::set<std::string>& taken = {});

/**
 * \brief Linear residual system to updates
 *
 * Up to `symbolic_limit` unknowns are eliminated at compile time (with CSE
 * temporaries named tmp_<k> when enabled); larger systems become a LINEAR
 * solver node. `tmp_counter` numbers temporaries across blocks.
 */
Lowered lower_sparse(const ImplicitSystem& system,
                     const LoweringOptions& options,
                     const std::set<std::string>& taken,
                     int& tmp_counter,
                     const symalg::ConversionOptions& conversion = {});

/// Residual system to a NONLINEAR (Newton) solver node.
Lowered lower_derivimplicit(const ImplicitSystem& system, const symalg::ConversionOptions& conversion = {});

/// Residuals and exact Jacobian of a LINEAR/NONLINEAR solver node.
struct SolverSystem {
    std::vector<std::string> unknowns;
    std::vector<symalg::SymExpr> residuals;
    std::vector<std::vector<symalg::SymExpr>> jacobian;
};

SolverSystem solver_system(const ast::Node& solver, const symalg::ConversionOptions& options = {});

/**
 * \brief Conductance of ohmic currents
 *
 * For every current assigned once at the top level of BREAKPOINT whose
 * derivative with respect to v is free of v, adds a LOCAL g_<ion>_auto, its
 * assignment and a CONDUCTANCE statement. Currents with a user CONDUCTANCE
 * are left alone.
 */
ast::Node derive_conductance(const ast::Node& program, Diagnostics& diagnostics);

/// Lowers every SOLVE of the BREAKPOINT block.
ast::Node lower(const ast::Node& program, const LoweringOptions& options, Diagnostics& diagnostics);

/// State names in declaration order, array states expanded to x[0], x[1], ...
std::vector<std::string> state_names(const symtab::SymbolTable& global);

/// Identifier or indexed reference for a flat name such as "x[2]".
ast::Node variable_node(const std::string& name);

}  // namespace nmodl::ode
