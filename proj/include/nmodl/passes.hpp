/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

/**
 * \file
 * \brief AST to AST optimization passes
 *
 * Every pass takes a program, annotates it with symbol tables if needed and
 * returns a new, annotated program. The input is never modified.
 */

#include <map>
#include <set>
#include <string>
#include <vector>

#include "nmodl/ast.hpp"
#include "nmodl/diagnostic.hpp"
#include "nmodl/symtab.hpp"

namespace nmodl::passes {

struct PassReport {
    std::string pass;
    /// Number of rewrite sites: folded expressions, unrolled loops, inlined
    /// calls or localized variables.
    int nodes_changed = 0;
    std::vector<std::string> symbols;
};

/// Top-level blocks whose bodies run as kernels.
bool is_kernel_block(const ast::Node& block) noexcept;

/// Program with symbol tables attached (re-annotates when missing).
ast::Node ensure_tables(const ast::Node& program, Diagnostics& diagnostics);

/**
 * \brief Fold literal subexpressions
 *
 * Loop bounds additionally see PARAMETERs with literal defaults that are
 * never assigned. Division by a literal zero is reported and left alone.
 */
ast::Node constant_fold(const ast::Node& program, Diagnostics& diagnostics,
                        PassReport* report = nullptr);

/// Fold literal subexpressions of one expression.
ast::Node fold_expression(const ast::Node& expr, Diagnostics& diagnostics, int* changed = nullptr);

/**
 * \brief Replace FROM loops with literal bounds by copies of their body
 *
 * The loop variable is substituted and index expressions folded. Loops with
 * non-literal bounds are reported ("cannot unroll") and kept.
 */
ast::Node unroll_loops(const ast::Node& program, Diagnostics& diagnostics,
                       PassReport* report = nullptr);

/// Fold and unroll the body of a single top-level block in place.
void fold_and_unroll_block(ast::Node& block, const ast::Node& program, Diagnostics& diagnostics);

/**
 * \brief Inline user PROCEDURE and FUNCTION calls
 *
 * Callees are inlined bottom-up over the call graph. Recursive cycles are
 * reported and their calls kept. Callables whose every call site was
 * inlined are removed. A VERBATIM block anywhere disables the pass.
 */
ast::Node inline_calls(const ast::Node& program, Diagnostics& diagnostics,
                       PassReport* report = nullptr);

struct DuEvent {
    enum class Kind { Def, Use };
    Kind kind;
    /// Kernel (top-level block) the event belongs to, e.g. "DERIVATIVE states".
    std::string kernel;
    /// Statement path inside the kernel, e.g. "2.then.0".
    std::string path;
    Span span;
};

struct DuChain {
    symtab::Symbol symbol;
    std::vector<DuEvent> events;
    /// Per kernel: true if every use is preceded by a definition on all paths.
    std::map<std::string, bool> defined_before_use;
    /// Names of remaining PROCEDUREs/FUNCTIONs that mention the symbol.
    std::set<std::string> callables;
};

using UsageMap = std::map<std::string, DuChain>;

/// Def/use chains of every global variable.
UsageMap usage_analysis(const ast::Node& program);

/// Display name of a kernel block, e.g. "BREAKPOINT" or "DERIVATIVE states".
std::string kernel_name(const ast::Node& block);

/**
 * \brief Turn RANGE/ASSIGNED variables into kernel LOCALs
 *
 * A candidate must be defined before use on all paths in every kernel that
 * mentions it, must not occur in a remaining PROCEDURE/FUNCTION and must not
 * be a STATE, PARAMETER, ion, current, GLOBAL or observed variable.
 */
ast::Node localize(const ast::Node& program,
                   const UsageMap& usage,
                   const std::set<std::string>& observe,
                   Diagnostics& diagnostics,
                   PassReport* report = nullptr);

}  // namespace nmodl::passes
