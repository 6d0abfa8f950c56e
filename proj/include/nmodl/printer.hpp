/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <string>

#include "nmodl/ast.hpp"

namespace nmodl::codegen {

/// Binding strength of an expression node; larger binds tighter.
int precedence(const ast::Node& expr);

/// NMODL rendering of an expression with the minimal parentheses.
std::string print_expression(const ast::Node& expr);

/**
 * \brief Render an AST as NMODL source
 *
 * Comments and layout of the input are not kept; reparsing the output gives
 * a structurally equal tree, and printing that tree again gives the same
 * bytes. Literals keep their source spelling.
 */
std::string emit_nmodl(const ast::Node& program);

}  // namespace nmodl::codegen
