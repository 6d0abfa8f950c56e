/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <string>
#include <string_view>

#include "nmodl/ast.hpp"
#include "nmodl/lexer.hpp"

namespace nmodl::parser {

/**
 * \brief Build the AST for a token stream
 *
 * The first syntax error aborts with a CompileError; there is no recovery.
 * Constructs outside the supported subset are reported as
 * "unsupported construct KEYWORD".
 */
ast::Node parse(const TokenStream& tokens);

/// tokenize + parse
ast::Node parse_source(std::string_view source);

/// Parse a single expression (used for index expressions and tests).
ast::Node parse_expression(std::string_view source);

/// Read a file and parse it. Throws CompileError with the IO problem.
ast::Node parse_file(const std::string& path);

/// Read a whole file; throws CompileError when it cannot be opened.
std::string read_file(const std::string& path);

}  // namespace nmodl::parser
