/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

/**
 * \file
 * \brief C-like kernel emission
 *
 * The scalar backend renders each kernel as a plain loop over instances.
 * The SIMD backend renders the same bodies in an SPMD dialect: `foreach`
 * loops, `export` entry points and `atomic { ... }` around updates of shared
 * accumulators. Everything else is the same text.
 */

#include <string>
#include <string_view>

#include "nmodl/ast.hpp"
#include "nmodl/diagnostic.hpp"
#include "nmodl/layout.hpp"

namespace nmodl::codegen {

enum class Backend { Scalar, Simd, Nmodl };

std::string_view backend_name(Backend backend) noexcept;

struct EmittedUnit {
    Backend backend = Backend::Scalar;
    std::string file_name;
    std::string text;
};

/// `program` must be lowered; `layout` built from it.
EmittedUnit emit_scalar(const ast::Node& program, const MechanismLayout& layout);

/// Falls back to the scalar text (with a warning) when VERBATIM is present.
EmittedUnit emit_simd(const ast::Node& program, const MechanismLayout& layout, Diagnostics& diagnostics);

/// NMODL text of any program, as <mechanism>.opt.mod.
EmittedUnit emit_nmodl_unit(const ast::Node& program, const std::string& mechanism);

/**
 * \brief Backend-neutral form of scalar or SIMD text
 *
 * Drops the boilerplate header, replaces loop headers by "LOOP", removes
 * `export ` and unwraps `atomic { ... }`. The two backends agree after
 * normalization.
 */
std::string normalize_backend_text(const std::string& text);

}  // namespace nmodl::codegen
