/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

/**
 * \file
 * \brief parse -> conductance -> passes -> solver lowering
 */

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "nmodl/ast.hpp"
#include "nmodl/diagnostic.hpp"
#include "nmodl/odetransform.hpp"
#include "nmodl/passes.hpp"

namespace nmodl {

enum class Pass { Fold, Unroll, Inline, Localize };

std::string_view pass_name(Pass pass) noexcept;

/// fold, unroll, inline, localize
const std::vector<Pass>& canonical_passes();

/**
 * \brief Parse "none", "all" or a comma list of pass names
 *
 * Throws CompileError for unknown or repeated names.
 */
std::vector<Pass> parse_pass_list(const std::string& text);

struct PipelineOptions {
    std::vector<Pass> passes;
    /// Variables that must stay observable (never localized).
    std::set<std::string> observe;
    ode::LoweringOptions lowering;
};

struct PipelineResult {
    /// Program after the passes, before solver lowering.
    ast::Node optimized;
    /// Fully lowered program.
    ast::Node program;
    std::vector<passes::PassReport> reports;
    Diagnostics diagnostics;
};

/// Runs the pipeline on an annotated or plain program. CompileErrors propagate.
PipelineResult run_pipeline(const ast::Node& program, const PipelineOptions& options);

struct VerifyOptions {
    std::size_t instances = 256;
    int steps = 100;
    std::uint64_t seed = 42;
};

struct VerifyResult {
    /// Max relative deviation of the observed trajectories.
    double deviation = 0.0;
    std::vector<std::string> observed;
};

/**
 * \brief Differential run against the unoptimized pipeline
 *
 * Both programs are lowered with the same options, initialized from the
 * same seed and stepped; states, currents, written ion variables,
 * accumulators and any `observe` variable are compared after every step.
 * Throws interp::RuntimeError on execution failures.
 */
VerifyResult verify_pipeline(const ast::Node& program, const PipelineOptions& options, const VerifyOptions& verify);

}  // namespace nmodl
