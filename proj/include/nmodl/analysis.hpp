/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

/**
 * \file
 * \brief Static operation census and compute/memory classification of kernels
 */

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nmodl/ast.hpp"
#include "nmodl/layout.hpp"

namespace nmodl::analysis {

struct OpCounts {
    int add = 0;
    int sub = 0;
    int mul = 0;
    int div = 0;
    int exp = 0;
    int log = 0;
    int pow = 0;
    int sqrt = 0;
    int compare = 0;
    /// fabs, trigonometric functions, floor, ceil
    int other = 0;

    int total() const noexcept;
    bool operator==(const OpCounts&) const = default;
};

struct KernelProfile {
    std::string mechanism;
    std::string kernel;
    OpCounts counts;
    /// Distinct per-instance arrays read / written: layout slots, v and the
    /// current accumulators.
    int reads = 0;
    int writes = 0;
    /// Newton solves are counted once; their cost scales with the iterations.
    bool newton = false;

    /// flops / (8 * (reads + writes)); empty without memory traffic.
    std::optional<double> flop_per_byte() const;
};

/// Operator census of an expression or statement tree, without memory counts.
OpCounts census(const ast::Node& tree);

/**
 * \brief Profiles of initialize, state_update and current_update
 *
 * Calls to PROCEDUREs and FUNCTIONs are followed (each call site counts the
 * callee body once). The current kernel is counted as emitted: the numeric
 * conductance path evaluates the body twice.
 */
std::vector<KernelProfile> census_mechanism(const ast::Node& program, const codegen::MechanismLayout& layout);

constexpr double default_flop_byte_threshold = 1.0;

/// "compute-bound" above the threshold or without memory traffic, else "memory-bound".
std::string classify(const KernelProfile& profile, double threshold = default_flop_byte_threshold);

/// JSON array of {mechanism, kernel, counts, reads, writes, flop_per_byte,
/// class, threshold, newton}. Throws std::invalid_argument for no profiles.
nlohmann::ordered_json characterize(const std::vector<KernelProfile>& profiles,
                                    double threshold = default_flop_byte_threshold);

/// Aligned text table of the same report.
std::string render_table(const std::vector<KernelProfile>& profiles,
                         double threshold = default_flop_byte_threshold);

}  // namespace nmodl::analysis
