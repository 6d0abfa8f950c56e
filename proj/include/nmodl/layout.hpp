/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

/**
 * \file
 * \brief Instance data layout and kernel extraction of a lowered mechanism
 *
 * Storage is structure-of-arrays: one array per slot, one entry per
 * instance. Arrays declared with a length take consecutive slots.
 */

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "nmodl/ast.hpp"

namespace nmodl::codegen {

enum class Role { Parameter, Assigned, State, Ion };

/// Physical kind of a value, used to pick initial data.
enum class Quantity { Generic, Potential, Concentration };

std::string_view role_name(Role role) noexcept;

struct LayoutVariable {
    std::string name;
    Role role;
    /// Declared array length, 0 for scalars.
    int length = 0;
    /// First slot; the variable occupies max(1, length) slots.
    std::size_t slot = 0;
    std::optional<double> default_value;
    Quantity quantity = Quantity::Generic;
};

struct GlobalScalar {
    std::string name;
    double value = 0.0;
};

struct Current {
    std::string name;
    /// Ion name, empty for a nonspecific current.
    std::string ion;
};

struct Conductance {
    std::string variable;
    std::string ion;
};

struct MechanismLayout {
    std::string mechanism;
    bool point_process = false;
    std::vector<LayoutVariable> variables;
    std::size_t slot_count = 0;
    /// dt, t, celsius and non-RANGE parameters.
    std::vector<GlobalScalar> globals;
    std::vector<std::string> kernels{"initialize", "state_update", "current_update"};
    std::vector<Current> currents;
    std::vector<Conductance> conductances;
    /// Ions with a written current, each with i<ion> and di<ion>/dv accumulators.
    std::vector<std::string> ions;
    /// Ion variables (other than currents) written by some kernel.
    std::vector<std::string> written_ion_variables;

    const LayoutVariable* find(const std::string& name) const;
    /// True if every current has a CONDUCTANCE annotation.
    bool analytic_conductance() const;
    /// Slot name for display, e.g. "x[1]".
    std::string slot_name(std::size_t slot) const;
};

struct Kernels {
    ast::Node initialize;
    /// One nested statement block per SOLVE, in SOLVE order.
    ast::Node state_update;
    /// BREAKPOINT without SOLVE and CONDUCTANCE statements.
    ast::Node current_update;
};

/// Default temperature used for the celsius global.
constexpr double default_celsius = 6.3;
constexpr double default_dt = 0.025;

/// Slots for every referenced RANGE, ASSIGNED, STATE and ion variable.
MechanismLayout build_layout(const ast::Node& program);

Kernels build_kernels(const ast::Node& program);

/// Instance-level variables compared by the differential test: states,
/// currents and written ion variables.
std::vector<std::string> observed_variables(const MechanismLayout& layout);

}  // namespace nmodl::codegen
