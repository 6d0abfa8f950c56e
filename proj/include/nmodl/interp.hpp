/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

/**
 * \file
 * \brief Reference interpreter for lowered mechanisms
 *
 * Kernels are compiled once to a resolved tree (locals, slots and globals
 * are bound to indices) and then executed instance by instance in 64-bit
 * floating point, in statement order.
 */

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "nmodl/ast.hpp"
#include "nmodl/layout.hpp"

namespace nmodl::interp {

class RuntimeError: public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct InstanceData {
    std::size_t n = 0;
    /// slots[s][i]: slot s of instance i.
    std::vector<std::vector<double>> slots;
    std::vector<double> v;
    std::map<std::string, double> globals;
    /// "rhs", "d", "i<ion>", "di<ion>dv"; reset before every current update.
    std::map<std::string, std::vector<double>> accumulators;
};

/**
 * \brief Seeded initial data
 *
 * Parameters take their defaults. Every other slot and v is drawn uniformly
 * from a per-variable stream (mt19937_64 seeded with seed ^ fnv1a(name)),
 * so values do not depend on slot order: v and reversal potentials in
 * [-80, 40], concentrations in (0, 1e-3], everything else in [0, 1].
 */
InstanceData init(const codegen::MechanismLayout& layout, std::size_t n, std::uint64_t seed);

struct NewtonStats {
    long solves = 0;
    long iterations = 0;
    int max_iterations = 0;
};

struct Options {
    /// Replace the exact Jacobian by forward differences.
    bool finite_difference_jacobian = false;
    double newton_tolerance = 1e-12;
    int newton_max_iterations = 50;
    int while_limit = 10000;
};

/// Values of the observed variables after every step.
struct Trajectory {
    std::vector<std::string> names;
    /// frames[step][k * n + i] for name k, instance i.
    std::vector<std::vector<double>> frames;
    std::size_t n = 0;
};

class Machine;

class Interpreter {
  public:
    /// `program` must be lowered (no pending ODEs).
    Interpreter(const ast::Node& program, Options options = {});
    ~Interpreter();
    Interpreter(Interpreter&&) noexcept;
    Interpreter& operator=(Interpreter&&) noexcept;

    const codegen::MechanismLayout& layout() const noexcept;

    void initialize(InstanceData& data);
    void current_update(InstanceData& data);
    void state_update(InstanceData& data);
    /// Runs one of layout().kernels `steps` times; throws for other names.
    void run_kernel(const std::string& kernel, InstanceData& data, int steps);
    /// Reset accumulators, current update, state update, t += dt.
    void step(InstanceData& data);
    /// INITIAL followed by `steps` steps; records observed values if asked.
    /// A trajectory with preset names records those, otherwise the observed
    /// variables and accumulators.
    void run(InstanceData& data, int steps, Trajectory* trajectory = nullptr);

    const NewtonStats& newton_stats() const noexcept;

  private:
    std::unique_ptr<Machine> machine_;
};

/// Observed values of `data` as one frame.
std::vector<double> observe(const codegen::MechanismLayout& layout,
                            const InstanceData& data,
                            const std::vector<std::string>& names);

/// max |a-b| / max(|a|, |b|, 1e-30) over every slot of every instance.
double diff_trajectories(const InstanceData& a,
                         const codegen::MechanismLayout& layout_a,
                         const InstanceData& b,
                         const codegen::MechanismLayout& layout_b,
                         const std::vector<std::string>& names);

double diff_trajectories(const Trajectory& a, const Trajectory& b);

/// Instance i of the result is instance perm[i] of `data`.
InstanceData permute(const InstanceData& data, const std::vector<std::size_t>& perm);

/// Solve A x = b in place (b becomes x); closed-form inverse for n <= 4,
/// partial-pivot LU otherwise. Throws RuntimeError for a singular matrix.
void solve_dense(std::vector<double>& A, std::vector<double>& b, std::size_t n, bool force_lu = false);

}  // namespace nmodl::interp
