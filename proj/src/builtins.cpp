/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include "nmodl/builtins.hpp"

#include <cmath>

namespace nmodl {

std::optional<double> eval_builtin(std::string_view name, const std::vector<double>& args) {
    if (args.size() == 2 && name == "pow") {
        return std::pow(args[0], args[1]);
    }
    if (args.size() != 1) {
        return std::nullopt;
    }
    double x = args[0];
    if (name == "exp") {
        return std::exp(x);
    }
    if (name == "expm1") {
        return std::expm1(x);
    }
    if (name == "log") {
        return std::log(x);
    }
    if (name == "log10") {
        return std::log10(x);
    }
    if (name == "sqrt") {
        return std::sqrt(x);
    }
    if (name == "fabs") {
        return std::fabs(x);
    }
    if (name == "sin") {
        return std::sin(x);
    }
    if (name == "cos") {
        return std::cos(x);
    }
    if (name == "tan") {
        return std::tan(x);
    }
    if (name == "tanh") {
        return std::tanh(x);
    }
    if (name == "floor") {
        return std::floor(x);
    }
    if (name == "ceil") {
        return std::ceil(x);
    }
    return std::nullopt;
}

}  // namespace nmodl
