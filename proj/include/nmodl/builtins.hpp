/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <optional>
#include <string_view>
#include <vector>

namespace nmodl {

/// Value of a math-library call, or nullopt for unknown names or arity.
std::optional<double> eval_builtin(std::string_view name, const std::vector<double>& args);

}  // namespace nmodl
