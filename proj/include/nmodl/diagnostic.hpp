/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace nmodl {

/// Location of a construct in the input text. Lines and columns are 1-based.
struct Span {
    int line = 0;
    int column = 0;
    std::size_t offset = 0;
    std::size_t length = 0;

    bool valid() const noexcept {
        return line > 0;
    }

    /// True if `inner` lies entirely within this span.
    bool contains(const Span& inner) const noexcept {
        return inner.offset >= offset && inner.offset + inner.length <= offset + length;
    }

    /// Smallest span covering both.
    static Span merge(const Span& a, const Span& b) noexcept;
};

enum class Severity { Error, Warning };

struct Diagnostic {
    Severity severity = Severity::Error;
    std::string message;
    Span span;

    /// "file:line:col: severity: message"
    std::string format(const std::string& file) const;
};

using Diagnostics = std::vector<Diagnostic>;

bool has_errors(const Diagnostics& diagnostics);

/// Thrown for fatal front-end or transformation errors.
class CompileError: public std::runtime_error {
  public:
    explicit CompileError(Diagnostic diagnostic)
        : std::runtime_error(diagnostic.message)
        , diagnostic_(std::move(diagnostic)) {}

    CompileError(std::string message, Span span = {})
        : CompileError(Diagnostic{Severity::Error, std::move(message), span}) {}

    const Diagnostic& diagnostic() const noexcept {
        return diagnostic_;
    }

  private:
    Diagnostic diagnostic_;
};

}  // namespace nmodl
