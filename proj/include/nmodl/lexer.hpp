/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "nmodl/diagnostic.hpp"

namespace nmodl::parser {

enum class TokenKind {
    Keyword,
    Identifier,
    Number,
    String,
    Operator,
    Punctuation,
    /// Opaque VERBATIM body; `text` excludes the delimiting keywords.
    Verbatim,
    /// Raw text run: the remainder of a TITLE line or the body of UNITS { }.
    Text,
};

struct Token {
    TokenKind kind = TokenKind::Identifier;
    std::string text;
    Span span;
    /// Whitespace and comments preceding the token, exactly as in the input.
    std::string leading;

    /// The token's bytes in the input (text plus VERBATIM delimiters).
    std::string source_text() const;

    bool is(TokenKind k, std::string_view t) const noexcept {
        return kind == k && text == t;
    }
};

struct TokenStream {
    std::vector<Token> tokens;
    /// Whitespace and comments after the last token.
    std::string trailing;

    /// Reassembles the input exactly.
    std::string reconstruct() const;
};

/// True for keywords of the supported subset.
bool is_supported_keyword(std::string_view word) noexcept;

/// True for NMODL keywords outside the supported subset.
bool is_unsupported_keyword(std::string_view word) noexcept;

/**
 * \brief Split NMODL source into tokens
 *
 * `:` line comments and COMMENT ... ENDCOMMENT regions become leading trivia.
 * Throws CompileError for an unterminated VERBATIM, COMMENT or string and for
 * characters outside the language.
 */
TokenStream tokenize(std::string_view source);

}  // namespace nmodl::parser
