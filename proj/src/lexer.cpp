/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include "nmodl/lexer.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>

#include <fmt/format.h>

namespace nmodl::parser {

namespace {

constexpr std::string_view supported_keywords[] = {
    "TITLE",     "NEURON",    "SUFFIX",       "POINT_PROCESS", "USEION",  "READ",
    "WRITE",     "VALENCE",   "RANGE",        "GLOBAL",        "NONSPECIFIC_CURRENT",
    "UNITS",     "PARAMETER", "ASSIGNED",     "STATE",         "BREAKPOINT",
    "SOLVE",     "METHOD",    "CONDUCTANCE",  "INITIAL",       "DERIVATIVE",
    "KINETIC",   "CONSERVE",  "LINEAR",       "NONLINEAR",     "PROCEDURE",
    "FUNCTION",  "LOCAL",     "IF",           "ELSE",          "WHILE",
    "FROM",      "TO",        "VERBATIM",     "ENDVERBATIM",   "COMMENT",
    "ENDCOMMENT"};

constexpr std::string_view unsupported_keywords[] = {
    "TABLE",        "DEPEND",         "NET_RECEIVE",  "POINTER",
    "BBCOREPOINTER", "THREADSAFE",    "CONSTANT",     "INDEPENDENT",
    "DISCRETE",     "PARTIAL",        "FUNCTION_TABLE", "WATCH",
    "FOR_NETCONS",  "BEFORE",         "AFTER",        "CONSTRUCTOR",
    "DESTRUCTOR",   "ELECTRODE_CURRENT", "EXTERNAL",  "INCLUDE",
    "BY",           "COMPARTMENT",    "LONGITUDINAL_DIFFUSION", "SOLVEFOR",
    "UNITSON",      "UNITSOFF",       "LAG",          "MATCH",
    "SENSITIVITY",  "RESET",          "PROTECT",      "MUTEXLOCK",
    "MUTEXUNLOCK",  "RANDOM",       "STEADYSTATE"};

class Lexer {
  public:
    explicit Lexer(std::string_view source)
        : src_(source) {}

    TokenStream run() {
        TokenStream stream;
        while (true) {
            std::string trivia = skip_trivia();
            if (at_end()) {
                stream.trailing = std::move(trivia);
                break;
            }
            Token token = next_token();
            token.leading = std::move(trivia);
            bool units_open = stream.tokens.size() >= 1 &&
                              stream.tokens.back().is(TokenKind::Keyword, "UNITS") &&
                              token.is(TokenKind::Punctuation, "{");
            bool title = token.is(TokenKind::Keyword, "TITLE");
            stream.tokens.push_back(std::move(token));
            if (units_open) {
                stream.tokens.push_back(raw_until('}'));
            } else if (title) {
                auto leading = take_while([](char c) { return c == ' ' || c == '\t'; });
                Token text = raw_until('\n');
                text.leading = leading;
                stream.tokens.push_back(std::move(text));
            }
        }
        return stream;
    }

  private:
    std::string_view src_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int column_ = 1;

    bool at_end() const noexcept {
        return pos_ >= src_.size();
    }

    char peek(std::size_t ahead = 0) const noexcept {
        return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : '\0';
    }

    void advance() {
        if (src_[pos_] == '\n') {
            ++line_;
            column_ = 1;
        } else {
            ++column_;
        }
        ++pos_;
    }

    Span here(std::size_t length = 1) const {
        return Span{line_, column_, pos_, length};
    }

    [[noreturn]] void fail(const std::string& message, Span span) const {
        throw CompileError(message, span);
    }

    template <typename Pred>
    std::string take_while(Pred pred) {
        std::size_t start = pos_;
        while (!at_end() && pred(peek())) {
            advance();
        }
        return std::string(src_.substr(start, pos_ - start));
    }

    bool starts_word(std::string_view word) const {
        if (src_.substr(pos_, word.size()) != word) {
            return false;
        }
        char before = pos_ > 0 ? src_[pos_ - 1] : ' ';
        char after = pos_ + word.size() < src_.size() ? src_[pos_ + word.size()] : ' ';
        auto ident = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
        return !ident(before) && !ident(after);
    }

    std::string skip_trivia() {
        std::size_t start = pos_;
        while (!at_end()) {
            char c = peek();
            if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
                advance();
            } else if (c == ':' || c == '?') {
                while (!at_end() && peek() != '\n') {
                    advance();
                }
            } else if (starts_word("COMMENT")) {
                Span open = here(7);
                while (!at_end() && !starts_word("ENDCOMMENT")) {
                    advance();
                }
                if (at_end()) {
                    fail("unterminated COMMENT block", open);
                }
                for (int i = 0; i < 10; ++i) {
                    advance();
                }
            } else {
                break;
            }
        }
        return std::string(src_.substr(start, pos_ - start));
    }

    Token raw_until(char terminator) {
        Token token;
        token.kind = TokenKind::Text;
        token.span = here(0);
        std::size_t start = pos_;
        while (!at_end() && peek() != terminator) {
            advance();
        }
        if (terminator == '}' && at_end()) {
            fail("unterminated UNITS block", token.span);
        }
        token.text = std::string(src_.substr(start, pos_ - start));
        token.span.length = pos_ - start;
        return token;
    }

    Token next_token() {
        Token token;
        token.span = here(0);
        char c = peek();
        std::size_t start = pos_;
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            take_while([](char ch) { return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_'; });
            token.text = std::string(src_.substr(start, pos_ - start));
            if (token.text == "VERBATIM") {
                return verbatim(token);
            }
            token.kind = is_supported_keyword(token.text) || is_unsupported_keyword(token.text)
                             ? TokenKind::Keyword
                             : TokenKind::Identifier;
        } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                   (c == '.' && std::isdigit(static_cast<unsigned char>(peek(1))))) {
            number(token);
        } else if (c == '"') {
            advance();
            while (!at_end() && peek() != '"' && peek() != '\n') {
                advance();
            }
            if (at_end() || peek() != '"') {
                fail("unterminated string", token.span);
            }
            advance();
            token.kind = TokenKind::String;
            token.text = std::string(src_.substr(start, pos_ - start));
        } else {
            punct_or_operator(token);
        }
        token.span.length = pos_ - start;
        return token;
    }

    Token verbatim(Token token) {
        std::size_t body_start = pos_;
        while (!at_end() && !starts_word("ENDVERBATIM")) {
            advance();
        }
        if (at_end()) {
            fail("unterminated VERBATIM block", Span{token.span.line, token.span.column, token.span.offset, 8});
        }
        token.kind = TokenKind::Verbatim;
        token.text = std::string(src_.substr(body_start, pos_ - body_start));
        for (int i = 0; i < 11; ++i) {
            advance();
        }
        token.span.length = pos_ - token.span.offset;
        return token;
    }

    void number(Token& token) {
        std::size_t start = pos_;
        auto digits = [this] {
            take_while([](char ch) { return std::isdigit(static_cast<unsigned char>(ch)) != 0; });
        };
        digits();
        if (peek() == '.') {
            advance();
            digits();
        }
        if (peek() == 'e' || peek() == 'E') {
            std::size_t sign = (peek(1) == '+' || peek(1) == '-') ? 1 : 0;
            if (std::isdigit(static_cast<unsigned char>(peek(1 + sign)))) {
                advance();
                if (sign) {
                    advance();
                }
                digits();
            }
        }
        token.kind = TokenKind::Number;
        token.text = std::string(src_.substr(start, pos_ - start));
        double value = std::strtod(token.text.c_str(), nullptr);
        if (!std::isfinite(value)) {
            fail(fmt::format("number '{}' is out of range", token.text), token.span);
        }
    }

    void punct_or_operator(Token& token) {
        static constexpr std::string_view two_char[] = {"<->", "==", "!=", "<=", ">=", "&&", "||"};
        for (auto op: two_char) {
            if (src_.substr(pos_, op.size()) == op) {
                for (std::size_t i = 0; i < op.size(); ++i) {
                    advance();
                }
                token.kind = TokenKind::Operator;
                token.text = std::string(op);
                return;
            }
        }
        char c = peek();
        static constexpr std::string_view punctuation = "(){}[],";
        static constexpr std::string_view operators = "+-*/^=<>!~'";
        if (punctuation.find(c) != std::string_view::npos) {
            token.kind = TokenKind::Punctuation;
        } else if (operators.find(c) != std::string_view::npos) {
            token.kind = TokenKind::Operator;
        } else {
            std::string shown = std::isprint(static_cast<unsigned char>(c))
                                    ? std::string(1, c)
                                    : fmt::format("\\x{:02x}", static_cast<unsigned char>(c));
            fail(fmt::format("unexpected character '{}'", shown), here(1));
        }
        advance();
        token.text = std::string(1, c);
    }
};

}  // namespace

std::string Token::source_text() const {
    if (kind == TokenKind::Verbatim) {
        return "VERBATIM" + text + "ENDVERBATIM";
    }
    return text;
}

std::string TokenStream::reconstruct() const {
    std::string out;
    for (const auto& token: tokens) {
        out += token.leading;
        out += token.source_text();
    }
    out += trailing;
    return out;
}

bool is_supported_keyword(std::string_view word) noexcept {
    return std::find(std::begin(supported_keywords), std::end(supported_keywords), word) !=
           std::end(supported_keywords);
}

bool is_unsupported_keyword(std::string_view word) noexcept {
    return std::find(std::begin(unsupported_keywords), std::end(unsupported_keywords), word) !=
           std::end(unsupported_keywords);
}

TokenStream tokenize(std::string_view source) {
    return Lexer(source).run();
}

}  // namespace nmodl::parser
