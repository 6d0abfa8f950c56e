/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include "nmodl/parser.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace nmodl::parser {

using ast::Kind;
using ast::Node;

namespace {

class Parser {
  public:
    explicit Parser(const std::vector<Token>& tokens)
        : tokens_(tokens) {}

    Node program() {
        Node root(Kind::Program);
        while (!at_end()) {
            root.children.push_back(top_level());
        }
        if (!root.children.empty()) {
            root.span = Span::merge(root.children.front().span, root.children.back().span);
        }
        return root;
    }

    Node lone_expression() {
        Node e = expression();
        if (!at_end()) {
            error_here("unexpected trailing input");
        }
        return e;
    }

  private:
    const std::vector<Token>& tokens_;
    std::size_t pos_ = 0;

    // ---------------------------------------------------------------- helpers

    bool at_end() const noexcept {
        return pos_ >= tokens_.size();
    }

    const Token& peek(std::size_t ahead = 0) const {
        static const Token eof{TokenKind::Punctuation, "<end of input>", {}, {}};
        return pos_ + ahead < tokens_.size() ? tokens_[pos_ + ahead] : eof;
    }

    const Token& previous() const {
        return tokens_[pos_ - 1];
    }

    Span here() const {
        if (!at_end()) {
            return peek().span;
        }
        if (tokens_.empty()) {
            return Span{1, 1, 0, 0};
        }
        Span s = tokens_.back().span;
        s.offset += s.length;
        s.column += static_cast<int>(s.length);
        s.length = 0;
        return s;
    }

    [[noreturn]] void error_here(const std::string& message) const {
        throw CompileError(message, here());
    }

    bool check(TokenKind kind, std::string_view text) const {
        return !at_end() && peek().is(kind, text);
    }

    bool check_kind(TokenKind kind) const {
        return !at_end() && peek().kind == kind;
    }

    bool accept(TokenKind kind, std::string_view text) {
        if (check(kind, text)) {
            ++pos_;
            return true;
        }
        return false;
    }

    const Token& expect(TokenKind kind, std::string_view text) {
        if (!check(kind, text)) {
            error_here(fmt::format("expected '{}' but found '{}'", text, describe(peek())));
        }
        return tokens_[pos_++];
    }

    const Token& expect_identifier(std::string_view what = "identifier") {
        if (!check_kind(TokenKind::Identifier)) {
            error_here(fmt::format("expected {} but found '{}'", what, describe(peek())));
        }
        return tokens_[pos_++];
    }

    static std::string describe(const Token& token) {
        if (token.kind == TokenKind::Verbatim) {
            return "VERBATIM";
        }
        return token.text;
    }

    [[noreturn]] void unsupported() const {
        throw CompileError(fmt::format("unsupported construct {}", peek().text), here());
    }

    Span since(std::size_t start) const {
        if (pos_ == start) {
            return tokens_[start].span;
        }
        return Span::merge(tokens_[start].span, tokens_[pos_ - 1].span);
    }

    template <typename F>
    Node spanned(F&& build) {
        std::size_t start = pos_;
        Node node = build();
        node.span = since(start);
        return node;
    }

    // ------------------------------------------------------------- top level

    Node top_level() {
        const Token& token = peek();
        if (token.kind == TokenKind::Verbatim) {
            return verbatim();
        }
        if (token.kind != TokenKind::Keyword) {
            error_here(fmt::format("expected a top-level block but found '{}'", describe(token)));
        }
        std::size_t start = pos_;
        Node node;
        const std::string& word = token.text;
        if (word == "TITLE") {
            ++pos_;
            node = Node(Kind::Title);
            if (check_kind(TokenKind::Text)) {
                node.text = tokens_[pos_++].text;
            }
        } else if (word == "NEURON") {
            ++pos_;
            node = neuron_block();
        } else if (word == "UNITS") {
            ++pos_;
            expect(TokenKind::Punctuation, "{");
            node = Node(Kind::UnitsBlock);
            if (check_kind(TokenKind::Text)) {
                node.text = tokens_[pos_++].text;
            }
            expect(TokenKind::Punctuation, "}");
        } else if (word == "PARAMETER") {
            ++pos_;
            node = declaration_block(Kind::ParamBlock, Kind::ParamDecl);
        } else if (word == "ASSIGNED") {
            ++pos_;
            node = declaration_block(Kind::AssignedBlock, Kind::AssignedDecl);
        } else if (word == "STATE") {
            ++pos_;
            node = declaration_block(Kind::StateBlock, Kind::StateDecl);
        } else if (word == "BREAKPOINT") {
            ++pos_;
            node = Node(Kind::BreakpointBlock);
            node.children.push_back(statement_block());
        } else if (word == "INITIAL") {
            ++pos_;
            node = Node(Kind::InitialBlock);
            node.children.push_back(statement_block());
        } else if (word == "DERIVATIVE" || word == "KINETIC" || word == "LINEAR" ||
                   word == "NONLINEAR") {
            ++pos_;
            Kind kind = word == "DERIVATIVE" ? Kind::DerivativeBlock
                        : word == "KINETIC"  ? Kind::KineticBlock
                        : word == "LINEAR"   ? Kind::LinearBlock
                                             : Kind::NonLinearBlock;
            node = Node(kind, expect_identifier("block name").text);
            node.children.push_back(statement_block());
        } else if (word == "PROCEDURE" || word == "FUNCTION") {
            ++pos_;
            node = callable(word == "PROCEDURE" ? Kind::ProcedureBlock : Kind::FunctionBlock);
        } else if (is_unsupported_keyword(word)) {
            unsupported();
        } else {
            error_here(fmt::format("unexpected '{}' at top level", word));
        }
        node.span = since(start);
        return node;
    }

    Node verbatim() {
        Node node(Kind::Verbatim);
        node.text = peek().text;
        node.span = peek().span;
        ++pos_;
        return node;
    }

    Node neuron_block() {
        Node block(Kind::NeuronBlock);
        expect(TokenKind::Punctuation, "{");
        while (!accept(TokenKind::Punctuation, "}")) {
            if (at_end()) {
                error_here("unterminated NEURON block");
            }
            block.children.push_back(spanned([this] { return neuron_statement(); }));
        }
        return block;
    }

    Node neuron_statement() {
        const Token& token = peek();
        if (token.kind != TokenKind::Keyword) {
            error_here(fmt::format("unexpected '{}' in NEURON block", describe(token)));
        }
        std::string word = token.text;
        ++pos_;
        if (word == "SUFFIX" || word == "POINT_PROCESS") {
            Node node(Kind::Suffix, expect_identifier("mechanism name").text);
            node.text = word;
            return node;
        }
        if (word == "USEION") {
            Node node(Kind::UseIon, expect_identifier("ion name").text);
            for (std::string mode: {"READ", "WRITE"}) {
                if (accept(TokenKind::Keyword, mode)) {
                    for (auto& name: name_list()) {
                        name.text = mode;
                        node.children.push_back(std::move(name));
                    }
                }
            }
            if (accept(TokenKind::Keyword, "VALENCE")) {
                node.children.push_back(signed_number());
            }
            return node;
        }
        if (word == "RANGE" || word == "GLOBAL" || word == "NONSPECIFIC_CURRENT") {
            Kind kind = word == "RANGE"    ? Kind::Range
                        : word == "GLOBAL" ? Kind::Global
                                           : Kind::NonspecificCurrent;
            Node node(kind);
            node.children = name_list();
            return node;
        }
        --pos_;
        if (is_unsupported_keyword(word)) {
            unsupported();
        }
        error_here(fmt::format("unexpected '{}' in NEURON block", word));
    }

    std::vector<Node> name_list() {
        std::vector<Node> names;
        do {
            const Token& t = expect_identifier();
            Node name(Kind::Name, t.text);
            name.span = t.span;
            names.push_back(std::move(name));
        } while (accept(TokenKind::Punctuation, ","));
        return names;
    }

    /// Solver unknowns: names or array elements with a literal index.
    std::vector<Node> unknown_list() {
        std::vector<Node> names;
        do {
            std::size_t start = pos_;
            Node name(Kind::Name, expect_identifier().text);
            if (accept(TokenKind::Punctuation, "[")) {
                if (!check_kind(TokenKind::Number)) {
                    error_here("expected literal index");
                }
                name.name += "[" + tokens_[pos_++].text + "]";
                expect(TokenKind::Punctuation, "]");
            }
            name.span = since(start);
            names.push_back(std::move(name));
        } while (accept(TokenKind::Punctuation, ","));
        return names;
    }

    Node signed_number() {
        std::size_t start = pos_;
        bool negative = accept(TokenKind::Operator, "-");
        if (!check_kind(TokenKind::Number)) {
            error_here(fmt::format("expected number but found '{}'", describe(peek())));
        }
        const Token& t = tokens_[pos_++];
        std::string text = (negative ? "-" : "") + t.text;
        Node n = ast::make_number(std::strtod(text.c_str(), nullptr), text);
        n.span = since(start);
        return n;
    }

    std::string unit() {
        expect(TokenKind::Punctuation, "(");
        std::string text;
        while (!check(TokenKind::Punctuation, ")")) {
            if (at_end()) {
                error_here("unterminated unit");
            }
            text += tokens_[pos_++].text;
        }
        ++pos_;
        return text;
    }

    int array_length() {
        if (!accept(TokenKind::Punctuation, "[")) {
            return 0;
        }
        if (!check_kind(TokenKind::Number)) {
            error_here("expected array length");
        }
        int length = std::atoi(tokens_[pos_++].text.c_str());
        if (length <= 0) {
            error_here("array length must be positive");
        }
        expect(TokenKind::Punctuation, "]");
        return length;
    }

    Node declaration_block(Kind block_kind, Kind decl_kind) {
        Node block(block_kind);
        expect(TokenKind::Punctuation, "{");
        while (!accept(TokenKind::Punctuation, "}")) {
            if (at_end()) {
                error_here("unterminated declaration block");
            }
            if (check_kind(TokenKind::Keyword) && is_unsupported_keyword(peek().text)) {
                unsupported();
            }
            block.children.push_back(spanned([&] {
                Node decl(decl_kind, expect_identifier("variable name").text);
                decl.length = array_length();
                if (decl_kind == Kind::ParamDecl && accept(TokenKind::Operator, "=")) {
                    decl.children.push_back(signed_number());
                }
                if (check(TokenKind::Punctuation, "(")) {
                    decl.unit = unit();
                }
                if (decl_kind == Kind::ParamDecl && accept(TokenKind::Operator, "<")) {
                    std::string lo = signed_number().text;
                    expect(TokenKind::Punctuation, ",");
                    std::string hi = signed_number().text;
                    expect(TokenKind::Operator, ">");
                    decl.limits = lo + "," + hi;
                }
                return decl;
            }));
        }
        return block;
    }

    Node callable(Kind kind) {
        Node node(kind, expect_identifier("name").text);
        expect(TokenKind::Punctuation, "(");
        if (!check(TokenKind::Punctuation, ")")) {
            do {
                node.children.push_back(spanned([this] {
                    Node arg(Kind::Argument, expect_identifier("argument name").text);
                    if (check(TokenKind::Punctuation, "(")) {
                        arg.unit = unit();
                    }
                    return arg;
                }));
            } while (accept(TokenKind::Punctuation, ","));
        }
        expect(TokenKind::Punctuation, ")");
        if (kind == Kind::FunctionBlock && check(TokenKind::Punctuation, "(")) {
            node.unit = unit();
        }
        node.children.push_back(statement_block());
        return node;
    }

    // ------------------------------------------------------------ statements

    Node statement_block() {
        return spanned([this] {
            Node block(Kind::StatementBlock);
            expect(TokenKind::Punctuation, "{");
            while (!accept(TokenKind::Punctuation, "}")) {
                if (at_end()) {
                    error_here("expected '}' before end of input");
                }
                block.children.push_back(spanned([this] { return statement(); }));
            }
            return block;
        });
    }

    Node statement() {
        const Token& token = peek();
        if (token.kind == TokenKind::Verbatim) {
            return verbatim();
        }
        if (token.is(TokenKind::Operator, "~")) {
            ++pos_;
            return tilde_statement();
        }
        if (token.kind == TokenKind::Keyword) {
            return keyword_statement();
        }
        if (token.kind == TokenKind::Identifier) {
            if (peek(1).is(TokenKind::Punctuation, "(")) {
                Node call = expression();
                if (!call.is(Kind::Call)) {
                    error_here("expected statement");
                }
                return Node(Kind::ExprStatement, {}, {std::move(call)});
            }
            return assignment();
        }
        error_here(fmt::format("expected statement but found '{}'", describe(token)));
    }

    Node keyword_statement() {
        std::string word = peek().text;
        ++pos_;
        if (word == "LOCAL") {
            Node local(Kind::LocalDecl);
            do {
                std::size_t start = pos_;
                Node name(Kind::Name, expect_identifier().text);
                name.length = array_length();
                name.span = since(start);
                local.children.push_back(std::move(name));
            } while (accept(TokenKind::Punctuation, ","));
            return local;
        }
        if (word == "IF") {
            return if_statement();
        }
        if (word == "WHILE") {
            expect(TokenKind::Punctuation, "(");
            Node cond = expression();
            expect(TokenKind::Punctuation, ")");
            Node body = statement_block();
            return Node(Kind::While, {}, {std::move(cond), std::move(body)});
        }
        if (word == "FROM") {
            Node loop(Kind::FromLoop, expect_identifier("loop variable").text);
            expect(TokenKind::Operator, "=");
            loop.children.push_back(expression());
            expect(TokenKind::Keyword, "TO");
            loop.children.push_back(expression());
            if (check(TokenKind::Keyword, "BY")) {
                unsupported();
            }
            loop.children.push_back(statement_block());
            return loop;
        }
        if (word == "SOLVE") {
            Node solve(Kind::Solve, expect_identifier("block name").text);
            if (check(TokenKind::Keyword, "STEADYSTATE")) {
                unsupported();
            }
            if (accept(TokenKind::Keyword, "METHOD")) {
                solve.text = expect_identifier("solver method").text;
            }
            return solve;
        }
        if (word == "CONDUCTANCE") {
            Node g(Kind::Conductance, expect_identifier("conductance variable").text);
            if (accept(TokenKind::Keyword, "USEION")) {
                g.text = expect_identifier("ion name").text;
            }
            return g;
        }
        if (word == "CONSERVE") {
            Node lhs = expression();
            expect(TokenKind::Operator, "=");
            Node rhs = expression();
            return Node(Kind::Conserve, {}, {std::move(lhs), std::move(rhs)});
        }
        if (word == "LINEAR" || word == "NONLINEAR") {
            Node solve(word == "LINEAR" ? Kind::LinearSolve : Kind::NewtonSolve);
            expect(TokenKind::Punctuation, "(");
            solve.children = unknown_list();
            expect(TokenKind::Punctuation, ")");
            expect(TokenKind::Punctuation, "{");
            while (!accept(TokenKind::Punctuation, "}")) {
                std::size_t start = pos_;
                expect(TokenKind::Operator, "~");
                Node eq = linear_equation();
                eq.span = since(start);
                solve.children.push_back(std::move(eq));
            }
            return solve;
        }
        --pos_;
        if (is_unsupported_keyword(word)) {
            unsupported();
        }
        error_here(fmt::format("unexpected '{}' in statement block", word));
    }

    Node if_statement() {
        expect(TokenKind::Punctuation, "(");
        Node cond = expression();
        expect(TokenKind::Punctuation, ")");
        Node node(Kind::If, {}, {std::move(cond), statement_block()});
        if (accept(TokenKind::Keyword, "ELSE")) {
            if (check(TokenKind::Keyword, "IF")) {
                std::size_t start = pos_;
                ++pos_;
                Node nested = if_statement();
                nested.span = since(start);
                node.children.push_back(std::move(nested));
            } else {
                node.children.push_back(statement_block());
            }
        }
        return node;
    }

    Node assignment() {
        std::size_t start = pos_;
        Node lhs = variable_reference();
        if (accept(TokenKind::Operator, "'")) {
            Node prime(Kind::Prime, lhs.name);
            prime.value = 1;
            while (accept(TokenKind::Operator, "'")) {
                prime.value += 1;
            }
            if (lhs.is(Kind::Indexed)) {
                prime.children.push_back(std::move(lhs.children[0]));
            }
            prime.span = since(start);
            expect(TokenKind::Operator, "=");
            Node rhs = expression();
            return Node(Kind::DiffEq, {}, {std::move(prime), std::move(rhs)});
        }
        expect(TokenKind::Operator, "=");
        Node rhs = expression();
        return ast::make_assign(std::move(lhs), std::move(rhs));
    }

    Node variable_reference() {
        return spanned([this] {
            const Token& name = expect_identifier();
            if (accept(TokenKind::Punctuation, "[")) {
                Node index = expression();
                expect(TokenKind::Punctuation, "]");
                return Node(Kind::Indexed, name.text, {std::move(index)});
            }
            return ast::make_identifier(name.text);
        });
    }

    /// After '~': either a reaction (with <->) or an algebraic equation.
    Node tilde_statement() {
        int depth = 0;
        for (std::size_t i = pos_; i < tokens_.size(); ++i) {
            const Token& t = tokens_[i];
            if (t.kind == TokenKind::Punctuation && (t.text == "(" || t.text == "[")) {
                ++depth;
            } else if (t.kind == TokenKind::Punctuation && (t.text == ")" || t.text == "]")) {
                --depth;
            } else if (depth == 0 && t.is(TokenKind::Operator, "<->")) {
                return reaction();
            } else if (depth == 0 && (t.is(TokenKind::Operator, "=") || t.kind == TokenKind::Keyword ||
                                      t.is(TokenKind::Operator, "~") ||
                                      t.is(TokenKind::Punctuation, "}"))) {
                break;
            }
        }
        return linear_equation();
    }

    Node linear_equation() {
        Node lhs = expression();
        expect(TokenKind::Operator, "=");
        Node rhs = expression();
        return Node(Kind::LinEq, {}, {std::move(lhs), std::move(rhs)});
    }

    Node reactant_list() {
        return spanned([this] {
            Node list(Kind::ReactantList);
            do {
                list.children.push_back(spanned([this] {
                    double stoich = 1;
                    std::string stoich_text;
                    if (check_kind(TokenKind::Number)) {
                        stoich_text = peek().text;
                        stoich = std::strtod(stoich_text.c_str(), nullptr);
                        ++pos_;
                    }
                    Node term(Kind::Reactant, expect_identifier("species").text);
                    term.value = stoich;
                    if (accept(TokenKind::Punctuation, "[")) {
                        term.children.push_back(expression());
                        expect(TokenKind::Punctuation, "]");
                    }
                    return term;
                }));
            } while (accept(TokenKind::Operator, "+"));
            return list;
        });
    }

    Node reaction() {
        Node node(Kind::Reaction);
        node.children.push_back(reactant_list());
        expect(TokenKind::Operator, "<->");
        node.children.push_back(reactant_list());
        expect(TokenKind::Punctuation, "(");
        node.children.push_back(expression());
        expect(TokenKind::Punctuation, ",");
        node.children.push_back(expression());
        expect(TokenKind::Punctuation, ")");
        return node;
    }

    // ----------------------------------------------------------- expressions

    Node expression() {
        return logical_or();
    }

    template <typename Next>
    Node left_assoc(std::initializer_list<std::string_view> ops, Next next) {
        std::size_t start = pos_;
        Node lhs = (this->*next)();
        while (true) {
            std::string op;
            for (auto candidate: ops) {
                if (check(TokenKind::Operator, candidate)) {
                    op = std::string(candidate);
                    break;
                }
            }
            if (op.empty()) {
                return lhs;
            }
            ++pos_;
            Node rhs = (this->*next)();
            lhs = ast::make_binary(op, std::move(lhs), std::move(rhs));
            lhs.span = since(start);
        }
    }

    Node logical_or() {
        return left_assoc({"||"}, &Parser::logical_and);
    }

    Node logical_and() {
        return left_assoc({"&&"}, &Parser::relational);
    }

    Node relational() {
        return left_assoc({"<", "<=", ">", ">=", "==", "!="}, &Parser::additive);
    }

    Node additive() {
        return left_assoc({"+", "-"}, &Parser::multiplicative);
    }

    Node multiplicative() {
        return left_assoc({"*", "/"}, &Parser::unary);
    }

    Node unary() {
        std::size_t start = pos_;
        if (check(TokenKind::Operator, "-") || check(TokenKind::Operator, "!")) {
            std::string op = peek().text;
            ++pos_;
            Node operand = unary();
            Node node = ast::make_unary(op, std::move(operand));
            node.span = since(start);
            return node;
        }
        return power();
    }

    Node power() {
        std::size_t start = pos_;
        Node base = primary();
        if (accept(TokenKind::Operator, "^")) {
            Node exponent = unary();
            Node node = ast::make_binary("^", std::move(base), std::move(exponent));
            node.span = since(start);
            return node;
        }
        return base;
    }

    Node primary() {
        std::size_t start = pos_;
        const Token& token = peek();
        if (token.kind == TokenKind::Number) {
            ++pos_;
            Node n = ast::make_number(std::strtod(token.text.c_str(), nullptr), token.text);
            n.span = token.span;
            return n;
        }
        if (token.kind == TokenKind::Identifier) {
            ++pos_;
            Node node;
            if (accept(TokenKind::Punctuation, "(")) {
                node = Node(Kind::Call, token.text);
                if (!check(TokenKind::Punctuation, ")")) {
                    do {
                        node.children.push_back(expression());
                    } while (accept(TokenKind::Punctuation, ","));
                }
                expect(TokenKind::Punctuation, ")");
            } else if (accept(TokenKind::Punctuation, "[")) {
                node = Node(Kind::Indexed, token.text, {expression()});
                expect(TokenKind::Punctuation, "]");
            } else {
                node = ast::make_identifier(token.text);
            }
            node.span = since(start);
            return node;
        }
        if (accept(TokenKind::Punctuation, "(")) {
            Node inner = expression();
            expect(TokenKind::Punctuation, ")");
            return inner;
        }
        if (token.kind == TokenKind::Keyword && is_unsupported_keyword(token.text)) {
            unsupported();
        }
        error_here(fmt::format("expected expression but found '{}'", describe(token)));
    }
};

}  // namespace

Node parse(const TokenStream& tokens) {
    return Parser(tokens.tokens).program();
}

Node parse_source(std::string_view source) {
    return parse(tokenize(source));
}

Node parse_expression(std::string_view source) {
    auto stream = tokenize(source);
    return Parser(stream.tokens).lone_expression();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CompileError(fmt::format("cannot open file '{}'", path));
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

Node parse_file(const std::string& path) {
    return parse_source(read_file(path));
}

}  // namespace nmodl::parser
