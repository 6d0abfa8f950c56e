/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include "nmodl/codegen.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include <fmt/format.h>

#include "nmodl/odetransform.hpp"
#include "nmodl/printer.hpp"
#include "nmodl/symalg.hpp"

namespace nmodl::codegen {

using ast::Kind;
using ast::Node;

std::string_view backend_name(Backend backend) noexcept {
    switch (backend) {
    case Backend::Scalar:
        return "scalar";
    case Backend::Simd:
        return "simd";
    case Backend::Nmodl:
        return "nmodl";
    }
    return "?";
}

namespace {

constexpr const char* mechanism_marker = "/* ---- mechanism ---- */";

int c_precedence(const Node& e) {
    if (e.is(Kind::Binary)) {
        const auto& op = e.name;
        if (op == "||") {
            return 1;
        }
        if (op == "&&") {
            return 2;
        }
        if (op == "==" || op == "!=") {
            return 3;
        }
        if (op == "<" || op == "<=" || op == ">" || op == ">=") {
            return 4;
        }
        if (op == "+" || op == "-") {
            return 5;
        }
        if (op == "*" || op == "/") {
            return 6;
        }
        return 8;  // ^ becomes pow()
    }
    if (e.is(Kind::Unary) || (e.is(Kind::Number) && e.value < 0)) {
        return 7;
    }
    return 8;
}

std::string c_number(const Node& n) {
    std::string text = n.text.empty() ? ast::format_number(n.value) : n.text;
    if (text.find_first_of(".eE") == std::string::npos) {
        text += ".0";
    }
    return text;
}

/// Closed-form determinant of the submatrix of J (row-major, size n).
std::string determinant_text(std::size_t n, const std::vector<std::size_t>& rows, const std::vector<std::size_t>& cols) {
    auto at = [&](std::size_t r, std::size_t c) {
        return fmt::format("J[{}]", r * n + c);
    };
    if (rows.size() == 1) {
        return at(rows[0], cols[0]);
    }
    std::string s;
    std::vector<std::size_t> sub_rows(rows.begin() + 1, rows.end());
    for (std::size_t j = 0; j < cols.size(); ++j) {
        std::vector<std::size_t> sub_cols;
        for (std::size_t c = 0; c < cols.size(); ++c) {
            if (c != j) {
                sub_cols.push_back(cols[c]);
            }
        }
        std::string term = at(rows[0], cols[j]) + " * " +
                           (sub_rows.size() == 1 ? determinant_text(n, sub_rows, sub_cols)
                                                 : "(" + determinant_text(n, sub_rows, sub_cols) + ")");
        if (j == 0) {
            s = term;
        } else {
            s += (j % 2 == 0 ? " + " : " - ") + term;
        }
    }
    return s;
}

std::string inverse_solver(std::size_t n) {
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) {
        all[i] = i;
    }
    std::string s = fmt::format("static void nmodl_solve_inverse_{}(double* J, double* F) {{\n", n);
    s += fmt::format("    double det = {};\n", determinant_text(n, all, all));
    for (std::size_t i = 0; i < n; ++i) {
        std::string x;
        for (std::size_t j = 0; j < n; ++j) {
            std::string cofactor = "F[" + std::to_string(j) + "]";
            if (n > 1) {
                std::vector<std::size_t> rows;
                std::vector<std::size_t> cols;
                for (std::size_t r = 0; r < n; ++r) {
                    if (r != j) {
                        rows.push_back(r);
                    }
                    if (r != i) {
                        cols.push_back(r);
                    }
                }
                std::string minor = determinant_text(n, rows, cols);
                if (rows.size() > 1) {
                    minor = "(" + minor + ")";
                }
                cofactor = minor + " * " + cofactor;
            }
            bool negative = (i + j) % 2 == 1;
            if (j == 0) {
                x = (negative ? "-" : "") + cofactor;
            } else {
                x += (negative ? " - " : " + ") + cofactor;
            }
        }
        s += fmt::format("    double x{} = ({}) / det;\n", i, x);
    }
    for (std::size_t i = 0; i < n; ++i) {
        s += fmt::format("    F[{0}] = x{0};\n", i);
    }
    s += "}\n";
    return s;
}

const char* lu_solver = R"(static void nmodl_solve_lu(int n, double* J, double* F) {
    for (int k = 0; k < n; ++k) {
        int p = k;
        for (int r = k + 1; r < n; ++r) {
            if (fabs(J[r * n + k]) > fabs(J[p * n + k])) {
                p = r;
            }
        }
        if (p != k) {
            for (int c = 0; c < n; ++c) {
                double tmp = J[k * n + c];
                J[k * n + c] = J[p * n + c];
                J[p * n + c] = tmp;
            }
            double tmp = F[k];
            F[k] = F[p];
            F[p] = tmp;
        }
        for (int r = k + 1; r < n; ++r) {
            double f = J[r * n + k] / J[k * n + k];
            for (int c = k; c < n; ++c) {
                J[r * n + c] -= f * J[k * n + c];
            }
            F[r] -= f * F[k];
        }
    }
    for (int k = n - 1; k >= 0; --k) {
        double s = F[k];
        for (int c = k + 1; c < n; ++c) {
            s -= J[k * n + c] * F[c];
        }
        F[k] = s / J[k * n + k];
    }
}
)";

const char* norm_helper = R"(static double nmodl_norm(int n, const double* F) {
    double m = 0.0;
    for (int k = 0; k < n; ++k) {
        if (fabs(F[k]) > m) {
            m = fabs(F[k]);
        }
    }
    return m;
}
)";

class Emitter {
  public:
    Emitter(const Node& program, const MechanismLayout& layout, Backend backend)
        : program_(program)
        , layout_(layout)
        , backend_(backend)
        , conversion_(ode::conversion_options(program)) {
        for (const auto& g: layout_.globals) {
            globals_.insert(g.name);
        }
        for (const auto& block: program_.children) {
            if (block.is(Kind::ProcedureBlock) || block.is(Kind::FunctionBlock)) {
                callables_.push_back(&block);
            }
        }
    }

    std::string run() {
        std::string mech = layout_.mechanism;
        std::string body_text = mechanism_text();
        std::string out;
        if (backend_ == Backend::Simd) {
            out += fmt::format("/* {}: SPMD kernels */\n", mech);
            out += "/* foreach runs the body once per instance across program instances */\n";
        } else {
            out += fmt::format("/* {}: scalar kernels */\n", mech);
        }
        out += "#include <math.h>\n\n";
        if (uses_norm_) {
            out += "/* provided by the host */\n";
            out += "void nmodl_newton_failure(int id, double residual);\n\n";
            out += norm_helper;
            out += "\n";
        }
        for (std::size_t n: inverse_sizes_) {
            out += inverse_solver(n);
            out += "\n";
        }
        if (uses_lu_) {
            out += lu_solver;
            out += "\n";
        }
        out += mechanism_marker;
        out += "\n\n";
        out += body_text;
        return out;
    }

  private:
    const Node& program_;
    const MechanismLayout& layout_;
    Backend backend_;
    symalg::ConversionOptions conversion_;
    std::set<std::string> globals_;
    std::vector<const Node*> callables_;
    std::vector<std::set<std::string>> scopes_;
    std::string function_name_;
    std::string out_;
    int indent_ = 0;
    bool uses_norm_ = false;
    bool uses_lu_ = false;
    std::set<std::size_t> inverse_sizes_;

    void line(const std::string& s) {
        if (s.empty()) {
            out_ += "\n";
            return;
        }
        out_ += std::string(static_cast<std::size_t>(indent_) * 4, ' ') + s + "\n";
    }

    std::string instance_type() const {
        return layout_.mechanism + "_instance";
    }

    // ------------------------------------------------------------ names

    bool is_local(const std::string& name) const {
        for (auto it = scopes_.rbegin(); it != scopes_.rend(); ++it) {
            if (it->count(name) != 0) {
                return true;
            }
        }
        return false;
    }

    std::string reference(const std::string& name, const std::string& index) const {
        if (is_local(name)) {
            return index.empty() ? name : name + "[(int) (" + index + ")]";
        }
        if (!function_name_.empty() && name == function_name_) {
            return "ret_" + name;
        }
        if (layout_.find(name) != nullptr) {
            return index.empty() ? fmt::format("inst->{}[id]", name)
                                 : fmt::format("inst->{}[(int) ({})][id]", name, index);
        }
        if (globals_.count(name) != 0) {
            return name;
        }
        if (name == "v") {
            return "inst->v[id]";
        }
        throw CompileError(fmt::format("cannot emit unresolved variable '{}'", name));
    }

    std::string expression(const Node& e) {
        switch (e.kind) {
        case Kind::Number:
            return c_number(e);
        case Kind::Identifier:
            return reference(e.name, "");
        case Kind::Indexed:
            return reference(e.name, expression(e.children[0]));
        case Kind::Call: {
            std::string s = e.name + "(";
            bool user = std::any_of(callables_.begin(), callables_.end(), [&](const Node* c) {
                return c->name == e.name;
            });
            bool first = true;
            if (user) {
                s += "inst, id";
                first = false;
            }
            for (const auto& a: e.children) {
                s += first ? "" : ", ";
                s += expression(a);
                first = false;
            }
            return s + ")";
        }
        case Kind::Unary: {
            std::string operand = expression(e.children[0]);
            if (c_precedence(e.children[0]) <= 7) {
                operand = "(" + operand + ")";
            }
            return e.name + operand;
        }
        case Kind::Binary: {
            if (e.name == "^") {
                return "pow(" + expression(e.children[0]) + ", " + expression(e.children[1]) + ")";
            }
            int p = c_precedence(e);
            std::string lhs = expression(e.children[0]);
            std::string rhs = expression(e.children[1]);
            int pl = c_precedence(e.children[0]);
            int pr = c_precedence(e.children[1]);
            // relational and logical operands are always parenthesized
            if (pl < p || (p <= 4 && pl <= 4)) {
                lhs = "(" + lhs + ")";
            }
            if (pr < p || (pr == p && (e.name == "-" || e.name == "/" || p <= 4)) || (p <= 4 && pr <= 4)) {
                rhs = "(" + rhs + ")";
            }
            return lhs + " " + e.name + " " + rhs;
        }
        default:
            throw CompileError(fmt::format("cannot emit {} as an expression", ast::kind_name(e.kind)), e.span);
        }
    }

    std::string target(const Node& n) {
        if (n.is(Kind::Indexed)) {
            return reference(n.name, expression(n.children[0]));
        }
        return reference(n.name, "");
    }

    // ------------------------------------------------------- statements

    void declare(const Node& decl) {
        for (const auto& n: decl.children) {
            scopes_.back().insert(n.name);
            if (n.length > 0) {
                line(fmt::format("double {}[{}] = {{0.0}};", n.name, n.length));
            } else {
                line(fmt::format("double {} = 0.0;", n.name));
            }
        }
    }

    void statements(const Node& block) {
        for (const auto& s: block.children) {
            statement(s);
        }
    }

    void nested(const Node& block) {
        scopes_.emplace_back();
        ++indent_;
        statements(block);
        --indent_;
        scopes_.pop_back();
    }

    void if_chain(const Node& s, const std::string& prefix) {
        line(prefix + "if (" + expression(s.children[0]) + ") {");
        nested(s.children[1]);
        if (s.children.size() > 2) {
            const Node& alt = s.children[2];
            if (alt.is(Kind::If)) {
                if_chain(alt, "} else ");
                return;
            }
            line("} else {");
            nested(alt);
        }
        line("}");
    }

    void statement(const Node& s) {
        switch (s.kind) {
        case Kind::LocalDecl:
            declare(s);
            break;
        case Kind::Assign:
            line(target(s.children[0]) + " = " + expression(s.children[1]) + ";");
            break;
        case Kind::ExprStatement:
            line(expression(s.children[0]) + ";");
            break;
        case Kind::If:
            if_chain(s, "");
            break;
        case Kind::While:
            line("while (" + expression(s.children[0]) + ") {");
            nested(s.children[1]);
            line("}");
            break;
        case Kind::FromLoop: {
            std::string var = reference(s.name, "");
            line(fmt::format("for ({0} = {1}; {0} <= {2}; {0} += 1.0) {{",
                             var,
                             expression(s.children[0]),
                             expression(s.children[1])));
            nested(s.children[2]);
            line("}");
            break;
        }
        case Kind::StatementBlock:
            line("{");
            nested(s);
            line("}");
            break;
        case Kind::Verbatim:
            line(fmt::format("/* VERBATIM (line {}) */", s.span.line));
            out_ += s.text;
            if (s.text.empty() || s.text.back() != '\n') {
                out_ += "\n";
            }
            line("/* ENDVERBATIM */");
            break;
        case Kind::LinearSolve:
        case Kind::NewtonSolve:
            solver(s);
            break;
        case Kind::Solve:
        case Kind::Conductance:
            break;
        default:
            throw CompileError(fmt::format("cannot emit {}; the program must be lowered first", ast::kind_name(s.kind)),
                               s.span);
        }
    }

    void solver(const Node& s) {
        auto system = ode::solver_system(s, conversion_);
        std::size_t n = system.unknowns.size();
        std::vector<std::string> unknowns;
        for (const auto& u: system.unknowns) {
            unknowns.push_back(target(ode::variable_node(u)));
        }
        bool newton = s.is(Kind::NewtonSolve);
        line("{");
        ++indent_;
        line(fmt::format("double F[{}];", n));
        line(fmt::format("double J[{}];", n * n));
        auto residuals = [&] {
            for (std::size_t k = 0; k < n; ++k) {
                line(fmt::format("F[{}] = {};", k, expression(symalg::to_ast(system.residuals[k]))));
            }
        };
        auto jacobian = [&] {
            for (std::size_t r = 0; r < n; ++r) {
                for (std::size_t c = 0; c < n; ++c) {
                    line(fmt::format("J[{}] = {};", r * n + c, expression(symalg::to_ast(system.jacobian[r][c]))));
                }
            }
        };
        auto update = [&] {
            for (std::size_t k = 0; k < n; ++k) {
                line(fmt::format("{} -= F[{}];", unknowns[k], k));
            }
        };
        if (!newton) {
            uses_lu_ = true;
            residuals();
            jacobian();
            line(fmt::format("nmodl_solve_lu({}, J, F);", n));
            update();
        } else {
            uses_norm_ = true;
            line("int iter;");
            line("for (iter = 0;; ++iter) {");
            ++indent_;
            residuals();
            line(fmt::format("if (nmodl_norm({}, F) <= 1e-12) {{", n));
            line("    break;");
            line("}");
            line("if (iter == 50) {");
            line(fmt::format("    nmodl_newton_failure(id, nmodl_norm({}, F));", n));
            line("}");
            jacobian();
            if (n <= 4) {
                inverse_sizes_.insert(n);
                line(fmt::format("nmodl_solve_inverse_{}(J, F);", n));
            } else {
                uses_lu_ = true;
                line(fmt::format("nmodl_solve_lu({}, J, F);", n));
            }
            update();
            --indent_;
            line("}");
        }
        --indent_;
        line("}");
    }

    // ---------------------------------------------------------- kernels

    std::string accumulate(const std::string& lhs, const std::string& op, const std::string& rhs) {
        std::string s = lhs + " " + op + " " + rhs + ";";
        if (backend_ == Backend::Simd) {
            return "atomic { " + s + " }";
        }
        return s;
    }

    void kernel_header(const std::string& name) {
        std::string signature = fmt::format("void {}_{}({}* inst) {{", layout_.mechanism, name, instance_type());
        line(backend_ == Backend::Simd ? "export " + signature : signature);
        ++indent_;
        if (backend_ == Backend::Simd) {
            line("foreach (id = 0 ... inst->nmodl_count) {");
        } else {
            line("/* independent iterations */");
            line("for (int id = 0; id < inst->nmodl_count; ++id) {");
        }
        ++indent_;
    }

    void kernel_footer() {
        --indent_;
        line("}");
        --indent_;
        line("}");
        line("");
    }

    void kernel(const std::string& name, const Node& body) {
        kernel_header(name);
        scopes_.emplace_back();
        statements(body);
        scopes_.pop_back();
        kernel_footer();
    }

    void current_kernel(const Node& body) {
        kernel_header("current_update");
        const auto& currents = layout_.currents;
        if (layout_.analytic_conductance()) {
            scopes_.emplace_back();
            statements(body);
            for (const auto& c: currents) {
                std::string value = reference(c.name, "");
                line(accumulate("inst->acc_rhs[id]", "-=", value));
                if (!c.ion.empty()) {
                    line(accumulate(fmt::format("inst->acc_i{}[id]", c.ion), "+=", value));
                }
            }
            for (const auto& g: layout_.conductances) {
                std::string value = reference(g.variable, "");
                line(accumulate("inst->acc_d[id]", "+=", value));
                if (!g.ion.empty() && std::find(layout_.ions.begin(), layout_.ions.end(), g.ion) != layout_.ions.end()) {
                    line(accumulate(fmt::format("inst->acc_di{}dv[id]", g.ion), "+=", value));
                }
            }
            scopes_.pop_back();
        } else if (!currents.empty()) {
            line("double nmodl_v = inst->v[id];");
            for (std::size_t k = 0; k < currents.size(); ++k) {
                line(fmt::format("double nmodl_c{} = 0.0;", k));
            }
            line("inst->v[id] = nmodl_v + 0.001;");
            line("{");
            nested(body);
            line("}");
            for (std::size_t k = 0; k < currents.size(); ++k) {
                line(fmt::format("nmodl_c{} = {};", k, reference(currents[k].name, "")));
            }
            line("inst->v[id] = nmodl_v;");
            line("{");
            nested(body);
            line("}");
            for (std::size_t k = 0; k < currents.size(); ++k) {
                std::string value = reference(currents[k].name, "");
                std::string g = fmt::format("nmodl_g{}", k);
                line(fmt::format("double {} = (nmodl_c{} - {}) / 0.001;", g, k, value));
                line(accumulate("inst->acc_rhs[id]", "-=", value));
                line(accumulate("inst->acc_d[id]", "+=", g));
                if (!currents[k].ion.empty()) {
                    line(accumulate(fmt::format("inst->acc_i{}[id]", currents[k].ion), "+=", value));
                    line(accumulate(fmt::format("inst->acc_di{}dv[id]", currents[k].ion), "+=", g));
                }
            }
        } else {
            scopes_.emplace_back();
            statements(body);
            scopes_.pop_back();
        }
        kernel_footer();
    }

    void callable_signature(const Node& block, bool prototype) {
        std::string args = fmt::format("{}* inst, int id", instance_type());
        for (const auto& c: block.children) {
            if (c.is(Kind::Argument)) {
                args += ", double " + c.name;
            }
        }
        line(fmt::format("static double {}({}){}", block.name, args, prototype ? ";" : " {"));
    }

    void callable(const Node& block) {
        callable_signature(block, false);
        ++indent_;
        scopes_.emplace_back();
        for (const auto& c: block.children) {
            if (c.is(Kind::Argument)) {
                scopes_.back().insert(c.name);
            }
        }
        bool function = block.is(Kind::FunctionBlock);
        if (function) {
            function_name_ = block.name;
            line(fmt::format("double ret_{} = 0.0;", block.name));
        }
        scopes_.emplace_back();
        statements(*block.body());
        scopes_.pop_back();
        line(function ? fmt::format("return ret_{};", block.name) : "return 0.0;");
        function_name_.clear();
        scopes_.pop_back();
        --indent_;
        line("}");
        line("");
    }

    std::string mechanism_text() {
        line(fmt::format("typedef struct {{"));
        ++indent_;
        line("int nmodl_count;");
        for (const auto& var: layout_.variables) {
            std::string role(role_name(var.role));
            if (var.length > 0) {
                line(fmt::format("double* {}[{}]; /* {}, slots {}-{} */",
                                 var.name,
                                 var.length,
                                 role,
                                 var.slot,
                                 var.slot + static_cast<std::size_t>(var.length) - 1));
            } else {
                line(fmt::format("double* {}; /* {}, slot {} */", var.name, role, var.slot));
            }
        }
        line("double* v;");
        line("double* acc_rhs;");
        line("double* acc_d;");
        for (const auto& ion: layout_.ions) {
            line(fmt::format("double* acc_i{};", ion));
            line(fmt::format("double* acc_di{}dv;", ion));
        }
        --indent_;
        line(fmt::format("}} {};", instance_type()));
        line("");
        for (const auto& g: layout_.globals) {
            line(fmt::format("static double {} = {};", g.name, c_number(ast::make_number(g.value))));
        }
        line("");
        for (const auto& block: program_.children) {
            if (block.is(Kind::Verbatim)) {
                statement(block);
                line("");
            }
        }
        for (const auto* c: callables_) {
            callable_signature(*c, true);
        }
        if (!callables_.empty()) {
            line("");
        }
        for (const auto* c: callables_) {
            callable(*c);
        }
        auto kernels = build_kernels(program_);
        kernel("initialize", kernels.initialize);
        kernel("state_update", kernels.state_update);
        current_kernel(kernels.current_update);
        return out_;
    }
};

bool contains_verbatim(const Node& program) {
    bool found = false;
    ast::traverse(program, [&](const Node& n) {
        found = found || n.is(Kind::Verbatim);
    });
    return found;
}

}  // namespace

EmittedUnit emit_scalar(const Node& program, const MechanismLayout& layout) {
    Emitter e(program, layout, Backend::Scalar);
    return {Backend::Scalar, layout.mechanism + ".scalar.c-like", e.run()};
}

EmittedUnit emit_simd(const Node& program, const MechanismLayout& layout, Diagnostics& diagnostics) {
    if (contains_verbatim(program)) {
        diagnostics.push_back({Severity::Warning,
                               fmt::format("'{}' contains VERBATIM; emitting scalar code for the SIMD backend",
                                           layout.mechanism),
                               {}});
        auto unit = emit_scalar(program, layout);
        unit.file_name = layout.mechanism + ".simd.c-like";
        return unit;
    }
    Emitter e(program, layout, Backend::Simd);
    return {Backend::Simd, layout.mechanism + ".simd.c-like", e.run()};
}

EmittedUnit emit_nmodl_unit(const Node& program, const std::string& mechanism) {
    return {Backend::Nmodl, mechanism + ".opt.mod", emit_nmodl(program)};
}

std::string normalize_backend_text(const std::string& text) {
    std::string out;
    std::istringstream in(text);
    std::string line;
    bool body = false;
    while (std::getline(in, line)) {
        if (!body) {
            body = line == mechanism_marker;
            continue;
        }
        auto first = line.find_first_not_of(' ');
        std::string indent = first == std::string::npos ? "" : line.substr(0, first);
        std::string rest = first == std::string::npos ? "" : line.substr(first);
        if (rest == "/* independent iterations */") {
            continue;
        }
        if (rest.rfind("for (int id = 0;", 0) == 0 || rest.rfind("foreach (id = 0", 0) == 0) {
            rest = "LOOP {";
        }
        if (rest.rfind("export ", 0) == 0) {
            rest = rest.substr(7);
        }
        if (rest.rfind("atomic { ", 0) == 0 && rest.size() > 11 && rest.compare(rest.size() - 2, 2, " }") == 0) {
            rest = rest.substr(9, rest.size() - 11);
        }
        out += indent + rest + "\n";
    }
    return out;
}

}  // namespace nmodl::codegen
