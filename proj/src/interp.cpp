/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include "nmodl/interp.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "nmodl/odetransform.hpp"
#include "nmodl/passes.hpp"
#include "nmodl/symalg.hpp"

namespace nmodl::interp {

using ast::Kind;
using ast::Node;
using codegen::MechanismLayout;

namespace {

enum class Op {
    Const,
    Local,
    Slot,
    Global,
    Voltage,
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Neg,
    Not,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
    Builtin,
    Call,
};

enum class Builtin { Exp, Expm1, Log, Log10, Sqrt, Fabs, Sin, Cos, Tan, Tanh, Floor, Ceil, Pow };

/// Storage reference; `index` is set for array elements with a variable index.
struct Ref {
    Op where = Op::Local;
    int base = 0;
    int length = 0;
    std::string name;
};

struct Expr {
    Op op = Op::Const;
    double value = 0.0;
    Ref ref;
    int fn = 0;
    std::vector<Expr> args;
};

struct Solver;

struct Stmt {
    enum class Kind { Assign, If, While, From, Eval, Solve, Block };
    Kind kind = Kind::Eval;
    Ref target;
    std::vector<Expr> index;
    std::vector<Expr> exprs;
    std::vector<Stmt> body;
    std::vector<Stmt> orelse;
    int solver = -1;
};

struct Function {
    std::string name;
    int arity = 0;
    int frame = 0;
    int result = -1;
    std::vector<Stmt> body;
};

struct Target {
    Ref ref;
    std::vector<Expr> index;
};

struct Solver {
    bool linear = false;
    std::vector<Target> unknowns;
    std::vector<Expr> residuals;
    std::vector<Expr> jacobian;
};

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c: s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::optional<Builtin> builtin_id(const std::string& name) {
    static const std::map<std::string, Builtin> table{{"exp", Builtin::Exp},
                                                      {"expm1", Builtin::Expm1},
                                                      {"log", Builtin::Log},
                                                      {"log10", Builtin::Log10},
                                                      {"sqrt", Builtin::Sqrt},
                                                      {"fabs", Builtin::Fabs},
                                                      {"sin", Builtin::Sin},
                                                      {"cos", Builtin::Cos},
                                                      {"tan", Builtin::Tan},
                                                      {"tanh", Builtin::Tanh},
                                                      {"floor", Builtin::Floor},
                                                      {"ceil", Builtin::Ceil},
                                                      {"pow", Builtin::Pow}};
    auto it = table.find(name);
    if (it == table.end()) {
        return std::nullopt;
    }
    return it->second;
}

double apply_builtin(Builtin b, double x, double y) {
    switch (b) {
    case Builtin::Exp:
        return std::exp(x);
    case Builtin::Expm1:
        return std::expm1(x);
    case Builtin::Log:
        return std::log(x);
    case Builtin::Log10:
        return std::log10(x);
    case Builtin::Sqrt:
        return std::sqrt(x);
    case Builtin::Fabs:
        return std::fabs(x);
    case Builtin::Sin:
        return std::sin(x);
    case Builtin::Cos:
        return std::cos(x);
    case Builtin::Tan:
        return std::tan(x);
    case Builtin::Tanh:
        return std::tanh(x);
    case Builtin::Floor:
        return std::floor(x);
    case Builtin::Ceil:
        return std::ceil(x);
    case Builtin::Pow:
        return std::pow(x, y);
    }
    return 0.0;
}

double determinant(const std::vector<double>& A, std::size_t n, const std::vector<std::size_t>& rows,
                   const std::vector<std::size_t>& cols) {
    std::size_t k = rows.size();
    if (k == 1) {
        return A[rows[0] * n + cols[0]];
    }
    if (k == 2) {
        return A[rows[0] * n + cols[0]] * A[rows[1] * n + cols[1]] -
               A[rows[0] * n + cols[1]] * A[rows[1] * n + cols[0]];
    }
    double det = 0.0;
    std::vector<std::size_t> sub_rows(rows.begin() + 1, rows.end());
    for (std::size_t j = 0; j < k; ++j) {
        std::vector<std::size_t> sub_cols;
        for (std::size_t c = 0; c < k; ++c) {
            if (c != j) {
                sub_cols.push_back(cols[c]);
            }
        }
        double minor = determinant(A, n, sub_rows, sub_cols);
        double term = A[rows[0] * n + cols[j]] * minor;
        det += (j % 2 == 0) ? term : -term;
    }
    return det;
}

void solve_inverse(const std::vector<double>& A, std::vector<double>& b, std::size_t n) {
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) {
        all[i] = i;
    }
    double det = determinant(A, n, all, all);
    if (det == 0.0 || !std::isfinite(det)) {
        throw RuntimeError("singular matrix in linear solve");
    }
    if (n == 1) {
        b[0] /= det;
        return;
    }
    // x = adj(A) b / det, adj(A)[i][j] = (-1)^(i+j) M_ji
    std::vector<double> x(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
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
            double cofactor = determinant(A, n, rows, cols);
            if ((i + j) % 2 == 1) {
                cofactor = -cofactor;
            }
            x[i] += cofactor * b[j];
        }
        x[i] /= det;
    }
    b = std::move(x);
}

void solve_lu(std::vector<double>& A, std::vector<double>& b, std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t pivot = k;
        for (std::size_t r = k + 1; r < n; ++r) {
            if (std::fabs(A[r * n + k]) > std::fabs(A[pivot * n + k])) {
                pivot = r;
            }
        }
        if (A[pivot * n + k] == 0.0) {
            throw RuntimeError("singular matrix in linear solve");
        }
        if (pivot != k) {
            for (std::size_t c = 0; c < n; ++c) {
                std::swap(A[k * n + c], A[pivot * n + c]);
            }
            std::swap(b[k], b[pivot]);
        }
        for (std::size_t r = k + 1; r < n; ++r) {
            double f = A[r * n + k] / A[k * n + k];
            if (f == 0.0) {
                continue;
            }
            for (std::size_t c = k; c < n; ++c) {
                A[r * n + c] -= f * A[k * n + c];
            }
            b[r] -= f * b[k];
        }
    }
    for (std::size_t k = n; k-- > 0;) {
        double s = b[k];
        for (std::size_t c = k + 1; c < n; ++c) {
            s -= A[k * n + c] * b[c];
        }
        b[k] = s / A[k * n + k];
    }
}

}  // namespace

void solve_dense(std::vector<double>& A, std::vector<double>& b, std::size_t n, bool force_lu) {
    if (!force_lu && n <= 4) {
        solve_inverse(A, b, n);
    } else {
        solve_lu(A, b, n);
    }
}

// ------------------------------------------------------------------- machine

class Machine {
  public:
    Machine(const Node& program, Options options)
        : options_(options) {
        Diagnostics ignored;
        program_ = program.scope ? program : passes::ensure_tables(program, ignored);
        layout_ = codegen::build_layout(program_);
        for (const auto& g: layout_.globals) {
            global_index_[g.name] = static_cast<int>(global_names_.size());
            global_names_.push_back(g.name);
        }
        conversion_ = ode::conversion_options(program_);
        for (const auto& block: program_.children) {
            if (block.is(Kind::ProcedureBlock) || block.is(Kind::FunctionBlock)) {
                function_index_[block.name] = static_cast<int>(functions_.size());
                Function f;
                f.name = block.name;
                functions_.push_back(std::move(f));
            }
        }
        for (const auto& block: program_.children) {
            if (block.is(Kind::ProcedureBlock) || block.is(Kind::FunctionBlock)) {
                compile_function(block);
            }
        }
        auto kernels = codegen::build_kernels(program_);
        initialize_ = compile_kernel(kernels.initialize, init_frame_, nullptr);
        state_ = compile_kernel(kernels.state_update, state_frame_, nullptr);
        current_ = compile_kernel(kernels.current_update, current_frame_, &current_scope_);
        for (const auto& c: layout_.currents) {
            current_refs_.push_back(resolve_in(c.name, current_scope_));
        }
        for (const auto& g: layout_.conductances) {
            conductance_refs_.push_back(resolve_in(g.variable, current_scope_));
        }
        stack_.resize(1 << 16);
    }

    MechanismLayout layout_;
    NewtonStats stats_;

    void run_kernel(const std::vector<Stmt>& kernel, int frame, InstanceData& data, const char* name) {
        enter(data);
        for (std::size_t i = 0; i < data.n; ++i) {
            instance_ = i;
            std::fill(stack_.begin(), stack_.begin() + frame, 0.0);
            base_ = 0;
            top_ = frame;
            execute(kernel);
            check_finite(name);
        }
        leave(data);
    }

    void initialize(InstanceData& data) {
        run_kernel(initialize_, init_frame_, data, "initialize");
    }

    void state_update(InstanceData& data) {
        run_kernel(state_, state_frame_, data, "state_update");
    }

    void current_update(InstanceData& data) {
        enter(data);
        bool analytic = layout_.analytic_conductance();
        std::size_t nc = layout_.currents.size();
        std::vector<double> c0(nc);
        std::vector<double> c1(nc);
        for (std::size_t i = 0; i < data.n; ++i) {
            instance_ = i;
            auto run_body = [&](std::vector<double>& out) {
                std::fill(stack_.begin(), stack_.begin() + current_frame_, 0.0);
                base_ = 0;
                top_ = current_frame_;
                execute(current_);
                for (std::size_t k = 0; k < nc; ++k) {
                    out[k] = load(current_refs_[k], 0);
                }
            };
            double& rhs = (*rhs_)[i];
            double& d = (*d_)[i];
            if (analytic) {
                run_body(c0);
                for (std::size_t k = 0; k < nc; ++k) {
                    rhs -= c0[k];
                    if (!layout_.currents[k].ion.empty()) {
                        (*ion_current_[layout_.currents[k].ion])[i] += c0[k];
                    }
                }
                for (std::size_t k = 0; k < layout_.conductances.size(); ++k) {
                    double g = load(conductance_refs_[k], 0);
                    d += g;
                    const auto& ion = layout_.conductances[k].ion;
                    if (!ion.empty() && ion_conductance_.count(ion) != 0) {
                        (*ion_conductance_[ion])[i] += g;
                    }
                }
            } else if (nc > 0) {
                double v0 = data.v[i];
                data.v[i] = v0 + 0.001;
                run_body(c1);
                data.v[i] = v0;
                run_body(c0);
                for (std::size_t k = 0; k < nc; ++k) {
                    double g = (c1[k] - c0[k]) / 0.001;
                    rhs -= c0[k];
                    d += g;
                    const auto& ion = layout_.currents[k].ion;
                    if (!ion.empty()) {
                        (*ion_current_[ion])[i] += c0[k];
                        (*ion_conductance_[ion])[i] += g;
                    }
                }
            } else {
                run_body(c0);
            }
            check_finite("current_update");
        }
        leave(data);
    }

  private:
    Options options_;
    Node program_;
    symalg::ConversionOptions conversion_;
    std::map<std::string, int> global_index_;
    std::vector<std::string> global_names_;
    std::vector<double> globals_;
    std::map<std::string, int> function_index_;
    std::vector<Function> functions_;
    std::vector<Solver> solvers_;
    std::vector<Stmt> initialize_;
    std::vector<Stmt> state_;
    std::vector<Stmt> current_;
    int init_frame_ = 0;
    int state_frame_ = 0;
    int current_frame_ = 0;
    std::map<std::string, std::pair<int, int>> current_scope_;
    std::vector<Ref> current_refs_;
    std::vector<Ref> conductance_refs_;

    // compile state
    std::vector<std::map<std::string, std::pair<int, int>>> scopes_;
    int next_local_ = 0;
    std::string function_name_;
    int function_result_ = -1;

    // run state
    InstanceData* data_ = nullptr;
    std::vector<double> stack_;
    std::size_t base_ = 0;
    std::size_t top_ = 0;
    std::size_t instance_ = 0;
    int depth_ = 0;
    std::vector<double>* rhs_ = nullptr;
    std::vector<double>* d_ = nullptr;
    std::map<std::string, std::vector<double>*> ion_current_;
    std::map<std::string, std::vector<double>*> ion_conductance_;

    // ------------------------------------------------------------ compile

    [[noreturn]] static void fail(const std::string& message) {
        throw RuntimeError(message);
    }

    Ref resolve_in(const std::string& name, const std::map<std::string, std::pair<int, int>>& scope) const {
        auto it = scope.find(name);
        if (it != scope.end()) {
            return Ref{Op::Local, it->second.first, it->second.second, name};
        }
        return resolve_outer(name);
    }

    Ref resolve_outer(const std::string& name) const {
        if (name == "v") {
            return Ref{Op::Voltage, 0, 0, name};
        }
        if (const auto* var = layout_.find(name)) {
            return Ref{Op::Slot, static_cast<int>(var->slot), var->length, name};
        }
        auto g = global_index_.find(name);
        if (g != global_index_.end()) {
            return Ref{Op::Global, g->second, 0, name};
        }
        fail(fmt::format("unresolved variable '{}'", name));
    }

    Ref resolve(const std::string& name) const {
        for (auto it = scopes_.rbegin(); it != scopes_.rend(); ++it) {
            auto found = it->find(name);
            if (found != it->end()) {
                return Ref{Op::Local, found->second.first, found->second.second, name};
            }
        }
        if (!function_name_.empty() && name == function_name_ && function_result_ >= 0) {
            return Ref{Op::Local, function_result_, 0, name};
        }
        return resolve_outer(name);
    }

    void declare(const std::string& name, int length) {
        scopes_.back()[name] = {next_local_, length};
        next_local_ += length > 0 ? length : 1;
    }

    Expr compile_expr(const Node& n) {
        Expr e;
        switch (n.kind) {
        case Kind::Number:
            e.op = Op::Const;
            e.value = n.value;
            return e;
        case Kind::Identifier:
            e.ref = resolve(n.name);
            e.op = e.ref.where;
            return e;
        case Kind::Indexed:
            e.ref = resolve(n.name);
            e.op = e.ref.where;
            e.args.push_back(compile_expr(n.children[0]));
            return e;
        case Kind::Unary:
            e.op = n.name == "-" ? Op::Neg : Op::Not;
            e.args.push_back(compile_expr(n.children[0]));
            return e;
        case Kind::Binary: {
            static const std::map<std::string, Op> ops{{"+", Op::Add},  {"-", Op::Sub},  {"*", Op::Mul},
                                                       {"/", Op::Div},  {"^", Op::Pow},  {"<", Op::Lt},
                                                       {"<=", Op::Le},  {">", Op::Gt},   {">=", Op::Ge},
                                                       {"==", Op::Eq},  {"!=", Op::Ne},  {"&&", Op::And},
                                                       {"||", Op::Or}};
            e.op = ops.at(n.name);
            e.args.push_back(compile_expr(n.children[0]));
            e.args.push_back(compile_expr(n.children[1]));
            return e;
        }
        case Kind::Call: {
            for (const auto& c: n.children) {
                e.args.push_back(compile_expr(c));
            }
            auto f = function_index_.find(n.name);
            if (f != function_index_.end()) {
                e.op = Op::Call;
                e.fn = f->second;
                return e;
            }
            auto b = builtin_id(n.name);
            if (!b) {
                fail(fmt::format("call to unknown function '{}'", n.name));
            }
            std::size_t arity = *b == Builtin::Pow ? 2 : 1;
            if (e.args.size() != arity) {
                fail(fmt::format("'{}' expects {} argument(s)", n.name, arity));
            }
            e.op = Op::Builtin;
            e.fn = static_cast<int>(*b);
            return e;
        }
        default:
            fail(fmt::format("cannot evaluate {}", ast::kind_name(n.kind)));
        }
    }

    Target compile_target(const Node& n) {
        Target t;
        if (n.is(Kind::Name)) {
            Node var = ode::variable_node(n.name);
            return compile_target(var);
        }
        t.ref = resolve(n.name);
        if (n.is(Kind::Indexed)) {
            t.index.push_back(compile_expr(n.children[0]));
        }
        return t;
    }

    std::vector<Stmt> compile_block(const Node& block) {
        scopes_.emplace_back();
        std::vector<Stmt> out;
        for (const auto& s: block.children) {
            if (s.is(Kind::LocalDecl)) {
                for (const auto& name: s.children) {
                    declare(name.name, name.length);
                }
                continue;
            }
            compile_statement(s, out);
        }
        scopes_.pop_back();
        return out;
    }

    void compile_statement(const Node& s, std::vector<Stmt>& out) {
        Stmt st;
        switch (s.kind) {
        case Kind::Assign: {
            st.kind = Stmt::Kind::Assign;
            Target t = compile_target(s.children[0]);
            st.target = t.ref;
            st.index = std::move(t.index);
            st.exprs.push_back(compile_expr(s.children[1]));
            break;
        }
        case Kind::ExprStatement:
            st.kind = Stmt::Kind::Eval;
            st.exprs.push_back(compile_expr(s.children[0]));
            break;
        case Kind::If:
            st.kind = Stmt::Kind::If;
            st.exprs.push_back(compile_expr(s.children[0]));
            st.body = compile_block(s.children[1]);
            if (s.children.size() > 2) {
                if (s.children[2].is(Kind::If)) {
                    compile_statement(s.children[2], st.orelse);
                } else {
                    st.orelse = compile_block(s.children[2]);
                }
            }
            break;
        case Kind::While:
            st.kind = Stmt::Kind::While;
            st.exprs.push_back(compile_expr(s.children[0]));
            st.body = compile_block(s.children[1]);
            break;
        case Kind::FromLoop:
            st.kind = Stmt::Kind::From;
            st.target = resolve(s.name);
            st.exprs.push_back(compile_expr(s.children[0]));
            st.exprs.push_back(compile_expr(s.children[1]));
            st.body = compile_block(s.children[2]);
            break;
        case Kind::StatementBlock:
            st.kind = Stmt::Kind::Block;
            st.body = compile_block(s);
            break;
        case Kind::LinearSolve:
        case Kind::NewtonSolve: {
            st.kind = Stmt::Kind::Solve;
            auto system = ode::solver_system(s, conversion_);
            Solver solver;
            solver.linear = s.is(Kind::LinearSolve);
            for (const auto& u: system.unknowns) {
                solver.unknowns.push_back(compile_target(Node(Kind::Name, u)));
            }
            for (const auto& f: system.residuals) {
                solver.residuals.push_back(compile_expr(symalg::to_ast(f)));
            }
            for (const auto& row: system.jacobian) {
                for (const auto& j: row) {
                    solver.jacobian.push_back(compile_expr(symalg::to_ast(j)));
                }
            }
            st.solver = static_cast<int>(solvers_.size());
            solvers_.push_back(std::move(solver));
            break;
        }
        case Kind::Verbatim:
        case Kind::Solve:
        case Kind::Conductance:
            return;
        case Kind::DiffEq:
        case Kind::Reaction:
        case Kind::Conserve:
        case Kind::LinEq:
            fail(fmt::format("{} must be lowered before execution", ast::kind_name(s.kind)));
        default:
            fail(fmt::format("cannot execute {}", ast::kind_name(s.kind)));
        }
        out.push_back(std::move(st));
    }

    std::vector<Stmt> compile_kernel(const Node& block,
                                     int& frame,
                                     std::map<std::string, std::pair<int, int>>* top_scope) {
        next_local_ = 0;
        function_name_.clear();
        function_result_ = -1;
        scopes_.emplace_back();
        std::vector<Stmt> out;
        for (const auto& s: block.children) {
            if (s.is(Kind::LocalDecl)) {
                for (const auto& name: s.children) {
                    declare(name.name, name.length);
                }
                continue;
            }
            compile_statement(s, out);
        }
        if (top_scope != nullptr) {
            *top_scope = scopes_.back();
        }
        scopes_.pop_back();
        frame = next_local_;
        return out;
    }

    void compile_function(const Node& block) {
        Function& f = functions_[static_cast<std::size_t>(function_index_.at(block.name))];
        next_local_ = 0;
        scopes_.clear();
        scopes_.emplace_back();
        for (const auto& c: block.children) {
            if (c.is(Kind::Argument)) {
                declare(c.name, 0);
                ++f.arity;
            }
        }
        function_name_ = block.is(Kind::FunctionBlock) ? block.name : std::string();
        function_result_ = -1;
        if (block.is(Kind::FunctionBlock)) {
            function_result_ = next_local_++;
        }
        f.result = function_result_;
        f.body = compile_block(*block.body());
        f.frame = next_local_;
        scopes_.clear();
        function_name_.clear();
        function_result_ = -1;
    }

    // -------------------------------------------------------------- execute

    void enter(InstanceData& data) {
        data_ = &data;
        globals_.assign(global_names_.size(), 0.0);
        for (std::size_t g = 0; g < global_names_.size(); ++g) {
            auto it = data.globals.find(global_names_[g]);
            if (it == data.globals.end()) {
                fail(fmt::format("missing global '{}'", global_names_[g]));
            }
            globals_[g] = it->second;
        }
        if (data.slots.size() != layout_.slot_count || data.v.size() != data.n) {
            fail("instance data does not match the mechanism layout");
        }
        auto acc = [&](const std::string& name) {
            auto& a = data.accumulators[name];
            a.resize(data.n, 0.0);
            return &a;
        };
        rhs_ = acc("rhs");
        d_ = acc("d");
        for (const auto& ion: layout_.ions) {
            ion_current_[ion] = acc("i" + ion);
            ion_conductance_[ion] = acc("di" + ion + "dv");
        }
    }

    void leave(InstanceData& data) {
        for (std::size_t g = 0; g < global_names_.size(); ++g) {
            data.globals[global_names_[g]] = globals_[g];
        }
        data_ = nullptr;
    }

    void check_finite(const char* kernel) {
        for (std::size_t s = 0; s < data_->slots.size(); ++s) {
            if (!std::isfinite(data_->slots[s][instance_])) {
                fail(fmt::format("non-finite value of '{}' after {} at instance {}",
                                 layout_.slot_name(s),
                                 kernel,
                                 instance_));
            }
        }
    }

    std::size_t element(const Ref& ref, double index) const {
        if (index < 0 || index >= ref.length || std::trunc(index) != index) {
            throw RuntimeError(fmt::format("index {} out of range for '{}' at instance {}",
                                           ast::format_number(index),
                                           ref.name,
                                           instance_));
        }
        return static_cast<std::size_t>(index);
    }

    double& location(const Ref& ref, std::size_t offset) {
        switch (ref.where) {
        case Op::Local:
            return stack_[base_ + static_cast<std::size_t>(ref.base) + offset];
        case Op::Slot:
            return data_->slots[static_cast<std::size_t>(ref.base) + offset][instance_];
        case Op::Global:
            return globals_[static_cast<std::size_t>(ref.base)];
        default:
            return data_->v[instance_];
        }
    }

    double load(const Ref& ref, std::size_t offset) {
        return location(ref, offset);
    }

    double eval(const Expr& e) {
        switch (e.op) {
        case Op::Const:
            return e.value;
        case Op::Local:
        case Op::Slot:
        case Op::Global:
        case Op::Voltage:
            if (e.args.empty()) {
                return location(e.ref, 0);
            }
            return location(e.ref, element(e.ref, eval(e.args[0])));
        case Op::Add:
            return eval(e.args[0]) + eval(e.args[1]);
        case Op::Sub:
            return eval(e.args[0]) - eval(e.args[1]);
        case Op::Mul:
            return eval(e.args[0]) * eval(e.args[1]);
        case Op::Div:
            return eval(e.args[0]) / eval(e.args[1]);
        case Op::Pow:
            return std::pow(eval(e.args[0]), eval(e.args[1]));
        case Op::Neg:
            return -eval(e.args[0]);
        case Op::Not:
            return eval(e.args[0]) == 0.0 ? 1.0 : 0.0;
        case Op::Lt:
            return eval(e.args[0]) < eval(e.args[1]) ? 1.0 : 0.0;
        case Op::Le:
            return eval(e.args[0]) <= eval(e.args[1]) ? 1.0 : 0.0;
        case Op::Gt:
            return eval(e.args[0]) > eval(e.args[1]) ? 1.0 : 0.0;
        case Op::Ge:
            return eval(e.args[0]) >= eval(e.args[1]) ? 1.0 : 0.0;
        case Op::Eq:
            return eval(e.args[0]) == eval(e.args[1]) ? 1.0 : 0.0;
        case Op::Ne:
            return eval(e.args[0]) != eval(e.args[1]) ? 1.0 : 0.0;
        case Op::And:
            return (eval(e.args[0]) != 0.0 && eval(e.args[1]) != 0.0) ? 1.0 : 0.0;
        case Op::Or:
            return (eval(e.args[0]) != 0.0 || eval(e.args[1]) != 0.0) ? 1.0 : 0.0;
        case Op::Builtin: {
            double x = eval(e.args[0]);
            double y = e.args.size() > 1 ? eval(e.args[1]) : 0.0;
            return apply_builtin(static_cast<Builtin>(e.fn), x, y);
        }
        case Op::Call:
            return call(e);
        }
        return 0.0;
    }

    double call(const Expr& e) {
        const Function& f = functions_[static_cast<std::size_t>(e.fn)];
        if (static_cast<int>(e.args.size()) != f.arity) {
            fail(fmt::format("'{}' called with {} arguments, expected {}", f.name, e.args.size(), f.arity));
        }
        if (++depth_ > 1000) {
            fail(fmt::format("call depth limit exceeded in '{}'", f.name));
        }
        std::vector<double> args;
        args.reserve(e.args.size());
        for (const auto& a: e.args) {
            args.push_back(eval(a));
        }
        std::size_t saved_base = base_;
        std::size_t saved_top = top_;
        base_ = top_;
        top_ = base_ + static_cast<std::size_t>(f.frame);
        if (top_ > stack_.size()) {
            stack_.resize(top_ * 2);
        }
        std::fill(stack_.begin() + static_cast<std::ptrdiff_t>(base_),
                  stack_.begin() + static_cast<std::ptrdiff_t>(top_),
                  0.0);
        std::copy(args.begin(), args.end(), stack_.begin() + static_cast<std::ptrdiff_t>(base_));
        execute(f.body);
        double result = f.result >= 0 ? stack_[base_ + static_cast<std::size_t>(f.result)] : 0.0;
        base_ = saved_base;
        top_ = saved_top;
        --depth_;
        return result;
    }

    void store(const Ref& ref, const std::vector<Expr>& index, double value) {
        if (index.empty()) {
            location(ref, 0) = value;
        } else {
            location(ref, element(ref, eval(index[0]))) = value;
        }
    }

    double load_target(const Target& t) {
        return t.index.empty() ? location(t.ref, 0) : location(t.ref, element(t.ref, eval(t.index[0])));
    }

    void execute(const std::vector<Stmt>& statements) {
        for (const auto& s: statements) {
            switch (s.kind) {
            case Stmt::Kind::Assign:
                store(s.target, s.index, eval(s.exprs[0]));
                break;
            case Stmt::Kind::Eval:
                eval(s.exprs[0]);
                break;
            case Stmt::Kind::If:
                if (eval(s.exprs[0]) != 0.0) {
                    execute(s.body);
                } else {
                    execute(s.orelse);
                }
                break;
            case Stmt::Kind::While: {
                int count = 0;
                while (eval(s.exprs[0]) != 0.0) {
                    if (++count > options_.while_limit) {
                        fail(fmt::format("WHILE loop exceeded {} iterations at instance {}",
                                         options_.while_limit,
                                         instance_));
                    }
                    execute(s.body);
                }
                break;
            }
            case Stmt::Kind::From: {
                double lo = eval(s.exprs[0]);
                double hi = eval(s.exprs[1]);
                double k = lo;
                for (; k <= hi; k += 1) {
                    location(s.target, 0) = k;
                    execute(s.body);
                }
                location(s.target, 0) = k;
                break;
            }
            case Stmt::Kind::Block:
                execute(s.body);
                break;
            case Stmt::Kind::Solve:
                solve(solvers_[static_cast<std::size_t>(s.solver)]);
                break;
            }
        }
    }

    void set_unknowns(const Solver& solver, const std::vector<double>& x) {
        for (std::size_t k = 0; k < x.size(); ++k) {
            const Target& t = solver.unknowns[k];
            store(t.ref, t.index, x[k]);
        }
    }

    void residuals(const Solver& solver, std::vector<double>& F) {
        for (std::size_t k = 0; k < F.size(); ++k) {
            F[k] = eval(solver.residuals[k]);
        }
    }

    void jacobian(const Solver& solver, std::vector<double>& x, const std::vector<double>& F, std::vector<double>& J) {
        std::size_t n = x.size();
        if (!options_.finite_difference_jacobian) {
            for (std::size_t k = 0; k < n * n; ++k) {
                J[k] = eval(solver.jacobian[k]);
            }
            return;
        }
        std::vector<double> shifted(n);
        for (std::size_t j = 0; j < n; ++j) {
            double h = 1e-7 * std::max(1.0, std::fabs(x[j]));
            double saved = x[j];
            x[j] = saved + h;
            set_unknowns(solver, x);
            residuals(solver, shifted);
            for (std::size_t r = 0; r < n; ++r) {
                J[r * n + j] = (shifted[r] - F[r]) / h;
            }
            x[j] = saved;
        }
        set_unknowns(solver, x);
    }

    void solve(const Solver& solver) {
        std::size_t n = solver.unknowns.size();
        std::vector<double> x(n);
        for (std::size_t k = 0; k < n; ++k) {
            x[k] = load_target(solver.unknowns[k]);
        }
        std::vector<double> F(n);
        std::vector<double> J(n * n);
        if (solver.linear) {
            residuals(solver, F);
            for (std::size_t k = 0; k < n * n; ++k) {
                J[k] = eval(solver.jacobian[k]);
            }
            solve_dense(J, F, n, true);
            for (std::size_t k = 0; k < n; ++k) {
                x[k] -= F[k];
            }
            set_unknowns(solver, x);
            return;
        }
        int iteration = 0;
        for (;; ++iteration) {
            residuals(solver, F);
            double norm = 0.0;
            for (double f: F) {
                norm = std::max(norm, std::fabs(f));
            }
            if (!std::isfinite(norm)) {
                fail(fmt::format("Newton iteration diverged at instance {}", instance_));
            }
            if (norm <= options_.newton_tolerance) {
                break;
            }
            if (iteration == options_.newton_max_iterations) {
                fail(fmt::format("Newton iteration did not converge at instance {} (residual {:g})",
                                 instance_,
                                 norm));
            }
            jacobian(solver, x, F, J);
            solve_dense(J, F, n);
            for (std::size_t k = 0; k < n; ++k) {
                x[k] -= F[k];
            }
            set_unknowns(solver, x);
        }
        stats_.solves++;
        stats_.iterations += iteration;
        stats_.max_iterations = std::max(stats_.max_iterations, iteration);
    }
};

// ---------------------------------------------------------------- public

Interpreter::Interpreter(const Node& program, Options options)
    : machine_(std::make_unique<Machine>(program, options)) {}

Interpreter::~Interpreter() = default;
Interpreter::Interpreter(Interpreter&&) noexcept = default;
Interpreter& Interpreter::operator=(Interpreter&&) noexcept = default;

const MechanismLayout& Interpreter::layout() const noexcept {
    return machine_->layout_;
}

void Interpreter::initialize(InstanceData& data) {
    machine_->initialize(data);
}

void Interpreter::current_update(InstanceData& data) {
    machine_->current_update(data);
}

void Interpreter::state_update(InstanceData& data) {
    machine_->state_update(data);
}

void Interpreter::run_kernel(const std::string& kernel, InstanceData& data, int steps) {
    void (Interpreter::*fn)(InstanceData&) = nullptr;
    if (kernel == "initialize") {
        fn = &Interpreter::initialize;
    } else if (kernel == "state_update") {
        fn = &Interpreter::state_update;
    } else if (kernel == "current_update") {
        fn = &Interpreter::current_update;
    } else {
        throw RuntimeError(fmt::format("unknown kernel '{}'", kernel));
    }
    for (int s = 0; s < steps; ++s) {
        (this->*fn)(data);
    }
}

void Interpreter::step(InstanceData& data) {
    for (auto& [_, values]: data.accumulators) {
        std::fill(values.begin(), values.end(), 0.0);
    }
    current_update(data);
    state_update(data);
    data.globals["t"] += data.globals["dt"];
}

const NewtonStats& Interpreter::newton_stats() const noexcept {
    return machine_->stats_;
}

void Interpreter::run(InstanceData& data, int steps, Trajectory* trajectory) {
    initialize(data);
    std::vector<std::string> names;
    if (trajectory != nullptr && !trajectory->names.empty()) {
        names = trajectory->names;
        trajectory->n = data.n;
        trajectory->frames.clear();
    } else if (trajectory != nullptr) {
        names = codegen::observed_variables(layout());
        names.emplace_back("rhs");
        names.emplace_back("d");
        for (const auto& ion: layout().ions) {
            names.push_back("i" + ion + "_total");
            names.push_back("di" + ion + "dv");
        }
        trajectory->names = names;
        trajectory->n = data.n;
        trajectory->frames.clear();
    }
    for (int s = 0; s < steps; ++s) {
        step(data);
        if (trajectory != nullptr) {
            trajectory->frames.push_back(observe(layout(), data, names));
        }
    }
}

std::vector<double> observe(const MechanismLayout& layout,
                            const InstanceData& data,
                            const std::vector<std::string>& names) {
    std::vector<double> frame;
    frame.reserve(names.size() * data.n);
    for (const auto& name: names) {
        if (const auto* var = layout.find(name)) {
            std::size_t width = var->length > 0 ? static_cast<std::size_t>(var->length) : 1;
            for (std::size_t e = 0; e < width; ++e) {
                const auto& values = data.slots[var->slot + e];
                frame.insert(frame.end(), values.begin(), values.end());
            }
            continue;
        }
        std::string key = name;
        if (key.size() > 6 && key.compare(key.size() - 6, 6, "_total") == 0) {
            key = key.substr(0, key.size() - 6);
        }
        auto it = data.accumulators.find(key);
        if (it == data.accumulators.end()) {
            throw RuntimeError(fmt::format("'{}' is not observable", name));
        }
        frame.insert(frame.end(), it->second.begin(), it->second.end());
    }
    return frame;
}

namespace {

double relative(double a, double b) {
    double scale = std::max({std::fabs(a), std::fabs(b), 1e-30});
    return std::fabs(a - b) / scale;
}

}  // namespace

double diff_trajectories(const InstanceData& a,
                         const MechanismLayout& layout_a,
                         const InstanceData& b,
                         const MechanismLayout& layout_b,
                         const std::vector<std::string>& names) {
    if (a.n != b.n) {
        throw RuntimeError("instance counts differ");
    }
    auto fa = observe(layout_a, a, names);
    auto fb = observe(layout_b, b, names);
    if (fa.size() != fb.size()) {
        throw RuntimeError("layouts differ");
    }
    double worst = 0.0;
    for (std::size_t k = 0; k < fa.size(); ++k) {
        worst = std::max(worst, relative(fa[k], fb[k]));
    }
    return worst;
}

double diff_trajectories(const Trajectory& a, const Trajectory& b) {
    if (a.names != b.names || a.n != b.n || a.frames.size() != b.frames.size()) {
        throw RuntimeError("trajectories have different shapes");
    }
    double worst = 0.0;
    for (std::size_t s = 0; s < a.frames.size(); ++s) {
        if (a.frames[s].size() != b.frames[s].size()) {
            throw RuntimeError("trajectories have different shapes");
        }
        for (std::size_t k = 0; k < a.frames[s].size(); ++k) {
            worst = std::max(worst, relative(a.frames[s][k], b.frames[s][k]));
        }
    }
    return worst;
}

InstanceData init(const MechanismLayout& layout, std::size_t n, std::uint64_t seed) {
    if (n == 0) {
        throw RuntimeError("at least one instance is required");
    }
    InstanceData data;
    data.n = n;
    data.slots.assign(layout.slot_count, std::vector<double>(n, 0.0));
    auto draw = [&](const std::string& name, double lo, double hi, std::vector<double>& out) {
        std::mt19937_64 rng(seed ^ fnv1a(name));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (auto& x: out) {
            x = lo + (hi - lo) * u(rng);
        }
    };
    for (const auto& var: layout.variables) {
        std::size_t width = var.length > 0 ? static_cast<std::size_t>(var.length) : 1;
        for (std::size_t e = 0; e < width; ++e) {
            auto& values = data.slots[var.slot + e];
            std::string name = var.length > 0 ? fmt::format("{}[{}]", var.name, e) : var.name;
            if (var.role == codegen::Role::Parameter) {
                std::fill(values.begin(), values.end(), var.default_value.value_or(0.0));
            } else if (var.quantity == codegen::Quantity::Potential) {
                draw(name, -80.0, 40.0, values);
            } else if (var.quantity == codegen::Quantity::Concentration) {
                // (0, 1e-3]
                draw(name, 0.0, 1.0, values);
                for (auto& x: values) {
                    x = 1e-3 * (1.0 - x);
                }
            } else {
                draw(name, 0.0, 1.0, values);
            }
        }
    }
    data.v.assign(n, 0.0);
    draw("v", -80.0, 40.0, data.v);
    for (const auto& g: layout.globals) {
        data.globals[g.name] = g.value;
    }
    return data;
}

InstanceData permute(const InstanceData& data, const std::vector<std::size_t>& perm) {
    if (perm.size() != data.n) {
        throw RuntimeError("permutation size does not match instance count");
    }
    InstanceData out = data;
    auto apply = [&](const std::vector<double>& in, std::vector<double>& result) {
        for (std::size_t i = 0; i < perm.size(); ++i) {
            result[i] = in[perm[i]];
        }
    };
    for (std::size_t s = 0; s < data.slots.size(); ++s) {
        apply(data.slots[s], out.slots[s]);
    }
    apply(data.v, out.v);
    for (const auto& [name, values]: data.accumulators) {
        apply(values, out.accumulators[name]);
    }
    return out;
}

}  // namespace nmodl::interp
