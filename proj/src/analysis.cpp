/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include "nmodl/analysis.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

#include "nmodl/odetransform.hpp"
#include "nmodl/symalg.hpp"

namespace nmodl::analysis {

using ast::Kind;
using ast::Node;

int OpCounts::total() const noexcept {
    return add + sub + mul + div + exp + log + pow + sqrt + compare + other;
}

std::optional<double> KernelProfile::flop_per_byte() const {
    int traffic = reads + writes;
    if (traffic == 0) {
        return std::nullopt;
    }
    return static_cast<double>(counts.total()) / (8.0 * traffic);
}

namespace {

void count_operator(const Node& n, OpCounts& c) {
    if (n.is(Kind::Binary)) {
        const auto& op = n.name;
        if (op == "+") {
            ++c.add;
        } else if (op == "-") {
            ++c.sub;
        } else if (op == "*") {
            ++c.mul;
        } else if (op == "/") {
            ++c.div;
        } else if (op == "^") {
            ++c.pow;
        } else {
            ++c.compare;
        }
    } else if (n.is(Kind::Unary) && n.name == "!") {
        ++c.compare;
    } else if (n.is(Kind::Call)) {
        const auto& f = n.name;
        if (f == "exp" || f == "expm1") {
            ++c.exp;
        } else if (f == "log" || f == "log10") {
            ++c.log;
        } else if (f == "pow") {
            ++c.pow;
        } else if (f == "sqrt") {
            ++c.sqrt;
        } else if (f == "fabs" || f == "sin" || f == "cos" || f == "tan" || f == "tanh" || f == "floor" ||
                   f == "ceil") {
            ++c.other;
        }
    }
}

class Census {
  public:
    Census(const Node& program, const codegen::MechanismLayout& layout)
        : layout_(layout)
        , conversion_(ode::conversion_options(program)) {
        for (const auto& block: program.children) {
            if (block.is(Kind::ProcedureBlock) || block.is(Kind::FunctionBlock)) {
                callables_[block.name] = &block;
            }
        }
    }

    OpCounts counts;
    std::set<std::string> reads;
    std::set<std::string> writes;
    bool newton = false;

    void block(const Node& body) {
        scopes_.emplace_back();
        for (const auto& s: body.children) {
            statement(s);
        }
        scopes_.pop_back();
    }

    void read(const std::string& name, const Node* index) {
        access(name, index, reads);
    }

    void write(const std::string& name, const Node* index) {
        access(name, index, writes);
    }

  private:
    const codegen::MechanismLayout& layout_;
    symalg::ConversionOptions conversion_;
    std::map<std::string, const Node*> callables_;
    std::vector<std::set<std::string>> scopes_;
    std::vector<std::string> call_stack_;

    bool is_local(const std::string& name) const {
        for (auto it = scopes_.rbegin(); it != scopes_.rend(); ++it) {
            if (it->count(name) != 0) {
                return true;
            }
        }
        return false;
    }

    void access(const std::string& name, const Node* index, std::set<std::string>& into) {
        if (is_local(name)) {
            return;
        }
        if (name == "v") {
            into.insert("v");
            return;
        }
        const auto* var = layout_.find(name);
        if (var == nullptr) {
            return;
        }
        if (var->length == 0) {
            into.insert(name);
            return;
        }
        std::optional<double> k;
        if (index != nullptr) {
            k = ast::literal_value(*index);
        }
        if (k) {
            into.insert(fmt::format("{}[{}]", name, static_cast<long>(*k)));
            return;
        }
        for (int e = 0; e < var->length; ++e) {
            into.insert(fmt::format("{}[{}]", name, e));
        }
    }

    void expression(const Node& e) {
        count_operator(e, counts);
        switch (e.kind) {
        case Kind::Identifier:
            read(e.name, nullptr);
            return;
        case Kind::Indexed:
            read(e.name, &e.children[0]);
            break;
        case Kind::Call: {
            for (const auto& a: e.children) {
                expression(a);
            }
            follow(e.name);
            return;
        }
        default:
            break;
        }
        for (const auto& c: e.children) {
            expression(c);
        }
    }

    void follow(const std::string& name) {
        auto it = callables_.find(name);
        if (it == callables_.end() ||
            std::find(call_stack_.begin(), call_stack_.end(), name) != call_stack_.end()) {
            return;
        }
        call_stack_.push_back(name);
        auto saved = std::move(scopes_);
        scopes_.clear();
        scopes_.emplace_back();
        for (const auto& c: it->second->children) {
            if (c.is(Kind::Argument)) {
                scopes_.back().insert(c.name);
            }
        }
        scopes_.back().insert(name);
        block(*it->second->body());
        scopes_ = std::move(saved);
        call_stack_.pop_back();
    }

    void statement(const Node& s) {
        switch (s.kind) {
        case Kind::LocalDecl:
            for (const auto& n: s.children) {
                scopes_.back().insert(n.name);
            }
            return;
        case Kind::Assign: {
            const Node& lhs = s.children[0];
            expression(s.children[1]);
            if (lhs.is(Kind::Indexed)) {
                expression(lhs.children[0]);
                write(lhs.name, &lhs.children[0]);
            } else {
                write(lhs.name, nullptr);
            }
            return;
        }
        case Kind::ExprStatement:
            expression(s.children[0]);
            return;
        case Kind::If:
            expression(s.children[0]);
            block(s.children[1]);
            if (s.children.size() > 2) {
                if (s.children[2].is(Kind::If)) {
                    statement(s.children[2]);
                } else {
                    block(s.children[2]);
                }
            }
            return;
        case Kind::While:
            expression(s.children[0]);
            block(s.children[1]);
            return;
        case Kind::FromLoop:
            expression(s.children[0]);
            expression(s.children[1]);
            write(s.name, nullptr);
            block(s.children[2]);
            return;
        case Kind::StatementBlock:
            block(s);
            return;
        case Kind::LinearSolve:
        case Kind::NewtonSolve: {
            newton = newton || s.is(Kind::NewtonSolve);
            auto system = ode::solver_system(s, conversion_);
            for (const auto& f: system.residuals) {
                expression(symalg::to_ast(f));
            }
            for (const auto& row: system.jacobian) {
                for (const auto& j: row) {
                    expression(symalg::to_ast(j));
                }
            }
            for (const auto& u: system.unknowns) {
                Node var = ode::variable_node(u);
                const Node* index = var.is(Kind::Indexed) ? &var.children[0] : nullptr;
                read(var.name, index);
                write(var.name, index);
            }
            return;
        }
        default:
            return;
        }
    }
};

KernelProfile profile(const std::string& mechanism, const std::string& kernel, const Census& c) {
    KernelProfile p;
    p.mechanism = mechanism;
    p.kernel = kernel;
    p.counts = c.counts;
    p.reads = static_cast<int>(c.reads.size());
    p.writes = static_cast<int>(c.writes.size());
    p.newton = c.newton;
    return p;
}

}  // namespace

OpCounts census(const Node& tree) {
    OpCounts c;
    ast::traverse(tree, [&](const Node& n) { count_operator(n, c); });
    return c;
}

std::vector<KernelProfile> census_mechanism(const Node& program, const codegen::MechanismLayout& layout) {
    auto kernels = codegen::build_kernels(program);
    std::vector<KernelProfile> out;

    Census init(program, layout);
    init.block(kernels.initialize);
    out.push_back(profile(layout.mechanism, "initialize", init));

    Census state(program, layout);
    state.block(kernels.state_update);
    out.push_back(profile(layout.mechanism, "state_update", state));

    Census current(program, layout);
    current.block(kernels.current_update);
    if (!layout.currents.empty()) {
        current.reads.insert("acc_rhs");
        current.writes.insert("acc_rhs");
        current.reads.insert("acc_d");
        current.writes.insert("acc_d");
        for (const auto& ion: layout.ions) {
            for (const auto& acc: {"acc_i" + ion, "acc_di" + ion + "dv"}) {
                current.reads.insert(acc);
                current.writes.insert(acc);
            }
        }
        std::size_t n_currents = layout.currents.size();
        int ion_currents = 0;
        for (const auto& c: layout.currents) {
            ion_currents += c.ion.empty() ? 0 : 1;
        }
        if (layout.analytic_conductance()) {
            current.counts.sub += static_cast<int>(n_currents);
            current.counts.add += ion_currents;
            for (const auto& g: layout.conductances) {
                current.counts.add += g.ion.empty() ? 1 : 2;
            }
        } else {
            // body at v + 0.001 and at v, then (c1 - c0) / 0.001 per current
            current.block(kernels.current_update);
            current.counts.add += 1;
            current.counts.sub += static_cast<int>(2 * n_currents);
            current.counts.div += static_cast<int>(n_currents);
            current.counts.add += static_cast<int>(n_currents) + 2 * ion_currents;
        }
    }
    out.push_back(profile(layout.mechanism, "current_update", current));
    return out;
}

std::string classify(const KernelProfile& profile, double threshold) {
    auto ratio = profile.flop_per_byte();
    if (!ratio || *ratio > threshold) {
        return "compute-bound";
    }
    return "memory-bound";
}

nlohmann::ordered_json characterize(const std::vector<KernelProfile>& profiles, double threshold) {
    if (profiles.empty()) {
        throw std::invalid_argument("nothing to characterize");
    }
    auto report = nlohmann::ordered_json::array();
    for (const auto& p: profiles) {
        nlohmann::ordered_json counts{{"add", p.counts.add},
                                      {"sub", p.counts.sub},
                                      {"mul", p.counts.mul},
                                      {"div", p.counts.div},
                                      {"exp", p.counts.exp},
                                      {"log", p.counts.log},
                                      {"pow", p.counts.pow},
                                      {"sqrt", p.counts.sqrt},
                                      {"compare", p.counts.compare},
                                      {"other", p.counts.other}};
        nlohmann::ordered_json entry{{"mechanism", p.mechanism},
                                     {"kernel", p.kernel},
                                     {"counts", counts},
                                     {"flops", p.counts.total()},
                                     {"reads", p.reads},
                                     {"writes", p.writes}};
        auto ratio = p.flop_per_byte();
        entry["flop_per_byte"] = ratio ? nlohmann::ordered_json(*ratio) : nlohmann::ordered_json(nullptr);
        entry["class"] = classify(p, threshold);
        entry["threshold"] = threshold;
        entry["newton"] = p.newton;
        report.push_back(std::move(entry));
    }
    return report;
}

std::string render_table(const std::vector<KernelProfile>& profiles, double threshold) {
    if (profiles.empty()) {
        throw std::invalid_argument("nothing to characterize");
    }
    std::string out = fmt::format("{:<16} {:<15} {:>6} {:>4} {:>4} {:>4} {:>4} {:>4} {:>4} {:>5} {:>6} {:>7}  {}\n",
                                  "mechanism",
                                  "kernel",
                                  "flops",
                                  "add",
                                  "sub",
                                  "mul",
                                  "div",
                                  "exp",
                                  "log",
                                  "reads",
                                  "writes",
                                  "flop/B",
                                  "class");
    for (const auto& p: profiles) {
        auto ratio = p.flop_per_byte();
        out += fmt::format("{:<16} {:<15} {:>6} {:>4} {:>4} {:>4} {:>4} {:>4} {:>4} {:>5} {:>6} {:>7}  {}{}\n",
                           p.mechanism,
                           p.kernel,
                           p.counts.total(),
                           p.counts.add,
                           p.counts.sub,
                           p.counts.mul,
                           p.counts.div,
                           p.counts.exp,
                           p.counts.log,
                           p.reads,
                           p.writes,
                           ratio ? fmt::format("{:.3f}", *ratio) : std::string("-"),
                           classify(p, threshold),
                           p.newton ? " (Newton, x iterations)" : "");
    }
    return out;
}

}  // namespace nmodl::analysis
