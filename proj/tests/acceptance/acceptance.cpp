/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

// Acceptance checks. One line per criterion; exit status is the number of
// failed criteria.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "nmodl/analysis.hpp"
#include "nmodl/codegen.hpp"
#include "nmodl/interp.hpp"
#include "nmodl/parser.hpp"
#include "nmodl/pipeline.hpp"
#include "nmodl/printer.hpp"

using namespace nmodl;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<fs::path> corpus() {
    std::vector<fs::path> files;
    for (const auto& entry: fs::directory_iterator(CORPUS_DIR)) {
        if (entry.path().extension() == ".mod") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

ast::Node corpus_file(const std::string& name) {
    return parser::parse_file((fs::path(CORPUS_DIR) / name).string());
}

ast::Node lowered(const ast::Node& parsed, const std::string& passes, ode::LoweringOptions lowering = {}) {
    PipelineOptions options;
    options.passes = parse_pass_list(passes);
    options.lowering = lowering;
    return run_pipeline(parsed, options).program;
}

std::vector<const ast::Node*> solver_nodes(const ast::Node& program, ast::Kind kind) {
    std::vector<const ast::Node*> out;
    ast::traverse(program, [&](const ast::Node& n) {
        if (n.is(kind)) {
            out.push_back(&n);
        }
    });
    return out;
}

double relative(double a, double b) {
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-30});
}

std::int64_t ulp_distance(double a, double b) {
    auto key = [](double x) {
        auto bits = std::bit_cast<std::int64_t>(x);
        return bits < 0 ? std::numeric_limits<std::int64_t>::min() - bits : bits;
    };
    auto ka = key(a);
    auto kb = key(b);
    return ka > kb ? ka - kb : kb - ka;
}

// ------------------------------------------------------------------ 1

Outcome round_trip() {
    auto start = Clock::now();
    auto files = corpus();
    int failures = 0;
    std::string failed;
    for (const auto& path: files) {
        auto first = parser::parse_file(path.string());
        auto text1 = codegen::emit_nmodl(first);
        auto second = parser::parse_source(text1);
        auto text2 = codegen::emit_nmodl(second);
        if (!ast::structurally_equal(first, second) || text1 != text2) {
            ++failures;
            failed += " " + path.filename().string();
        }
    }
    double elapsed = seconds_since(start);
    bool pass = failures == 0 && files.size() >= 20 && elapsed < 5.0;
    return {pass,
            fmt::format("{} files, {} failed{}, {:.2f} s (limit 5 s)", files.size(), failures, failed, elapsed)};
}

// ------------------------------------------------------------------ 2

Outcome differential() {
    auto start = Clock::now();
    const std::vector<std::string> names{"fold", "unroll", "inline", "localize"};
    VerifyOptions verify;
    verify.instances = 256;
    verify.steps = 100;
    verify.seed = 42;
    double worst = 0.0;
    std::string worst_case;
    int runs = 0;
    for (const auto& path: corpus()) {
        auto parsed = parser::parse_file(path.string());
        for (unsigned mask = 0; mask < 16; ++mask) {
            std::string list;
            for (unsigned b = 0; b < 4; ++b) {
                if (mask & (1U << b)) {
                    list += (list.empty() ? "" : ",") + names[b];
                }
            }
            PipelineOptions options;
            options.passes = parse_pass_list(list.empty() ? "none" : list);
            auto result = verify_pipeline(parsed, options, verify);
            ++runs;
            if (result.deviation > worst) {
                worst = result.deviation;
                worst_case = fmt::format("{} [{}]", path.filename().string(), list.empty() ? "none" : list);
            }
        }
    }
    double elapsed = seconds_since(start);
    return {worst <= 1e-12 && elapsed < 60.0,
            fmt::format("{} runs, max relative deviation {:.3e} ({}), {:.1f} s (limit 60 s)",
                        runs,
                        worst,
                        worst_case.empty() ? "every run identical" : worst_case,
                        elapsed)};
}

// ------------------------------------------------------------------ 3

const char* relaxation_source = R"(
NEURON {
    SUFFIX relax
    RANGE yinf, tau
}
PARAMETER {
    yinf = 0.5
    tau = 2
}
STATE { y }
BREAKPOINT { SOLVE states METHOD cnexp }
DERIVATIVE states { y' = (yinf - y) / tau }
)";

Outcome cnexp_and_pade() {
    auto parsed = parser::parse_source(relaxation_source);
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    // Exact exponential update, one step at a time against the closed form.
    // Gating variables in [0, 1] and potentials in [-90, -10] mV: when y and
    // yinf have opposite signs the final sum cancels and no double evaluation
    // is within a few ulp of a result near zero; that case is only reported.
    interp::Interpreter exact(lowered(parsed, "all"));
    const auto& layout = exact.layout();
    auto slot = [&](const std::string& n) { return layout.find(n)->slot; };
    const std::size_t n = 1000;
    auto worst_ulp_for = [&](double lo, double hi, double& abs_err) {
        auto data = interp::init(layout, n, 42);
        for (std::size_t i = 0; i < n; ++i) {
            data.slots[slot("yinf")][i] = lo + (hi - lo) * unit(rng);
            data.slots[slot("tau")][i] = 0.1 + 10.0 * unit(rng);
            data.slots[slot("y")][i] = lo + (hi - lo) * unit(rng);
        }
        std::int64_t worst = 0;
        for (double dt: {0.0125, 0.025, 0.05, 0.1, 1.0}) {
            data.globals["dt"] = dt;
            for (int step = 0; step < 20; ++step) {
                auto before = data.slots[slot("y")];
                exact.run_kernel("state_update", data, 1);
                for (std::size_t i = 0; i < n; ++i) {
                    long double yinf = data.slots[slot("yinf")][i];
                    long double tau = data.slots[slot("tau")][i];
                    long double closed = yinf + (before[i] - yinf) * std::exp(-static_cast<long double>(dt) / tau);
                    double got = data.slots[slot("y")][i];
                    worst = std::max(worst, ulp_distance(got, static_cast<double>(closed)));
                    abs_err = std::max(abs_err, static_cast<double>(std::fabs(got - closed)));
                }
                // keep the range populated
                for (std::size_t i = 0; i < n; i += 7) {
                    data.slots[slot("y")][i] = lo + (hi - lo) * unit(rng);
                }
            }
        }
        return worst;
    };
    double unused = 0.0;
    double mixed_abs = 0.0;
    std::int64_t worst_ulp = std::max(worst_ulp_for(0.0, 1.0, unused), worst_ulp_for(-90.0, -10.0, unused));
    std::int64_t mixed_ulp = worst_ulp_for(-1.0, 1.0, mixed_abs);

    // Pade: truncation error of one step (error / dt) against dt
    ode::LoweringOptions lowering;
    lowering.pade = true;
    interp::Interpreter pade(lowered(parsed, "all", lowering));
    const std::vector<double> steps{0.1, 0.05, 0.025, 0.0125};
    std::vector<double> log_dt;
    std::vector<double> log_err;
    std::vector<double> log_global;
    for (double dt: steps) {
        auto d = interp::init(pade.layout(), 1, 42);
        const auto& pl = pade.layout();
        d.slots[pl.find("yinf")->slot][0] = 0.25;
        d.slots[pl.find("tau")->slot][0] = 1.0;
        d.slots[pl.find("y")->slot][0] = 1.0;
        d.globals["dt"] = dt;
        auto one = d;
        pade.run_kernel("state_update", one, 1);
        long double closed = 0.25L + 0.75L * std::exp(-static_cast<long double>(dt));
        double err = std::fabs(static_cast<double>(one.slots[pl.find("y")->slot][0] - closed)) / dt;
        log_dt.push_back(std::log(dt));
        log_err.push_back(std::log(err));
        // error at t = 1
        auto many = d;
        pade.run_kernel("state_update", many, static_cast<int>(std::lround(1.0 / dt)));
        long double at_one = 0.25L + 0.75L * std::exp(-1.0L);
        log_global.push_back(std::log(std::fabs(static_cast<double>(many.slots[pl.find("y")->slot][0] - at_one))));
    }
    auto slope = [&](const std::vector<double>& ys) {
        double mx = std::accumulate(log_dt.begin(), log_dt.end(), 0.0) / log_dt.size();
        double my = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
        double num = 0.0;
        double den = 0.0;
        for (std::size_t k = 0; k < ys.size(); ++k) {
            num += (log_dt[k] - mx) * (ys[k] - my);
            den += (log_dt[k] - mx) * (log_dt[k] - mx);
        }
        return num / den;
    };
    double order = slope(log_err);
    double global_order = slope(log_global);
    bool pass = worst_ulp <= 4 && std::fabs(order - 2.0) <= 0.2;
    return {pass,
            fmt::format("exact update max {} ulp per step (limit 4; sign-crossing draws {} ulp, {:.1e} absolute); "
                        "Pade order {:.3f} from one-step error per unit step (2.0 +- 0.2), {:.3f} at t = 1",
                        worst_ulp,
                        mixed_ulp,
                        mixed_abs,
                        order,
                        global_order)};
}

// ------------------------------------------------------------------ 4

// max |J_sym - J_fd| / max |J_sym| at one point
double jacobian_error(const std::vector<symalg::SymExpr>& residuals,
                      const std::vector<std::vector<symalg::SymExpr>>& jacobian,
                      const std::vector<std::string>& unknowns,
                      std::map<std::string, double> env) {
    double diff = 0.0;
    double scale = 0.0;
    for (std::size_t j = 0; j < unknowns.size(); ++j) {
        double x = env[unknowns[j]];
        double h = 1e-5 * std::max(1.0, std::fabs(x));
        for (std::size_t r = 0; r < residuals.size(); ++r) {
            env[unknowns[j]] = x + h;
            double plus = symalg::evaluate(residuals[r], env);
            env[unknowns[j]] = x - h;
            double minus = symalg::evaluate(residuals[r], env);
            env[unknowns[j]] = x;
            double fd = (plus - minus) / (2.0 * h);
            double exact = symalg::evaluate(jacobian[r][j], env);
            diff = std::max(diff, std::fabs(exact - fd));
            scale = std::max(scale, std::fabs(exact));
        }
    }
    return scale == 0.0 ? diff : diff / scale;
}

std::set<std::string> free_variables(const std::vector<symalg::SymExpr>& exprs) {
    std::set<std::string> out;
    for (const auto& e: exprs) {
        auto v = symalg::free_variables(e);
        out.insert(v.begin(), v.end());
    }
    return out;
}

Outcome jacobians() {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> point(0.5, 1.5);
    double worst = 0.0;
    int systems = 0;
    std::vector<std::string> names;
    for (const auto& path: corpus()) {
        auto program = lowered(parser::parse_file(path.string()), "all");
        auto conversion = ode::conversion_options(program);
        for (const auto* node: solver_nodes(program, ast::Kind::NewtonSolve)) {
            auto system = ode::solver_system(*node, conversion);
            auto vars = free_variables(system.residuals);
            for (int k = 0; k < 100; ++k) {
                std::map<std::string, double> env;
                for (const auto& v: vars) {
                    env[v] = point(rng);
                }
                worst = std::max(worst, jacobian_error(system.residuals, system.jacobian, system.unknowns, env));
            }
            ++systems;
            names.push_back(path.stem().string());
        }
    }

    // random polynomial / exponential systems
    using namespace symalg;
    std::uniform_real_distribution<double> coef(-2.0, 2.0);
    std::uniform_real_distribution<double> at(-1.0, 1.0);
    for (int s = 0; s < 20; ++s) {
        std::size_t n = 1 + s % 4;
        std::vector<std::string> unknowns;
        for (std::size_t k = 0; k < n; ++k) {
            unknowns.push_back(fmt::format("x{}", k));
        }
        auto pick = [&] { return variable(unknowns[rng() % n]); };
        std::vector<SymExpr> residuals;
        for (std::size_t r = 0; r < n; ++r) {
            SymExpr f = constant(coef(rng));
            for (std::size_t j = 0; j < n; ++j) {
                f = f + constant(coef(rng)) * variable(unknowns[j]);
            }
            f = f + constant(coef(rng)) * pick() * pick();
            f = f + constant(coef(rng)) * power(pick(), constant(3));
            f = f + constant(coef(rng)) * call("exp", {constant(coef(rng)) * pick()});
            f = f + pick() * call("exp", {pick() * pick()});
            residuals.push_back(f);
        }
        std::vector<std::vector<SymExpr>> jacobian(n);
        for (std::size_t r = 0; r < n; ++r) {
            for (const auto& u: unknowns) {
                jacobian[r].push_back(differentiate(residuals[r], u));
            }
        }
        for (int k = 0; k < 100; ++k) {
            std::map<std::string, double> env;
            for (const auto& u: unknowns) {
                env[u] = at(rng);
            }
            worst = std::max(worst, jacobian_error(residuals, jacobian, unknowns, env));
        }
        ++systems;
    }
    std::string corpus_names;
    for (const auto& name: names) {
        corpus_names += (corpus_names.empty() ? "" : ",") + name;
    }
    return {worst <= 1e-6 && names.size() >= 1,
            fmt::format("{} systems ({} from corpus: {}; 20 random), 100 points each, max relative error {:.3e} "
                        "(limit 1e-6)",
                        systems,
                        names.size(),
                        corpus_names,
                        worst)};
}

// ------------------------------------------------------------------ 5

// State and accumulator values of two runs, compared by name.
double compare_runs(const ast::Node& a, const ast::Node& b, std::size_t n, int steps, std::uint64_t seed) {
    interp::Interpreter ia(a);
    interp::Interpreter ib(b);
    auto da = interp::init(ia.layout(), n, seed);
    auto db = interp::init(ib.layout(), n, seed);
    interp::Trajectory ta;
    interp::Trajectory tb;
    ia.run(da, steps, &ta);
    ib.run(db, steps, &tb);
    return interp::diff_trajectories(ta, tb);
}

Outcome symbolic_elimination() {
    double worst_ge = 0.0;
    double worst_cse = 0.0;
    std::vector<std::string> names;
    ode::LoweringOptions symbolic;
    symbolic.symbolic_limit = 3;
    ode::LoweringOptions runtime;
    runtime.symbolic_limit = 0;
    ode::LoweringOptions no_cse = symbolic;
    no_cse.solver_cse = false;
    for (const auto& path: corpus()) {
        auto parsed = parser::parse_file(path.string());
        auto numeric = lowered(parsed, "all", runtime);
        auto solves = solver_nodes(numeric, ast::Kind::LinearSolve);
        bool small = !solves.empty() && std::all_of(solves.begin(), solves.end(), [](const ast::Node* s) {
            return ode::solver_system(*s).unknowns.size() <= 3;
        });
        if (!small) {
            continue;
        }
        auto compiled = lowered(parsed, "all", symbolic);
        if (!solver_nodes(compiled, ast::Kind::LinearSolve).empty()) {
            continue;
        }
        names.push_back(path.stem().string());
        // 200 parameter draws, one step each, then a longer run
        worst_ge = std::max(worst_ge, compare_runs(compiled, numeric, 200, 1, 42));
        worst_ge = std::max(worst_ge, compare_runs(compiled, numeric, 200, 100, 7));
        worst_cse = std::max(worst_cse, compare_runs(compiled, lowered(parsed, "all", no_cse), 200, 100, 42));
    }
    const double ulp_scale = 4 * std::numeric_limits<double>::epsilon();
    std::string list;
    for (const auto& name: names) {
        list += (list.empty() ? "" : ",") + name;
    }
    return {!names.empty() && worst_ge <= 1e-10 && worst_cse <= ulp_scale,
            fmt::format("systems from {}; symbolic vs LU max relative error {:.3e} (limit 1e-10); CSE on vs off "
                        "{:.3e} (limit {:.1e})",
                        list,
                        worst_ge,
                        worst_cse,
                        ulp_scale)};
}

// ------------------------------------------------------------------ 6

Outcome conservation() {
    double worst = 0.0;
    std::string detail;
    for (const std::string name: {"kin3.mod", "chain4.mod", "kinarray.mod", "sparse3.mod"}) {
        interp::Interpreter in(lowered(corpus_file(name), "all"));
        const auto& layout = in.layout();
        std::vector<std::size_t> states;
        for (const auto& v: layout.variables) {
            if (v.role == codegen::Role::State) {
                for (int e = 0; e < std::max(1, v.length); ++e) {
                    states.push_back(v.slot + static_cast<std::size_t>(e));
                }
            }
        }
        auto data = interp::init(layout, 256, 42);
        in.run(data, 0);
        auto total = [&](std::size_t i) {
            double s = 0.0;
            for (auto slot: states) {
                s += data.slots[slot][i];
            }
            return s;
        };
        std::vector<double> initial(data.n);
        for (std::size_t i = 0; i < data.n; ++i) {
            initial[i] = total(i);
        }
        double mech_worst = 0.0;
        for (int step = 0; step < 1000; ++step) {
            in.step(data);
            for (std::size_t i = 0; i < data.n; ++i) {
                mech_worst = std::max(mech_worst, relative(total(i), initial[i]));
            }
        }
        worst = std::max(worst, mech_worst);
        detail += fmt::format("{}{} {:.2e}", detail.empty() ? "" : ", ", name, mech_worst);
    }
    return {worst <= 1e-12, fmt::format("1000 steps, 256 instances, max relative drift of the state sum: {} (limit 1e-12)", detail)};
}

// ------------------------------------------------------------------ 7

interp::InstanceData single_instance(const interp::InstanceData& all, std::size_t i) {
    interp::InstanceData one;
    one.n = 1;
    one.globals = all.globals;
    one.v = {all.v[i]};
    for (const auto& column: all.slots) {
        one.slots.push_back({column[i]});
    }
    for (const auto& [name, column]: all.accumulators) {
        one.accumulators[name] = {column[i]};
    }
    return one;
}

Outcome newton_iterations() {
    bool pass = true;
    std::string detail;
    for (const std::string name: {"nldecay.mod", "dimer.mod", "nlblock.mod", "cacum.mod"}) {
        auto program = lowered(corpus_file(name), "all");
        interp::Options fd_options;
        fd_options.finite_difference_jacobian = true;
        interp::Interpreter exact(program);
        interp::Interpreter fd(program, fd_options);
        auto all = interp::init(exact.layout(), 256, 42);
        int violations = 0;
        int worst_exact = 0;
        int worst_fd = 0;
        for (std::size_t i = 0; i < all.n; ++i) {
            auto a = single_instance(all, i);
            auto b = a;
            exact.run(a, 0);
            fd.run(b, 0);
            for (int step = 0; step < 100; ++step) {
                auto e0 = exact.newton_stats();
                auto f0 = fd.newton_stats();
                exact.step(a);
                fd.step(b);
                long e_iter = exact.newton_stats().iterations - e0.iterations;
                long f_iter = fd.newton_stats().iterations - f0.iterations;
                long solves = exact.newton_stats().solves - e0.solves;
                if (e_iter > f_iter + solves) {
                    ++violations;
                }
            }
        }
        const auto& es = exact.newton_stats();
        const auto& fs = fd.newton_stats();
        worst_exact = es.max_iterations;
        worst_fd = fs.max_iterations;
        bool ok = violations == 0 && es.solves > 0 && worst_exact <= 50 && worst_fd <= 50;
        pass = pass && ok;
        detail += fmt::format("{}{}: exact mean {:.2f} max {}, fd mean {:.2f} max {}, {} violations",
                              detail.empty() ? "" : "; ",
                              name,
                              static_cast<double>(es.iterations) / std::max(1L, es.solves),
                              worst_exact,
                              static_cast<double>(fs.iterations) / std::max(1L, fs.solves),
                              worst_fd,
                              violations);
    }
    return {pass, detail};
}

// ------------------------------------------------------------------ 8

Outcome localization() {
    auto parsed = corpus_file("cat.mod");
    auto profiles = [&](const std::string& passes) {
        auto program = lowered(parsed, passes);
        return analysis::census_mechanism(program, codegen::build_layout(program));
    };
    auto find = [](const std::vector<analysis::KernelProfile>& ps, const std::string& kernel) {
        return *std::find_if(ps.begin(), ps.end(), [&](const auto& p) { return p.kernel == kernel; });
    };
    auto before = find(profiles("none"), "state_update");
    auto after_profiles = profiles("inline,localize");
    auto after = find(after_profiles, "state_update");
    auto current = find(after_profiles, "current_update");
    bool fewer = after.reads + after.writes < before.reads + before.writes;
    bool same_flops = after.counts == before.counts;
    auto state_class = analysis::classify(after);
    auto current_class = analysis::classify(current);
    bool pass = fewer && same_flops && state_class == "compute-bound" && current_class == "memory-bound";
    return {pass,
            fmt::format("state kernel {} -> {} slot accesses, flops {} -> {}, {:.3f} flop/B ({}); current kernel "
                        "{:.3f} flop/B ({})",
                        before.reads + before.writes,
                        after.reads + after.writes,
                        before.counts.total(),
                        after.counts.total(),
                        after.flop_per_byte().value_or(0.0),
                        state_class,
                        current.flop_per_byte().value_or(0.0),
                        current_class)};
}

// ------------------------------------------------------------------ 9

Outcome independence() {
    int permutation_failures = 0;
    int diff_failures = 0;
    std::string failed;
    auto files = corpus();
    for (const auto& path: files) {
        auto program = lowered(parser::parse_file(path.string()), "all");
        interp::Interpreter in(program);
        auto data = interp::init(in.layout(), 256, 42);
        std::vector<std::size_t> perm(data.n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), std::mt19937_64(42));
        auto shuffled = interp::permute(data, perm);
        in.run(data, 100);
        in.run(shuffled, 100);
        std::vector<std::size_t> inverse(perm.size());
        for (std::size_t i = 0; i < perm.size(); ++i) {
            inverse[perm[i]] = i;
        }
        auto back = interp::permute(shuffled, inverse);
        if (back.slots != data.slots || back.accumulators != data.accumulators || back.v != data.v) {
            ++permutation_failures;
            failed += " " + path.stem().string();
        }

        auto layout = codegen::build_layout(program);
        Diagnostics diags;
        auto scalar = codegen::emit_scalar(program, layout);
        auto simd = codegen::emit_simd(program, layout, diags);
        if (codegen::normalize_backend_text(scalar.text) != codegen::normalize_backend_text(simd.text)) {
            ++diff_failures;
            failed += " " + path.stem().string() + "(diff)";
        }
    }
    return {permutation_failures == 0 && diff_failures == 0,
            fmt::format("{} mechanisms, 256 instances, 100 steps: {} permutation mismatches, {} backend diffs outside "
                        "the whitelist{}",
                        files.size(),
                        permutation_failures,
                        diff_failures,
                        failed)};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"corpus round-trip", round_trip},
        {"differential semantics", differential},
        {"cnexp exactness and Pade order", cnexp_and_pade},
        {"Jacobian exactness", jacobians},
        {"symbolic elimination vs LU", symbolic_elimination},
        {"conservation", conservation},
        {"Newton iterations", newton_iterations},
        {"localization and classification", localization},
        {"instance independence", independence},
    };
    int failed = 0;
    int index = 0;
    for (const auto& [name, check]: criteria) {
        ++index;
        Outcome outcome;
        try {
            outcome = check();
        } catch (const std::exception& e) {
            outcome = {false, fmt::format("exception: {}", e.what())};
        }
        failed += outcome.pass ? 0 : 1;
        std::cout << fmt::format("[{}] {} {}: {}\n", outcome.pass ? "PASS" : "FAIL", index, name, outcome.detail)
                  << std::flush;
    }
    std::cout << fmt::format("{} of {} criteria passed\n", index - failed, index);
    return failed;
}
