/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <doctest.h>

#include "nmodl/interp.hpp"
#include "nmodl/parser.hpp"
#include "nmodl/pipeline.hpp"

using namespace nmodl;
using interp::InstanceData;
using interp::Interpreter;

namespace {

ast::Node lowered(const std::string& source, const std::string& passes = "none") {
    PipelineOptions options;
    options.passes = parse_pass_list(passes);
    return run_pipeline(parser::parse_source(source), options).program;
}

std::string read_corpus(const std::string& name) {
    std::ifstream in(std::string(CORPUS_DIR) + "/" + name);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

double value(const Interpreter& in, const InstanceData& data, const std::string& name, std::size_t i = 0) {
    const auto* var = in.layout().find(name);
    REQUIRE(var != nullptr);
    return data.slots[var->slot][i];
}

const char* decay_source = R"(
NEURON { SUFFIX decay }
PARAMETER { yinf = 1 tau = 1 }
STATE { y }
INITIAL { y = 0 }
BREAKPOINT { SOLVE d METHOD cnexp }
DERIVATIVE d { y' = (yinf - y) / tau }
)";

const char* ab_source = R"(
NEURON { SUFFIX ab }
PARAMETER { kf = 2 kb = 1 }
STATE { A B }
INITIAL { A = 1 B = 0 }
BREAKPOINT { SOLVE scheme METHOD sparse }
KINETIC scheme {
    ~ A <-> B (kf, kb)
    CONSERVE A + B = 1
}
)";

const char* square_source = R"(
NEURON { SUFFIX sq }
STATE { y }
INITIAL { y = 1 }
BREAKPOINT { SOLVE d METHOD derivimplicit }
DERIVATIVE d { y' = -y * y }
)";

const char* linear_newton_source = R"(
NEURON { SUFFIX lin }
PARAMETER { k = 3 }
STATE { y }
INITIAL { y = 1 }
BREAKPOINT { SOLVE d METHOD derivimplicit }
DERIVATIVE d { y' = -k * y }
)";

}  // namespace

TEST_CASE("cnexp decay after one step") {
    Interpreter in(lowered(decay_source));
    auto data = interp::init(in.layout(), 4, 42);
    in.run(data, 1);
    for (std::size_t i = 0; i < data.n; ++i) {
        CHECK(value(in, data, "y", i) == doctest::Approx(0.024690087971667385).epsilon(1e-15));
    }
    CHECK(data.globals.at("t") == doctest::Approx(0.025));
}

TEST_CASE("kinetic A<->B reaches kb/(kf+kb) and conserves A+B") {
    Interpreter in(lowered(ab_source));
    auto data = interp::init(in.layout(), 3, 7);
    in.initialize(data);
    for (int s = 0; s < 2000; ++s) {
        in.step(data);
        for (std::size_t i = 0; i < data.n; ++i) {
            REQUIRE(std::fabs(value(in, data, "A", i) + value(in, data, "B", i) - 1.0) <= 1e-12);
        }
    }
    CHECK(value(in, data, "A") == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(value(in, data, "B") == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("zero steps leave data unchanged") {
    Interpreter in(lowered(read_corpus("cat.mod")));
    auto data = interp::init(in.layout(), 8, 42);
    auto copy = data;
    for (const auto& kernel: in.layout().kernels) {
        in.run_kernel(kernel, data, 0);
    }
    CHECK(data.slots == copy.slots);
    CHECK(data.v == copy.v);
    CHECK(data.globals == copy.globals);
    CHECK_THROWS_AS(in.run_kernel("bogus", data, 1), interp::RuntimeError);
}

TEST_CASE("init is reproducible and uses parameter defaults") {
    Interpreter in(lowered(read_corpus("cat.mod")));
    auto a = interp::init(in.layout(), 16, 42);
    auto b = interp::init(in.layout(), 16, 42);
    CHECK(a.slots == b.slots);
    CHECK(a.v == b.v);
    auto c = interp::init(in.layout(), 16, 43);
    CHECK(a.v != c.v);
    const auto* g = in.layout().find("gcatbar");
    REQUIRE(g != nullptr);
    for (double x: a.slots[g->slot]) {
        CHECK(x == 0.003);
    }
    for (double x: a.v) {
        CHECK(x >= -80.0);
        CHECK(x <= 40.0);
    }
    auto eca = a.slots[in.layout().find("eca")->slot];
    CHECK(std::all_of(eca.begin(), eca.end(), [](double x) { return x >= -80 && x <= 40; }));
    auto one = interp::init(in.layout(), 1, 42);
    CHECK(one.v.size() == 1);
    CHECK(one.slots[g->slot].size() == 1);
    CHECK_THROWS_AS(interp::init(in.layout(), 0, 42), interp::RuntimeError);
}

TEST_CASE("concentrations are drawn from (0, 1e-3]") {
    const char* src = R"(
NEURON { SUFFIX cc USEION ca READ cai WRITE ica RANGE g }
PARAMETER { g = 1 }
ASSIGNED { v cai ica }
BREAKPOINT { ica = g * cai * (v - 20) }
)";
    Interpreter in(lowered(src));
    auto data = interp::init(in.layout(), 64, 1);
    for (double x: data.slots[in.layout().find("cai")->slot]) {
        CHECK(x > 0.0);
        CHECK(x <= 1e-3);
    }
}

TEST_CASE("Newton on y' = -y^2 matches the implicit Euler root") {
    Interpreter in(lowered(square_source));
    auto data = interp::init(in.layout(), 2, 42);
    data.globals["dt"] = 0.1;
    in.run(data, 1);
    // root of y + 0.1 y^2 - 1 on [0, 1] by bisection
    double lo = 0.0;
    double hi = 1.0;
    for (int k = 0; k < 200; ++k) {
        double mid = 0.5 * (lo + hi);
        (mid + 0.1 * mid * mid - 1.0 > 0 ? hi : lo) = mid;
    }
    CHECK(value(in, data, "y") == doctest::Approx(lo).epsilon(1e-12));
    CHECK(value(in, data, "y") == doctest::Approx(0.9160797831).epsilon(1e-9));
    CHECK(in.newton_stats().solves == 2);
    CHECK(in.newton_stats().max_iterations <= 6);
}

TEST_CASE("Newton on a linear system converges in one iteration") {
    Interpreter in(lowered(linear_newton_source));
    auto data = interp::init(in.layout(), 3, 42);
    in.run(data, 5);
    CHECK(in.newton_stats().max_iterations == 1);
    CHECK(value(in, data, "y") == doctest::Approx(std::pow(1.0 / (1.0 + 3 * 0.025), 5)).epsilon(1e-13));
}

TEST_CASE("finite-difference Jacobian needs no fewer iterations") {
    Interpreter exact(lowered(square_source));
    Interpreter fd(lowered(square_source), interp::Options{true});
    auto a = interp::init(exact.layout(), 4, 42);
    auto b = a;
    exact.run(a, 20);
    fd.run(b, 20);
    CHECK(exact.newton_stats().iterations <= fd.newton_stats().iterations + 1);
    CHECK(interp::diff_trajectories(a, exact.layout(), b, fd.layout(), {"y"}) < 1e-10);
}

TEST_CASE("Newton failure reports the instance") {
    Interpreter in(lowered(square_source), interp::Options{false, 1e-12, 0});
    auto data = interp::init(in.layout(), 2, 42);
    in.initialize(data);
    try {
        in.state_update(data);
        FAIL("expected a Newton failure");
    } catch (const interp::RuntimeError& e) {
        CHECK(std::string(e.what()).find("instance 0") != std::string::npos);
        CHECK(std::string(e.what()).find("residual") != std::string::npos);
    }
}

TEST_CASE("non-finite values and runaway WHILE loops abort") {
    const char* bad = R"(
NEURON { SUFFIX bad RANGE x }
ASSIGNED { x }
INITIAL { x = log(-1) }
)";
    Interpreter in(lowered(bad));
    auto data = interp::init(in.layout(), 3, 42);
    try {
        in.initialize(data);
        FAIL("expected a non-finite error");
    } catch (const interp::RuntimeError& e) {
        CHECK(std::string(e.what()).find("instance 0") != std::string::npos);
    }

    const char* loop = R"(
NEURON { SUFFIX spin RANGE x }
ASSIGNED { x }
INITIAL {
    x = 0
    WHILE (x < 1) { x = x * 2 }
}
)";
    Interpreter spin(lowered(loop));
    auto d2 = interp::init(spin.layout(), 1, 42);
    CHECK_THROWS_WITH_AS(spin.initialize(d2), doctest::Contains("WHILE"), interp::RuntimeError);
}

TEST_CASE("control flow, loops, functions and arrays") {
    const char* src = R"(
NEURON { SUFFIX misc RANGE x, s, f, w }
PARAMETER { n = 4 }
ASSIGNED { x[3] s f w }
INITIAL {
    LOCAL k
    FROM k = 0 TO 2 { x[k] = k * k }
    s = 0
    FROM k = 1 TO n { s = s + k }
    f = fact(5)
    w = 1
    WHILE (w < 100) { w = w * 3 }
    IF (s > 100) { w = -1 } ELSE IF (s > 5) { w = w + 1 } ELSE { w = 0 }
}
FUNCTION fact(m) {
    IF (m <= 1) { fact = 1 } ELSE { fact = m * fact(m - 1) }
}
)";
    Interpreter in(lowered(src));
    auto data = interp::init(in.layout(), 2, 42);
    in.initialize(data);
    const auto* x = in.layout().find("x");
    REQUIRE(x != nullptr);
    CHECK(data.slots[x->slot + 0][1] == 0);
    CHECK(data.slots[x->slot + 1][1] == 1);
    CHECK(data.slots[x->slot + 2][1] == 4);
    CHECK(value(in, data, "s") == 10);
    CHECK(value(in, data, "f") == 120);
    CHECK(value(in, data, "w") == 244);
}

TEST_CASE("current update accumulates currents and conductances") {
    Interpreter in(lowered(read_corpus("cat.mod")));
    REQUIRE(in.layout().analytic_conductance());
    auto data = interp::init(in.layout(), 8, 42);
    in.initialize(data);
    in.step(data);
    const auto& d = data.accumulators.at("d");
    const auto& rhs = data.accumulators.at("rhs");
    const auto& ica = data.accumulators.at("ica");
    for (std::size_t i = 0; i < data.n; ++i) {
        CHECK(rhs[i] == doctest::Approx(-ica[i]));
        CHECK(d[i] > 0.0);
        CHECK(data.accumulators.at("dicadv")[i] == doctest::Approx(d[i]));
    }
}

TEST_CASE("numeric conductance agrees with the analytic one for ohmic currents") {
    const char* ohmic = R"(
NEURON { SUFFIX leak NONSPECIFIC_CURRENT i RANGE g, e }
PARAMETER { g = 0.001 e = -65 }
ASSIGNED { v i }
BREAKPOINT { i = g * (v - e) }
)";
    const char* nonohmic = R"(
NEURON { SUFFIX sq NONSPECIFIC_CURRENT i RANGE g, e }
PARAMETER { g = 0.001 e = -65 }
ASSIGNED { v i }
BREAKPOINT { i = g * (v - e) * (v - e) }
)";
    Interpreter a(lowered(ohmic));
    CHECK(a.layout().analytic_conductance());
    auto da = interp::init(a.layout(), 4, 42);
    a.step(da);
    for (double x: da.accumulators.at("d")) {
        CHECK(x == doctest::Approx(0.001).epsilon(1e-14));
    }

    Interpreter b(lowered(nonohmic));
    CHECK_FALSE(b.layout().analytic_conductance());
    auto db = interp::init(b.layout(), 4, 42);
    b.step(db);
    for (std::size_t i = 0; i < db.n; ++i) {
        double exact = 0.002 * (db.v[i] + 65);
        CHECK(db.accumulators.at("d")[i] == doctest::Approx(exact + 0.001 * 0.001).epsilon(1e-6));
        CHECK(db.v[i] == da.v[i]);
    }
}

TEST_CASE("instance permutation commutes with stepping") {
    Interpreter in(lowered(read_corpus("cat.mod"), "all"));
    auto data = interp::init(in.layout(), 32, 42);
    std::vector<std::size_t> perm(data.n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(5));
    auto shuffled = interp::permute(data, perm);
    in.run(data, 20);
    in.run(shuffled, 20);
    std::vector<std::size_t> inverse(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        inverse[perm[i]] = i;
    }
    auto back = interp::permute(shuffled, inverse);
    CHECK(back.slots == data.slots);
    CHECK(back.accumulators == data.accumulators);
}

TEST_CASE("diff_trajectories") {
    Interpreter in(lowered(decay_source));
    auto a = interp::init(in.layout(), 4, 42);
    in.run(a, 3);
    std::vector<std::string> names{"y"};
    CHECK(interp::diff_trajectories(a, in.layout(), a, in.layout(), names) == 0.0);
    auto b = a;
    auto& y = b.slots[in.layout().find("y")->slot];
    y[2] = 1.0;
    auto c = b;
    c.slots[in.layout().find("y")->slot][2] = 1.0 + 1e-13;
    CHECK(interp::diff_trajectories(b, in.layout(), c, in.layout(), names) == doctest::Approx(1e-13).epsilon(1e-3));
    auto d = interp::init(in.layout(), 5, 42);
    CHECK_THROWS_AS(interp::diff_trajectories(a, in.layout(), d, in.layout(), names), interp::RuntimeError);

    interp::Trajectory t1;
    interp::Trajectory t2;
    auto e = interp::init(in.layout(), 4, 42);
    auto f = e;
    in.run(e, 4, &t1);
    in.run(f, 4, &t2);
    CHECK(t1.frames.size() == 4);
    CHECK(interp::diff_trajectories(t1, t2) == 0.0);
}

TEST_CASE("optimized and unoptimized cat agree") {
    auto src = read_corpus("cat.mod");
    Interpreter plain(lowered(src));
    Interpreter opt(lowered(src, "all"));
    auto a = interp::init(plain.layout(), 64, 42);
    auto b = interp::init(opt.layout(), 64, 42);
    interp::Trajectory ta;
    interp::Trajectory tb;
    plain.run(a, 100, &ta);
    opt.run(b, 100, &tb);
    CHECK(interp::diff_trajectories(ta, tb) <= 1e-12);
}

TEST_CASE("dense solves: closed form and LU agree") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (std::size_t n = 1; n <= 6; ++n) {
        std::vector<double> A(n * n);
        std::vector<double> x(n);
        for (auto& a: A) {
            a = u(rng);
        }
        for (std::size_t i = 0; i < n; ++i) {
            A[i * n + i] += 4.0;
            x[i] = u(rng);
        }
        std::vector<double> b(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                b[i] += A[i * n + j] * x[j];
            }
        }
        auto A1 = A;
        auto b1 = b;
        interp::solve_dense(A1, b1, n);
        auto A2 = A;
        auto b2 = b;
        interp::solve_dense(A2, b2, n, true);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(b1[i] == doctest::Approx(x[i]).epsilon(1e-12));
            CHECK(b2[i] == doctest::Approx(x[i]).epsilon(1e-12));
        }
    }
    std::vector<double> singular{1, 2, 2, 4};
    std::vector<double> rhs{1, 1};
    CHECK_THROWS_AS(interp::solve_dense(singular, rhs, 2), interp::RuntimeError);
}
