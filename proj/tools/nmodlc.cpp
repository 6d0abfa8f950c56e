/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "nmodl/analysis.hpp"
#include "nmodl/codegen.hpp"
#include "nmodl/interp.hpp"
#include "nmodl/layout.hpp"
#include "nmodl/parser.hpp"
#include "nmodl/pipeline.hpp"
#include "nmodl/printer.hpp"

using namespace nmodl;
using json = nlohmann::ordered_json;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_diagnostics = 1;
constexpr int exit_verify = 2;

constexpr double verify_tolerance = 1e-12;

struct Settings {
    std::vector<std::string> files;
    std::string backends = "scalar";
    std::string output = ".";
    std::string passes = "all";
    std::string solver_cse = "on";
    std::string pade = "off";
    std::vector<std::string> observe;
    double threshold = analysis::default_flop_byte_threshold;
    int steps = 100;
    std::uint64_t seed = 42;
    std::string json_report;
    bool dump_ast = false;
};

bool on_off(const std::string& value, const std::string& flag) {
    if (value == "on") {
        return true;
    }
    if (value == "off") {
        return false;
    }
    throw CLI::ValidationError(flag, "expected on or off");
}

PipelineOptions pipeline_options(const Settings& s) {
    PipelineOptions options;
    options.passes = parse_pass_list(s.passes);
    options.observe.insert(s.observe.begin(), s.observe.end());
    options.lowering.solver_cse = on_off(s.solver_cse, "--solver-cse");
    options.lowering.pade = on_off(s.pade, "--pade");
    return options;
}

json diagnostics_json(const Diagnostics& diags, const std::string& file) {
    auto out = json::array();
    for (const auto& d: diags) {
        out.push_back(d.format(file));
    }
    return out;
}

void print_diagnostics(const Diagnostics& diags, const std::string& file) {
    for (const auto& d: diags) {
        std::cerr << d.format(file) << "\n";
    }
}

json pass_reports_json(const std::vector<passes::PassReport>& reports) {
    auto out = json::array();
    for (const auto& r: reports) {
        out.push_back({{"pass", r.pass}, {"nodes_changed", r.nodes_changed}, {"symbols", r.symbols}});
    }
    return out;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw CompileError(fmt::format("cannot write '{}'", path.string()));
    }
    out << text;
}

std::vector<codegen::Backend> parse_backends(const std::string& text) {
    std::vector<codegen::Backend> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item == "scalar") {
            out.push_back(codegen::Backend::Scalar);
        } else if (item == "simd") {
            out.push_back(codegen::Backend::Simd);
        } else if (item == "nmodl") {
            out.push_back(codegen::Backend::Nmodl);
        } else {
            throw CLI::ValidationError("--backend", fmt::format("unknown backend '{}'", item));
        }
    }
    if (out.empty()) {
        throw CLI::ValidationError("--backend", "no backend given");
    }
    return out;
}

int compile(const std::string& file, const Settings& s, json& report) {
    auto backends = parse_backends(s.backends);
    auto parsed = parser::parse_file(file);
    auto result = run_pipeline(parsed, pipeline_options(s));
    auto layout = codegen::build_layout(result.program);
    if (s.dump_ast) {
        std::cout << ast::dump_json(result.program) << "\n";
    }
    std::filesystem::create_directories(s.output);
    json written = json::array();
    for (auto backend: backends) {
        codegen::EmittedUnit unit;
        switch (backend) {
        case codegen::Backend::Scalar:
            unit = codegen::emit_scalar(result.program, layout);
            break;
        case codegen::Backend::Simd:
            unit = codegen::emit_simd(result.program, layout, result.diagnostics);
            break;
        case codegen::Backend::Nmodl:
            // optimized NMODL keeps the SOLVE blocks for legacy consumers
            unit = codegen::emit_nmodl_unit(result.optimized, layout.mechanism);
            break;
        }
        auto path = std::filesystem::path(s.output) / unit.file_name;
        write_file(path, unit.text);
        written.push_back(path.string());
        std::cout << path.string() << "\n";
    }
    print_diagnostics(result.diagnostics, file);
    report = {{"file", file},
              {"mechanism", layout.mechanism},
              {"passes", pass_reports_json(result.reports)},
              {"outputs", written},
              {"diagnostics", diagnostics_json(result.diagnostics, file)}};
    return has_errors(result.diagnostics) ? exit_diagnostics : exit_ok;
}

int analyze(const std::string& file, const Settings& s, json& report) {
    auto parsed = parser::parse_file(file);
    auto result = run_pipeline(parsed, pipeline_options(s));
    if (s.dump_ast) {
        std::cout << ast::dump_json(result.program) << "\n";
    }
    auto layout = codegen::build_layout(result.program);
    auto profiles = analysis::census_mechanism(result.program, layout);
    auto profile_json = analysis::characterize(profiles, s.threshold);
    std::cout << profile_json.dump(2) << "\n";
    print_diagnostics(result.diagnostics, file);
    report = {{"file", file},
              {"mechanism", layout.mechanism},
              {"passes", pass_reports_json(result.reports)},
              {"profiles", profile_json},
              {"diagnostics", diagnostics_json(result.diagnostics, file)}};
    return has_errors(result.diagnostics) ? exit_diagnostics : exit_ok;
}

int roundtrip(const std::string& file, const Settings& s, json& report) {
    auto first = parser::parse_file(file);
    if (s.dump_ast) {
        std::cout << ast::dump_json(first) << "\n";
    }
    std::string text1 = codegen::emit_nmodl(first);
    auto second = parser::parse_source(text1);
    std::string text2 = codegen::emit_nmodl(second);
    bool equal = ast::structurally_equal(first, second);
    bool stable = text1 == text2;
    std::cout << fmt::format("{}: {} ({} nodes, structural {}, text {})\n",
                             file,
                             equal && stable ? "ok" : "FAILED",
                             ast::count_nodes(first),
                             equal ? "equal" : "different",
                             stable ? "stable" : "changed");
    report = {{"file", file}, {"structurally_equal", equal}, {"byte_identical", stable}};
    return equal && stable ? exit_ok : exit_verify;
}

int verify(const std::string& file, const Settings& s, json& report) {
    auto parsed = parser::parse_file(file);
    VerifyOptions v;
    v.steps = s.steps;
    v.seed = s.seed;
    auto result = verify_pipeline(parsed, pipeline_options(s), v);
    bool ok = result.deviation <= verify_tolerance;
    std::cout << fmt::format("{}: max relative deviation {:.3e} over {} steps, {} instances (tolerance {:g}) {}\n",
                             file,
                             result.deviation,
                             v.steps,
                             v.instances,
                             verify_tolerance,
                             ok ? "ok" : "FAILED");
    report = {{"file", file},
              {"passes", s.passes},
              {"steps", v.steps},
              {"seed", v.seed},
              {"instances", v.instances},
              {"observed", result.observed},
              {"deviation", result.deviation},
              {"ok", ok}};
    return ok ? exit_ok : exit_verify;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nmodlc: optimizing source-to-source compiler for NMODL"};
    app.require_subcommand(1);
    Settings s;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("files", s.files, "NMODL files")->required();
        sub->add_option("--passes", s.passes, "none, all or a comma list of fold,unroll,inline,localize")
            ->capture_default_str();
        sub->add_option("--solver-cse", s.solver_cse, "common subexpressions in symbolic solves (on|off)")
            ->capture_default_str();
        sub->add_option("--pade", s.pade, "(1,1) Pade approximant in cnexp updates (on|off)")
            ->capture_default_str();
        sub->add_option("--observe", s.observe, "variables kept observable (never localized)")->delimiter(',');
        sub->add_option("--json-report", s.json_report, "write a JSON report to this path");
        sub->add_flag("--dump-ast", s.dump_ast, "print the AST as JSON");
    };

    auto* compile_cmd = app.add_subcommand("compile", "emit code for the selected backends");
    add_common(compile_cmd);
    compile_cmd->add_option("--backend", s.backends, "comma list of scalar, simd, nmodl")->capture_default_str();
    compile_cmd->add_option("--output", s.output, "output directory")->capture_default_str();

    auto* analyze_cmd = app.add_subcommand("analyze", "operation census and compute/memory classification");
    add_common(analyze_cmd);
    analyze_cmd->add_option("--flop-byte-threshold", s.threshold, "flop per byte above which a kernel is compute-bound")
        ->capture_default_str();

    auto* roundtrip_cmd = app.add_subcommand("roundtrip", "parse, emit NMODL, reparse and compare");
    roundtrip_cmd->add_option("files", s.files, "NMODL files")->required();
    roundtrip_cmd->add_option("--json-report", s.json_report, "write a JSON report to this path");
    roundtrip_cmd->add_flag("--dump-ast", s.dump_ast, "print the AST as JSON");

    auto* verify_cmd = app.add_subcommand("verify", "differential interpreter run against the unoptimized pipeline");
    add_common(verify_cmd);
    verify_cmd->add_option("--steps", s.steps, "time steps")->capture_default_str()->check(CLI::NonNegativeNumber);
    verify_cmd->add_option("--seed", s.seed, "initialization seed")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    std::function<int(const std::string&, const Settings&, json&)> command;
    if (compile_cmd->parsed()) {
        command = compile;
    } else if (analyze_cmd->parsed()) {
        command = analyze;
    } else if (roundtrip_cmd->parsed()) {
        command = roundtrip;
    } else {
        command = verify;
    }

    int status = exit_ok;
    json report = json::array();
    for (const auto& file: s.files) {
        json entry;
        int rc = exit_ok;
        try {
            rc = command(file, s, entry);
        } catch (const CompileError& e) {
            std::cerr << e.diagnostic().format(file) << "\n";
            entry = {{"file", file}, {"error", e.diagnostic().format(file)}};
            rc = exit_diagnostics;
        } catch (const interp::RuntimeError& e) {
            std::cerr << file << ": runtime error: " << e.what() << "\n";
            entry = {{"file", file}, {"error", e.what()}};
            rc = exit_verify;
        } catch (const CLI::ValidationError& e) {
            std::cerr << e.what() << "\n";
            return e.get_exit_code();
        } catch (const std::exception& e) {
            std::cerr << file << ": error: " << e.what() << "\n";
            entry = {{"file", file}, {"error", e.what()}};
            rc = exit_diagnostics;
        }
        status = std::max(status, rc);
        report.push_back(entry);
    }
    if (!s.json_report.empty()) {
        std::ofstream out(s.json_report);
        if (!out) {
            std::cerr << "cannot write '" << s.json_report << "'\n";
            return exit_diagnostics;
        }
        out << report.dump(2) << "\n";
    }
    return status;
}
