/*
 * Copyright 2026 The nmodl-opt Authors.
 * See the top-level LICENSE file for details.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#include "nmodl/pipeline.hpp"

#include <algorithm>
#include <sstream>

#include <fmt/format.h>

#include "nmodl/interp.hpp"

namespace nmodl {

std::string_view pass_name(Pass pass) noexcept {
    switch (pass) {
    case Pass::Fold:
        return "fold";
    case Pass::Unroll:
        return "unroll";
    case Pass::Inline:
        return "inline";
    case Pass::Localize:
        return "localize";
    }
    return "?";
}

const std::vector<Pass>& canonical_passes() {
    static const std::vector<Pass> order{Pass::Fold, Pass::Unroll, Pass::Inline, Pass::Localize};
    return order;
}

std::vector<Pass> parse_pass_list(const std::string& text) {
    if (text == "none" || text.empty()) {
        return {};
    }
    if (text == "all") {
        return canonical_passes();
    }
    if (text.back() == ',') {
        throw CompileError("empty pass name in pass list");
    }
    std::vector<Pass> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto it = std::find_if(canonical_passes().begin(), canonical_passes().end(), [&](Pass p) {
            return pass_name(p) == item;
        });
        if (it == canonical_passes().end()) {
            throw CompileError(fmt::format("unknown pass '{}' (expected fold, unroll, inline, localize, all or none)",
                                           item));
        }
        if (std::find(out.begin(), out.end(), *it) != out.end()) {
            throw CompileError(fmt::format("pass '{}' listed twice", item));
        }
        out.push_back(*it);
    }
    return out;
}

PipelineResult run_pipeline(const ast::Node& program, const PipelineOptions& options) {
    PipelineResult result;
    auto& diags = result.diagnostics;
    ast::Node p = passes::ensure_tables(program, diags);
    p = ode::derive_conductance(p, diags);
    for (Pass pass: options.passes) {
        passes::PassReport report;
        switch (pass) {
        case Pass::Fold:
            p = passes::constant_fold(p, diags, &report);
            break;
        case Pass::Unroll:
            p = passes::unroll_loops(p, diags, &report);
            break;
        case Pass::Inline:
            p = passes::inline_calls(p, diags, &report);
            break;
        case Pass::Localize:
            p = passes::localize(p, passes::usage_analysis(p), options.observe, diags, &report);
            break;
        }
        result.reports.push_back(std::move(report));
    }
    result.optimized = p;
    result.program = ode::lower(p, options.lowering, diags);
    return result;
}

VerifyResult verify_pipeline(const ast::Node& program, const PipelineOptions& options, const VerifyOptions& verify) {
    PipelineOptions reference_options = options;
    reference_options.passes.clear();
    auto reference = run_pipeline(program, reference_options);
    auto optimized = run_pipeline(program, options);
    interp::Interpreter a(reference.program);
    interp::Interpreter b(optimized.program);

    VerifyResult result;
    result.observed = codegen::observed_variables(b.layout());
    for (const auto& name: options.observe) {
        if (b.layout().find(name) != nullptr &&
            std::find(result.observed.begin(), result.observed.end(), name) == result.observed.end()) {
            result.observed.push_back(name);
        }
    }
    result.observed.emplace_back("rhs");
    result.observed.emplace_back("d");
    for (const auto& ion: b.layout().ions) {
        result.observed.push_back("i" + ion + "_total");
        result.observed.push_back("di" + ion + "dv");
    }
    auto da = interp::init(a.layout(), verify.instances, verify.seed);
    auto db = interp::init(b.layout(), verify.instances, verify.seed);
    interp::Trajectory ta;
    interp::Trajectory tb;
    ta.names = result.observed;
    tb.names = result.observed;
    a.run(da, verify.steps, &ta);
    b.run(db, verify.steps, &tb);
    result.deviation = interp::diff_trajectories(ta, tb);
    return result;
}

}  // namespace nmodl
