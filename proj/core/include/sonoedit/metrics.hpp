#pragma once

#include "sonoedit/editor.hpp"
#include "sonoedit/matrix.hpp"
#include "sonoedit/planner.hpp"
#include "sonoedit/scenario.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sonoedit {

inline constexpr double kProbClamp = 1e-12;

struct EditTarget {
    TokenSeq prompt;
    TokenId token = 0;
    std::size_t layer = 0;
    Vector key;    // k*; target_residual is 0 when key or value is empty
    Vector value;  // v*
};

struct EditReport {
    double target_residual = 0.0;
    double constraint_residual_rel = 0.0;
    double preserved_argmax_drift = 0.0;
    double preserved_kl_mean = 0.0;
    double delta_frob = 0.0;
    bool edit_succeeded = false;
};

// KL(p || q) with both distributions clamped below at 1e-12; never negative.
double kl_divergence(std::span<const double> p, std::span<const double> q);

EditReport verify_edit(const ToyPlanner & before, const ToyPlanner & after, const Matrix & delta,
                       const Matrix & k0_sample, const EditTarget & target,
                       std::span<const TokenSeq> preserved);

std::string summary_line(const EditReport & report);

struct ScenarioOutcome {
    EditResult edit;
    EditReport report;
    std::size_t null_rank = 0;
    double margin = 0.0;  // margin v* was solved for
    Vector value;         // v* actually written
};

inline constexpr int kEditAttempts = 6;

// Builds the projector from the scenario's preserved keys, edits the planted
// layer back to the clean token and verifies on the preserved prompts. The
// edit also moves the prompt's earlier positions, so a v* solved at the final
// position can fall short; the margin is then doubled and v* re-solved, up to
// kEditAttempts times.
ScenarioOutcome run_edit_scenario(const Scenario & scenario, EditMethod method, double cutoff = 1e-8,
                                  double tau = kDefaultTau);

struct AblationPair {
    std::uint64_t seed = 0;
    EditReport constrained;
    EditReport naive;
};

struct AblationSummary {
    std::vector<AblationPair> pairs;
    double constrained_residual_mean = 0.0;
    double naive_residual_mean = 0.0;
    double constrained_drift_mean = 0.0;
    double naive_drift_mean = 0.0;
    double constrained_kl_mean = 0.0;
    double naive_kl_mean = 0.0;
    double constrained_success_rate = 0.0;
    double naive_success_rate = 0.0;
    double residual_ratio_median = 0.0;     // naive / constrained, paired
    double residual_ratio_ge10_rate = 0.0;  // pairs with ratio >= 10
    double drift_not_worse_rate = 0.0;      // pairs with naive drift >= constrained drift
};

// Trial i runs make_scenario(cfg, derive_seed(seed, i)) with both methods.
AblationSummary ablation_compare(std::uint64_t seed, std::size_t trials, const ScenarioConfig & cfg = {});

} // namespace sonoedit
