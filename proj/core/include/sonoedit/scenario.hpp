#pragma once

#include "sonoedit/editor.hpp"
#include "sonoedit/matrix.hpp"
#include "sonoedit/planner.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace sonoedit {

// Seeded plant-and-correct setup. The defaults keep the preserved key count
// (12 prompts x at most 8 positions = 96 columns) below d_hidden = 128, so
// K0 is exactly rank-deficient and the null space is nontrivial.
struct ScenarioConfig {
    PlannerConfig planner{32, 128, 64, 8, 0};
    std::size_t preserved_count = 12;
    std::size_t preserved_min_len = 4;
    std::size_t preserved_max_len = 8;
    KeyPositions key_positions = KeyPositions::All;
    std::size_t prompt_len = 6;
    std::optional<std::size_t> layer;  // default: drawn from [1, L-2]
    double plant_margin = 1.0;
    double edit_margin = 1.0;
    double cutoff = 1e-8;
    double tau = kDefaultTau;
    std::size_t max_attempts = 16;
};

struct Scenario {
    ToyPlanner clean;
    ToyPlanner planted;
    TokenSeq prompt;
    TokenId correct = 0;  // clean argmax, restored by the edit
    TokenId wrong = 0;    // planted argmax
    std::size_t layer = 0;
    std::vector<TokenSeq> preserved;
    Matrix k0;            // preserved keys at `layer` of the planted model
    TargetValue target;   // v* on the planted model for `correct`
    double edit_margin = 1.0;
};

// Streams of `seed`: 0 model, 1 prompts and tokens, 2 preserved corpus.
// Wrong tokens whose plant or repair target is unreachable are redrawn up to
// max_attempts times before PlantFailed.
Scenario make_scenario(const ScenarioConfig & cfg, std::uint64_t seed);

// Localization setup: planted model with the default planner dims and no
// preserved corpus.
Scenario make_planted(const PlannerConfig & planner, std::uint64_t seed, std::size_t prompt_len = 6,
                      double margin = 1.0);

enum class EditMethod { Constrained, Naive };

} // namespace sonoedit
