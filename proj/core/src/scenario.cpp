#include "sonoedit/scenario.hpp"

#include "sonoedit/error.hpp"

#include <string>

namespace sonoedit {

namespace {

enum ScenarioStream : std::uint64_t { kModelStream = 0, kPromptStream = 1, kPreservedStream = 2 };

struct Planted {
    ToyPlanner model;
    TokenId wrong = 0;
    TargetValue target;
};

// Draws wrong tokens until planting succeeds and the clean answer can be
// written back at the same layer.
Planted plant_with_retry(const ToyPlanner & clean, const TokenSeq & prompt, TokenId correct, std::size_t layer,
                         Rng & rng, double plant_margin, std::optional<double> edit_margin,
                         std::size_t attempts) {
    for (std::size_t i = 0; i < attempts; ++i) {
        TokenId wrong = correct;
        while (wrong == correct) wrong = static_cast<TokenId>(rng.below(clean.config.vocab));
        try {
            Planted p;
            p.model = plant_association(clean, prompt, wrong, layer, plant_margin);
            p.wrong = wrong;
            if (edit_margin) p.target = solve_target_value(p.model, prompt, correct, layer, *edit_margin);
            return p;
        } catch (const Error & e) {
            if (e.code() != Errc::PlantFailed && e.code() != Errc::TargetUnreachable) throw;
        }
    }
    fail(Errc::PlantFailed, "scenario: no plantable wrong token after " + std::to_string(attempts) + " attempts");
}

} // namespace

Scenario make_scenario(const ScenarioConfig & cfg, std::uint64_t seed) {
    PlannerConfig pc = cfg.planner;
    pc.seed = derive_seed(seed, kModelStream);
    pc.validate();
    if (pc.layers < 3 && !cfg.layer) fail(Errc::InvalidArgument, "scenario: need >= 3 layers to draw a layer");
    if (cfg.prompt_len < 1) fail(Errc::InvalidArgument, "scenario: prompt length must be >= 1");

    Scenario s;
    s.clean = init_planner(pc);
    Rng rng(derive_seed(seed, kPromptStream));
    s.prompt = random_sequence(rng, cfg.prompt_len, pc.vocab);
    s.layer = cfg.layer ? *cfg.layer : 1 + static_cast<std::size_t>(rng.below(pc.layers - 2));
    if (s.layer >= pc.layers) fail(Errc::LayerOutOfRange, "scenario: layer out of range");
    s.correct = static_cast<TokenId>(argmax(forward(s.clean, s.prompt).logits));

    Planted p = plant_with_retry(s.clean, s.prompt, s.correct, s.layer, rng, cfg.plant_margin, cfg.edit_margin,
                                 cfg.max_attempts);
    s.planted = std::move(p.model);
    s.wrong = p.wrong;
    s.target = std::move(p.target);
    s.edit_margin = cfg.edit_margin;

    Rng corpus_rng(derive_seed(seed, kPreservedStream));
    s.preserved = random_corpus(corpus_rng, cfg.preserved_count, cfg.preserved_min_len, cfg.preserved_max_len,
                                pc.vocab);
    if (!s.preserved.empty()) s.k0 = collect_keys(s.planted, s.preserved, s.layer, cfg.key_positions);
    return s;
}

Scenario make_planted(const PlannerConfig & planner, std::uint64_t seed, std::size_t prompt_len, double margin) {
    PlannerConfig pc = planner;
    pc.seed = derive_seed(seed, kModelStream);
    pc.validate();
    if (pc.layers < 3) fail(Errc::InvalidArgument, "planted: need >= 3 layers");

    Scenario s;
    s.clean = init_planner(pc);
    Rng rng(derive_seed(seed, kPromptStream));
    s.prompt = random_sequence(rng, prompt_len, pc.vocab);
    s.layer = 1 + static_cast<std::size_t>(rng.below(pc.layers - 2));
    s.correct = static_cast<TokenId>(argmax(forward(s.clean, s.prompt).logits));
    Planted p = plant_with_retry(s.clean, s.prompt, s.correct, s.layer, rng, margin, std::nullopt, 16);
    s.planted = std::move(p.model);
    s.wrong = p.wrong;
    return s;
}

} // namespace sonoedit
