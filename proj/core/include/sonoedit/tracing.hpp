#pragma once

#include "sonoedit/matrix.hpp"
#include "sonoedit/planner.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace sonoedit {

struct TraceConfig {
    double noise_sigma_scale = 3.0;  // noise std as a multiple of the embedding entry std
    std::size_t trials = 10;
    std::uint64_t seed = 0;
    std::vector<std::size_t> subject_positions;  // empty: every position
    PatchSite site = PatchSite::BlockOutput;     // what a restored pass copies from the clean run

    // Throws InvalidArgument on a negative or non-finite scale or zero trials.
    void validate() const;
};

struct LayerScores {
    double impact_mean = 0.0;
    double impact_std = 0.0;
    double probe_accuracy = 0.0;
    double grad_norm = 0.0;
    std::size_t impact_samples = 0;
    std::size_t probe_samples = 0;
};

struct ImpactProfile {
    std::vector<LayerScores> layers;
};

// Population std of the embedding matrix entries.
double embedding_std(const ToyPlanner & model);

// Corrupt-and-restore indirect effect. Trial t draws its noise from
// Rng(derive_seed(cfg.seed, t)); Impact(l) = p_restored(target) - p_corrupted(target).
// impact_std is the sample std over trials (0 for a single trial).
ImpactProfile causal_impact(const ToyPlanner & model, std::span<const TokenId> prompt, TokenId target,
                            const TraceConfig & cfg);

// Cross-validated one-vs-rest ridge probe. Row i of `features` is example i;
// fold of example i is i % folds. Raises DegenerateLabels with fewer than two
// classes or a class with fewer than four examples.
double probe_accuracy(const Matrix & features, std::span<const std::size_t> labels, std::size_t folds = 5);

struct LabeledSequence {
    TokenSeq tokens;
    std::size_t label = 0;
};

// Probe on the layer's final-position activation at `site`.
double probe_accuracy(const ToyPlanner & model, std::span<const LabeledSequence> corpus, std::size_t layer,
                      std::size_t folds = 5, PatchSite site = PatchSite::BlockOutput);

// Variants of `prompt` whose non-final tokens are each resampled with
// probability `resample`; label 1 when the model's argmax is `target`.
std::vector<LabeledSequence> decision_probe_corpus(const ToyPlanner & model, std::span<const TokenId> prompt,
                                                   TokenId target, Rng & rng, std::size_t count,
                                                   double resample = 0.5);

inline constexpr double kDefaultFdStep = 1e-5;

// d(-log p(target))/d w2 at `layer` by central differences with per-entry
// step step * (1 + |w|).
Matrix loss_gradient(const ToyPlanner & model, std::span<const TokenId> prompt, TokenId target,
                     std::size_t layer, double step = kDefaultFdStep);
double gradient_norm(const ToyPlanner & model, std::span<const TokenId> prompt, TokenId target,
                     std::size_t layer, double step = kDefaultFdStep);

struct RankWeights {
    double impact = 1.0;
    double probe = 1.0;
    double grad = 1.0;
};

// Layers by descending weighted sum of min-max normalized scores (a flat
// score contributes 0); ties go to the lower index.
std::vector<std::size_t> rank_layers(const ImpactProfile & profile, const RankWeights & weights = {});

// All three methods. Probe scores stay 0 when the corpus is empty or its
// labels are degenerate.
ImpactProfile profile_layers(const ToyPlanner & model, std::span<const TokenId> prompt, TokenId target,
                             const TraceConfig & cfg, std::span<const LabeledSequence> probe_corpus,
                             std::size_t folds = 5);

// layer,impact_mean,impact_std,probe_acc,grad_norm
void write_profile_csv(std::ostream & os, const ImpactProfile & profile);
void write_bar_chart(std::ostream & os, const ImpactProfile & profile, std::size_t width = 40);

} // namespace sonoedit
