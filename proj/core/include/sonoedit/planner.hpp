#pragma once

#include "sonoedit/matrix.hpp"
#include "sonoedit/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace sonoedit {

using TokenId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;

struct PlannerConfig {
    std::size_t d_model = 32;
    std::size_t d_hidden = 64;
    std::size_t vocab = 64;
    std::size_t layers = 8;
    std::uint64_t seed = 0;

    // Throws InvalidArgument unless all counts >= 1 and vocab >= 4.
    void validate() const;
    bool operator==(const PlannerConfig &) const = default;
};

struct PlannerBlock {
    Matrix w1;  // d_hidden x d_model
    Matrix w2;  // d_model x d_hidden, the editable key -> value memory

    bool operator==(const PlannerBlock &) const = default;
};

// Residual MLP planner over a single token stream. Per layer and position i:
//   mix_i = h_i + mean_{j<=i} h_j,  key_i = tanh(w1 mix_i),  h_i += w2 key_i
// and the next-token logits are unembed * h_last.
struct ToyPlanner {
    PlannerConfig config;
    Matrix embed;    // vocab x d_model
    std::vector<PlannerBlock> blocks;
    Matrix unembed;  // vocab x d_model

    std::size_t layers() const noexcept { return blocks.size(); }
    bool operator==(const ToyPlanner &) const = default;
};

// Embedding rows are unit-variance (a one-hot lookup has fan-in 1); w1, w2
// and unembed entries are N(0, 1/fan_in). Bit-reproducible from cfg.seed.
ToyPlanner init_planner(const PlannerConfig & cfg);

enum class PatchSite {
    BlockOutput,  // replace w2 * key at (layer, position)
    Residual,     // replace the residual state after the layer's block
};

struct StatePatch {
    std::size_t layer = 0;
    std::size_t position = 0;
    PatchSite site = PatchSite::BlockOutput;
    Vector value;
};

// Interventions applied during a forward pass.
struct Intervention {
    Matrix embed_noise;                 // positions x d_model added to embeddings; empty for none
    std::vector<StatePatch> patches;
    std::optional<std::size_t> forced_layer;  // block output at the final position...
    Vector forced_value;                      // ...replaced by this vector
};

struct ForwardTrace {
    Matrix embedded;              // positions x d_model, after noise
    std::vector<Matrix> keys;     // per layer: positions x d_hidden
    std::vector<Matrix> outputs;  // per layer: positions x d_model block outputs
    std::vector<Matrix> hidden;   // per layer: positions x d_model residual after the block
    Vector logits;                // final position
    Vector probs;

    std::size_t positions() const noexcept { return embedded.rows(); }
};

ForwardTrace forward(const ToyPlanner & model, std::span<const TokenId> tokens,
                     const Intervention & intervention = {});

// Runs blocks first_layer..L-1 on `residual` (positions x d_model, the state
// entering first_layer) and returns the final-position logits.
Vector logits_from(const ToyPlanner & model, Matrix residual, std::size_t first_layer);

Vector softmax(std::span<const double> logits);
double log_softmax_at(std::span<const double> logits, std::size_t index);
std::size_t argmax(std::span<const double> values);
// logits[target] - max_{j != target} logits[j]
double logit_margin(std::span<const double> logits, std::size_t target);

enum class KeyPositions { Final, All };

// One column per (sequence, final position) by default, or per (sequence,
// position) with KeyPositions::All, in corpus order.
Matrix collect_keys(const ToyPlanner & model, std::span<const TokenSeq> corpus, std::size_t layer,
                    KeyPositions positions = KeyPositions::Final);

struct TargetValue {
    Vector value;         // v*
    double scale = 0.0;   // c in v* = w2 k* + c u
    Vector key;           // k*, clean key at the final position
};

inline constexpr double kMaxValueScale = 65536.0;

// Finds v* such that forcing the layer's final-position block output to v*
// makes `target` the argmax with logit margin >= `margin`. The direction u is
// the normalized difference of unembedding rows (target minus the current
// strongest competitor); c is found by doubling up to 2^16 and then bisected
// to within 1e-3. Raises TargetUnreachable when no c <= 2^16 works.
TargetValue solve_target_value(const ToyPlanner & model, std::span<const TokenId> prompt, TokenId target,
                               std::size_t layer, double margin = 1.0);

// Writes a wrong association: an unconstrained rank-one bump on the layer's
// w2 mapping the prompt's clean key to a value that makes `wrong_token` win
// by `margin`. Raises PlantFailed if the margin cannot be reached.
ToyPlanner plant_association(const ToyPlanner & model, std::span<const TokenId> prompt, TokenId wrong_token,
                             std::size_t layer, double margin = 1.0);

// Returns a copy with blocks[layer].w2 += delta.
ToyPlanner apply_edit(const ToyPlanner & model, std::size_t layer, const Matrix & delta);

TokenSeq random_sequence(Rng & rng, std::size_t length, std::size_t vocab);
std::vector<TokenSeq> random_corpus(Rng & rng, std::size_t count, std::size_t min_len, std::size_t max_len,
                                    std::size_t vocab);

} // namespace sonoedit
