#include "sonoedit/planner.hpp"

#include "sonoedit/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace sonoedit {

namespace {

enum SeedStream : std::uint64_t { kEmbedStream = 0, kUnembedStream = 1, kBlockStreamBase = 16 };

Matrix gaussian_matrix(Rng & rng, std::size_t rows, std::size_t cols, double stddev) {
    Matrix m(rows, cols);
    for (double & v : m.data()) v = stddev * rng.normal();
    return m;
}

void check_tokens(const ToyPlanner & model, std::span<const TokenId> tokens) {
    if (tokens.empty()) fail(Errc::InvalidArgument, "forward: empty token sequence");
    for (TokenId t : tokens) {
        if (t >= model.config.vocab) {
            fail(Errc::TokenOutOfRange, "token " + std::to_string(t) + " >= vocab " +
                                            std::to_string(model.config.vocab));
        }
    }
}

void check_layer(const ToyPlanner & model, std::size_t layer) {
    if (layer >= model.layers()) {
        fail(Errc::LayerOutOfRange, "layer " + std::to_string(layer) + " >= " + std::to_string(model.layers()));
    }
}

// mix_i = h_i + mean_{j<=i} h_j for every row of h.
Matrix causal_mix(const Matrix & h) {
    Matrix mix(h.rows(), h.cols());
    Vector running(h.cols(), 0.0);
    for (std::size_t i = 0; i < h.rows(); ++i) {
        const auto hi = h.row(i);
        auto mi = mix.row(i);
        const double inv = 1.0 / static_cast<double>(i + 1);
        for (std::size_t c = 0; c < h.cols(); ++c) {
            running[c] += hi[c];
            mi[c] = hi[c] + running[c] * inv;
        }
    }
    return mix;
}

Matrix block_keys(const PlannerBlock & block, const Matrix & h) {
    const Matrix mix = causal_mix(h);
    Matrix keys(h.rows(), block.w1.rows());
    for (std::size_t i = 0; i < h.rows(); ++i) {
        const Vector pre = matvec(block.w1, mix.row(i));
        auto ki = keys.row(i);
        for (std::size_t k = 0; k < pre.size(); ++k) ki[k] = std::tanh(pre[k]);
    }
    return keys;
}

Matrix block_outputs(const PlannerBlock & block, const Matrix & keys) {
    Matrix out(keys.rows(), block.w2.rows());
    for (std::size_t i = 0; i < keys.rows(); ++i) {
        const Vector o = matvec(block.w2, keys.row(i));
        std::copy(o.begin(), o.end(), out.row(i).begin());
    }
    return out;
}

void write_row(Matrix & m, std::size_t row, std::span<const double> values) {
    if (row >= m.rows() || values.size() != m.cols()) fail(Errc::DimMismatch, "patch: shape mismatch");
    std::copy(values.begin(), values.end(), m.row(row).begin());
}

} // namespace

void PlannerConfig::validate() const {
    if (d_model < 1 || d_hidden < 1 || layers < 1) {
        fail(Errc::InvalidArgument, "planner config: dimensions and layer count must be >= 1");
    }
    if (vocab < 4) fail(Errc::InvalidArgument, "planner config: vocab must be >= 4");
}

ToyPlanner init_planner(const PlannerConfig & cfg) {
    cfg.validate();
    ToyPlanner model;
    model.config = cfg;
    {
        Rng rng(derive_seed(cfg.seed, kEmbedStream));
        model.embed = gaussian_matrix(rng, cfg.vocab, cfg.d_model, 1.0);
    }
    model.blocks.reserve(cfg.layers);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        Rng rng(derive_seed(cfg.seed, kBlockStreamBase + l));
        PlannerBlock block;
        block.w1 = gaussian_matrix(rng, cfg.d_hidden, cfg.d_model, 1.0 / std::sqrt(double(cfg.d_model)));
        block.w2 = gaussian_matrix(rng, cfg.d_model, cfg.d_hidden, 1.0 / std::sqrt(double(cfg.d_hidden)));
        model.blocks.push_back(std::move(block));
    }
    {
        Rng rng(derive_seed(cfg.seed, kUnembedStream));
        model.unembed = gaussian_matrix(rng, cfg.vocab, cfg.d_model, 1.0 / std::sqrt(double(cfg.d_model)));
    }
    return model;
}

ForwardTrace forward(const ToyPlanner & model, std::span<const TokenId> tokens, const Intervention & iv) {
    check_tokens(model, tokens);
    const std::size_t n = tokens.size();
    const std::size_t dm = model.config.d_model;

    ForwardTrace trace;
    trace.embedded = Matrix(n, dm);
    for (std::size_t i = 0; i < n; ++i) {
        const auto src = model.embed.row(tokens[i]);
        std::copy(src.begin(), src.end(), trace.embedded.row(i).begin());
    }
    if (!iv.embed_noise.empty()) {
        if (iv.embed_noise.rows() != n || iv.embed_noise.cols() != dm) {
            fail(Errc::DimMismatch, "forward: embed noise shape mismatch");
        }
        trace.embedded = add(trace.embedded, iv.embed_noise);
    }
    if (iv.forced_layer) {
        check_layer(model, *iv.forced_layer);
        if (iv.forced_value.size() != dm) fail(Errc::DimMismatch, "forward: forced value length mismatch");
    }
    for (const auto & patch : iv.patches) {
        check_layer(model, patch.layer);
        if (patch.position >= n) fail(Errc::InvalidArgument, "forward: patch position out of range");
    }

    const std::size_t layers = model.layers();
    trace.keys.reserve(layers);
    trace.outputs.reserve(layers);
    trace.hidden.reserve(layers);

    Matrix h = trace.embedded;
    for (std::size_t l = 0; l < layers; ++l) {
        const PlannerBlock & block = model.blocks[l];
        Matrix keys = block_keys(block, h);
        Matrix out = block_outputs(block, keys);
        for (const auto & patch : iv.patches) {
            if (patch.layer == l && patch.site == PatchSite::BlockOutput) write_row(out, patch.position, patch.value);
        }
        if (iv.forced_layer && *iv.forced_layer == l) write_row(out, n - 1, iv.forced_value);
        h = add(h, out);
        for (const auto & patch : iv.patches) {
            if (patch.layer == l && patch.site == PatchSite::Residual) write_row(h, patch.position, patch.value);
        }
        trace.keys.push_back(std::move(keys));
        trace.outputs.push_back(std::move(out));
        trace.hidden.push_back(h);
    }

    trace.logits = matvec(model.unembed, h.row(n - 1));
    trace.probs = softmax(trace.logits);
    return trace;
}

Vector logits_from(const ToyPlanner & model, Matrix residual, std::size_t first_layer) {
    if (residual.rows() == 0 || residual.cols() != model.config.d_model) {
        fail(Errc::DimMismatch, "logits_from: residual shape mismatch");
    }
    if (first_layer > model.layers()) fail(Errc::LayerOutOfRange, "logits_from: first layer out of range");
    for (std::size_t l = first_layer; l < model.layers(); ++l) {
        const PlannerBlock & block = model.blocks[l];
        residual = add(residual, block_outputs(block, block_keys(block, residual)));
    }
    return matvec(model.unembed, residual.row(residual.rows() - 1));
}

Vector softmax(std::span<const double> logits) {
    Vector p(logits.size());
    if (logits.empty()) return p;
    const double mx = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        total += p[i];
    }
    for (double & v : p) v /= total;
    return p;
}

double log_softmax_at(std::span<const double> logits, std::size_t index) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double z : logits) total += std::exp(z - mx);
    return logits[index] - mx - std::log(total);
}

std::size_t argmax(std::span<const double> values) {
    return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

double logit_margin(std::span<const double> logits, std::size_t target) {
    double best_other = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < logits.size(); ++j) {
        if (j != target) best_other = std::max(best_other, logits[j]);
    }
    return logits[target] - best_other;
}

Matrix collect_keys(const ToyPlanner & model, std::span<const TokenSeq> corpus, std::size_t layer,
                    KeyPositions positions) {
    check_layer(model, layer);
    if (corpus.empty()) fail(Errc::InvalidArgument, "collect_keys: empty corpus");
    std::vector<Vector> columns;
    for (const auto & seq : corpus) {
        const ForwardTrace trace = forward(model, seq);
        const Matrix & keys = trace.keys[layer];
        const std::size_t first = positions == KeyPositions::All ? 0 : keys.rows() - 1;
        for (std::size_t i = first; i < keys.rows(); ++i) {
            const auto row = keys.row(i);
            columns.emplace_back(row.begin(), row.end());
        }
    }
    Matrix out(model.config.d_hidden, columns.size());
    for (std::size_t j = 0; j < columns.size(); ++j) out.set_col(j, columns[j]);
    return out;
}

TargetValue solve_target_value(const ToyPlanner & model, std::span<const TokenId> prompt, TokenId target,
                               std::size_t layer, double margin) {
    check_layer(model, layer);
    check_tokens(model, prompt);
    if (target >= model.config.vocab) fail(Errc::TokenOutOfRange, "solve_target_value: target out of range");

    const ForwardTrace clean = forward(model, prompt);
    TargetValue result;
    const auto key_row = clean.keys[layer].row(prompt.size() - 1);
    result.key.assign(key_row.begin(), key_row.end());
    const Vector base = matvec(model.blocks[layer].w2, result.key);

    if (logit_margin(clean.logits, target) >= margin) {
        result.value = base;
        return result;
    }

    std::size_t rival = argmax(clean.logits);
    if (rival == target) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < clean.logits.size(); ++j) {
            if (j != target && clean.logits[j] > best) {
                best = clean.logits[j];
                rival = j;
            }
        }
    }
    Vector u = sub(model.unembed.row(target), model.unembed.row(rival));
    const double un = norm2(u);
    if (un == 0.0) fail(Errc::TargetUnreachable, "solve_target_value: target and rival share an unembedding");
    for (double & v : u) v /= un;

    Intervention iv;
    iv.forced_layer = layer;
    auto satisfied = [&](double c) {
        iv.forced_value = axpy(c, u, base);
        return logit_margin(forward(model, prompt, iv).logits, target) >= margin;
    };

    double hi = 1.0;
    while (!satisfied(hi)) {
        hi *= 2.0;
        if (hi > kMaxValueScale) {
            fail(Errc::TargetUnreachable, "solve_target_value: margin " + std::to_string(margin) +
                                              " not reached for token " + std::to_string(target) +
                                              " within scale 2^16");
        }
    }
    double lo = hi == 1.0 ? 0.0 : hi / 2.0;
    while (hi - lo > 1e-3) {
        const double mid = 0.5 * (lo + hi);
        if (satisfied(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    result.scale = hi;
    result.value = axpy(hi, u, base);
    return result;
}

ToyPlanner plant_association(const ToyPlanner & model, std::span<const TokenId> prompt, TokenId wrong_token,
                             std::size_t layer, double margin) {
    check_layer(model, layer);
    // The bump also moves the other positions' block outputs, so the forced
    // search can undershoot; retry with a raised search margin.
    constexpr int kAttempts = 6;
    double search_margin = margin;
    for (int attempt = 0; attempt < kAttempts; ++attempt) {
        TargetValue tv;
        try {
            tv = solve_target_value(model, prompt, wrong_token, layer, search_margin);
        } catch (const Error & e) {
            if (e.code() == Errc::TargetUnreachable) fail(Errc::PlantFailed, e.what());
            throw;
        }
        const Matrix & w2 = model.blocks[layer].w2;
        const Vector gap = sub(tv.value, matvec(w2, tv.key));
        Matrix bump = outer(gap, tv.key);
        const double kk = dot(tv.key, tv.key);
        for (double & v : bump.data()) v /= kk;
        ToyPlanner planted = apply_edit(model, layer, bump);
        if (logit_margin(forward(planted, prompt).logits, wrong_token) >= margin) return planted;
        search_margin *= 2.0;
    }
    fail(Errc::PlantFailed, "plant_association: margin " + std::to_string(margin) + " not reached for token " +
                                std::to_string(wrong_token));
}

ToyPlanner apply_edit(const ToyPlanner & model, std::size_t layer, const Matrix & delta) {
    check_layer(model, layer);
    const Matrix & w2 = model.blocks[layer].w2;
    if (delta.rows() != w2.rows() || delta.cols() != w2.cols()) {
        fail(Errc::DimMismatch, "apply_edit: delta shape does not match w2");
    }
    ToyPlanner edited = model;
    edited.blocks[layer].w2 = add(w2, delta);
    return edited;
}

TokenSeq random_sequence(Rng & rng, std::size_t length, std::size_t vocab) {
    TokenSeq seq(length);
    for (auto & t : seq) t = static_cast<TokenId>(rng.below(vocab));
    return seq;
}

std::vector<TokenSeq> random_corpus(Rng & rng, std::size_t count, std::size_t min_len, std::size_t max_len,
                                    std::size_t vocab) {
    if (min_len < 1 || max_len < min_len) fail(Errc::InvalidArgument, "random_corpus: bad length range");
    std::vector<TokenSeq> corpus;
    corpus.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t len = min_len + rng.below(max_len - min_len + 1);
        corpus.push_back(random_sequence(rng, len, vocab));
    }
    return corpus;
}

} // namespace sonoedit
