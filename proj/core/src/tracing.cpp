#include "sonoedit/tracing.hpp"

#include "sonoedit/error.hpp"
#include "sonoedit/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <ostream>
#include <string>

namespace sonoedit {

namespace {

std::vector<std::size_t> resolve_positions(const TraceConfig & cfg, std::size_t n) {
    if (cfg.subject_positions.empty()) {
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), std::size_t{0});
        return all;
    }
    std::vector<std::size_t> pos = cfg.subject_positions;
    std::sort(pos.begin(), pos.end());
    pos.erase(std::unique(pos.begin(), pos.end()), pos.end());
    if (pos.back() >= n) fail(Errc::InvalidArgument, "trace: subject position out of range");
    return pos;
}

const Matrix & site_rows(const ForwardTrace & trace, std::size_t layer, PatchSite site) {
    return site == PatchSite::BlockOutput ? trace.outputs[layer] : trace.hidden[layer];
}

Vector min_max(const Vector & x) {
    Vector out(x.size(), 0.0);
    if (x.empty()) return out;
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    const double range = *hi - *lo;
    if (!(range > 0.0)) return out;
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - *lo) / range;
    return out;
}

std::string format_fixed(double v, int precision) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}

} // namespace

void TraceConfig::validate() const {
    if (!(noise_sigma_scale >= 0.0) || !std::isfinite(noise_sigma_scale)) {
        fail(Errc::InvalidArgument, "trace: noise sigma scale must be finite and >= 0");
    }
    if (trials < 1) fail(Errc::InvalidArgument, "trace: trials must be >= 1");
}

double embedding_std(const ToyPlanner & model) {
    const auto data = model.embed.data();
    if (data.empty()) return 0.0;
    double mean = 0.0;
    for (double v : data) mean += v;
    mean /= static_cast<double>(data.size());
    double ss = 0.0;
    for (double v : data) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(data.size()));
}

ImpactProfile causal_impact(const ToyPlanner & model, std::span<const TokenId> prompt, TokenId target,
                            const TraceConfig & cfg) {
    cfg.validate();
    if (target >= model.config.vocab) fail(Errc::TokenOutOfRange, "causal_impact: target out of range");
    const ForwardTrace clean = forward(model, prompt);
    const std::size_t n = clean.positions();
    const std::size_t layers = model.layers();
    const std::vector<std::size_t> subject = resolve_positions(cfg, n);
    const double sigma = cfg.noise_sigma_scale * embedding_std(model);

    std::vector<Vector> per_trial(layers, Vector(cfg.trials, 0.0));
    if (sigma > 0.0) {
        for (std::size_t t = 0; t < cfg.trials; ++t) {
            Rng rng(derive_seed(cfg.seed, t));
            Intervention iv;
            iv.embed_noise = Matrix(n, model.config.d_model);
            for (std::size_t pos : subject) {
                for (double & v : iv.embed_noise.row(pos)) v = sigma * rng.normal();
            }
            const double p_corrupt = forward(model, prompt, iv).probs[target];
            for (std::size_t l = 0; l < layers; ++l) {
                iv.patches.clear();
                const Matrix & src = site_rows(clean, l, cfg.site);
                for (std::size_t pos : subject) {
                    const auto row = src.row(pos);
                    iv.patches.push_back({l, pos, cfg.site, Vector(row.begin(), row.end())});
                }
                per_trial[l][t] = forward(model, prompt, iv).probs[target] - p_corrupt;
            }
        }
    }

    ImpactProfile profile;
    profile.layers.resize(layers);
    const double count = static_cast<double>(cfg.trials);
    for (std::size_t l = 0; l < layers; ++l) {
        double mean = 0.0;
        for (double v : per_trial[l]) mean += v;
        mean /= count;
        double ss = 0.0;
        for (double v : per_trial[l]) ss += (v - mean) * (v - mean);
        LayerScores & s = profile.layers[l];
        s.impact_mean = mean;
        s.impact_std = cfg.trials > 1 ? std::sqrt(ss / (count - 1.0)) : 0.0;
        s.impact_samples = cfg.trials;
    }
    return profile;
}

double probe_accuracy(const Matrix & features, std::span<const std::size_t> labels, std::size_t folds) {
    const std::size_t n = features.rows();
    const std::size_t f = features.cols();
    if (labels.size() != n) fail(Errc::DimMismatch, "probe: label count != feature rows");
    if (folds < 2 || folds > n) fail(Errc::InvalidArgument, "probe: folds must lie in [2, examples]");
    if (!all_finite(features.data())) fail(Errc::NonFinite, "probe: non-finite features");

    std::map<std::size_t, std::size_t> counts;
    for (std::size_t y : labels) ++counts[y];
    if (counts.size() < 2) fail(Errc::DegenerateLabels, "probe: fewer than two classes");
    std::vector<std::size_t> classes;
    for (const auto & [label, count] : counts) {
        if (count < 4) {
            fail(Errc::DegenerateLabels, "probe: class " + std::to_string(label) + " has " +
                                             std::to_string(count) + " examples (< 4)");
        }
        classes.push_back(label);
    }
    const std::size_t c = classes.size();
    auto class_index = [&](std::size_t label) {
        return static_cast<std::size_t>(std::lower_bound(classes.begin(), classes.end(), label) - classes.begin());
    };

    std::size_t correct = 0;
    for (std::size_t fold = 0; fold < folds; ++fold) {
        std::size_t n_train = 0;
        for (std::size_t i = 0; i < n; ++i) n_train += (i % folds != fold);
        // Design matrix with a trailing bias column; one-hot targets.
        Matrix a(n_train, f + 1);
        Matrix y(n_train, c);
        std::size_t r = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (i % folds == fold) continue;
            const auto src = features.row(i);
            std::copy(src.begin(), src.end(), a.row(r).begin());
            a(r, f) = 1.0;
            y(r, class_index(labels[i])) = 1.0;
            ++r;
        }
        const Matrix at = transpose(a);
        Matrix normal = gram(at);
        const double lambda = 1e-3 * trace(normal) / static_cast<double>(f + 1);
        for (std::size_t k = 0; k <= f; ++k) normal(k, k) += lambda;
        // coef^T (A^T A + lambda I) = (A^T Y)^T
        const Matrix coef_t = solve_spd(normal, transpose(matmul(at, y)));

        Vector x(f + 1, 1.0);
        for (std::size_t i = fold; i < n; i += folds) {
            const auto src = features.row(i);
            std::copy(src.begin(), src.end(), x.begin());
            const Vector scores = matvec(coef_t, x);
            correct += (classes[argmax(scores)] == labels[i]);
        }
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

double probe_accuracy(const ToyPlanner & model, std::span<const LabeledSequence> corpus, std::size_t layer,
                      std::size_t folds, PatchSite site) {
    if (layer >= model.layers()) fail(Errc::LayerOutOfRange, "probe: layer out of range");
    Matrix features(corpus.size(), model.config.d_model);
    std::vector<std::size_t> labels(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const ForwardTrace trace = forward(model, corpus[i].tokens);
        const auto row = site_rows(trace, layer, site).row(trace.positions() - 1);
        std::copy(row.begin(), row.end(), features.row(i).begin());
        labels[i] = corpus[i].label;
    }
    return probe_accuracy(features, labels, folds);
}

std::vector<LabeledSequence> decision_probe_corpus(const ToyPlanner & model, std::span<const TokenId> prompt,
                                                   TokenId target, Rng & rng, std::size_t count,
                                                   double resample) {
    if (prompt.empty()) fail(Errc::InvalidArgument, "probe corpus: empty prompt");
    std::vector<LabeledSequence> corpus;
    corpus.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        LabeledSequence ex;
        ex.tokens.assign(prompt.begin(), prompt.end());
        for (std::size_t p = 0; p + 1 < ex.tokens.size(); ++p) {
            if (rng.uniform() < resample) ex.tokens[p] = static_cast<TokenId>(rng.below(model.config.vocab));
        }
        ex.label = argmax(forward(model, ex.tokens).logits) == target ? 1 : 0;
        corpus.push_back(std::move(ex));
    }
    return corpus;
}

Matrix loss_gradient(const ToyPlanner & model, std::span<const TokenId> prompt, TokenId target,
                     std::size_t layer, double step) {
    if (layer >= model.layers()) fail(Errc::LayerOutOfRange, "gradient: layer out of range");
    if (target >= model.config.vocab) fail(Errc::TokenOutOfRange, "gradient: target out of range");
    if (!(step > 0.0)) fail(Errc::InvalidArgument, "gradient: step must be positive");

    const ForwardTrace clean = forward(model, prompt);
    const Matrix & h_in = layer == 0 ? clean.embedded : clean.hidden[layer - 1];
    const Matrix & keys = clean.keys[layer];
    const Matrix & h_out = clean.hidden[layer];
    Matrix w2 = model.blocks[layer].w2;
    const std::size_t n = keys.rows();

    // Perturbing w2(a, b) only moves column a of the layer's output.
    auto loss_with_row = [&](std::size_t a) {
        Matrix h = h_out;
        const auto wa = w2.row(a);
        for (std::size_t i = 0; i < n; ++i) h(i, a) = h_in(i, a) + dot(wa, keys.row(i));
        return -log_softmax_at(logits_from(model, std::move(h), layer + 1), target);
    };

    Matrix grad(w2.rows(), w2.cols());
    for (std::size_t a = 0; a < w2.rows(); ++a) {
        for (std::size_t b = 0; b < w2.cols(); ++b) {
            const double w = w2(a, b);
            const double h = step * (1.0 + std::abs(w));
            const double wp = w + h;
            const double wm = w - h;
            w2(a, b) = wp;
            const double lp = loss_with_row(a);
            w2(a, b) = wm;
            const double lm = loss_with_row(a);
            w2(a, b) = w;
            grad(a, b) = (lp - lm) / (wp - wm);
        }
    }
    return grad;
}

double gradient_norm(const ToyPlanner & model, std::span<const TokenId> prompt, TokenId target,
                     std::size_t layer, double step) {
    return frob_norm(loss_gradient(model, prompt, target, layer, step));
}

std::vector<std::size_t> rank_layers(const ImpactProfile & profile, const RankWeights & weights) {
    if (weights.impact < 0.0 || weights.probe < 0.0 || weights.grad < 0.0) {
        fail(Errc::InvalidArgument, "rank_layers: weights must be >= 0");
    }
    if (weights.impact + weights.probe + weights.grad <= 0.0) {
        fail(Errc::InvalidArgument, "rank_layers: weights are all zero");
    }
    const std::size_t layers = profile.layers.size();
    Vector ie(layers), pa(layers), gn(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        ie[l] = profile.layers[l].impact_mean;
        pa[l] = profile.layers[l].probe_accuracy;
        gn[l] = profile.layers[l].grad_norm;
    }
    const Vector nie = min_max(ie), npa = min_max(pa), ngn = min_max(gn);
    Vector score(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        score[l] = weights.impact * nie[l] + weights.probe * npa[l] + weights.grad * ngn[l];
    }
    std::vector<std::size_t> order(layers);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
    return order;
}

ImpactProfile profile_layers(const ToyPlanner & model, std::span<const TokenId> prompt, TokenId target,
                             const TraceConfig & cfg, std::span<const LabeledSequence> probe_corpus,
                             std::size_t folds) {
    ImpactProfile profile = causal_impact(model, prompt, target, cfg);
    for (std::size_t l = 0; l < model.layers(); ++l) {
        LayerScores & s = profile.layers[l];
        s.grad_norm = gradient_norm(model, prompt, target, l);
        if (probe_corpus.empty()) continue;
        try {
            s.probe_accuracy = probe_accuracy(model, probe_corpus, l, folds, cfg.site);
            s.probe_samples = probe_corpus.size();
        } catch (const Error & e) {
            if (e.code() != Errc::DegenerateLabels) throw;
        }
    }
    return profile;
}

void write_profile_csv(std::ostream & os, const ImpactProfile & profile) {
    os << "layer,impact_mean,impact_std,probe_acc,grad_norm\n";
    char buf[160];
    for (std::size_t l = 0; l < profile.layers.size(); ++l) {
        const LayerScores & s = profile.layers[l];
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", l, s.impact_mean, s.impact_std,
                      s.probe_accuracy, s.grad_norm);
        os << buf;
    }
}

void write_bar_chart(std::ostream & os, const ImpactProfile & profile, std::size_t width) {
    double peak = 0.0;
    for (const auto & s : profile.layers) peak = std::max(peak, std::abs(s.impact_mean));
    const auto ranked = rank_layers(profile);
    for (std::size_t l = 0; l < profile.layers.size(); ++l) {
        const LayerScores & s = profile.layers[l];
        const std::size_t len =
            peak > 0.0 ? static_cast<std::size_t>(std::lround(std::abs(s.impact_mean) / peak * double(width))) : 0;
        std::string bar(len, s.impact_mean < 0.0 ? '-' : '#');
        bar.resize(width, ' ');
        char head[32];
        std::snprintf(head, sizeof head, "L%02zu |", l);
        os << head << bar << "| " << format_fixed(s.impact_mean, 4) << (l == ranked.front() ? "  <- top" : "")
           << '\n';
    }
}

} // namespace sonoedit
