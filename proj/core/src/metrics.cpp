#include "sonoedit/metrics.hpp"

#include "sonoedit/error.hpp"
#include "sonoedit/nullspace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>

namespace sonoedit {

double kl_divergence(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) fail(Errc::DimMismatch, "kl: distribution lengths differ");
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double pi = std::max(p[i], kProbClamp);
        const double qi = std::max(q[i], kProbClamp);
        kl += pi * std::log(pi / qi);
    }
    return std::max(kl, 0.0);
}

EditReport verify_edit(const ToyPlanner & before, const ToyPlanner & after, const Matrix & delta,
                       const Matrix & k0_sample, const EditTarget & target,
                       std::span<const TokenSeq> preserved) {
    if (!(before.config.d_model == after.config.d_model && before.config.d_hidden == after.config.d_hidden &&
          before.config.vocab == after.config.vocab && before.layers() == after.layers())) {
        fail(Errc::DimMismatch, "verify_edit: models do not share a configuration");
    }
    if (target.layer >= after.layers()) fail(Errc::LayerOutOfRange, "verify_edit: layer out of range");
    const Matrix & w2 = after.blocks[target.layer].w2;
    if (delta.rows() != w2.rows() || delta.cols() != w2.cols()) {
        fail(Errc::DimMismatch, "verify_edit: delta shape does not match w2");
    }
    if (!k0_sample.empty() && k0_sample.rows() != delta.cols()) {
        fail(Errc::DimMismatch, "verify_edit: K0 sample rows != delta columns");
    }

    EditReport r;
    r.delta_frob = frob_norm(delta);
    if (!k0_sample.empty()) r.constraint_residual_rel = constraint_residual_rel(delta, k0_sample);
    if (!target.key.empty() && !target.value.empty()) {
        r.target_residual = norm2(sub(matvec(w2, target.key), target.value));
    }
    r.edit_succeeded = argmax(forward(after, target.prompt).logits) == target.token;

    if (!preserved.empty()) {
        std::size_t changed = 0;
        double kl = 0.0;
        for (const auto & seq : preserved) {
            const ForwardTrace a = forward(before, seq);
            const ForwardTrace b = forward(after, seq);
            changed += argmax(a.logits) != argmax(b.logits);
            kl += kl_divergence(a.probs, b.probs);
        }
        const double n = static_cast<double>(preserved.size());
        r.preserved_argmax_drift = static_cast<double>(changed) / n;
        r.preserved_kl_mean = kl / n;
    }
    return r;
}

std::string summary_line(const EditReport & r) {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "edit %s | target_residual %.3e | constraint_residual_rel %.3e | drift %.4f | kl %.3e | "
                  "|dW| %.4f",
                  r.edit_succeeded ? "ok" : "FAILED", r.target_residual, r.constraint_residual_rel,
                  r.preserved_argmax_drift, r.preserved_kl_mean, r.delta_frob);
    return buf;
}

ScenarioOutcome run_edit_scenario(const Scenario & s, EditMethod method, double cutoff, double tau) {
    const Matrix & w = s.planted.blocks[s.layer].w2;
    ScenarioOutcome out;
    std::optional<NullProjector> proj;
    if (method == EditMethod::Constrained) {
        CovarianceAccumulator acc(w.cols());
        if (!s.k0.empty()) acc.accumulate(s.k0);
        proj = build_projector(acc, cutoff);
        out.null_rank = proj->null_rank();
    } else {
        out.null_rank = w.cols();
    }

    TargetValue tv = s.target;
    double margin = s.edit_margin;
    for (int attempt = 0;; ++attempt) {
        const EditRequest req{tv.key, tv.value};
        out.edit = proj ? rank_one_edit(w, req, *proj, tau, s.k0) : naive_edit(w, req, s.k0);
        const ToyPlanner after = apply_edit(s.planted, s.layer, out.edit.delta);
        const EditTarget target{s.prompt, s.correct, s.layer, tv.key, tv.value};
        out.report = verify_edit(s.planted, after, out.edit.delta, s.k0, target, s.preserved);
        out.margin = margin;
        out.value = tv.value;
        if (out.report.edit_succeeded || attempt + 1 >= kEditAttempts) break;
        margin *= 2.0;
        try {
            tv = solve_target_value(s.planted, s.prompt, s.correct, s.layer, margin);
        } catch (const Error & e) {
            if (e.code() != Errc::TargetUnreachable) throw;
            break;
        }
    }
    return out;
}

AblationSummary ablation_compare(std::uint64_t seed, std::size_t trials, const ScenarioConfig & cfg) {
    if (trials < 1) fail(Errc::InvalidArgument, "ablation: trials must be >= 1");
    AblationSummary sum;
    std::vector<double> ratios;
    for (std::size_t t = 0; t < trials; ++t) {
        const std::uint64_t s_seed = derive_seed(seed, t);
        const Scenario s = make_scenario(cfg, s_seed);
        AblationPair pair;
        pair.seed = s_seed;
        pair.constrained = run_edit_scenario(s, EditMethod::Constrained, cfg.cutoff, cfg.tau).report;
        pair.naive = run_edit_scenario(s, EditMethod::Naive).report;
        sum.pairs.push_back(pair);

        const double c = pair.constrained.constraint_residual_rel;
        const double n = pair.naive.constraint_residual_rel;
        const double ratio = c > 0.0 ? n / c : (n > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);
        ratios.push_back(ratio);
        sum.constrained_residual_mean += c;
        sum.naive_residual_mean += n;
        sum.constrained_drift_mean += pair.constrained.preserved_argmax_drift;
        sum.naive_drift_mean += pair.naive.preserved_argmax_drift;
        sum.constrained_kl_mean += pair.constrained.preserved_kl_mean;
        sum.naive_kl_mean += pair.naive.preserved_kl_mean;
        sum.constrained_success_rate += pair.constrained.edit_succeeded;
        sum.naive_success_rate += pair.naive.edit_succeeded;
        sum.residual_ratio_ge10_rate += ratio >= 10.0;
        sum.drift_not_worse_rate += pair.naive.preserved_argmax_drift >= pair.constrained.preserved_argmax_drift;
    }
    const double k = static_cast<double>(trials);
    for (double * v : {&sum.constrained_residual_mean, &sum.naive_residual_mean, &sum.constrained_drift_mean,
                       &sum.naive_drift_mean, &sum.constrained_kl_mean, &sum.naive_kl_mean,
                       &sum.constrained_success_rate, &sum.naive_success_rate, &sum.residual_ratio_ge10_rate,
                       &sum.drift_not_worse_rate}) {
        *v /= k;
    }
    std::sort(ratios.begin(), ratios.end());
    const std::size_t m = ratios.size();
    sum.residual_ratio_median = m % 2 ? ratios[m / 2] : 0.5 * (ratios[m / 2 - 1] + ratios[m / 2]);
    return sum;
}

} // namespace sonoedit
