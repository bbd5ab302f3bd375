#include "commands.hpp"

#include "sonoedit/editor.hpp"
#include "sonoedit/io.hpp"
#include "sonoedit/metrics.hpp"
#include "sonoedit/nullspace.hpp"
#include "sonoedit/scenario.hpp"
#include "sonoedit/tracing.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

namespace sonoedit::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Seed streams shared with the scenario generator.
constexpr std::uint64_t kModelStream = 0;
constexpr std::uint64_t kPreservedStream = 2;
constexpr std::uint64_t kProbeStream = 3;
constexpr std::size_t kProbeExamples = 160;

PlannerConfig planner_config(const RunConfig & cfg, PlannerConfig base) {
    if (cfg.d_model) base.d_model = *cfg.d_model;
    if (cfg.d_hidden) base.d_hidden = *cfg.d_hidden;
    if (cfg.vocab) base.vocab = *cfg.vocab;
    if (cfg.layers) base.layers = *cfg.layers;
    base.seed = derive_seed(cfg.seed, kModelStream);
    base.validate();
    return base;
}

ToyPlanner resolve_model(const RunConfig & cfg) {
    if (!cfg.model.empty()) return load_checkpoint(cfg.model);
    return init_planner(planner_config(cfg, PlannerConfig{}));
}

std::size_t resolve_layer(const RunConfig & cfg, const ToyPlanner & model) {
    const std::size_t layer = cfg.layer.value_or(model.layers() / 2);
    if (layer >= model.layers()) {
        fail(Errc::LayerOutOfRange, "--layer " + std::to_string(layer) + " >= " + std::to_string(model.layers()));
    }
    return layer;
}

std::vector<TokenSeq> preserved_corpus(const RunConfig & cfg, std::size_t vocab) {
    Rng rng(derive_seed(cfg.seed, kPreservedStream));
    return random_corpus(rng, cfg.corpus.value_or(200), cfg.min_len.value_or(4), cfg.max_len.value_or(12), vocab);
}

void require_path(const std::string & path, const char * flag) {
    if (path.empty()) fail(Errc::InvalidArgument, std::string(flag) + " is required");
}

std::string encode_matrix(const Matrix & m, const std::string & format) {
    return format == "csv" ? encode_csv(m) : encode_nsm1(m);
}

const char * matrix_ext(const std::string & format) { return format == "csv" ? ".csv" : ".nsm"; }

Matrix load_any_matrix(const fs::path & path) {
    if (!fs::exists(path)) fail(Errc::Io, "no such file: " + path.string());
    const std::string bytes = read_file(path);
    return bytes.rfind("NSM1", 0) == 0 ? decode_nsm1(bytes) : decode_csv(bytes);
}

NullProjector projector_from(const RunConfig & cfg, std::size_t dim) {
    if (!cfg.projector.empty()) return load_projector(cfg.projector);
    if (!cfg.keys.empty()) {
        CovarianceAccumulator acc(dim);
        acc.accumulate(load_any_matrix(cfg.keys));
        return build_projector(acc, cfg.eps);
    }
    fail(Errc::InvalidArgument, "--projector or --keys is required for a constrained edit");
}

std::string tokens_str(std::span<const TokenId> tokens) {
    std::string s = "[";
    for (std::size_t i = 0; i < tokens.size(); ++i) s += (i ? " " : "") + std::to_string(tokens[i]);
    return s + "]";
}

std::string fmt(const char * f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

} // namespace

void RunConfig::validate() const {
    auto positive = [](const std::optional<std::size_t> & v, const char * flag) {
        if (v && *v < 1) fail(Errc::InvalidArgument, std::string(flag) + " must be >= 1");
    };
    positive(d_model, "--d-model");
    positive(d_hidden, "--d-hidden");
    positive(layers, "--layers");
    positive(corpus, "--corpus");
    positive(min_len, "--min-len");
    if (vocab && *vocab < 4) fail(Errc::InvalidArgument, "--vocab must be >= 4");
    if (min_len && max_len && *max_len < *min_len) fail(Errc::InvalidArgument, "--max-len must be >= --min-len");
    if (!(eps > 0.0 && eps < 1.0)) fail(Errc::InvalidArgument, "--eps must lie in (0, 1)");
    if (!(tau > 0.0)) fail(Errc::InvalidArgument, "--tau must be positive");
    if (!(margin > 0.0) || !std::isfinite(margin)) fail(Errc::InvalidArgument, "--margin must be positive");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
        fail(Errc::InvalidArgument, "--noise-sigma must be >= 0");
    }
    if (trials < 1) fail(Errc::InvalidArgument, "--trials must be >= 1");
    if (format != "bin" && format != "csv") fail(Errc::InvalidArgument, "--format must be bin or csv");
}

int cmd_collect(const RunConfig & cfg, std::ostream & out) {
    require_path(cfg.out, "--out");
    const ToyPlanner model = resolve_model(cfg);
    const std::size_t layer = resolve_layer(cfg, model);
    const auto corpus = preserved_corpus(cfg, model.config.vocab);
    const Matrix keys =
        collect_keys(model, corpus, layer, cfg.all_positions ? KeyPositions::All : KeyPositions::Final);
    write_file_atomic(cfg.out, encode_matrix(keys, cfg.format));
    out << "keys " << keys.rows() << "x" << keys.cols() << " (layer " << layer << ", " << corpus.size()
        << " sequences) -> " << cfg.out << "\n";
    return kOk;
}

int cmd_projector(const RunConfig & cfg, std::ostream & out) {
    const std::string & in = cfg.in.empty() ? cfg.keys : cfg.in;
    require_path(in, "--in");
    require_path(cfg.out, "--out");
    const Matrix keys = load_any_matrix(in);
    CovarianceAccumulator acc(keys.rows());
    acc.accumulate(keys);
    const NullProjector proj = build_projector(acc, cfg.eps);
    save_projector(cfg.out, proj);
    out << "projector d=" << proj.dim() << " null_rank=" << proj.null_rank() << " eps=" << cfg.eps << " -> "
        << cfg.out << "\n";
    return kOk;
}

int cmd_trace(const RunConfig & cfg, std::ostream & out) {
    ToyPlanner model;
    TokenSeq prompt = cfg.prompt;
    std::optional<TokenId> target = cfg.target;
    if (prompt.empty()) {
        if (!cfg.model.empty()) fail(Errc::InvalidArgument, "--prompt is required with --model");
        Scenario s = make_planted(planner_config(cfg, PlannerConfig{}), cfg.seed, 6, cfg.margin);
        out << "planted token " << s.wrong << " at layer " << s.layer << " for prompt " << tokens_str(s.prompt)
            << "\n";
        model = std::move(s.planted);
        prompt = std::move(s.prompt);
        if (!target) target = s.wrong;
    } else {
        model = resolve_model(cfg);
    }
    if (!target) target = static_cast<TokenId>(argmax(forward(model, prompt).logits));

    TraceConfig tc;
    tc.noise_sigma_scale = cfg.noise_sigma;
    tc.trials = cfg.trials;
    tc.seed = cfg.seed;
    Rng rng(derive_seed(cfg.seed, kProbeStream));
    const auto probe = decision_probe_corpus(model, prompt, *target, rng, kProbeExamples);
    const ImpactProfile profile = profile_layers(model, prompt, *target, tc, probe);

    std::ostringstream csv;
    write_profile_csv(csv, profile);
    if (cfg.out.empty()) {
        out << csv.str();
    } else {
        write_file_atomic(cfg.out, csv.str());
    }
    write_bar_chart(out, profile);
    const auto ranked = rank_layers(profile);
    out << "ranked layers:";
    for (std::size_t l : ranked) out << " " << l;
    out << "\n";
    return kOk;
}

int cmd_edit(const RunConfig & cfg, std::ostream & out) {
    require_path(cfg.out, "--out");
    if (cfg.prompt.empty()) fail(Errc::InvalidArgument, "--prompt is required");
    if (!cfg.target) fail(Errc::InvalidArgument, "--target is required");
    ToyPlanner model = resolve_model(cfg);
    const std::size_t layer = resolve_layer(cfg, model);
    const fs::path dir = cfg.out;
    if (cfg.plant) {
        model = plant_association(model, cfg.prompt, *cfg.plant, layer, cfg.margin);
        save_checkpoint(dir / "base", model);
        out << "planted token " << *cfg.plant << " at layer " << layer << "\n";
    }

    const Matrix & w = model.blocks[layer].w2;
    const TargetValue tv = solve_target_value(model, cfg.prompt, *cfg.target, layer, cfg.margin);
    const EditRequest req{tv.key, tv.value};
    EditResult edit;
    if (cfg.naive) {
        edit = naive_edit(w, req);
    } else {
        const NullProjector proj = projector_from(cfg, w.cols());
        edit = rank_one_edit(w, req, proj, cfg.tau);
        out << "null_rank " << proj.null_rank() << "/" << proj.dim() << ", |Pk|/|k| "
            << fmt("%.3e", edit.null_component / norm2(tv.key)) << "\n";
    }
    const ToyPlanner edited = apply_edit(model, layer, edit.delta);

    save_checkpoint(dir, edited);
    write_file_atomic(dir / (std::string("delta") + matrix_ext(cfg.format)), encode_matrix(edit.delta, cfg.format));
    json info;
    info["method"] = cfg.naive ? "naive" : "constrained";
    info["prompt"] = cfg.prompt;
    info["target"] = *cfg.target;
    info["layer"] = layer;
    info["margin"] = cfg.margin;
    info["key"] = tv.key;
    info["value"] = tv.value;
    write_file_atomic(dir / "edit.json", info.dump(2) + "\n");

    const std::size_t got = argmax(forward(edited, cfg.prompt).logits);
    out << (cfg.naive ? "naive" : "constrained") << " edit at layer " << layer << ": |dW| "
        << fmt("%.4f", frob_norm(edit.delta)) << ", target residual " << fmt("%.3e", edit.target_residual)
        << ", argmax " << got << (got == *cfg.target ? " (target)" : " (target missed)") << " -> " << cfg.out
        << "\n";
    return kOk;
}

int cmd_verify(const RunConfig & cfg, std::ostream & out) {
    require_path(cfg.after, "--after");
    const fs::path after_dir = cfg.after;
    const ToyPlanner after = load_checkpoint(after_dir);
    ToyPlanner before;
    if (!cfg.before.empty()) {
        before = load_checkpoint(cfg.before);
    } else if (fs::exists(after_dir / "base" / "manifest.json")) {
        before = load_checkpoint(after_dir / "base");
    } else {
        before = resolve_model(cfg);
    }

    EditTarget target;
    if (fs::exists(after_dir / "edit.json")) {
        try {
            const json info = json::parse(read_file(after_dir / "edit.json"));
            target.prompt = info.at("prompt").get<TokenSeq>();
            target.token = info.at("target").get<TokenId>();
            target.layer = info.at("layer").get<std::size_t>();
            target.key = info.at("key").get<Vector>();
            target.value = info.at("value").get<Vector>();
        } catch (const json::exception & e) {
            fail(Errc::Format, std::string("edit.json: ") + e.what());
        }
    } else {
        if (cfg.prompt.empty() || !cfg.target) {
            fail(Errc::InvalidArgument, "--prompt and --target are required without edit.json");
        }
        target.prompt = cfg.prompt;
        target.token = *cfg.target;
        target.layer = resolve_layer(cfg, after);
    }
    if (target.layer >= after.layers() || target.layer >= before.layers()) {
        fail(Errc::LayerOutOfRange, "verify: edit layer out of range");
    }

    Matrix delta;
    if (fs::exists(after_dir / "delta.nsm")) {
        delta = load_any_matrix(after_dir / "delta.nsm");
    } else if (fs::exists(after_dir / "delta.csv")) {
        delta = load_any_matrix(after_dir / "delta.csv");
    } else {
        delta = sub(after.blocks[target.layer].w2, before.blocks[target.layer].w2);
    }
    const Matrix k0 = cfg.keys.empty() ? Matrix() : load_any_matrix(cfg.keys);
    const auto preserved = preserved_corpus(cfg, before.config.vocab);

    const EditReport report = verify_edit(before, after, delta, k0, target, preserved);
    const std::string text = report_to_json(report);
    if (cfg.out.empty()) {
        out << text;
    } else {
        write_file_atomic(cfg.out, text);
        out << summary_line(report) << "\n";
    }
    return kOk;
}

int cmd_demo(const RunConfig & cfg, std::ostream & out) {
    ScenarioConfig sc;
    sc.planner = planner_config(cfg, sc.planner);
    if (cfg.corpus) sc.preserved_count = *cfg.corpus;
    if (cfg.min_len) sc.preserved_min_len = *cfg.min_len;
    if (cfg.max_len) sc.preserved_max_len = *cfg.max_len;
    sc.layer = cfg.layer;
    sc.plant_margin = cfg.margin;
    sc.edit_margin = cfg.margin;
    sc.cutoff = cfg.eps;
    sc.tau = cfg.tau;
    if (cfg.all_positions) sc.key_positions = KeyPositions::All;

    Scenario s = make_scenario(sc, cfg.seed);
    const PlannerConfig & pc = s.clean.config;
    out << "model     d_model " << pc.d_model << ", d_hidden " << pc.d_hidden << ", vocab " << pc.vocab
        << ", layers " << pc.layers << ", seed " << cfg.seed << "\n";
    out << "prompt    " << tokens_str(s.prompt) << ": clean token " << s.correct << ", planted token " << s.wrong
        << " at layer " << s.layer << "\n";

    // Localize on the planted model; the edit goes where tracing points.
    TraceConfig tc;
    tc.noise_sigma_scale = cfg.noise_sigma;
    tc.trials = cfg.trials;
    tc.seed = cfg.seed;
    const ImpactProfile profile = causal_impact(s.planted, s.prompt, s.wrong, tc);
    write_bar_chart(out, profile);
    Vector impacts;
    for (const auto & l : profile.layers) impacts.push_back(l.impact_mean);
    const std::size_t traced = argmax(impacts);
    const std::size_t planted_layer = s.layer;
    if (traced != s.layer) {
        s.layer = traced;
        s.k0 = collect_keys(s.planted, s.preserved, traced, sc.key_positions);
        s.target = solve_target_value(s.planted, s.prompt, s.correct, traced, sc.edit_margin);
    }

    CovarianceAccumulator acc(s.k0.rows());
    acc.accumulate(s.k0);
    out << "collect   " << s.k0.cols() << " preserved keys from " << s.preserved.size() << " prompts at layer "
        << s.layer << "\n";

    const EditMethod method = cfg.naive ? EditMethod::Naive : EditMethod::Constrained;
    const ScenarioOutcome res = run_edit_scenario(s, method, sc.cutoff, sc.tau);
    if (!cfg.naive) out << "projector null_rank " << res.null_rank << "/" << s.k0.rows() << "\n";

    const ToyPlanner edited = apply_edit(s.planted, s.layer, res.edit.delta);
    const Vector p_before = forward(s.planted, s.prompt).probs;
    const Vector p_after = forward(edited, s.prompt).probs;
    const std::size_t tok_before = argmax(p_before);
    const std::size_t tok_after = argmax(p_after);
    out << "before    -> token " << tok_before << " (p " << fmt("%.3f", p_before[tok_before]) << "), clean token "
        << s.correct << " p " << fmt("%.3f", p_before[s.correct]) << "\n";
    out << "after     -> token " << tok_after << " (p " << fmt("%.3f", p_after[tok_after]) << ") ["
        << (cfg.naive ? "naive" : "constrained") << " edit]\n";
    out << "verify    " << summary_line(res.report) << "\n";

    const EditReport & r = res.report;
    const double exact_tol = 1e-8 * std::max(1.0, norm2(res.value));
    struct Check {
        const char * name;
        bool ok;
    };
    const Check checks[] = {
        {"trace localizes planted layer", traced == planted_layer},
        {"edit succeeded", r.edit_succeeded},
        {"target residual <= 1e-8 max(1,|v*|)", r.target_residual <= exact_tol},
        {"constraint residual <= 1e-8", r.constraint_residual_rel <= 1e-8},
        {"preserved drift <= 1%", r.preserved_argmax_drift <= 0.01},
        {"preserved KL <= 1e-3", r.preserved_kl_mean <= 1e-3},
    };
    bool all = true;
    for (const auto & c : checks) {
        out << (c.ok ? "  pass  " : "  FAIL  ") << c.name << "\n";
        all = all && c.ok;
    }

    if (!cfg.out.empty()) {
        const fs::path dir = cfg.out;
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) fail(Errc::Io, "cannot create directory " + dir.string());
        write_file_atomic(dir / (std::string("keys") + matrix_ext(cfg.format)), encode_matrix(s.k0, cfg.format));
        save_projector(dir / "projector.nsp", build_projector(acc, sc.cutoff));
        std::ostringstream csv;
        write_profile_csv(csv, profile);
        write_file_atomic(dir / "trace.csv", csv.str());
        write_file_atomic(dir / (std::string("delta") + matrix_ext(cfg.format)),
                          encode_matrix(res.edit.delta, cfg.format));
        save_checkpoint(dir / "edited", edited);
        write_file_atomic(dir / "report.json", report_to_json(r));
        out << "artifacts -> " << dir.string() << "\n";
    }
    out << (all ? "demo: all thresholds met\n" : "demo: thresholds missed\n");
    return all ? kOk : kNumerical;
}

int exit_code_for(Errc code) noexcept {
    switch (code) {
    case Errc::Io:
    case Errc::Format:
        return kIo;
    case Errc::DegenerateKey:
    case Errc::NotPositiveDefinite:
    case Errc::Singular:
    case Errc::NonFinite:
    case Errc::NotSymmetric:
    case Errc::TargetUnreachable:
    case Errc::PlantFailed:
        return kNumerical;
    default:
        return kValidation;
    }
}

int run_command(const std::string & name, const RunConfig & cfg, std::ostream & out, std::ostream & err) {
    try {
        cfg.validate();
        if (name == "collect") return cmd_collect(cfg, out);
        if (name == "projector") return cmd_projector(cfg, out);
        if (name == "trace") return cmd_trace(cfg, out);
        if (name == "edit") return cmd_edit(cfg, out);
        if (name == "verify") return cmd_verify(cfg, out);
        if (name == "demo") return cmd_demo(cfg, out);
        fail(Errc::InvalidArgument, "unknown command '" + name + "'");
    } catch (const Error & e) {
        err << "error[" << errc_name(e.code()) << "]: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const fs::filesystem_error & e) {
        err << "error[" << errc_name(Errc::Io) << "]: " << e.what() << "\n";
        return kIo;
    }
}

} // namespace sonoedit::cli
