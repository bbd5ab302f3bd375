#include "commands.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>

namespace {

using sonoedit::TokenId;
using sonoedit::cli::RunConfig;

void add_common(CLI::App & sub, RunConfig & cfg) {
    sub.add_option("--seed", cfg.seed, "Master seed; all randomness derives from it");
    sub.add_option("--d-model", cfg.d_model, "Residual width (default 32)");
    sub.add_option("--d-hidden", cfg.d_hidden, "Key width (default 64; demo 128)");
    sub.add_option("--vocab", cfg.vocab, "Vocabulary size (default 64)");
    sub.add_option("--layers", cfg.layers, "Layer count (default 8)");
    sub.add_option("--layer", cfg.layer, "Layer to collect from or edit (default layers/2)");
    sub.add_option("--corpus", cfg.corpus, "Preserved corpus size (default 200; demo 12)");
    sub.add_option("--min-len", cfg.min_len, "Shortest preserved sequence (default 4)");
    sub.add_option("--max-len", cfg.max_len, "Longest preserved sequence (default 12; demo 8)");
    sub.add_flag("--all-positions", cfg.all_positions, "Collect keys at every position, not just the last");
    sub.add_option("--model", cfg.model, "Checkpoint directory (default: seeded init)");
    sub.add_option("--format", cfg.format, "Matrix output format")->check(CLI::IsMember({"bin", "csv"}));
    sub.add_option("--out", cfg.out, "Output path");
}

void add_edit_opts(CLI::App & sub, RunConfig & cfg) {
    sub.add_option("--eps", cfg.eps, "Relative eigenvalue cutoff (default 1e-8)");
    sub.add_option("--tau", cfg.tau, "Degenerate-key threshold |Pk|/|k| (default 1e-6)");
    sub.add_option("--margin", cfg.margin, "Logit margin for planted and target values (default 1)");
    sub.add_option("--prompt", cfg.prompt, "Comma-separated token ids")->delimiter(',');
    sub.add_option("--target", cfg.target, "Target token id");
}

void add_trace_opts(CLI::App & sub, RunConfig & cfg) {
    sub.add_option("--noise-sigma", cfg.noise_sigma, "Noise std in units of the embedding std (default 3)");
    sub.add_option("--trials", cfg.trials, "Corruption trials (default 10)");
}

} // namespace

int main(int argc, char ** argv) {
    CLI::App app{"sonoedit: null-space constrained editing on a seeded toy planner"};
    app.require_subcommand(1);
    RunConfig cfg;

    auto * collect = app.add_subcommand("collect", "Run the preserved corpus and write layer keys");
    add_common(*collect, cfg);

    auto * projector = app.add_subcommand("projector", "Build the null-space projector bundle from keys");
    projector->add_option("--in", cfg.in, "Keys matrix (NSM1 or CSV)");
    projector->add_option("--eps", cfg.eps, "Relative eigenvalue cutoff (default 1e-8)");
    projector->add_option("--out", cfg.out, "Projector bundle (NSP1)");

    auto * trace = app.add_subcommand("trace", "Per-layer localization scores as CSV plus a bar chart");
    add_common(*trace, cfg);
    add_trace_opts(*trace, cfg);
    trace->add_option("--prompt", cfg.prompt, "Comma-separated token ids (default: seeded planted model)")
        ->delimiter(',');
    trace->add_option("--target", cfg.target, "Token whose probability is traced");
    trace->add_option("--margin", cfg.margin, "Planting margin for the seeded model (default 1)");

    auto * edit = app.add_subcommand("edit", "Compute and apply a constrained (or --naive) edit");
    add_common(*edit, cfg);
    add_edit_opts(*edit, cfg);
    edit->add_option("--plant", cfg.plant, "Plant this wrong token on the prompt first");
    edit->add_option("--projector", cfg.projector, "Projector bundle (NSP1)");
    edit->add_option("--keys", cfg.keys, "Preserved keys; builds the projector with --eps");
    edit->add_flag("--naive", cfg.naive, "Unconstrained rank-one baseline");

    auto * verify = app.add_subcommand("verify", "Write the edit report JSON");
    add_common(*verify, cfg);
    verify->add_option("--before", cfg.before, "Checkpoint before the edit");
    verify->add_option("--after", cfg.after, "Edited checkpoint directory");
    verify->add_option("--keys", cfg.keys, "Preserved keys for the constraint residual");
    verify->add_option("--prompt", cfg.prompt, "Comma-separated token ids")->delimiter(',');
    verify->add_option("--target", cfg.target, "Target token id");

    auto * demo = app.add_subcommand("demo", "Seeded end-to-end scenario; exit 0 iff all thresholds hold");
    add_common(*demo, cfg);
    add_edit_opts(*demo, cfg);
    add_trace_opts(*demo, cfg);
    demo->add_flag("--naive", cfg.naive, "Use the unconstrained edit");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success & e) {
        return app.exit(e);
    } catch (const CLI::ParseError & e) {
        std::cerr << "error[Usage]: " << e.what() << "\n";
        return sonoedit::cli::kValidation;
    }

    const std::string name = app.get_subcommands().front()->get_name();
    return sonoedit::cli::run_command(name, cfg, std::cout, std::cerr);
}
