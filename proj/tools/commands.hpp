#pragma once

#include "sonoedit/error.hpp"
#include "sonoedit/planner.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace sonoedit::cli {

enum ExitCode : int { kOk = 0, kValidation = 1, kNumerical = 2, kIo = 3 };

// Unset optionals fall back to the defaults of the module a command drives:
// PlannerConfig for collect/projector/trace/edit/verify, ScenarioConfig for demo.
struct RunConfig {
    std::uint64_t seed = 0;
    std::optional<std::size_t> d_model, d_hidden, vocab, layers;
    std::optional<std::size_t> layer;
    double eps = 1e-8;
    double tau = 1e-6;
    double margin = 1.0;
    double noise_sigma = 3.0;
    std::size_t trials = 10;
    std::optional<std::size_t> corpus, min_len, max_len;
    bool all_positions = false;
    std::vector<TokenId> prompt;
    std::optional<TokenId> target;
    std::optional<TokenId> plant;
    std::string in, out, model, keys, projector, before, after;
    std::string format = "bin";  // bin | csv
    bool naive = false;

    void validate() const;
};

int cmd_collect(const RunConfig & cfg, std::ostream & out);
int cmd_projector(const RunConfig & cfg, std::ostream & out);
int cmd_trace(const RunConfig & cfg, std::ostream & out);
int cmd_edit(const RunConfig & cfg, std::ostream & out);
int cmd_verify(const RunConfig & cfg, std::ostream & out);
int cmd_demo(const RunConfig & cfg, std::ostream & out);

int exit_code_for(Errc code) noexcept;

// Runs a subcommand by name; library errors become one "error[Code]: message"
// line on `err` and the mapped exit code.
int run_command(const std::string & name, const RunConfig & cfg, std::ostream & out, std::ostream & err);

} // namespace sonoedit::cli
