#include "oracles.hpp"

#include "commands.hpp"
#include "sonoedit/error.hpp"
#include "sonoedit/io.hpp"
#include "sonoedit/metrics.hpp"

#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

using namespace sonoedit;
namespace fs = std::filesystem;

namespace {

Errc code_of(auto && fn) {
    try {
        fn();
    } catch (const Error & e) {
        return e.code();
    }
    return Errc::InvalidArgument;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string & name) : path(fs::temp_directory_path() / ("sonoedit_test_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string & leaf) const { return (path / leaf).string(); }
};

int run(const std::string & name, const cli::RunConfig & cfg, std::string * err_text = nullptr) {
    std::ostringstream out, err;
    const int rc = cli::run_command(name, cfg, out, err);
    if (err_text) *err_text = err.str();
    return rc;
}

template <class T>
void put(std::string & s, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    s.append(buf, sizeof(T));
}

} // namespace

TEST_CASE("NSM1 layout and round trip") {
    const Matrix m = Matrix::from_rows({{1.5, -2.0, 0.1}, {1e-300, 3.0, -0.0}});
    const std::string bytes = encode_nsm1(m);
    CHECK(bytes.size() == 4 + 2 + 2 + 8 + 8 + 6 * 8);
    CHECK(bytes.substr(0, 4) == "NSM1");
    std::string expected = "NSM1";
    put<std::uint16_t>(expected, 1);
    put<std::uint16_t>(expected, 0);
    put<std::uint64_t>(expected, 2);
    put<std::uint64_t>(expected, 3);
    for (double v : m.data()) put<double>(expected, v);
    CHECK(bytes == expected);
    CHECK(decode_nsm1(bytes) == m);
    CHECK(decode_nsm1(encode_nsm1(Matrix(0, 4))).cols() == 4);
}

TEST_CASE("NSM1 rejects malformed input") {
    const std::string good = encode_nsm1(Matrix(2, 2, 1.0));
    CHECK(code_of([&] { decode_nsm1(good.substr(0, good.size() - 1)); }) == Errc::Format);
    CHECK(code_of([&] { decode_nsm1(good + "x"); }) == Errc::Format);
    CHECK(code_of([&] { decode_nsm1("NSM2" + good.substr(4)); }) == Errc::Format);
    std::string bad_version = good;
    bad_version[4] = 2;
    CHECK(code_of([&] { decode_nsm1(bad_version); }) == Errc::Format);
    std::string huge = "NSM1";
    put<std::uint16_t>(huge, 1);
    put<std::uint16_t>(huge, 0);
    put<std::uint64_t>(huge, std::numeric_limits<std::uint64_t>::max());
    put<std::uint64_t>(huge, 2);
    CHECK(code_of([&] { decode_nsm1(huge); }) == Errc::Format);
    std::string nan = good;
    const double q = std::numeric_limits<double>::quiet_NaN();
    std::memcpy(nan.data() + 24, &q, 8);
    CHECK(code_of([&] { decode_nsm1(nan); }) != Errc::InvalidArgument);
    CHECK(code_of([&] { decode_nsm1(""); }) == Errc::Format);
}

TEST_CASE("NSP1 round trip rebuilds the same projector") {
    Rng rng(71);
    CovarianceAccumulator acc(9);
    acc.accumulate(oracle::random_low_rank(rng, 9, 20, 5));
    const NullProjector p = build_projector(acc, 1e-9);
    const std::string bytes = encode_nsp1(p);
    CHECK(bytes.substr(0, 4) == "NSP1");
    CHECK(bytes.size() == 4 + 2 + 8 + 8 + 8 + 9 * 8 + 9 * 4 * 8);
    const NullProjector q = decode_nsp1(bytes);
    CHECK(q.null_rank() == 4);
    CHECK(q.cutoff() == 1e-9);
    CHECK(q.eigenvalues() == p.eigenvalues());
    CHECK(q.u_null() == p.u_null());
    CHECK(frob_norm(sub(q.matrix(), p.matrix())) <= 1e-15);
    CHECK(code_of([&] { decode_nsp1(bytes.substr(0, bytes.size() - 8)); }) == Errc::Format);
    CHECK(code_of([&] { decode_nsp1(encode_nsm1(Matrix(2, 2))); }) == Errc::Format);
}

TEST_CASE("CSV round trip is exact") {
    Rng rng(72);
    Matrix m = oracle::random_matrix(rng, 4, 5);
    m(0, 0) = 1e-310;
    m(1, 1) = -0.0;
    m(2, 2) = 1.0 / 3.0;
    const std::string text = encode_csv(m);
    CHECK(text.rfind("4,5\n", 0) == 0);
    CHECK(decode_csv(text) == m);
    CHECK(decode_csv("1,2\n0.5,2\n") == Matrix::from_rows({{0.5, 2}}));
    CHECK(code_of([] { decode_csv("1,2\n0.5\n"); }) == Errc::Format);
    CHECK(code_of([] { decode_csv("1,2\n0.5,abc\n"); }) == Errc::Format);
    CHECK(code_of([] { decode_csv("2,1\n0.5\n"); }) == Errc::Format);
    CHECK(code_of([] { decode_csv("x\n"); }) == Errc::Format);
    CHECK(code_of([] { decode_csv("1,1\nnan\n"); }) != Errc::InvalidArgument);
}

TEST_CASE("file helpers and checkpoints") {
    TempDir dir("files");
    const Matrix m = Matrix::from_rows({{1, 2}, {3, 4}});
    save_matrix(dir / "m.nsm", m);
    save_matrix(dir / "m.csv", m);
    CHECK(load_matrix(dir / "m.nsm") == m);
    CHECK(load_matrix(dir / "m.csv") == m);
    CHECK_FALSE(fs::exists(dir / "m.nsm.tmp"));
    CHECK(code_of([&] { load_matrix(dir / "missing.nsm"); }) == Errc::Io);

    const ToyPlanner model = init_planner({8, 12, 16, 3, 5});
    save_checkpoint(dir.path / "ckpt", model);
    CHECK(fs::exists(dir.path / "ckpt" / "manifest.json"));
    CHECK(load_checkpoint(dir.path / "ckpt") == model);

    fs::remove(dir.path / "ckpt" / "block01_w2.nsm");
    CHECK(code_of([&] { load_checkpoint(dir.path / "ckpt"); }) == Errc::Io);
    save_checkpoint(dir.path / "ckpt", model);
    write_file_atomic(dir.path / "ckpt" / "manifest.json", "{\"format\": \"other\"}");
    CHECK(code_of([&] { load_checkpoint(dir.path / "ckpt"); }) == Errc::Format);
    write_file_atomic(dir.path / "ckpt" / "manifest.json", "{not json");
    CHECK(code_of([&] { load_checkpoint(dir.path / "ckpt"); }) == Errc::Format);
}

TEST_CASE("report JSON round trip") {
    EditReport r;
    r.target_residual = 1.25e-13;
    r.constraint_residual_rel = 3e-17;
    r.preserved_argmax_drift = 0.125;
    r.preserved_kl_mean = 1e-20;
    r.delta_frob = 2.5;
    r.edit_succeeded = true;
    const EditReport s = report_from_json(report_to_json(r));
    CHECK(s.target_residual == r.target_residual);
    CHECK(s.constraint_residual_rel == r.constraint_residual_rel);
    CHECK(s.preserved_argmax_drift == r.preserved_argmax_drift);
    CHECK(s.preserved_kl_mean == r.preserved_kl_mean);
    CHECK(s.delta_frob == r.delta_frob);
    CHECK(s.edit_succeeded);
    CHECK(code_of([] { report_from_json("{}"); }) == Errc::Format);
}

TEST_CASE("exit codes by error class") {
    CHECK(cli::exit_code_for(Errc::InvalidArgument) == cli::kValidation);
    CHECK(cli::exit_code_for(Errc::ShapeError) == cli::kValidation);
    CHECK(cli::exit_code_for(Errc::TokenOutOfRange) == cli::kValidation);
    CHECK(cli::exit_code_for(Errc::DegenerateKey) == cli::kNumerical);
    CHECK(cli::exit_code_for(Errc::NotPositiveDefinite) == cli::kNumerical);
    CHECK(cli::exit_code_for(Errc::PlantFailed) == cli::kNumerical);
    CHECK(cli::exit_code_for(Errc::Io) == cli::kIo);
    CHECK(cli::exit_code_for(Errc::Format) == cli::kIo);

    cli::RunConfig cfg;
    std::string err;
    CHECK(run("bogus", cfg, &err) == cli::kValidation);
    CHECK(err.rfind("error[", 0) == 0);
    cfg.in = "/nonexistent/keys.nsm";
    cfg.out = "/nonexistent/p.nsp";
    CHECK(run("projector", cfg, &err) == cli::kIo);
    CHECK(err.find("error[Io]") == 0);
    cli::RunConfig bad;
    bad.eps = 2.0;
    bad.out = "x";
    CHECK(run("collect", bad) == cli::kValidation);
}

TEST_CASE("collect, projector, edit, verify pipeline matches the library") {
    TempDir dir("pipeline");
    cli::RunConfig cfg;
    cfg.seed = 4;
    cfg.layer = 3;
    cfg.corpus = 6;
    cfg.min_len = 4;
    cfg.max_len = 6;
    cfg.all_positions = true;
    cfg.out = dir / "keys.nsm";
    REQUIRE(run("collect", cfg) == cli::kOk);
    const Matrix keys = load_matrix(dir / "keys.nsm");
    CHECK(keys.rows() == 64);
    CHECK(keys.cols() <= 36);

    cfg.in = dir / "keys.nsm";
    cfg.out = dir / "p.nsp";
    REQUIRE(run("projector", cfg) == cli::kOk);
    CHECK(load_projector(dir / "p.nsp").null_rank() == 64 - oracle::pivoted_qr_range(keys).rank);

    const ToyPlanner clean = init_planner({32, 64, 64, 8, 4});
    cfg.prompt = {1, 2, 3, 4, 5, 6};
    const TokenId correct = TokenId(argmax(forward(clean, cfg.prompt).logits));
    cfg.plant = TokenId((correct + 7) % 64);
    cfg.target = correct;
    cfg.projector = dir / "p.nsp";
    cfg.out = dir / "edit";
    std::string err;
    REQUIRE(run("edit", cfg, &err) == cli::kOk);
    CHECK(fs::exists(dir.path / "edit" / "base" / "manifest.json"));
    CHECK(fs::exists(dir.path / "edit" / "delta.nsm"));

    cli::RunConfig vc;
    vc.seed = 4;
    vc.corpus = 6;
    vc.min_len = 4;
    vc.max_len = 6;
    vc.after = dir / "edit";
    vc.keys = dir / "keys.nsm";
    vc.out = dir / "report.json";
    REQUIRE(run("verify", vc) == cli::kOk);
    const EditReport got = report_from_json(read_file(dir / "report.json"));

    // Recompute from the written artifacts.
    const ToyPlanner before = load_checkpoint(dir.path / "edit" / "base");
    const ToyPlanner after = load_checkpoint(dir.path / "edit");
    const Matrix delta = load_matrix(dir / "edit/delta.nsm");
    CHECK(frob_norm(sub(sub(after.blocks[3].w2, before.blocks[3].w2), delta)) <= 1e-14);
    CHECK(got.delta_frob == doctest::Approx(frob_norm(delta)));
    CHECK(got.constraint_residual_rel <= 1e-10);
    CHECK(got.constraint_residual_rel == doctest::Approx(constraint_residual_rel(delta, keys)));
    CHECK(got.target_residual <= 1e-9);
    CHECK(got.edit_succeeded == (argmax(forward(after, cfg.prompt).logits) == correct));
}

TEST_CASE("full-rank preserved keys make the constrained edit degenerate") {
    TempDir dir("degenerate");
    cli::RunConfig cfg;
    cfg.out = dir / "keys.csv";
    cfg.format = "csv";
    REQUIRE(run("collect", cfg) == cli::kOk);  // 200 final-position keys in 64 dims
    cfg.prompt = {3, 1, 4};
    cfg.target = 9;
    cfg.keys = dir / "keys.csv";
    cfg.out = dir / "edit";
    std::string err;
    CHECK(run("edit", cfg, &err) == cli::kNumerical);
    CHECK(err.find("error[DegenerateKey]") == 0);
    cfg.naive = true;
    CHECK(run("edit", cfg) == cli::kOk);
}

TEST_CASE("demo passes with the constrained edit and fails with the naive one") {
    cli::RunConfig cfg;
    std::ostringstream out, err;
    CHECK(cli::run_command("demo", cfg, out, err) == cli::kOk);
    CHECK(out.str().find("FAIL") == std::string::npos);
    cfg.naive = true;
    std::ostringstream out2;
    CHECK(cli::run_command("demo", cfg, out2, err) == cli::kNumerical);
    CHECK(out2.str().find("FAIL") != std::string::npos);
}
