#include "sonoedit/io.hpp"

#include "sonoedit/error.hpp"

#include <json.hpp>

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace sonoedit {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::uint16_t kFormatVersion = 1;

void put_u16(std::string & out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>(v >> 8));
}

void put_u64(std::string & out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string & out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
public:
    Reader(std::string_view bytes, const char * what) : bytes_(bytes), what_(what) {}

    void magic(std::string_view expected) {
        if (bytes_.substr(0, 4) != expected) fail(Errc::Format, std::string(what_) + ": bad magic");
        pos_ = 4;
    }
    std::uint16_t u16() {
        need(2);
        const auto b = reinterpret_cast<const unsigned char *>(bytes_.data() + pos_);
        pos_ += 2;
        return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    }
    std::uint64_t u64() {
        need(8);
        const auto b = reinterpret_cast<const unsigned char *>(bytes_.data() + pos_);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
        pos_ += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::size_t remaining() const { return bytes_.size() - pos_; }
    void expect_payload(std::uint64_t count) {
        if (count > remaining() / 8 || count * 8 != remaining()) {
            fail(Errc::Format, std::string(what_) + ": payload is " + std::to_string(remaining()) +
                                   " bytes, expected " + std::to_string(count) + " doubles");
        }
    }

private:
    void need(std::size_t n) {
        if (remaining() < n) fail(Errc::Format, std::string(what_) + ": truncated header");
    }

    std::string_view bytes_;
    const char * what_;
    std::size_t pos_ = 0;
};

std::uint64_t checked_product(std::uint64_t a, std::uint64_t b, const char * what) {
    if (a != 0 && b > UINT64_MAX / a / 8) fail(Errc::Format, std::string(what) + ": dimensions overflow");
    return a * b;
}

void require_file(const fs::path & path) {
    if (!fs::exists(path)) fail(Errc::Io, "no such file: " + path.string());
}

std::string weight_name(std::size_t layer, const char * which) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "block%02zu_%s.nsm", layer, which);
    return buf;
}

Matrix load_shaped(const fs::path & path, std::size_t rows, std::size_t cols) {
    Matrix m = decode_nsm1(read_file(path));
    if (m.rows() != rows || m.cols() != cols) {
        fail(Errc::Format, "checkpoint: " + path.filename().string() + " has shape " + std::to_string(m.rows()) +
                               "x" + std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" +
                               std::to_string(cols));
    }
    return m;
}

} // namespace

std::string encode_nsm1(const Matrix & m) {
    std::string out;
    out.reserve(24 + m.size() * 8);
    out.append("NSM1");
    put_u16(out, kFormatVersion);
    put_u16(out, 0);
    put_u64(out, m.rows());
    put_u64(out, m.cols());
    for (double v : m.data()) put_f64(out, v);
    return out;
}

Matrix decode_nsm1(std::string_view bytes) {
    Reader in(bytes, "NSM1");
    in.magic("NSM1");
    if (in.u16() != kFormatVersion) fail(Errc::Format, "NSM1: unsupported version");
    if (in.u16() != 0) fail(Errc::Format, "NSM1: unsupported flags");
    const std::uint64_t rows = in.u64();
    const std::uint64_t cols = in.u64();
    const std::uint64_t count = checked_product(rows, cols, "NSM1");
    in.expect_payload(count);
    std::vector<double> data(count);
    for (double & v : data) v = in.f64();
    return Matrix(rows, cols, std::move(data));
}

std::string encode_nsp1(const NullProjector & proj) {
    const std::size_t d = proj.dim();
    const std::size_t r = proj.null_rank();
    std::string out;
    out.append("NSP1");
    put_u16(out, kFormatVersion);
    put_u64(out, d);
    put_u64(out, r);
    put_f64(out, proj.cutoff());
    for (double v : proj.eigenvalues()) put_f64(out, v);
    for (double v : proj.u_null().data()) put_f64(out, v);
    return out;
}

NullProjector decode_nsp1(std::string_view bytes) {
    Reader in(bytes, "NSP1");
    in.magic("NSP1");
    if (in.u16() != kFormatVersion) fail(Errc::Format, "NSP1: unsupported version");
    const std::uint64_t d = in.u64();
    const std::uint64_t r = in.u64();
    if (r > d) fail(Errc::Format, "NSP1: null rank exceeds dimension");
    const double cutoff = in.f64();
    in.expect_payload(d + checked_product(d, r, "NSP1"));
    Vector eig(d);
    for (double & v : eig) v = in.f64();
    std::vector<double> basis(d * r);
    for (double & v : basis) v = in.f64();
    return NullProjector::from_null_basis(std::move(eig), Matrix(d, r, std::move(basis)), cutoff);
}

std::string encode_csv(const Matrix & m) {
    std::string out = std::to_string(m.rows()) + "," + std::to_string(m.cols()) + "\n";
    std::array<char, 32> buf{};
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto row = m.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) out.push_back(',');
            const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), row[c]);
            out.append(buf.data(), res.ptr);
        }
        out.push_back('\n');
    }
    return out;
}

Matrix decode_csv(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        start = end + 1;
    }
    if (lines.empty()) fail(Errc::Format, "CSV: missing header");

    auto parse_count = [](std::string_view s) {
        std::uint64_t v = 0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) fail(Errc::Format, "CSV: bad header");
        return v;
    };
    const std::string_view header = lines[0];
    const std::size_t comma = header.find(',');
    if (comma == std::string_view::npos) fail(Errc::Format, "CSV: header must be rows,cols");
    const std::uint64_t rows = parse_count(header.substr(0, comma));
    const std::uint64_t cols = parse_count(header.substr(comma + 1));
    checked_product(rows, cols, "CSV");
    if (lines.size() < rows + 1) fail(Errc::Format, "CSV: expected " + std::to_string(rows) + " rows");
    for (std::size_t i = rows + 1; i < lines.size(); ++i) {
        if (!lines[i].empty()) fail(Errc::Format, "CSV: trailing content after row " + std::to_string(rows));
    }

    std::vector<double> data;
    data.reserve(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
        std::string_view line = lines[r + 1];
        std::size_t count = 0;
        const char * p = line.data();
        const char * end = line.data() + line.size();
        while (cols > 0) {
            double v = 0.0;
            const auto res = std::from_chars(p, end, v);
            if (res.ec != std::errc{}) fail(Errc::Format, "CSV: bad number on row " + std::to_string(r));
            data.push_back(v);
            ++count;
            p = res.ptr;
            if (p == end) break;
            if (*p != ',') fail(Errc::Format, "CSV: expected ',' on row " + std::to_string(r));
            ++p;
        }
        if (count != cols) {
            fail(Errc::Format, "CSV: row " + std::to_string(r) + " has " + std::to_string(count) + " values, expected " +
                                   std::to_string(cols));
        }
    }
    return Matrix(rows, cols, std::move(data));
}

std::string read_file(const fs::path & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) fail(Errc::Io, "read failed: " + path.string());
    return ss.str();
}

void write_file_atomic(const fs::path & path, std::string_view bytes) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(Errc::Io, "cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) fail(Errc::Io, "write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        fail(Errc::Io, "cannot rename onto " + path.string());
    }
}

void save_matrix(const fs::path & path, const Matrix & m) {
    write_file_atomic(path, path.extension() == ".csv" ? encode_csv(m) : encode_nsm1(m));
}

Matrix load_matrix(const fs::path & path) {
    require_file(path);
    const std::string bytes = read_file(path);
    return path.extension() == ".csv" ? decode_csv(bytes) : decode_nsm1(bytes);
}

void save_projector(const fs::path & path, const NullProjector & proj) { write_file_atomic(path, encode_nsp1(proj)); }

NullProjector load_projector(const fs::path & path) {
    require_file(path);
    return decode_nsp1(read_file(path));
}

void save_checkpoint(const fs::path & dir, const ToyPlanner & model) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(Errc::Io, "cannot create directory " + dir.string());

    json manifest;
    manifest["format"] = "sonoedit-checkpoint";
    manifest["format_version"] = kCheckpointVersion;
    const PlannerConfig & c = model.config;
    manifest["config"] = {{"d_model", c.d_model}, {"d_hidden", c.d_hidden}, {"vocab", c.vocab},
                          {"layers", c.layers},   {"seed", c.seed}};
    json layers = json::array();
    json blocks = json::array();
    for (std::size_t l = 0; l < model.layers(); ++l) {
        const std::string w1 = weight_name(l, "w1");
        const std::string w2 = weight_name(l, "w2");
        write_file_atomic(dir / w1, encode_nsm1(model.blocks[l].w1));
        write_file_atomic(dir / w2, encode_nsm1(model.blocks[l].w2));
        layers.push_back(l);
        blocks.push_back({{"w1", w1}, {"w2", w2}});
    }
    write_file_atomic(dir / "embed.nsm", encode_nsm1(model.embed));
    write_file_atomic(dir / "unembed.nsm", encode_nsm1(model.unembed));
    manifest["layers"] = layers;
    manifest["files"] = {{"embed", "embed.nsm"}, {"unembed", "unembed.nsm"}, {"blocks", blocks}};
    write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

ToyPlanner load_checkpoint(const fs::path & dir) {
    const fs::path manifest_path = dir / "manifest.json";
    require_file(manifest_path);
    ToyPlanner model;
    try {
        const json m = json::parse(read_file(manifest_path));
        if (m.at("format") != "sonoedit-checkpoint") fail(Errc::Format, "checkpoint: unknown format");
        if (m.at("format_version").get<int>() != kCheckpointVersion) {
            fail(Errc::Format, "checkpoint: unsupported format version");
        }
        const json & c = m.at("config");
        PlannerConfig & cfg = model.config;
        cfg.d_model = c.at("d_model").get<std::size_t>();
        cfg.d_hidden = c.at("d_hidden").get<std::size_t>();
        cfg.vocab = c.at("vocab").get<std::size_t>();
        cfg.layers = c.at("layers").get<std::size_t>();
        cfg.seed = c.at("seed").get<std::uint64_t>();
        cfg.validate();

        const json & files = m.at("files");
        const json & blocks = files.at("blocks");
        if (blocks.size() != cfg.layers) fail(Errc::Format, "checkpoint: block count != config layers");
        model.embed = load_shaped(dir / files.at("embed").get<std::string>(), cfg.vocab, cfg.d_model);
        model.unembed = load_shaped(dir / files.at("unembed").get<std::string>(), cfg.vocab, cfg.d_model);
        for (const json & b : blocks) {
            PlannerBlock block;
            block.w1 = load_shaped(dir / b.at("w1").get<std::string>(), cfg.d_hidden, cfg.d_model);
            block.w2 = load_shaped(dir / b.at("w2").get<std::string>(), cfg.d_model, cfg.d_hidden);
            model.blocks.push_back(std::move(block));
        }
    } catch (const json::exception & e) {
        fail(Errc::Format, std::string("checkpoint manifest: ") + e.what());
    }
    return model;
}

std::string report_to_json(const EditReport & r) {
    // Doubles are dumped in shortest round-trip form.
    json j;
    j["target_residual"] = r.target_residual;
    j["constraint_residual_rel"] = r.constraint_residual_rel;
    j["preserved_argmax_drift"] = r.preserved_argmax_drift;
    j["preserved_kl_mean"] = r.preserved_kl_mean;
    j["delta_frob"] = r.delta_frob;
    j["edit_succeeded"] = r.edit_succeeded;
    return j.dump(2) + "\n";
}

EditReport report_from_json(std::string_view text) {
    EditReport r;
    try {
        const json j = json::parse(text);
        r.target_residual = j.at("target_residual").get<double>();
        r.constraint_residual_rel = j.at("constraint_residual_rel").get<double>();
        r.preserved_argmax_drift = j.at("preserved_argmax_drift").get<double>();
        r.preserved_kl_mean = j.at("preserved_kl_mean").get<double>();
        r.delta_frob = j.at("delta_frob").get<double>();
        r.edit_succeeded = j.at("edit_succeeded").get<bool>();
    } catch (const json::exception & e) {
        fail(Errc::Format, std::string("edit report: ") + e.what());
    }
    return r;
}

} // namespace sonoedit
