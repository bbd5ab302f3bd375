#pragma once

#include "sonoedit/matrix.hpp"
#include "sonoedit/metrics.hpp"
#include "sonoedit/nullspace.hpp"
#include "sonoedit/planner.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace sonoedit {

// NSM1 matrix file, all integers and floats little-endian:
//   "NSM1" | u16 version = 1 | u16 flags = 0 | u64 rows | u64 cols | rows*cols f64, row-major
std::string encode_nsm1(const Matrix & m);
Matrix decode_nsm1(std::string_view bytes);

// NSP1 projector bundle:
//   "NSP1" | u16 version = 1 | u64 d | u64 r | f64 cutoff | d f64 eigenvalues | d*r f64 u_null, row-major
std::string encode_nsp1(const NullProjector & proj);
NullProjector decode_nsp1(std::string_view bytes);

// Text matrix: "rows,cols" then one comma-separated row per line, each value
// in shortest round-trip form.
std::string encode_csv(const Matrix & m);
Matrix decode_csv(std::string_view text);

std::string read_file(const std::filesystem::path & path);
// Writes to a sibling temporary and renames it over `path`.
void write_file_atomic(const std::filesystem::path & path, std::string_view bytes);

void save_matrix(const std::filesystem::path & path, const Matrix & m);  // .csv -> CSV, otherwise NSM1
Matrix load_matrix(const std::filesystem::path & path);
void save_projector(const std::filesystem::path & path, const NullProjector & proj);
NullProjector load_projector(const std::filesystem::path & path);

inline constexpr int kCheckpointVersion = 1;

// Directory with manifest.json and one NSM1 file per weight matrix.
void save_checkpoint(const std::filesystem::path & dir, const ToyPlanner & model);
ToyPlanner load_checkpoint(const std::filesystem::path & dir);

std::string report_to_json(const EditReport & report);
EditReport report_from_json(std::string_view text);

} // namespace sonoedit
