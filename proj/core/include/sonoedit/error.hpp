#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sonoedit {

enum class Errc {
    ShapeError,
    DimMismatch,
    NotSquare,
    NotSymmetric,
    NonFinite,
    NotPositiveDefinite,
    Singular,
    EmptyDim,
    DegenerateKey,
    TokenOutOfRange,
    LayerOutOfRange,
    PlantFailed,
    TargetUnreachable,
    DegenerateLabels,
    InvalidArgument,
    Io,
    Format,
};

// Stable identifier used in CLI error lines and logs.
std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string & message)
        : std::runtime_error(message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] void fail(Errc code, const std::string & message);

inline void require(bool cond, Errc code, const char * message) {
    if (!cond) fail(code, message);
}

} // namespace sonoedit
