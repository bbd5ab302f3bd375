#include "sonoedit/error.hpp"

namespace sonoedit {

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::ShapeError:          return "ShapeError";
        case Errc::DimMismatch:         return "DimMismatch";
        case Errc::NotSquare:           return "NotSquare";
        case Errc::NotSymmetric:        return "NotSymmetric";
        case Errc::NonFinite:           return "NonFinite";
        case Errc::NotPositiveDefinite: return "NotPositiveDefinite";
        case Errc::Singular:            return "Singular";
        case Errc::EmptyDim:            return "EmptyDim";
        case Errc::DegenerateKey:       return "DegenerateKey";
        case Errc::TokenOutOfRange:     return "TokenOutOfRange";
        case Errc::LayerOutOfRange:     return "LayerOutOfRange";
        case Errc::PlantFailed:         return "PlantFailed";
        case Errc::TargetUnreachable:   return "TargetUnreachable";
        case Errc::DegenerateLabels:    return "DegenerateLabels";
        case Errc::InvalidArgument:     return "InvalidArgument";
        case Errc::Io:                  return "Io";
        case Errc::Format:              return "Format";
    }
    return "Unknown";
}

void fail(Errc code, const std::string & message) {
    throw Error(code, message);
}

} // namespace sonoedit
