#pragma once

#include <stdexcept>
#include <string>

namespace crl {

// base for all library errors so callers can catch one type at the CLI edge
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// contour extraction / geometry
struct EmptyMask : Error { using Error::Error; };
struct MultipleComponents : Error { using Error::Error; };
struct OpenCurve : Error { using Error::Error; };
struct DegenerateContour : Error { using Error::Error; };
struct GeometryOverflow : Error { using Error::Error; };

// i/o
struct ParseError : Error {
  ParseError(const std::string& what, long offset)
      : Error(what + " (byte " + std::to_string(offset) + ")"), byte_offset(offset) {}
  long byte_offset;
};
struct BoundsError : Error { using Error::Error; };

// environment
struct PositionOutOfImage : Error { using Error::Error; };
struct EpisodeFinished : Error { using Error::Error; };

// networks / training
struct ShapeMismatch : Error { using Error::Error; };
struct NonFiniteRatio : Error { using Error::Error; };

// landing generator
struct EmptyTarget : Error { using Error::Error; };
struct ImageTooSmall : Error { using Error::Error; };

// metrics
struct BothEmpty : Error { using Error::Error; };
struct EmptySet : Error { using Error::Error; };
struct DegenerateTrace : Error { using Error::Error; };

}  // namespace crl
