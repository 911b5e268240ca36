#pragma once

#include <stdexcept>
#include <string>

namespace pbrgen {

// Shape/usage violation in the tensor engine. Messages name the op and the
// offending shapes so a failing graph can be located without a debugger.
struct TensorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad geometry input: non-unit normal, invalid camera, degenerate surface.
struct GeometryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Material stack violates its contract (range, bump direction, shape).
struct ShadingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid schedule or parameterization request.
struct DiffusionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Unknown key, unparsable value, or out-of-range setting in a config.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem-level failure (open/read/write).
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Stream opened fine but the bytes are not what the format promises.
struct FormatError : IoError {
    using IoError::IoError;
};

// Recognized container, unsupported version number.
struct VersionError : IoError {
    using IoError::IoError;
};

// File ends before the header-declared payload does.
struct TruncationError : IoError {
    using IoError::IoError;
};

// Dataset request that cannot be satisfied (too few objects, bad fraction).
struct DatasetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Metric computation on invalid inputs (empty sets, non-converging solve).
struct MetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite loss or gradient during optimization; message carries seed/step.
struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace pbrgen
