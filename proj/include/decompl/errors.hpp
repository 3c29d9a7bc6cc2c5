#pragma once

#include <stdexcept>
#include <string>

namespace decompl {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shape or operation geometry mismatch.
struct DimensionError : Error {
    using Error::Error;
};

// Class id or label string outside the active vocabulary.
struct LabelError : Error {
    using Error::Error;
};

// API precondition violated (non-scalar loss, missing gradient, ...).
struct ContractError : Error {
    using Error::Error;
};

// Malformed data: boxes, records, files.
struct ValidationError : Error {
    using Error::Error;
};

// Unparseable input file.
struct ParseError : ValidationError {
    using ValidationError::ValidationError;
};

// Bad configuration value, unknown key or unknown variant.
struct ConfigError : Error {
    using Error::Error;
};

// Annotation diff cannot be applied to this dataset.
struct DiffError : Error {
    using Error::Error;
};

// Diff entry's old label does not match the current label; guards against
// applying the same diff twice.
struct StalenessError : DiffError {
    using DiffError::DiffError;
};

}  // namespace decompl
