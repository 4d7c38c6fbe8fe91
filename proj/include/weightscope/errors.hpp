// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace weightscope {

// Base class for all toolkit errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --- checkpoint ingestion -------------------------------------------------

// Malformed container header, JSON metadata, or naming config.
struct ParseError : Error {
    using Error::Error;
};

// Two tensors share a name, or two tensors map to the same (layer, role) slot.
struct DuplicateTensorError : Error {
    using Error::Error;
};

// A naming pattern matched a tensor whose shape is not 2-D, or a stored
// shape disagrees with its byte length.
struct ShapeError : Error {
    using Error::Error;
};

// Requested (layer, role) slot is absent from the index.
struct SlotNotFoundError : Error {
    using Error::Error;
};

// NaN or Inf encountered after decoding tensor bytes.
struct NonFiniteError : Error {
    using Error::Error;
};

// Operation applied in the wrong object state (e.g. orienting twice).
struct StateError : Error {
    using Error::Error;
};

// --- numerics ---------------------------------------------------------------

// Row/column/layer-count mismatch between operands.
struct DimError : Error {
    using Error::Error;
};

// A column with (numerically) zero norm was passed to a cosine kernel.
struct ZeroColumnError : Error {
    ZeroColumnError(const std::string& what, std::int64_t col) : Error(what), column(col) {}
    std::int64_t column;
};

// Input outside the mathematical domain of the operation.
struct DomainError : Error {
    using Error::Error;
};

// --- usage / configuration ---------------------------------------------------

// Invalid argument value (out-of-range block size, non-power-of-two, ...).
struct ArgError : Error {
    using Error::Error;
};

// API misuse (wrong index kind routed to an operation, bad CLI config).
struct UsageError : Error {
    using Error::Error;
};

}  // namespace weightscope
