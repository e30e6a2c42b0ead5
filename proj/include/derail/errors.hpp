// Copyright (C) 2026 the derailcast authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace derail {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad user-supplied configuration (ratios, params out of range, ...). CLI maps this to exit 2.
struct ConfigError : Error {
    using Error::Error;
};

// Malformed input data. Carries a human-readable location (line number, turn index) in the message.
struct ParseError : Error {
    using Error::Error;
};

// A record is well-formed but violates a structural contract (e.g. BNC turn count != 4).
struct StructuralError : Error {
    using Error::Error;
};

// A Conversation (or similar object) failed its invariant checks.
struct ValidationError : Error {
    using Error::Error;
};

struct SerializationError : Error {
    using Error::Error;
};

struct TemplateError : Error {
    using Error::Error;
};

struct TrainingError : Error {
    using Error::Error;
};

// Operation requires a trained backend that is not trained.
struct StateError : Error {
    using Error::Error;
};

struct ArgumentError : Error {
    using Error::Error;
};

// Statistic has no defined value on this input (e.g. alpha with no overlapping items).
struct UndefinedStatisticError : Error {
    using Error::Error;
};

// Transport-level backend failure. Retriable by the caller.
struct BackendError : Error {
    using Error::Error;
};

// Prompt does not fit the backend context; callers truncate oldest turns and retry.
struct ContextOverflowError : BackendError {
    using BackendError::BackendError;
};

// Annotation retries exhausted; message carries the last parse failure.
struct AnnotationError : Error {
    using Error::Error;
};

struct GenerationError : Error {
    using Error::Error;
};

} // namespace derail
