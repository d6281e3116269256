#pragma once

#include <stdexcept>
#include <string>

namespace icai {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad input data or configuration (exit code 1 territory).
struct ValidationError : Error {
    using Error::Error;
};

// Malformed file contents.
struct ParseError : Error {
    using Error::Error;
};

// Prompt template binding problems.
struct TemplateError : Error {
    using Error::Error;
};

// Remote side said no (non-retryable 4xx, contract violations).
struct ProviderError : Error {
    using Error::Error;
};

// Retries exhausted or connection-level failure.
struct TransportError : Error {
    using Error::Error;
};

// Replay-mode cache miss; hermetic runs must not touch the network.
struct ReplayMissError : Error {
    using Error::Error;
};

}  // namespace icai
