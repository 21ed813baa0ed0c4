#pragma once

#include <stdexcept>
#include <string>

namespace meval {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dataset schema or invariant violation; message carries meeting_id and record.
struct ValidationError : Error {
    using Error::Error;
};

// Judge response could not be parsed after retries; message carries raw text.
struct ParseError : Error {
    using Error::Error;
};

// Transport/timeout/capability failure of a judge backend.
struct BackendError : Error {
    using Error::Error;
};

}  // namespace meval
