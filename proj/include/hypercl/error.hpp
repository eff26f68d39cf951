#pragma once

#include <stdexcept>
#include <string>

namespace hypercl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A domain precondition was violated (zero norm, empty list, bad rank, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// The embedding store has no entry for a requested text.
class MissingEmbeddingError : public Error {
public:
    explicit MissingEmbeddingError(const std::string& text)
        : Error("missing embedding for text: \"" + text + "\""), text_(text) {}

    const std::string& text() const noexcept { return text_; }

private:
    std::string text_;
};

/// Malformed input file or document.
class FormatError : public Error {
public:
    using Error::Error;
};

/// A loss or gradient became NaN/Inf.
class NonFiniteError : public Error {
public:
    using Error::Error;
};

}  // namespace hypercl
