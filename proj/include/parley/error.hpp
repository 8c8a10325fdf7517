// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace parley {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Transport failures, exhausted retries, unusable responses from a model service.
class BackendError : public Error {
public:
    using Error::Error;
};

// Rejected credentials. Never retried.
class AuthError : public BackendError {
public:
    using BackendError::BackendError;
};

// A scripted backend ran out of canned responses for a request.
class ScriptExhausted : public BackendError {
public:
    using BackendError::BackendError;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    explicit ParseError(const std::string& what, std::optional<std::size_t> line = std::nullopt)
        : Error(line ? "line " + std::to_string(*line) + ": " + what : what), line_(line) {}

    std::optional<std::size_t> line() const noexcept { return line_; }

private:
    std::optional<std::size_t> line_;
};

// Carries every violation found, not just the first.
class ValidationError : public Error {
public:
    explicit ValidationError(std::vector<std::string> violations)
        : Error(join(violations)), violations_(std::move(violations)) {}

    const std::vector<std::string>& violations() const noexcept { return violations_; }

private:
    static std::string join(const std::vector<std::string>& items) {
        std::string out = "validation failed";
        for (const auto& item : items) {
            out += "\n  - ";
            out += item;
        }
        return out;
    }

    std::vector<std::string> violations_;
};

// A speaker produced no usable utterance; the session cannot continue.
class SessionError : public Error {
public:
    using Error::Error;
};

// An evaluation judge never produced a parseable answer for a transcript.
class EvaluationError : public Error {
public:
    using Error::Error;
};

// A statistical test is undefined for the given data (for example all observations identical).
class NotApplicable : public Error {
public:
    using Error::Error;
};

} // namespace parley
