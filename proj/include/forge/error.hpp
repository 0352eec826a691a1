#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace forge {

/// Base class for every error raised by the core library. The C API maps
/// each subclass onto a distinct status code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input violated a documented precondition (shape mismatch, index out of
/// range, empty sequence, ...).
class InvalidInput : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Non-finite loss or latent encountered. `step` is the optimizer or
/// sampler step at which it happened, or -1 when not applicable.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, long step)
        : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
    long step() const noexcept { return step_; }

private:
    long step_;
};

class UnknownTokenError : public Error {
public:
    explicit UnknownTokenError(const std::string& token)
        : Error("unknown token '" + token + "' is not in the token table"), token_(token) {}
    const std::string& token() const noexcept { return token_; }

private:
    std::string token_;
};

/// Harmonic score requested for a nonpositive fidelity.
class UndefinedScoreError : public Error {
public:
    using Error::Error;
};

class ValidationError : public Error {
public:
    explicit ValidationError(std::vector<std::string> errors)
        : Error(join(errors)), errors_(std::move(errors)) {}
    const std::vector<std::string>& errors() const noexcept { return errors_; }

private:
    static std::string join(const std::vector<std::string>& errors) {
        std::string out = "config validation failed";
        for (const auto& e : errors) out += "\n  " + e;
        return out;
    }
    std::vector<std::string> errors_;
};

/// A pipeline stage failed. Partial outputs are left on disk.
class StageError : public Error {
public:
    StageError(std::string stage, std::string item, const std::string& cause)
        : Error("stage '" + stage + "' failed" + (item.empty() ? "" : " on item '" + item + "'") +
                ": " + cause),
          stage_(std::move(stage)), item_(std::move(item)) {}
    const std::string& stage() const noexcept { return stage_; }
    const std::string& item() const noexcept { return item_; }

private:
    std::string stage_;
    std::string item_;
};

}  // namespace forge
