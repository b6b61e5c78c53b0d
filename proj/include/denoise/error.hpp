#pragma once

#include <stdexcept>
#include <string>

namespace denoise {

/// Base for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (bad sizes, rates, ids).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

enum class WavErrorKind { io, malformed_header, multichannel, unsupported_encoding, invalid_samples };

class WavError : public Error {
public:
    WavError(WavErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
    WavErrorKind kind() const noexcept { return kind_; }

private:
    WavErrorKind kind_;
};

/// An adaptive filter produced a non-finite weight.
class DivergenceError : public Error {
public:
    DivergenceError(std::string algorithm, long long step)
        : Error(algorithm + " diverged at step " + std::to_string(step)),
          algorithm_(std::move(algorithm)),
          step_(step) {}
    const std::string& algorithm() const noexcept { return algorithm_; }
    long long step() const noexcept { return step_; }

private:
    std::string algorithm_;
    long long step_;
};

}  // namespace denoise
