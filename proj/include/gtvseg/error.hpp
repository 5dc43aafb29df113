#pragma once

#include <stdexcept>
#include <string>

namespace gtv {

/// Failure categories. The CLI maps these onto process exit codes.
enum class ErrorKind {
    InvalidParameter,
    InvalidConfig,
    InvalidInput,
    DegenerateScale,
    DegenerateDistance,
    Divergence,
    InfeasibleSize,
    InfeasibleSupervision,
    SpectralConvergence,
    SizeLimit,
    Io,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidParameter: return "invalid-parameter";
        case ErrorKind::InvalidConfig: return "invalid-config";
        case ErrorKind::InvalidInput: return "invalid-input";
        case ErrorKind::DegenerateScale: return "degenerate-scale";
        case ErrorKind::DegenerateDistance: return "degenerate-distance";
        case ErrorKind::Divergence: return "divergence";
        case ErrorKind::InfeasibleSize: return "infeasible-size";
        case ErrorKind::InfeasibleSupervision: return "infeasible-supervision";
        case ErrorKind::SpectralConvergence: return "spectral-convergence";
        case ErrorKind::SizeLimit: return "size-limit";
        case ErrorKind::Io: return "io";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Thrown when the solver produces a non-finite iterate.
class DivergenceError : public Error {
public:
    DivergenceError(std::size_t iteration, const std::string& what)
        : Error(ErrorKind::Divergence, what + " (iteration " + std::to_string(iteration) + ")"),
          iteration_(iteration) {}

    std::size_t iteration() const noexcept { return iteration_; }

private:
    std::size_t iteration_;
};

/// Thrown when the spectral iteration runs out of budget.
class SpectralConvergenceError : public Error {
public:
    SpectralConvergenceError(double residual, const std::string& what)
        : Error(ErrorKind::SpectralConvergence,
                what + " (residual " + std::to_string(residual) + ")"),
          residual_(residual) {}

    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, ErrorKind kind, const std::string& what) {
    if (!condition) fail(kind, what);
}

}  // namespace gtv
