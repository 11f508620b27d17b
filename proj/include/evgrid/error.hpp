#pragma once

#include <stdexcept>
#include <string>

namespace evgrid {

/// Malformed input text (bad token, missing column, unknown section).
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& source, int line, const std::string& what)
        : std::runtime_error(source + ":" + std::to_string(line) + ": " + what),
          source_(source), line_(line) {}

    const std::string& source() const noexcept { return source_; }
    int line() const noexcept { return line_; }

private:
    std::string source_;
    int line_;
};

/// Well-formed input that violates a model invariant.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An iterative solve (power flow, network fixed point) ran out of iterations.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(int iterations, double mismatch)
        : std::runtime_error("did not converge after " + std::to_string(iterations) +
                             " iterations (max mismatch " + std::to_string(mismatch) + " p.u.)"),
          iterations_(iterations), mismatch_(mismatch) {}

    int iterations() const noexcept { return iterations_; }
    double mismatch() const noexcept { return mismatch_; }

private:
    int iterations_;
    double mismatch_;
};

class SingularJacobianError : public std::runtime_error {
public:
    SingularJacobianError(int iteration, double pivot)
        : std::runtime_error("singular Jacobian at iteration " + std::to_string(iteration) +
                             " (smallest pivot " + std::to_string(pivot) + ")"),
          iteration_(iteration), pivot_(pivot) {}

    int iteration() const noexcept { return iteration_; }
    double pivot() const noexcept { return pivot_; }

private:
    int iteration_;
    double pivot_;
};

}  // namespace evgrid
