#pragma once

#include <stdexcept>
#include <string>

namespace evsyn {

// Exit codes used by the command-line front end.
enum class ExitCode : int { ok = 0, usage = 1, data = 2, numerical = 3 };

/// Bad or inconsistent input data (maps to exit code 2).
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Too few observations/draws for the requested operation.
class InsufficientDataError : public InputError {
public:
    using InputError::InputError;
};

/// Numerical failure: non-convergence, infeasible allocation, definiteness (exit code 3).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DefinitenessError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class ReconstructionError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class InitializationError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

} // namespace evsyn
