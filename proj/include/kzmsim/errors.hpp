// Error types shared across the toolkit.
//
// Every failure mode maps onto one of these categories; the CLI translates
// them into process exit codes (invalid input/config -> 2, numerical -> 3,
// I/O -> 4).

#pragma once

#include <stdexcept>
#include <string>

namespace kzmsim {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Precondition or argument violations (exit code 2).
struct InvalidInputError : Error {
    using Error::Error;
};

// Config/file schema violations (exit code 2).
struct SchemaError : Error {
    using Error::Error;
};

// Iterative method failed to converge; message carries the residual and,
// where meaningful, the best iterate (exit code 3).
struct NonConvergenceError : Error {
    using Error::Error;
};

// Chain has an unstable transverse mode (exit code 3).
struct StructuralInstabilityError : Error {
    using Error::Error;
};

// Laser detuning too close to a sideband for the perturbative coupling
// formula (exit code 3).
struct NearResonanceError : Error {
    using Error::Error;
};

// Adaptive step-size underflow in the integrator (exit code 3).
struct StiffnessError : Error {
    using Error::Error;
};

// Internal consistency check failed (exit code 3).
struct InternalError : Error {
    using Error::Error;
};

// State size beyond the configured spin cap (exit code 3).
struct ResourceError : Error {
    using Error::Error;
};

// Malformed data row in an ingested file (exit code 2).
struct MalformedDataError : Error {
    using Error::Error;
};

// Filesystem failures, always with the offending path (exit code 4).
struct IoError : Error {
    using Error::Error;
};

}  // namespace kzmsim
