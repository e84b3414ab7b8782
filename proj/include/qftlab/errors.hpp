#pragma once

#include <stdexcept>
#include <string>

namespace qftlab {

// Bad arguments use std::invalid_argument directly; the classes below carry the
// remaining failure categories so the CLI can map them to exit codes.

// A requested basis or operator exceeds the configured dimension cap.
class CapacityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A numerical construction produced something outside its contract
// (e.g. a negative eigenvalue of h).
class NumericFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A model hypothesis surrogate failed and the caller did not force the build.
class HypothesisViolation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// An estimate was requested outside the regime where it is meaningful.
class PreconditionViolation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace qftlab
