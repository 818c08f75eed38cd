#pragma once

#include <stdexcept>
#include <string>

namespace icse {

/// Base of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dimensions of the inputs do not conform.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A matrix that must have full (row or column) rank does not.
class RankError : public Error {
public:
    using Error::Error;
};

/// Loss weight matrix (or Omega) is not symmetric positive definite.
class LossSpecError : public Error {
public:
    using Error::Error;
};

/// Equality rows of a constraint system cannot be satisfied jointly.
class InfeasibleError : public Error {
public:
    using Error::Error;
};

/// Ill-conditioning, cycling, or non-finite intermediate state.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Requested enumeration exceeds the supported size.
class CapacityError : public Error {
public:
    using Error::Error;
};

/// Covariance handed to a sampler is not symmetric PSD.
class CovarianceError : public Error {
public:
    using Error::Error;
};

/// Every pattern weight numerator is zero.
class DegenerateWeightsError : public Error {
public:
    using Error::Error;
};

/// Too many replications of a Monte Carlo study failed.
class StudyError : public Error {
public:
    using Error::Error;
};

}  // namespace icse
