#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dms {

using Index = Eigen::Index;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = Mat<double>;
using Vector = Vec<double>;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad input or configuration; the CLI maps this to exit code 2.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

class SimulationDiverged : public NumericalError {
public:
    explicit SimulationDiverged(Index step)
        : NumericalError("simulation diverged at step " + std::to_string(step)), step_(step) {}
    Index step() const { return step_; }

private:
    Index step_;
};

// Carries the time or window index at which factorization failed.
class SingularMatrix : public NumericalError {
public:
    SingularMatrix(const std::string& what, Index index)
        : NumericalError(what + " (index " + std::to_string(index) + ")"), index_(index) {}
    Index index() const { return index_; }

private:
    Index index_;
};

class DegenerateInput : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class DataError : public Error {
public:
    using Error::Error;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw InvalidArgument(message);
}

}  // namespace dms
