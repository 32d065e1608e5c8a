#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace dsse {

using cplx = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;
using RMatrix = Eigen::MatrixXd;
using Index = Eigen::Index;

// Error hierarchy. The CLI maps ConfigError to exit code 1 and NumericalError to 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class ParseError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class ValidationError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

class UnobservableError : public NumericalError {
public:
    UnobservableError(const std::string& what, Index deficient)
        : NumericalError(what), deficient_(deficient) {}
    Index deficient_directions() const { return deficient_; }

private:
    Index deficient_;
};

// [Re A, -Im A; Im A, Re A]: the real representation of a complex-linear map.
RMatrix realify(const CMatrix& a);
// [Re v; Im v]
RVector stack_rect(const CVector& v);
// Inverse of stack_rect.
CVector unstack_rect(const RVector& v);
// Complex covariance E[dv dv^*] from the rectangular covariance of [Re dv; Im dv].
CMatrix complexify_covariance(const RMatrix& cov_rect);

double max_abs(const CVector& v);
double max_abs(const RVector& v);

}  // namespace dsse
