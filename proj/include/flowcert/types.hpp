#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace flowcert {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Raised when a quantity is requested at a point where it is not defined
// (vanishing gradient, crossed critical point, singular Theta, ...).
class UndefinedResult : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Raised on malformed user input: bad files, inconsistent configs.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace flowcert
