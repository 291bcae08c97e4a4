#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace ebm {

using Vector = Eigen::VectorXd;
// One point per column.
using Points = Eigen::MatrixXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised for shape, layout and precondition violations.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

}  // namespace ebm
