#pragma once

#include <Eigen/Dense>

namespace rivercast {

/// Dense row-major matrix used throughout the library.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

}  // namespace rivercast
