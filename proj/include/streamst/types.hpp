#pragma once

#include <Eigen/Dense>

namespace streamst {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

}  // namespace streamst
