#pragma once

#include <Eigen/Dense>

namespace etmpc {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

} // namespace etmpc
