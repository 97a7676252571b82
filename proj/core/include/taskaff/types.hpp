#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace taskaff {

using NodeId = std::size_t;
using TaskId = std::size_t;

// Task ids in ascending order, no duplicates.
using TaskSubset = std::vector<TaskId>;

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IndexMatrix = Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic>;

}  // namespace taskaff
