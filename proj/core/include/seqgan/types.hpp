#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace seqgan {

/// Dense row-major real matrix; rows are samples throughout the library.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

using Label = int;
using LabelVector = std::vector<Label>;

}  // namespace seqgan
