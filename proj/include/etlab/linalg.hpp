#pragma once

#include <Eigen/Dense>

namespace etlab {

/// Dense row-major matrix/vector aliases used throughout the model core.
/// Everything is templated on the scalar so the same code runs in float for
/// training and double for finite-difference gradient checks.
template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using MatF = Mat<float>;
using VecF = Vec<float>;

}  // namespace etlab
